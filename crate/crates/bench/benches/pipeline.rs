use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fmfog::models::{FmFogConfig, FmFogModel, TriggerConfig, TriggerModel};
use fmfog::preprocess::resample;
use fmfog::runtime::{stream_engine, EngineConfig, ReplaySource, TriggerSource};
use fmfog_bench::{ankle_stream, windows};

fn models(c: &mut Criterion) {
    let w = windows(20.0, 1);
    let x: Vec<f32> = w[0].values.clone();
    let loc = [w[0].location_id as usize];
    let fm = FmFogModel::<f32>::new(FmFogConfig::desk(), 1).unwrap();
    let trig = TriggerModel::<f32>::new(TriggerConfig::default(), 2).unwrap();
    c.bench_function("fm_classify_window", |b| b.iter(|| fm.predict_proba(black_box(&x), &loc, 1).unwrap()));
    c.bench_function("trigger_window", |b| b.iter(|| trig.predict_proba(black_box(&x), 1).unwrap()));
}

fn preprocessing(c: &mut Criterion) {
    let s = ankle_stream(60.0, 3);
    let mut slow = s.clone();
    slow.timestamps_s.iter_mut().for_each(|t| *t *= 100.0 / 64.0);
    slow.native_rate_hz = 64.0;
    c.bench_function("resample_64hz_60s", |b| b.iter(|| resample(black_box(&slow), 100.0, 0).unwrap()));
}

fn runtime(c: &mut Criterion) {
    let fm = FmFogModel::<f32>::new(FmFogConfig::desk(), 1).unwrap();
    let trig = TriggerModel::<f32>::new(TriggerConfig::default(), 2).unwrap();
    let source = ReplaySource::Stream(ankle_stream(60.0, 4));
    let mut g = c.benchmark_group("stream_engine");
    g.sample_size(10);
    g.bench_function("replay_60s", |b| {
        b.iter_batched(
            EngineConfig::default,
            |cfg| stream_engine(&source, TriggerSource::Model(&trig), &fm, None, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, models, preprocessing, runtime);
criterion_main!(benches);
