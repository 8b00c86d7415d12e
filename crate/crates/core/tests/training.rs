use fmfog::imu_data::{synth_corpus, SynthCorpusConfig};
use fmfog::models::{to_checkpoint, FmFogConfig, FmFogModel};
use fmfog::preprocess::{prepare_windows, PreprocessConfig, Window, WindowLabel, N_CHANNELS, WINDOW_LEN};
use fmfog::rng;
use fmfog::tensor_nn::Parameterized;
use fmfog::training::*;
use rand::Rng as _;

fn small() -> FmFogConfig {
    FmFogConfig {
        d_model: 16,
        n_blocks: 1,
        n_heads: 2,
        d_ff: 32,
        ..FmFogConfig::default()
    }
}

/// Fog windows sit at +1.5 on the first channel, non-fog at −1.5.
fn separable(n: usize, seed: u64) -> Vec<Window> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let fog = i % 3 == 0;
            let offset = if fog { 1.5 } else { -1.5 };
            let mut values = vec![0f32; WINDOW_LEN * N_CHANNELS];
            for (j, v) in values.iter_mut().enumerate() {
                if j % N_CHANNELS < 6 {
                    *v = r.random_range(-0.5..0.5f32) + if j % N_CHANNELS == 0 { offset } else { 0.0 };
                }
            }
            let mut present = [false; N_CHANNELS];
            present[..6].fill(true);
            Window {
                values,
                label: if fog { WindowLabel::Fog } else { WindowLabel::NonFog },
                location_id: (i % 3) as u8,
                subject_id: format!("p{:02}", i % 5),
                start_time_s: i as f64,
                present_mask: present,
            }
        })
        .collect()
}

fn corpus(n: usize, secs: f64, seed: u64) -> Vec<Window> {
    let cfg = SynthCorpusConfig {
        n_subjects: n,
        seconds_per_subject: secs,
        ..Default::default()
    };
    prepare_windows(&synth_corpus(&cfg, seed).unwrap(), &PreprocessConfig::default()).unwrap().0
}

#[test]
fn separable_windows_are_learned_within_ten_epochs() {
    let w = separable(300, 1);
    let mut m = FmFogModel::<f32>::new(small(), 2).unwrap();
    let cfg = FinetuneConfig {
        epochs: 10,
        seed: 3,
        ..Default::default()
    };
    finetune(&mut m, &w, &cfg).unwrap();
    let acc = evaluate(&m, &w).unwrap().accuracy;
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn zero_epochs_only_reinitializes_the_head() {
    let base = FmFogModel::<f32>::new(small(), 4).unwrap();
    let mut m = base.clone();
    let cfg = FinetuneConfig {
        epochs: 0,
        seed: 9,
        ..Default::default()
    };
    let h = finetune(&mut m, &separable(10, 1), &cfg).unwrap();
    assert!(h.epoch_loss.is_empty());
    let mut want = base.clone();
    want.reset_head(9);
    for ((n, a), (_, b)) in m.params().into_iter().zip(want.params()) {
        assert_eq!(a.value, b.value, "{n}");
    }
}

#[test]
fn finetuning_is_bit_reproducible() {
    let w = separable(64, 5);
    let run = || {
        let mut m = FmFogModel::<f32>::new(small(), 6).unwrap();
        let cfg = FinetuneConfig {
            epochs: 2,
            seed: 7,
            ..Default::default()
        };
        let h = finetune(&mut m, &w, &cfg).unwrap();
        (h, to_checkpoint(&m, None).to_bytes())
    };
    let (h1, c1) = run();
    let (h2, c2) = run();
    assert_eq!(h1, h2);
    assert_eq!(c1, c2);
}

#[test]
fn single_class_training_set_warns() {
    let w: Vec<Window> = separable(30, 2).into_iter().filter(|w| w.label == WindowLabel::NonFog).collect();
    let mut m = FmFogModel::<f32>::new(small(), 1).unwrap();
    let h = finetune(&mut m, &w, &FinetuneConfig { epochs: 1, ..Default::default() }).unwrap();
    assert_eq!(h.warnings.len(), 1);
    assert_eq!(h.epoch_loss.len(), 1);
}

#[test]
fn context_toggle_only_changes_location_embedding() {
    let w = separable(4, 3);
    let mut m = FmFogModel::<f64>::new(small(), 8).unwrap();
    m.location_table.value.fill(0.0);
    let x: Vec<f64> = w.iter().flat_map(|w| w.values.iter().map(|&v| v as f64)).collect();
    let locs: Vec<usize> = w.iter().map(|w| w.location_id as usize).collect();
    let on = m.forward_classify(&x, &locs, 4, None).unwrap().0;
    m.context_enabled = false;
    let off = m.forward_classify(&x, &locs, 4, None).unwrap().0;
    assert_eq!(on, off);
}

#[test]
fn pretraining_reduces_loss_deterministically() {
    let w = corpus(3, 40.0, 11);
    let cfg = PretrainConfig {
        epochs: 4,
        seed: 2,
        ..Default::default()
    };
    let run = || {
        let mut m = FmFogModel::<f32>::new(small(), 1).unwrap();
        let h = pretrain(&mut m, &w, &cfg).unwrap();
        (h, to_checkpoint(&m, None).to_bytes())
    };
    let (h, ckpt) = run();
    assert!(h.epoch_loss.iter().all(|l| l.is_finite()));
    assert!(h.epoch_loss.last().unwrap() < &h.epoch_loss[0], "{:?}", h.epoch_loss);
    assert_eq!(h.lr_first, cfg.lr0);
    assert!((h.lr_last - cfg.lr_min).abs() < 1e-12);
    let (h2, ckpt2) = run();
    assert_eq!(h, h2);
    assert_eq!(ckpt, ckpt2);
}

#[test]
fn empty_pretraining_corpus_is_rejected() {
    let mut m = FmFogModel::<f32>::new(small(), 1).unwrap();
    assert!(matches!(pretrain(&mut m, &[], &PretrainConfig::default()), Err(fmfog::Error::Config(_))));
}

#[test]
fn single_repeat_has_zero_spread_and_disjoint_subjects() {
    let w = separable(60, 4);
    let proto = ProtocolConfig {
        n_train: 3,
        n_repeats: 1,
        seed: 1,
    };
    let ft = FinetuneConfig {
        epochs: 1,
        ..Default::default()
    };
    let rep = run_cross_patient(&w, &proto, Init::<f32>::Scratch { config: small(), seed: 2 }, &ft, "s", |_| {}).unwrap();
    assert_eq!(rep.repeats.len(), 1);
    for (name, v) in rep.repeats[0].metrics.scores() {
        assert_eq!(rep.aggregate.scores[name].mean, v);
        assert_eq!(rep.aggregate.scores[name].std, 0.0);
    }
    let r = &rep.repeats[0];
    assert!(r.train_ids.iter().all(|id| !r.test_ids.contains(id)));
    assert_eq!(rep.to_jsonl().lines().count(), 2);
}

#[test]
fn too_few_subjects_for_split() {
    let w = separable(20, 4);
    let proto = ProtocolConfig {
        n_train: 5,
        n_repeats: 2,
        seed: 1,
    };
    let err = run_cross_patient(&w, &proto, Init::<f32>::Scratch { config: small(), seed: 2 }, &FinetuneConfig::default(), "s", |_| {});
    assert!(matches!(err, Err(fmfog::Error::Config(_))));
}

#[test]
fn ablation_arms_share_splits() {
    let w = separable(60, 6);
    let proto = ProtocolConfig {
        n_train: 3,
        n_repeats: 2,
        seed: 3,
    };
    let ft = FinetuneConfig {
        epochs: 1,
        ..Default::default()
    };
    let base = FmFogModel::<f32>::new(small(), 5).unwrap();
    let rep = run_context_ablation(&w, &proto, Init::Pretrained(&base), &ft, |_| {}).unwrap();
    for (a, b) in rep.with_context.repeats.iter().zip(&rep.without_context.repeats) {
        assert_eq!(a.train_ids, b.train_ids);
        assert_eq!(a.test_ids, b.test_ids);
    }
    assert_eq!(rep.paired_f1_deltas().len(), 2);
}
