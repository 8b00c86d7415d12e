use std::path::Path;

use fmfog::energy::{battery_table, energy_report, fit_power_model, format_battery_table, life_extension, predict_power, DutyMode};
use fmfog::imu_data::{load_daphnet, load_generic_csv, load_pamap2, synth_corpus, SensorStream};
use fmfog::models::gradcheck::run_all;
use fmfog::models::{load_any, load_checkpoint, save_checkpoint, AnyModel, FmFogModel, TriggerModel};
use fmfog::preprocess::{
    expected_window_count, harmonize_and_normalize, load_window_pack, save_window_pack, valid_segments, windowize,
    LabelRule, NormStats, Window,
};
use fmfog::runtime::{latency_report, save_decision_log, save_event_log, stream_engine, ReplaySource, TriggerSource};
use fmfog::training::{
    evaluate, evaluate_trigger, finetune, pretrain, run_context_ablation, run_cross_patient, train_trigger, Init,
    RepeatRecord,
};
use fmfog::{rng, Error, Result};
use serde::Serialize;

use crate::config::InputSpec;
use crate::context::Ctx;
use crate::{Command, ModelKind};

pub fn dispatch(ctx: &Ctx, cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest => ingest(ctx),
        Command::Preprocess => preprocess(ctx),
        Command::Pretrain { windows } => pretrain_cmd(ctx, windows.as_deref()),
        Command::Finetune { model, checkpoint, windows } => match model {
            ModelKind::Fm => finetune_fm(ctx, checkpoint.as_deref(), windows.as_deref()),
            ModelKind::Trigger => finetune_trigger(ctx, windows.as_deref()),
        },
        Command::Eval { checkpoint, windows } => eval(ctx, &checkpoint, windows.as_deref()),
        Command::CrossPatient { checkpoint, windows } => cross_patient(ctx, checkpoint.as_deref(), windows.as_deref()),
        Command::AblationContext { checkpoint, windows } => ablation(ctx, checkpoint.as_deref(), windows.as_deref()),
        Command::Stream {
            fm,
            trigger,
            windows,
            norm,
            realtime,
        } => stream(ctx, &fm, trigger.as_deref(), windows.as_deref(), norm.as_deref(), realtime),
        Command::Energy { events } => energy(ctx, events.as_deref()),
        Command::Gradcheck { .. } => gradcheck(ctx),
    }
}

fn load_inputs(ctx: &Ctx, specs: &[InputSpec]) -> Result<Vec<SensorStream>> {
    if specs.is_empty() {
        return Err(Error::Config("no inputs configured".into()));
    }
    let mut out = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        match spec {
            InputSpec::Daphnet { path } => out.extend(load_daphnet(path)?),
            InputSpec::Pamap2 { path } => out.extend(load_pamap2(path)?),
            InputSpec::GenericCsv { path, schema } => out.push(load_generic_csv(path, schema)?),
            InputSpec::Synthetic { corpus, .. } => out.extend(synth_corpus(corpus, ctx.cfg.input_seed(spec, i))?),
        }
    }
    Ok(out)
}

/// Normalized windows of the configured inputs under `rule`.
fn windows_from_inputs(ctx: &Ctx, specs: &[InputSpec], rule: LabelRule) -> Result<(Vec<Window>, NormStats, usize)> {
    let streams = load_inputs(ctx, specs)?;
    let (normed, stats) = harmonize_and_normalize(&streams, &ctx.cfg.preprocess)?;
    let w = &ctx.cfg.preprocess.window;
    let hop = w.hop()?;
    let mut windows = Vec::new();
    let mut expected = 0;
    for s in &normed {
        expected += valid_segments(s).iter().map(|&(a, b)| expected_window_count(b - a, w.len, hop)).sum::<usize>();
        windows.extend(windowize(s, w, rule)?);
    }
    Ok((windows, stats, expected))
}

fn windows_for(ctx: &Ctx, pack: Option<&Path>, rule: LabelRule) -> Result<Vec<Window>> {
    let windows = match pack {
        Some(p) => load_window_pack(p)?,
        None => windows_from_inputs(ctx, &ctx.cfg.inputs, rule)?.0,
    };
    if windows.is_empty() {
        return Err(Error::InsufficientData("no windows available".into()));
    }
    Ok(windows)
}

#[derive(Serialize)]
struct StreamSummary {
    subject_id: String,
    location: String,
    native_rate_hz: f64,
    channels: usize,
    samples: usize,
    duration_s: f64,
    annotation_spans: usize,
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let streams = load_inputs(ctx, &ctx.cfg.inputs)?;
    let summary: Vec<StreamSummary> = streams
        .iter()
        .map(|s| {
            let (a, b) = s.extent();
            StreamSummary {
                subject_id: s.subject_id.clone(),
                location: format!("{:?}", s.location),
                native_rate_hz: s.native_rate_hz,
                channels: s.n_channels(),
                samples: s.len(),
                duration_s: b - a,
                annotation_spans: s.annotations.len(),
            }
        })
        .collect();
    println!("{} streams loaded", summary.len());
    ctx.write_json("ingest_summary.json", &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct PreprocessSummary {
    windows: usize,
    expected_windows: usize,
    fog_windows: usize,
    subjects: usize,
}

fn preprocess(ctx: &Ctx) -> Result<()> {
    let rule = ctx.cfg.preprocess.label_rule;
    let (windows, stats, expected) = windows_from_inputs(ctx, &ctx.cfg.inputs, rule)?;
    save_window_pack(ctx.path("windows.fwin"), &windows)?;
    ctx.register("windows.fwin")?;
    ctx.write_json("norm_stats.json", &stats)?;
    let subjects: std::collections::BTreeSet<_> = windows.iter().map(|w| &w.subject_id).collect();
    let summary = PreprocessSummary {
        windows: windows.len(),
        expected_windows: expected,
        fog_windows: windows.iter().filter(|w| w.label.fog_class() == 1).count(),
        subjects: subjects.len(),
    };
    println!("{} windows ({} expected from segment lengths)", summary.windows, summary.expected_windows);
    ctx.write_json("preprocess_summary.json", &summary)?;
    Ok(())
}

fn pretrain_cmd(ctx: &Ctx, pack: Option<&Path>) -> Result<()> {
    let cfg = &ctx.cfg;
    let windows = match pack {
        Some(p) => load_window_pack(p)?,
        None if !cfg.pretrain_inputs.is_empty() => windows_from_inputs(ctx, &cfg.pretrain_inputs, cfg.preprocess.label_rule)?.0,
        None => windows_for(ctx, None, cfg.preprocess.label_rule)?,
    };
    let mut model = FmFogModel::<f32>::new(cfg.fm, rng::derive(cfg.pretrain.seed, &[rng::tag("init")]))?;
    let hist = pretrain(&mut model, &windows, &cfg.pretrain)?;
    if let (Some(first), Some(last)) = (hist.epoch_loss.first(), hist.epoch_loss.last()) {
        println!("pretrain loss {first:.5} -> {last:.5} over {} epochs", hist.epoch_loss.len());
    }
    save_checkpoint(&model, ctx.path("fm_pretrained.ckpt"), Some(&ctx.provenance()))?;
    ctx.register("fm_pretrained.ckpt")?;
    ctx.write_json("pretrain_history.json", &hist)?;
    Ok(())
}

fn fm_init(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<FmFogModel<f32>> {
    match checkpoint {
        Some(p) => load_checkpoint(p),
        None => FmFogModel::new(ctx.cfg.fm, rng::derive(ctx.cfg.finetune.seed, &[rng::tag("init")])),
    }
}

fn finetune_fm(ctx: &Ctx, checkpoint: Option<&Path>, pack: Option<&Path>) -> Result<()> {
    let windows = windows_for(ctx, pack, LabelRule::FogTail)?;
    let mut model = fm_init(ctx, checkpoint)?;
    let hist = finetune(&mut model, &windows, &ctx.cfg.finetune)?;
    for w in &hist.warnings {
        eprintln!("warning: {w}");
    }
    save_checkpoint(&model, ctx.path("fm_finetuned.ckpt"), Some(&ctx.provenance()))?;
    ctx.register("fm_finetuned.ckpt")?;
    ctx.write_json("finetune_history.json", &hist)?;
    Ok(())
}

fn finetune_trigger(ctx: &Ctx, pack: Option<&Path>) -> Result<()> {
    let windows = windows_for(ctx, pack, LabelRule::ActivityMajority)?;
    let mut model = TriggerModel::<f32>::new(ctx.cfg.trigger, rng::derive(ctx.cfg.trigger_train.seed, &[rng::tag("init")]))?;
    let hist = train_trigger(&mut model, &windows, &ctx.cfg.trigger_train)?;
    for w in &hist.warnings {
        eprintln!("warning: {w}");
    }
    save_checkpoint(&model, ctx.path("trigger.ckpt"), Some(&ctx.provenance()))?;
    ctx.register("trigger.ckpt")?;
    ctx.write_json("trigger_history.json", &hist)?;
    Ok(())
}

fn eval(ctx: &Ctx, checkpoint: &Path, pack: Option<&Path>) -> Result<()> {
    let metrics = match load_any(checkpoint)? {
        AnyModel::Fm(m) => evaluate(&m, &windows_for(ctx, pack, LabelRule::FogTail)?)?,
        AnyModel::Trigger(m) => evaluate_trigger(&m, &windows_for(ctx, pack, LabelRule::ActivityMajority)?)?,
    };
    for (name, v) in metrics.scores() {
        println!("{name:<20} {v:.4}");
    }
    ctx.write_json("eval_metrics.json", &metrics)?;
    Ok(())
}

fn progress(r: &RepeatRecord) {
    println!(
        "{} repeat {:>3}: f1 {:.4} weighted_f1 {:.4}",
        r.arm, r.repeat_index, r.metrics.f1, r.metrics.weighted_f1
    );
}

fn cross_patient(ctx: &Ctx, checkpoint: Option<&Path>, pack: Option<&Path>) -> Result<()> {
    let windows = windows_for(ctx, pack, LabelRule::FogTail)?;
    let cfg = &ctx.cfg;
    let pretrained = checkpoint.map(load_checkpoint::<f32, FmFogModel<f32>>).transpose()?;
    let (init, arm) = match &pretrained {
        Some(m) => (Init::Pretrained(m), "pretrained"),
        None => (
            Init::Scratch {
                config: cfg.fm,
                seed: rng::derive(cfg.finetune.seed, &[rng::tag("init")]),
            },
            "scratch",
        ),
    };
    let report = run_cross_patient(&windows, &cfg.protocol, init, &cfg.finetune, arm, progress)?;
    ctx.write_text("cross_patient.jsonl", &report.to_jsonl())?;
    let table = report.summary_table();
    print!("{table}");
    ctx.write_text("cross_patient_summary.txt", &table)?;
    Ok(())
}

fn ablation(ctx: &Ctx, checkpoint: Option<&Path>, pack: Option<&Path>) -> Result<()> {
    let windows = windows_for(ctx, pack, LabelRule::FogTail)?;
    let cfg = &ctx.cfg;
    let pretrained = checkpoint.map(load_checkpoint::<f32, FmFogModel<f32>>).transpose()?;
    let init = match &pretrained {
        Some(m) => Init::Pretrained(m),
        None => Init::Scratch {
            config: cfg.fm,
            seed: rng::derive(cfg.finetune.seed, &[rng::tag("init")]),
        },
    };
    let report = run_context_ablation(&windows, &cfg.protocol, init, &cfg.finetune, progress)?;
    let mut jsonl = report.with_context.to_jsonl();
    jsonl.push_str(&report.without_context.to_jsonl());
    ctx.write_text("ablation_context.jsonl", &jsonl)?;
    let deltas = report.paired_f1_deltas();
    let mean = deltas.iter().sum::<f64>() / deltas.len().max(1) as f64;
    let mut table = report.with_context.summary_table();
    table.push('\n');
    table.push_str(&report.without_context.summary_table());
    table.push_str(&format!(
        "\npaired f1 delta (context - no_context): mean {mean:.4} over {} repeats\n",
        deltas.len()
    ));
    print!("{table}");
    ctx.write_text("ablation_context_summary.txt", &table)?;
    Ok(())
}

fn stream(
    ctx: &Ctx,
    fm: &Path,
    trigger: Option<&Path>,
    pack: Option<&Path>,
    norm: Option<&Path>,
    realtime: bool,
) -> Result<()> {
    let fm: FmFogModel<f32> = load_checkpoint(fm)?;
    let trig: Option<TriggerModel<f32>> = trigger.map(load_checkpoint).transpose()?;
    let source = match pack {
        Some(p) => ReplaySource::Windows(load_window_pack(p)?),
        None => {
            let mut streams = load_inputs(ctx, &ctx.cfg.inputs)?;
            ReplaySource::Stream(streams.swap_remove(0))
        }
    };
    let stats: Option<NormStats> = match norm {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let body = v.get("result").cloned().unwrap_or(v);
            Some(serde_json::from_value(body).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let trigger = match &trig {
        Some(m) => TriggerSource::Model(m),
        None => {
            eprintln!("note: no trigger checkpoint, ground-truth labels gate the FM");
            TriggerSource::Oracle
        }
    };
    let mut cfg = ctx.cfg.runtime;
    cfg.realtime |= realtime;
    let run = stream_engine(&source, trigger, &fm, stats.as_ref(), &cfg)?;
    save_event_log(&run.events, ctx.path("events.jsonl"))?;
    ctx.register("events.jsonl")?;
    save_decision_log(&run.events, ctx.path("decisions.jsonl"))?;
    ctx.register("decisions.jsonl")?;
    let latency = latency_report(&run.events)?;
    print!("{}", latency.summary_table());
    ctx.write_json("latency.json", &latency)?;
    Ok(())
}

#[derive(Serialize)]
struct EnergySummary {
    profile: fmfog::energy::PowerProfile,
    rows: Vec<EnergyRow>,
}

#[derive(Serialize)]
struct EnergyRow {
    state: String,
    power_w: f64,
    battery_life_h: f64,
}

#[derive(Serialize)]
struct DutyRow {
    duty: f64,
    power_w: f64,
    life_extension: f64,
}

fn energy(ctx: &Ctx, events: Option<&Path>) -> Result<()> {
    let e = &ctx.cfg.energy;
    let profile = fit_power_model(&e.rows, e.idle_w, e.continuous_w, e.reference_life_h)?;
    let rows = battery_table(&profile, &e.duties)?;
    let table = format_battery_table(&rows);
    print!("{table}");
    ctx.write_text("energy_table.txt", &table)?;
    let summary = EnergySummary {
        profile,
        rows: rows
            .into_iter()
            .map(|(state, power_w, battery_life_h)| EnergyRow {
                state,
                power_w,
                battery_life_h,
            })
            .collect(),
    };
    ctx.write_json("energy_summary.json", &summary)?;
    let duties = e
        .duties
        .iter()
        .map(|&d| {
            Ok(DutyRow {
                duty: d,
                power_w: predict_power(&profile, DutyMode::Triggered(d))?,
                life_extension: life_extension(&profile, d)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.write_json("energy_duties.json", &duties)?;
    if let Some(p) = events {
        let log = fmfog::runtime::load_event_log(p)?;
        let report = energy_report(&log, &profile)?;
        println!(
            "duty {:.3} over {} windows: {:.1} J, savings {:.1}% vs continuous",
            report.duty,
            report.windows,
            report.total_j,
            report.savings * 100.0
        );
        ctx.write_text("energy_curve.csv", &report.curve_csv()?)?;
        ctx.write_json("energy_report.json", &report)?;
    }
    Ok(())
}

fn gradcheck(ctx: &Ctx) -> Result<()> {
    let reports = run_all(ctx.cfg.seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        println!("{:<20} {}", r.module, if r.passed() { "ok" } else { "FAILED" });
        if !r.passed() {
            failed.push(r.module.clone());
        }
    }
    ctx.write_json("gradcheck.json", &reports)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Fit(format!("gradient check failed for {}", failed.join(", "))))
    }
}
