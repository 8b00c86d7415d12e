use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::finetune::{evaluate, finetune, FinetuneConfig};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::imu_data::split_subjects;
use crate::models::{FmFogConfig, FmFogModel};
use crate::preprocess::Window;
use crate::rng;
use crate::tensor_nn::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_train: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_train: 16,
            n_repeats: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub arm: String,
    pub repeat_index: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub n_train_windows: usize,
    pub n_test_windows: usize,
    pub epochs_run: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStat {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arm: String,
    pub n_repeats: usize,
    pub scores: BTreeMap<String, ScoreStat>,
}

impl Aggregate {
    /// Mean and population standard deviation of every score.
    pub fn from_records(arm: &str, records: &[RepeatRecord]) -> Self {
        let mut scores = BTreeMap::new();
        if let Some(first) = records.first() {
            for (k, (name, _)) in first.metrics.scores().iter().enumerate() {
                let vals: Vec<f64> = records.iter().map(|r| r.metrics.scores()[k].1).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                scores.insert(name.to_string(), ScoreStat { mean, std: var.sqrt() });
            }
        }
        Aggregate {
            arm: arm.to_string(),
            n_repeats: records.len(),
            scores,
        }
    }

    pub fn mean(&self, score: &str) -> f64 {
        self.scores.get(score).map(|s| s.mean).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPatientReport {
    pub repeats: Vec<RepeatRecord>,
    pub aggregate: Aggregate,
}

impl CrossPatientReport {
    /// One JSON object per repeat, then the aggregate, newline-delimited.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.repeats {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s.push_str(&serde_json::to_string(&self.aggregate).expect("aggregate serializes"));
        s.push('\n');
        s
    }

    pub fn summary_table(&self) -> String {
        let mut s = format!("arm: {} ({} repeats)\n", self.aggregate.arm, self.aggregate.n_repeats);
        let _ = writeln!(s, "{:<20} {:>8} {:>8}", "score", "mean", "std");
        for (k, v) in &self.aggregate.scores {
            let _ = writeln!(s, "{k:<20} {:>8.4} {:>8.4}", v.mean, v.std);
        }
        s
    }
}

/// Where each repeat's backbone comes from.
#[derive(Debug, Clone, Copy)]
pub enum Init<'a, F> {
    Pretrained(&'a FmFogModel<F>),
    Scratch { config: FmFogConfig, seed: u64 },
}

fn subjects(windows: &[Window]) -> Vec<String> {
    windows
        .iter()
        .map(|w| w.subject_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Repeated subject-disjoint fine-tune/evaluate runs. Repeat `r` fine-tunes
/// with seed `derive(ft.seed, [r])`, so arms given the same configs differ
/// only in what they vary.
pub fn run_cross_patient<F: Float>(
    windows: &[Window],
    protocol: &ProtocolConfig,
    init: Init<'_, F>,
    ft: &FinetuneConfig,
    arm: &str,
    mut on_repeat: impl FnMut(&RepeatRecord),
) -> Result<CrossPatientReport> {
    let ids = subjects(windows);
    if ids.len() < protocol.n_train + 1 {
        return Err(Error::Config(format!(
            "{} subjects cannot support n_train = {} with a test subject",
            ids.len(),
            protocol.n_train
        )));
    }
    let splits = split_subjects(&ids, protocol.n_train, protocol.n_repeats, protocol.seed)?;
    let mut repeats = Vec::with_capacity(splits.len());
    for split in &splits {
        let r = split.repeat_index as u64;
        let train: Vec<Window> = windows.iter().filter(|w| split.train_ids.contains(&w.subject_id)).cloned().collect();
        let test: Vec<Window> = windows.iter().filter(|w| split.test_ids.contains(&w.subject_id)).cloned().collect();
        let mut model = match init {
            Init::Pretrained(m) => m.clone(),
            Init::Scratch { config, seed } => FmFogModel::new(config, rng::derive(seed, &[r]))?,
        };
        let cfg = FinetuneConfig {
            seed: rng::derive(ft.seed, &[r]),
            ..*ft
        };
        let hist = finetune(&mut model, &train, &cfg)?;
        let record = RepeatRecord {
            arm: arm.to_string(),
            repeat_index: split.repeat_index,
            train_ids: split.train_ids.iter().cloned().collect(),
            test_ids: split.test_ids.iter().cloned().collect(),
            n_train_windows: train.len(),
            n_test_windows: test.len(),
            epochs_run: hist.epoch_loss.len(),
            metrics: evaluate(&model, &test)?,
        };
        on_repeat(&record);
        repeats.push(record);
    }
    let aggregate = Aggregate::from_records(arm, &repeats);
    Ok(CrossPatientReport { repeats, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_context: CrossPatientReport,
    pub without_context: CrossPatientReport,
}

impl AblationReport {
    /// Per-repeat F1 differences, with minus without.
    pub fn paired_f1_deltas(&self) -> Vec<f64> {
        self.with_context
            .repeats
            .iter()
            .zip(&self.without_context.repeats)
            .map(|(a, b)| a.metrics.f1 - b.metrics.f1)
            .collect()
    }
}

/// Paired context ablation: both arms share splits, seeds, initialization
/// and data order; only `context_enabled` differs.
pub fn run_context_ablation<F: Float>(
    windows: &[Window],
    protocol: &ProtocolConfig,
    init: Init<'_, F>,
    ft: &FinetuneConfig,
    mut on_repeat: impl FnMut(&RepeatRecord),
) -> Result<AblationReport> {
    let with_cfg = FinetuneConfig { context_enabled: true, ..*ft };
    let without_cfg = FinetuneConfig { context_enabled: false, ..*ft };
    let with_context = run_cross_patient(windows, protocol, init, &with_cfg, "context", &mut on_repeat)?;
    let without_context = run_cross_patient(windows, protocol, init, &without_cfg, "no_context", &mut on_repeat)?;
    Ok(AblationReport {
        with_context,
        without_context,
    })
}
