use std::path::{Path, PathBuf};

use fmfog::energy::{PowerRow, REFERENCE_CONTINUOUS_LIFE_H, REFERENCE_CONTINUOUS_W, REFERENCE_IDLE_W, REFERENCE_ROWS};
use fmfog::imu_data::{CsvSchema, SynthCorpusConfig};
use fmfog::models::{FmFogConfig, TriggerConfig};
use fmfog::preprocess::PreprocessConfig;
use fmfog::runtime::EngineConfig;
use fmfog::training::{FinetuneConfig, PretrainConfig, ProtocolConfig, TriggerTrainConfig};
use fmfog::{rng, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Daphnet {
        path: PathBuf,
    },
    Pamap2 {
        path: PathBuf,
    },
    GenericCsv {
        path: PathBuf,
        schema: CsvSchema,
    },
    Synthetic {
        corpus: SynthCorpusConfig,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub rows: Vec<PowerRow>,
    pub idle_w: f64,
    pub continuous_w: f64,
    pub reference_life_h: f64,
    /// Trigger rates listed in the summary table.
    pub duties: Vec<f64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            rows: REFERENCE_ROWS.to_vec(),
            idle_w: REFERENCE_IDLE_W,
            continuous_w: REFERENCE_CONTINUOUS_W,
            reference_life_h: REFERENCE_CONTINUOUS_LIFE_H,
            duties: REFERENCE_ROWS.iter().map(|r| r.trigger_rate).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; stages without an explicit seed derive theirs from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub inputs: Vec<InputSpec>,
    /// Unlabeled corpus for `pretrain`; `inputs` when empty.
    pub pretrain_inputs: Vec<InputSpec>,
    pub preprocess: PreprocessConfig,
    pub fm: FmFogConfig,
    pub trigger: TriggerConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub trigger_train: TriggerTrainConfig,
    pub protocol: ProtocolConfig,
    pub runtime: EngineConfig,
    pub energy: EnergyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            inputs: Vec::new(),
            pretrain_inputs: Vec::new(),
            preprocess: PreprocessConfig::default(),
            fm: FmFogConfig::default(),
            trigger: TriggerConfig::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            trigger_train: TriggerTrainConfig::default(),
            protocol: ProtocolConfig::default(),
            runtime: EngineConfig::default(),
            energy: EnergyConfig::default(),
        }
    }
}

/// Sections carrying a `seed` key, in expansion order.
pub const SEEDED_STAGES: [&str; 6] = ["preprocess", "pretrain", "finetune", "trigger_train", "protocol", "runtime"];

/// Keys accepted although absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 1] = ["finetune.class_weights"];

fn unknown_keys(user: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match known.get(k) {
            None if OPTIONAL_KEYS.contains(&path.as_str()) => {}
            None => out.push(path),
            Some(toml::Value::Table(kt)) => {
                if let toml::Value::Table(ut) = v {
                    unknown_keys(ut, kt, &path, out);
                }
            }
            Some(_) => {}
        }
    }
}

impl RunConfig {
    /// Parses TOML text, rejecting unknown keys (all of them are listed),
    /// and expands the global seed into every stage without its own seed.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let known: toml::Table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize to TOML");
        let mut problems = Vec::new();
        unknown_keys(&raw, &known, "", &mut problems);
        let mut problems: Vec<String> = problems.into_iter().map(|k| format!("unknown key `{k}`")).collect();
        let parsed: std::result::Result<RunConfig, _> = toml::from_str(text);
        let mut cfg = match parsed {
            Ok(c) => c,
            Err(e) => {
                if problems.is_empty() {
                    problems.push(e.message().to_string());
                }
                return Err(Error::Config(problems.join("; ")));
            }
        };
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        let explicit = |stage: &str| raw.get(stage).and_then(|t| t.get("seed")).is_some();
        for stage in SEEDED_STAGES {
            if !explicit(stage) {
                cfg.set_stage_seed(stage, rng::derive(cfg.seed, &[rng::tag(stage)]));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, seed_override)
    }

    fn set_stage_seed(&mut self, stage: &str, seed: u64) {
        match stage {
            "preprocess" => self.preprocess.seed = seed,
            "pretrain" => self.pretrain.seed = seed,
            "finetune" => self.finetune.seed = seed,
            "trigger_train" => self.trigger_train.seed = seed,
            "protocol" => self.protocol.seed = seed,
            "runtime" => self.runtime.seed = seed,
            _ => unreachable!("unknown stage {stage}"),
        }
    }

    /// Seed for the `i`-th synthetic input without an explicit one.
    pub fn input_seed(&self, spec: &InputSpec, index: usize) -> u64 {
        match spec {
            InputSpec::Synthetic { seed: Some(s), .. } => *s,
            _ => rng::derive(self.seed, &[rng::tag("input"), index as u64]),
        }
    }

    /// Every value-level problem, collected rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |name: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{name}: {e}"));
            }
        };
        check("fm", self.fm.validate());
        check("trigger", self.trigger.validate());
        check("runtime", self.runtime.validate());
        check("preprocess.window", self.preprocess.window.hop().map(|_| ()));
        if self.pretrain.epochs == 0 || self.pretrain.batch == 0 {
            problems.push("pretrain: epochs and batch must be at least 1".into());
        }
        if !(self.finetune.backbone_lr > 0.0 && self.finetune.head_lr > 0.0) {
            problems.push("finetune: learning rates must be positive".into());
        }
        if self.finetune.batch == 0 || self.trigger_train.batch == 0 {
            problems.push("finetune/trigger_train: batch must be at least 1".into());
        }
        if self.protocol.n_repeats == 0 {
            problems.push("protocol.n_repeats must be at least 1".into());
        }
        if self.fm.seq_len != self.preprocess.window.len || self.trigger.seq_len != self.preprocess.window.len {
            problems.push(format!(
                "fm.seq_len {} / trigger.seq_len {} must equal preprocess.window.len {}",
                self.fm.seq_len, self.trigger.seq_len, self.preprocess.window.len
            ));
        }
        if self.energy.rows.len() < 2 {
            problems.push("energy.rows needs at least two rows".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// SHA-256 over the canonical JSON form of the effective configuration.
    /// The output directory is left out, so relocated reruns hash equal.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default_with_derived_seeds() {
        let c = RunConfig::from_toml("", None).unwrap();
        assert_eq!(c.fm, FmFogConfig::default());
        assert_eq!(c.pretrain.seed, rng::derive(0, &[rng::tag("pretrain")]));
        assert_ne!(c.pretrain.seed, c.finetune.seed);
    }

    #[test]
    fn explicit_stage_seed_wins() {
        let c = RunConfig::from_toml("seed = 5\n[finetune]\nseed = 77\n", Some(9)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.finetune.seed, 77);
        assert_eq!(c.pretrain.seed, rng::derive(9, &[rng::tag("pretrain")]));
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let err = RunConfig::from_toml("bogus = 1\n[fm]\nd_modle = 3\n[runtime.gate]\nthreshhold = 0.4\n", None).unwrap_err();
        let msg = err.to_string();
        for k in ["bogus", "fm.d_modle", "runtime.gate.threshhold"] {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn value_problems_are_collected() {
        let err = RunConfig::from_toml("[fm]\nd_model = 30\n[protocol]\nn_repeats = 0\n", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fm:") && msg.contains("n_repeats"), "{msg}");
    }

    #[test]
    fn inputs_parse() {
        let c = RunConfig::from_toml(
            "[[inputs]]\nformat = \"daphnet\"\npath = \"S01R01.txt\"\n[[inputs]]\nformat = \"synthetic\"\ncorpus = { n_subjects = 3 }\n",
            None,
        )
        .unwrap();
        assert_eq!(c.inputs.len(), 2);
        assert!(matches!(RunConfig::from_toml("[[inputs]]\nformat = \"daphnet\"\npath = \"x\"\nextra = 1\n", None), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml("", None).unwrap();
        let b = RunConfig::from_toml("", Some(1)).unwrap();
        assert_eq!(a.hash(), RunConfig::from_toml("", None).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let moved = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), moved.hash());
    }
}
