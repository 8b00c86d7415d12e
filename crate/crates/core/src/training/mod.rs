//! Pretraining and fine-tuning loops, metrics, and the cross-subject
//! evaluation protocol.

mod batch;
mod finetune;
mod metrics;
mod pretrain;
mod protocol;

pub use finetune::{
    evaluate, evaluate_trigger, finetune, predict_fog, train_trigger, FinetuneConfig, FinetuneHistory,
    TriggerTrainConfig,
};
pub use metrics::{Confusion, Metrics};
pub use pretrain::{channel_means, evaluate_reconstruction, pretrain, PretrainConfig, PretrainHistory, ReconstructionEval};
pub use protocol::{
    run_context_ablation, run_cross_patient, AblationReport, Aggregate, CrossPatientReport, Init, ProtocolConfig,
    RepeatRecord, ScoreStat,
};
