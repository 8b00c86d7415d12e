//! IMU recordings: domain types, dataset loaders, a synthetic gait
//! generator and the cross-subject split protocol.

mod daphnet;
pub mod fixtures;
mod generic_csv;
mod pamap2;
mod split;
mod synth;
mod types;

pub use daphnet::{format_daphnet, load_daphnet, parse_daphnet, subject_from_path, DAPHNET_RATE_HZ, MILLI_G_TO_MS2};
pub use generic_csv::{load_generic_csv, read_generic_csv, Axis, ChannelSpec, CsvSchema, Modality, TimeUnit, Unit};
pub use pamap2::{fill_short_gaps, load_pamap2, parse_pamap2, MAX_INTERP_GAP, PAMAP2_COLUMNS, PAMAP2_RATE_HZ};
pub use split::{split_subjects, SubjectSplit};
pub use synth::{
    ambulatory_schedule, random_fog_schedule, synth_corpus, synth_gait, CorpusSchedule, Episode, GaitState, SubjectTraits,
    SynthCorpusConfig, SynthParams,
};
pub use types::{
    activity, runs_to_spans, AnnotationSpan, ModalityMask, SensorLocation, SensorSite, SensorStream, Side, SpanLabel,
};
