//! Orchestration: synthetic corpus generation, the two-stage
//! train/fine-tune/generate/evaluate workflow, configuration, and reports.

mod config;
mod corpus;
mod report;
mod stages;

pub use config::RunConfig;
pub use corpus::{
    detail_pattern, load_corpus, motion_from_envelopes, synthesize_corpus, Corpus, CorpusSpec,
    IdentityData,
};
pub use report::{MetricReport, MetricRow};
pub use stages::{
    build_gan_corpus, build_sequence_samples, evaluate, finetune_stage,
    finetune_stage_with_budget, landmark_track, load_frames_chw, metric_row, mfcc_config,
    mouth_vertex_ids, prepare, run_stage1, run_stage1_with, run_stage2, sweep_finetune_length,
    train_general_stage, GeneralTraining, Stage1Output,
};
