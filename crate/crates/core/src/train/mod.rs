//! Optimization, the training loop, evaluation and gradient checking.

mod adam;
mod config;
mod eval;
mod gradcheck;
mod trainer;

pub use adam::{adam_step, lr_schedule, AdamConfig, AdamState};
pub use config::{Architecture, Precision, TrainConfig};
pub use eval::{argmax_channels, evaluate, evaluate_checkpoint, normalization, read_report, EvalReport};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport, GroupCheck};
pub use trainer::{
    load_datasets, model_config_for, train, train_on, EpochRecord, EvalRecord, RunSummary, StepRecord,
    TrainOutcome, EVAL_SPLIT,
};
