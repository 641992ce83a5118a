//! Training loop: step, schedules, evaluation, checkpoints, ablation sweep.

mod ablation;
mod checkpoint;
mod config;
mod eval;
mod optim;
mod run;
mod step;

pub use ablation::{
    parse_rows, run_ablation, summarize_dir, summarize_log, summary_csv, summary_table, AblationOptions, AblationRow,
    RowSummary,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION};
pub use config::{Ablation, BatchConfig, OptimizerConfig, TrainConfig};
pub use eval::{evaluate, evaluate_with, frames_only, EvalMetrics, PairMetrics};
pub use optim::{one_cycle_lr, AdamW};
pub use run::{
    read_log, run_training, EvalRecord, LogRecord, RunOptions, RunOutcome, StepRecord, BEST_CHECKPOINT,
    LAST_CHECKPOINT, METRICS_FILE,
};
pub use step::{draw_batch, train_step, TrainState};
