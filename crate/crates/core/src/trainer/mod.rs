//! The optimisation loop: batching, the inheritance-weighted objective,
//! AdamW, validation PPL, checkpoints, generation chains and adaptation.

mod adapt;
mod chain;
mod config;
mod metrics;
mod optim;
mod run;

pub use adapt::{adapt_domain, AdaptOutput, AdaptPpl};
pub use chain::{chain_generations, Generation, Lineage, LineageEntry, TeacherChoice};
pub use config::{lr_at, TrainConfig};
pub use metrics::{
    metrics_csv, parse_metrics_csv, ppl_curve, read_metrics, write_metrics, MetricsRow, METRICS_HEADER,
};
pub use optim::AdamW;
pub use run::{checkpoint_name, evaluate_ppl, train_run, RunOptions, RunOutput};
