//! Run configuration, the training loop, generation, the cross-domain
//! report and the privacy planner.

mod config;
mod eval;
mod ingest;
mod plan;
mod table;
mod train;

pub use config::{Mode, Overrides, ResolvedPrivacy, RunConfig};
pub use eval::{
    crossdomain, length_table, predictions_bytes, read_jsonl, run_dir, CrossdomainConfig, CrossdomainOutput,
    LengthRow, TrainedRun,
};
pub use ingest::corpus_table;
pub use plan::{plan, Plan, PlanRequest};
pub use table::Table;
pub use train::{prepare, train, DirLock, Prepared, RunManifest, Trainer, MANIFEST_FILE, TOKENIZER_FILE};
