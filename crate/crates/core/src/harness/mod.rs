//! Run configuration, optimizer, training, sampling, evaluation and the
//! self-test driver behind the `tric` binary.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod optim;
mod sample;
mod selftest;
mod train;

pub use checkpoint::{check_compatible, checkpoint_text, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{DiffusionConfig, OptimConfig, RunConfig, KEYS, MODEL_KEYS};
pub use optim::AdamW;
pub use train::{load_training_corpus, train, StepLosses, Trainer, TrainItem, TrainSummary, CHECKPOINT_FILE, LOSS_FILE, LOSS_HEADER};
pub use sample::{sample_cmd, sample_motion, sample_rng, sample_to_dir, trajectory_text, SampleRequest};
pub use metrics::{diversity, frechet_distance, mm_dist, psd_sqrt, r_precision, Interval, MetricsReport, RidgeMap, RETRIEVAL_POOL, RIDGE_LAMBDA, TOP_K, Z_95};
pub use eval::{aggregate, eval_cmd, evaluate, EvalOptions, Reference, RepeatMetrics, DIVERSITY_PAIRS};
pub use selftest::{ablation_base, ablation_overrides, probe_variant, run_ablations, run_invariants, selftest, Check};
