//! Training loop, checkpoints, evaluation reports, layer-weight export and
//! the speaker-verification benchmark.

mod checkpoint;
mod data;
mod evaluate;
mod export;
mod provider;
mod sv;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, META_FILE, OPTIM_FILE, PARAMS_FILE};
pub use data::{load_samples, Sample};
pub use evaluate::{evaluate, evaluate_samples, sample_metrics, OracleMode};
pub use export::{export_layer_weights, layer_weight_rows, layer_weights_csv};
pub use provider::{feature_path, precompute_features, FeatureProvider};
pub use sv::{read_trials, read_utterances, score_trials, sv_benchmark, SvConfig, SvModel, SvReport, Trial};
pub use train::{
    initial_params, prepare_full, read_curve, train, train_on, untrained_checkpoint, upstream_for, validation_loss,
    EpochLog, TrainOutcome, BEST_DIR, CURVE_FILE, LAST_DIR,
};
