//! Evaluation loops around an external scorer: lambda sweeps, domain-count
//! ablation and relative-WER tables.

mod ablation;
mod config;
mod error;
mod evaluator;
mod lambda;
mod metrics;

pub use ablation::{
    run_domain_ablation, run_domain_ablation_with, AblationPlan, AblationPoint, AblationResult,
    SubsetPolicy,
};
pub use config::{LambdaGrid, SweepConfig};
pub use error::{FailureKind, PointFailure, Result, SweepError};
pub use evaluator::{
    parse_eval_output, timeout_from_env, CommandEvaluator, EvalFailure, EvalOutput, EvalRequest,
    Evaluator, DEFAULT_TIMEOUT_SECS, TIMEOUT_ENV,
};
pub use lambda::{best_lambda, run_lambda_sweep, run_lambda_sweep_with, EvalRecord, SweepResult};
pub use metrics::{relative_table, relative_wer, RelativeTable};
