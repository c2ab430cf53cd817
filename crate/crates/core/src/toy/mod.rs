//! Desk-scale stand-in for the adaptation experiments: a softmax classifier
//! on seeded Gaussian data with a real/synthetic condition gap and a
//! source/target domain gap.

mod data;
mod error;
mod model;
mod protocol;
mod stats;

pub use data::{
    generate_toy_data, Condition, ConditionShift, Dataset, Domain, Split, ToyDataSpec,
};
pub use error::{Result, ToyError};
pub use model::{evaluate_error, loss_and_grad, train, ToyModel, TrainConfig, BIAS, WEIGHT};
pub use protocol::{
    intra_inter, load_protocol_config, run_domain_curve, run_ensemble_protocol,
    run_similarity_experiment, run_syn2real_protocol, DomainCurve, ProtocolConfig, ProtocolMode,
    ProtocolReport, SeedOutcome, SimilarityExperiment,
};
pub use stats::{mean, ranks, spearman, standard_error};
