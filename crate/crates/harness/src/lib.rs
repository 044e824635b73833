//! Simulation harness: the named design catalog with its true-parameter
//! sets, forward data generation, replicated coverage studies, and the
//! brute-force rejection sampler that serves as ground truth on instances
//! small enough to afford it.

mod catalog;
mod oracle;
mod study;

pub use catalog::{
    catalog, design, parameter_set, parameter_sets, pedigree_design, DesignEntry, DesignKind,
    ParameterSet,
};
pub use oracle::{ks_distance, rejection_oracle};
pub use study::{generate_data, run_study, ReportRow, StudyConfig, StudyReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown design id {0:?}")]
    UnknownDesign(String),
    #[error("unknown parameter set id {0:?}")]
    UnknownParameterSet(String),
    #[error("parameter set {params} does not fit design {design}: {detail}")]
    Mismatch {
        design: String,
        params: String,
        detail: String,
    },
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("model construction failed: {0}")]
    Model(#[from] fidmix_core::model::ModelError),
    #[error("no rejection draw satisfied the intervals after {draws} attempts; widen the intervals or increase the draw budget")]
    OracleStarved { draws: usize },
    #[error("rejection oracle is restricted to {limit} observations, the model has {n}")]
    OracleTooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Inference(#[from] fidmix_core::inference::InferenceError),
    #[error("every replicate failed; last error: {0}")]
    AllReplicatesFailed(String),
}
