use thiserror::Error;

use crate::confidence::ConfidenceError;
use crate::dra::DraError;
use crate::envs::EnvError;
use crate::evi::EviError;
use crate::graph_learn::GraphLearnError;
use crate::learner::LearnerError;
use crate::ltl::LtlError;
use crate::mdp::MdpError;
use crate::metrics::MetricsError;
use crate::product::ProductError;

/// Any library error, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mdp: {0}")]
    Mdp(#[from] MdpError),
    #[error("ltl: {0}")]
    Ltl(#[from] LtlError),
    #[error("automaton: {0}")]
    Dra(#[from] DraError),
    #[error("product: {0}")]
    Product(#[from] ProductError),
    #[error("graph learning: {0}")]
    GraphLearn(#[from] GraphLearnError),
    #[error("confidence: {0}")]
    Confidence(#[from] ConfidenceError),
    #[error("evi: {0}")]
    Evi(#[from] EviError),
    #[error("learner: {0}")]
    Learner(#[from] LearnerError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("envs: {0}")]
    Env(#[from] EnvError),
    #[error("spec: {0}")]
    Spec(String),
}
