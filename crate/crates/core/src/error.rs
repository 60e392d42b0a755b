use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty region")]
    EmptyRegion,
    #[error("cut vector must be nonzero")]
    ZeroCut,
    #[error("interaction bound violated: max |U| = {max_abs} exceeds m_int * lambda = {m_int} * {lambda}")]
    InteractionTooLarge { max_abs: f64, m_int: f64, lambda: f64 },
    #[error("resonant energy {energy}: nearest eigenvalue estimate {nearest_eigenvalue}")]
    ResonantEnergy { energy: f64, nearest_eigenvalue: f64 },
    #[error("level-set hit at site ({site:?}): |w - (E - U_j)/lambda| = {margin} <= delta")]
    LevelSetHit { site: (i64, i64), margin: f64 },
    #[error("Neumann ratio 16/(lambda delta) = {ratio} is not below 1")]
    NeumannRatio { ratio: f64 },
    #[error("unperturbed box is not good: {0}")]
    NotGood(String),
    #[error("perturbation {size} exceeds exp(-3 gamma_1 N) = {limit}")]
    PerturbationTooLarge { size: f64, limit: f64 },
    #[error("scale condition N^b <= gamma_1 N / 10 fails: {lhs} > {rhs}")]
    ScaleCondition { lhs: f64, rhs: f64 },
    #[error("covering hypothesis fails at site ({site:?}): {reason}")]
    CoverHypothesis { site: (i64, i64), reason: String },
    #[error("potential lacks Type II symmetry (max even-mode residual {residual})")]
    NotTypeII { residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;
