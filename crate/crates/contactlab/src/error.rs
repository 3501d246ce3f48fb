//! Shared error type for the geometry modules.

use thiserror::Error;

use crate::numjet::{EvalError, ParseError};

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("point outside the declared domain box")]
    OutsideDomain,
    #[error("point fails exclusion predicate `{predicate}`")]
    ExcludedPoint { predicate: String },
    #[error("jacobian rank {rank} below domain dimension {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("metric not positive definite")]
    MetricNotSpd,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("basis not orthonormal to tolerance (max deviation {deviation:e})")]
    NonOrthonormalBasis { deviation: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("vector is proportional to the structure vector field")]
    XiProportional,
    #[error("phi annihilates a vector not proportional to xi")]
    PhiDegenerate,
    #[error("arccos argument {value} exceeds 1 beyond round-off")]
    AcosDomain { value: f64 },
    #[error("empty subspace")]
    EmptySubspace,
    #[error("normal vector has tangential component of magnitude {magnitude:e}")]
    NotNormal { magnitude: f64 },
    #[error("sub-bases not orthogonal (max inner product {value:e})")]
    NonOrthogonalSplit { value: f64 },
    #[error("ambient structure fails the covariant-derivative condition (residual {residual:e})")]
    NotSasakian { residual: f64 },
    #[error("constructor self-check failed with residual {residual:e}")]
    SelfCheckFailed { residual: f64 },
    #[error("induced metric lacks base/fiber block structure (off-block entry {value:e})")]
    BlockStructure { value: f64 },
    #[error("fiber metric does not factorize through a base function (spread {value:e})")]
    NotFactorizable { value: f64 },
    #[error("slant angle degenerate: {context}")]
    DegenerateTheta { context: String },
    #[error("normal image of the slant distribution has rank {rank}, expected {expected}")]
    DegenerateNormalImage { rank: usize, expected: usize },
    #[error("unknown catalog entry `{name}`")]
    UnknownCatalogEntry { name: String },
    #[error("sampling failed: could not draw {requested} points from the domain box")]
    SamplingFailed { requested: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, GeomError>;
