use thiserror::Error;

use crate::sphere::SpherePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("derivative needs the 1/z chart at {0}")]
    ChartRequired(SpherePoint),

    #[error("root finding did not converge (worst residual {worst_residual:e})")]
    NoConvergence { worst_residual: f64 },

    #[error("{point} is a critical value: preimage of multiplicity {multiplicity}")]
    DegenerateFiber { point: SpherePoint, multiplicity: usize },

    #[error("branch ambiguity{}: {detail}", word.as_ref().map(|w| format!(" on word {w}")).unwrap_or_default())]
    BranchAmbiguity { word: Option<String>, detail: String },

    #[error("lift start does not cover the curve start (chordal gap {gap:e})")]
    StartMismatch { gap: f64 },

    #[error("inverse branch is not contracting: {detail}")]
    NotContracting { detail: String },

    #[error("ball B({center}, {radius}) meets the postcritical set (distance {distance:e})")]
    PostcriticalViolation {
        center: SpherePoint,
        radius: f64,
        distance: f64,
    },

    #[error("slow convergence along {word} at depth {depth} (edge ratio {ratio:.4})")]
    SlowConvergence {
        word: String,
        depth: usize,
        ratio: f64,
    },

    #[error("depth {requested} unavailable (tree holds depth {available})")]
    DepthUnavailable { requested: usize, available: usize },

    #[error("degree {degree} exceeds the census limit {limit}")]
    DegreeOverflow { degree: u64, limit: u64 },

    #[error("could not build a trap region: {0}")]
    TrapConstructionFailed(String),

    #[error("raster has no boundary cells")]
    EmptyBoundary,

    #[error("no recurrence within N_max = {n_max} (closest miss {closest_miss:e})")]
    NoRecurrence { n_max: usize, closest_miss: f64 },

    #[error("Newton iterate left the ball (distance {distance:e} > radius {radius})")]
    NewtonEscapedBall { distance: f64, radius: f64 },

    #[error("access curve tail {remaining:e} still above tolerance after {pieces} pieces")]
    TailBudgetExceeded { remaining: f64, pieces: usize },

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("invalid tree input: {0}")]
    InvalidTree(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("orbit left the differentiable domain at step {step}")]
    OrbitEscapedDomain { step: usize },

    #[error("artifacts come from different maps ({left} vs {right})")]
    MismatchedMap { left: String, right: String },

    #[error("harvest produced no records ({failures} failed trials)")]
    NoRecords { failures: usize },

    #[error("stage {stage} exceeded its {limit_secs} s budget")]
    StageTimeout { stage: String, limit_secs: u64 },

    #[error("stage {stage} aborted: {detail}")]
    StageAborted { stage: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}
