use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("radius {r} too large for box of side {side} (need r < {limit})")]
    RadiusTooLarge { r: f64, side: f64, limit: f64 },
    #[error("box side {0} must be a positive integer for this operation")]
    NonIntegerSide(f64),
    #[error("block size {block} does not divide box side {side}")]
    BlockMismatch { block: u32, side: f64 },
    #[error("expected number of points {0} overflows the sampler")]
    Overflow(f64),
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("at least {needed} replicas required, got {got}")]
    TooFewReplicas { needed: usize, got: usize },
    #[error("variance curve lacks dyadic radius {0}")]
    MissingDyadicRadii(f64),
    #[error("frequency must be nonzero")]
    ZeroFrequency,
    #[error("frequency range too small: {0}")]
    InsufficientFrequencyRange(String),
    #[error("bad binning: {0}")]
    BadBinning(String),
    #[error("grid too coarse: spacing {spacing} exceeds {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("configuration is not neutral: {count} points for area {area}")]
    NonNeutral { count: u64, area: f64 },
    #[error("point count {count} is too far from target {target}")]
    CountTooFar { count: u64, target: u64 },
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),
    #[error("transport problem is unbalanced: source mass {source_mass}, target mass {target_mass}")]
    Unbalanced { source_mass: f64, target_mass: f64 },
    #[error("instance too large for the exact solver: {pairs} pairs (limit {limit})")]
    InstanceTooLarge { pairs: u64, limit: u64 },
    #[error("transport result carries no coupling")]
    MissingCoupling,
    #[error("transported density {density} exceeds bound {bound}")]
    DensityUnbounded { density: f64, bound: f64 },
    #[error("report section `{0}` is empty")]
    IncompleteReport(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
