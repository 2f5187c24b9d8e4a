use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("root finding did not converge: {0}")]
    RootFind(String),
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("tower point level {level} is not below the roof {roof}")]
    LevelAboveRoof { level: u64, roof: u64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("non-affine branch {branch}: the constant-Jacobian disintegration does not apply")]
    NonConstantJacobian { branch: String },
    #[error("water-filling domination fails at index {0}")]
    DominationViolated(usize),
    #[error("redistribution parameter t = {t} outside [0, xi = {xi}] at clock {clock}")]
    SplitParameter { t: f64, xi: f64, clock: u64 },
    #[error("negative density cell produced at clock {clock}")]
    NegativeDensity { clock: u64 },
    #[error("no admissible (N, eps) within search bounds: {0}")]
    NoAdmissiblePlan(String),
    #[error("tower is not mixing: gcd of return times is {0}")]
    NotMixing(u64),
    #[error("empty height class {0}")]
    EmptyHeight(u64),
    #[error("window exhausted: {0}")]
    WindowExhausted(String),
    #[error("decomposition residual {residual} exceeds tolerance {tolerance}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
