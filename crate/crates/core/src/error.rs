use thiserror::Error;

/// Failures surfaced by the analysis, integration and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },
    #[error("bracket failure: resonant phase has a tangential zero near xi = {xi}")]
    BracketFailure { xi: f64 },
    #[error("resonance collision: points {a} and {b} are closer than {tol}")]
    Collision { a: f64, b: f64, tol: f64 },
    #[error("resonant phase vanishes identically")]
    DegeneratePhase,
    #[error("polarization violated at grid index {index} (residual {residual:e})")]
    Polarization { index: usize, residual: f64 },
    #[error("harmonic cutoff overflow: need {needed}, storage holds {available}")]
    CutoffOverflow { needed: usize, available: usize },
    #[error("CFL violation: dt = {dt} exceeds {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("blow-up guard tripped at t = {t} (amplitude {amplitude:e})")]
    BlowUp { t: f64, amplitude: f64 },
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("carrier wavenumber {carrier} is not a grid frequency (nearest {nearest})")]
    UnsnappedCarrier { carrier: f64, nearest: f64 },
    #[error("time {t} exceeds the flow horizon {limit}")]
    HorizonExceeded { t: f64, limit: f64 },
    #[error("step underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("support: {0}")]
    Support(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in failure records and by the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::BracketFailure { .. } => "bracket_failure",
            Error::Collision { .. } => "collision",
            Error::DegeneratePhase => "degenerate_phase",
            Error::Polarization { .. } => "polarization",
            Error::CutoffOverflow { .. } => "cutoff_overflow",
            Error::Cfl { .. } => "cfl",
            Error::BlowUp { .. } => "blow_up",
            Error::NonFinite { .. } => "non_finite",
            Error::UnsnappedCarrier { .. } => "unsnapped_carrier",
            Error::HorizonExceeded { .. } => "horizon_exceeded",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::Support(_) => "support",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
