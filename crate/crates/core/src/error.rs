use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coherence matrix has zero or negative trace ({trace})")]
    ZeroIntensity { trace: f64 },

    #[error("coherence matrix is not positive semidefinite (det = {det}, trace = {trace})")]
    NotPsd { det: f64, trace: f64 },

    #[error("invalid beam: {0}")]
    InvalidBeam(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("strategy response {value} at angle {angle} is outside [-1, 1]")]
    StrategyOutOfRange { angle: f64, value: f64 },

    #[error("polarizer scan is flat; orientation is not unique")]
    DegenerateScan,

    #[error("beam is separable (kappa2 = 0); the stripping angle tan s = (kappa1/kappa2) tan b needs kappa2 > 0")]
    SeparableBeam,

    #[error("monte carlo mode requires an ensemble configuration")]
    EnsembleRequired,

    #[error("reference arm intensity I_k1^ab is {0}; the stripped beam is extinguished by the analyzer")]
    ZeroReferenceIntensity(f64),

    #[error("readings are inconsistent: recovered p_k{index} = {value}")]
    InconsistentReadings { index: usize, value: f64 },
}

impl Error {
    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidBeam(_)
                | Error::InvalidArgument(_)
                | Error::SeparableBeam
                | Error::EnsembleRequired
                | Error::NotPsd { .. }
                | Error::ZeroIntensity { .. }
        )
    }
}
