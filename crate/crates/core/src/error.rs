use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// An exponential moment was requested with an exponent beyond the
    /// representable range.
    #[error("exponential moment out of range at p = {p}, q = {q} (exponent {exponent:.1})")]
    Overflow { p: f64, q: f64, exponent: f64 },

    #[error("bracket expansion failed for {what} after {doublings} doublings")]
    BracketExpansion { what: &'static str, doublings: usize },

    #[error("no sign change for {what} on [{a}, {b}]")]
    NoSignChange { what: &'static str, a: f64, b: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("CFL condition violated: ratio {ratio:.4} exceeds {limit}")]
    Cfl { ratio: f64, limit: f64 },

    #[error("no convergence: defect {defect:.3e} above tolerance {tol:.3e} after {steps} steps")]
    NonConvergence { defect: f64, tol: f64, steps: usize },

    #[error("front reached the right edge of the domain at t = {t} (x = {x})")]
    DomainExhausted { t: f64, x: f64 },

    #[error("solution exceeded the a priori bound {bound} at t = {t} (value {value})")]
    BlowUp { t: f64, value: f64, bound: f64 },

    #[error("front not detected at t = {t}")]
    FrontNotDetected { t: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
