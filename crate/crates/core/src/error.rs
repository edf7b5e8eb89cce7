use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is singular or ill-conditioned: {0} (rcond = {1:.3e})")]
    Singular(String, f64),

    #[error("system is not asymptotically stable (max Re(λ) = {0:.6e})")]
    Unstable(f64),

    #[error("H2 norm is infinite: feedthrough D is nonzero (max |D| = {0:.3e})")]
    NonzeroFeedthrough(f64),

    #[error("system dimension {dim} exceeds dense cap {cap} (set PHSG_MAX_DIM to raise it)")]
    TooLarge { dim: usize, cap: usize },

    #[error("quadrature with {nodes} nodes exceeds cap {cap}")]
    QuadratureTooLarge { nodes: u128, cap: usize },

    #[error("quadrature rule inexact for {slot}: needs {needed} points per dimension, got {got}")]
    InsufficientExactness {
        slot: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{0} is non-polynomial in the parameters; exact assembly needs a Gauss rule")]
    NonPolynomial(&'static str),

    #[error("parameter point outside the box in dimension {dim}: {value} not in [{lo}, {hi}]")]
    OutsideBox {
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("complex shifts cannot be paired into conjugates at r = {r}")]
    ShiftPairing { r: usize },

    #[error("step size underflow at t = {t:.9e} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step limit {steps} reached at t = {t:.9e}")]
    MaxSteps { t: f64, steps: usize },

    #[error("IVP at quadrature node {index} failed: {source}")]
    NodeFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank {requested} exceeds numerical rank {available}")]
    RankExceeded { requested: usize, available: usize },

    #[error("basis is not orthonormal (max |VᵀV − I| = {0:.3e})")]
    NotOrthonormal(f64),

    #[error("port-Hamiltonian invariants violated: {0}")]
    Structure(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error stems from user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::InvalidArgument(_)
                | Error::TooLarge { .. }
                | Error::QuadratureTooLarge { .. }
                | Error::InsufficientExactness { .. }
                | Error::NonPolynomial(_)
                | Error::OutsideBox { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
