use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: expected {expected} cells, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("mollifier unresolved on the grid (delta = {delta}, adjacent ratio {ratio:.3e} < 1e-3)")]
    UnderResolved { delta: f64, ratio: f64 },

    #[error("density has zero total mass")]
    ZeroMass,

    #[error("total mass mismatch: {lhs} vs {rhs}")]
    MassMismatch { lhs: f64, rhs: f64 },

    #[error("CFL violation in {direction}: number {number:.4} exceeds {limit}")]
    Cfl {
        direction: &'static str,
        number: f64,
        limit: f64,
    },

    #[error("mass leaked through the xi boundary: {lost:.3e} of {mass:.3e}")]
    BoundaryLeak { lost: f64, mass: f64 },

    #[error("blow-up guard: max |du/dx| = {max_gradient:.3e}")]
    BlowUp { max_gradient: f64 },

    #[error("negative marginal density {value:.3e} in cell {cell}")]
    NegativeMarginal { cell: usize, value: f64 },

    #[error("time {t} outside coefficient range [{start}, {end}]")]
    TimeRange { t: f64, start: f64, end: f64 },

    #[error("initial profile not supported inside the xi box (edge mass {edge_mass:.3e})")]
    SupportViolation { edge_mass: f64 },

    #[error("reference density vanishes in cell {cell} where the profile is positive")]
    VanishingReference { cell: usize },

    #[error("xi box half-width {xi_max} is below {required} standard units")]
    XiBoxTooSmall { xi_max: f64, required: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
