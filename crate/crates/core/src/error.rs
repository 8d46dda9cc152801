use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation too large: dimension {dim} exceeds cap {cap}")]
    TruncationTooLarge { dim: usize, cap: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("interaction is not symmetric: nu({p}) = {forward} but nu({neg}) = {backward}", neg = -p)]
    NonSymmetricInteraction { p: i32, forward: f64, backward: f64 },

    #[error("|nu({p})| = {value} exceeds the declared bound phi = {phi}")]
    InteractionBound { p: i32, value: f64, phi: f64 },

    #[error("unknown zero-mode monomial `{0}`")]
    UnknownMonomial(String),

    #[error("mode index {index} out of range for basis with {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("weight density has negative value {value} at node {node}")]
    NegativeWeight { value: f64, node: usize },

    #[error("Cauchy-Schwarz violated: |<a0>|^2/V = {order_sq} > <a0+ a0>/V = {n0}")]
    CauchySchwarz { order_sq: f64, n0: f64 },

    #[error("inequality audit failed: {0}")]
    AuditFailed(String),

    #[error("eigensolver did not converge on a block of size {0}")]
    Eigensolver(usize),

    #[error("measure sequence: {0}")]
    Measure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
