use thiserror::Error;

/// Errors raised by the model, strategy and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// An argument lies outside the region where the quantity is defined.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// An argument is malformed independently of the model domain.
    #[error("invalid argument `{name}`: {detail}")]
    Argument { name: &'static str, detail: String },

    /// A closed form divides by a vanishing parameter combination.
    #[error("singular parameters in {what}: {pivot} vanishes")]
    Singular { what: &'static str, pivot: String },

    /// A numerical routine failed to reach its tolerance.
    #[error("numerical failure in {what}: {detail}")]
    Numeric { what: &'static str, detail: String },

    /// Relative wealth left the positive half-line.
    #[error("inadmissible wealth {wealth} at t = {t}")]
    Inadmissible { t: f64, wealth: f64 },

    #[error("insufficient sample: need at least {required} paths, got {got}")]
    InsufficientSample { required: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> ModelError {
    ModelError::Domain {
        what,
        detail: detail.into(),
    }
}

pub(crate) fn argument(name: &'static str, detail: impl Into<String>) -> ModelError {
    ModelError::Argument {
        name,
        detail: detail.into(),
    }
}

pub(crate) fn singular(what: &'static str, pivot: impl Into<String>) -> ModelError {
    ModelError::Singular {
        what,
        pivot: pivot.into(),
    }
}
