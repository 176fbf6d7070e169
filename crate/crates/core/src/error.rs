use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or scheme violates a model constraint.
    #[error("validation error: {0}")]
    Validation(String),

    /// No admissible design exists for the requested inputs.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Exact enumeration would exceed the configured state cap.
    #[error(
        "state space of {states} states exceeds the cap of {cap}; \
         use the simulator for systems of this size"
    )]
    StateSpace { states: u128, cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
