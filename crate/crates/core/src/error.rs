use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input. The CLI maps this to a usage error.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dense oracle is capped at {cap} qubits, got {n}")]
    DenseCap { n: usize, cap: usize },

    #[error("lightcone of qubit {qubit} spans {size} qubits, cap is {cap}")]
    SupportCap { qubit: usize, size: usize, cap: usize },

    #[error("operator for |s| = {weight} has sparsity bound {bound}, cap is {cap}")]
    SparsityCap { weight: usize, bound: usize, cap: usize },

    #[error("{count} masks exceed the budget of {budget}; lower c or use the exact oracle")]
    MaskBudget { count: usize, budget: usize },

    /// An internal cross-check between two independent computations failed.
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by a configured size limit rather than bad input.
    pub fn is_resource(&self) -> bool {
        matches!(
            self,
            Error::DenseCap { .. }
                | Error::SupportCap { .. }
                | Error::SparsityCap { .. }
                | Error::MaskBudget { .. }
        )
    }
}
