use thiserror::Error;

/// Errors produced by the AMM toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what}[{index}] must be strictly positive, got {value}")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid AMM spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no positive root in [{lo:e}, {hi:e}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (grad residual {grad_residual:e}, level residual {level_residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        grad_residual: f64,
        level_residual: f64,
    },

    #[error("evaluation failed at probe {probe}: {source}")]
    Probe {
        probe: usize,
        #[source]
        source: Box<AmmError>,
    },
}

impl AmmError {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            AmmError::NoRoot { .. } | AmmError::NoConvergence { .. } => true,
            AmmError::Probe { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, AmmError>;
