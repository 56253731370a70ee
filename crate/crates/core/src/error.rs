use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot combine guarantees with different adjacency kinds ({0} vs {1})")]
    MixedAdjacency(String, String),

    #[error("order grids differ; RDP curves can only be composed pointwise on identical grids")]
    MismatchedOrders,

    /// A calibration or feasibility search could not meet its target.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("root finding failed: {0}")]
    NoRoot(String),

    /// The PLD grid is too coarse for the requested accuracy.
    #[error("PLD grid too coarse: achieved epsilon accuracy {achieved:.3e}, requested {requested:.3e}")]
    CoarseGrid { achieved: f64, requested: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Returns a domain error unless `cond` holds.
pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}
