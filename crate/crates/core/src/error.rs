use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed geometry, inconsistent dimensions or bad parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Rotational task coordinates mixed with translational ones without a
    /// characteristic length.
    #[error("units error: {0}")]
    Units(String),

    #[error("pose unreachable by leg {leg}: {detail}")]
    Unreachable { leg: usize, detail: String },

    #[error("joint {leg} at {rho} is outside its limits [{min}, {max}]")]
    JointLimit {
        leg: usize,
        rho: f64,
        min: f64,
        max: f64,
    },

    #[error("no assembly: {0}")]
    NoAssembly(String),

    /// No Newton seed converged on the orientation closure equations.
    #[error("no assembly: orientation solver did not converge from any seed")]
    NewtonNoConvergence,

    #[error("assembly indeterminate: {0}")]
    AssemblyIndeterminate(String),

    /// The configuration is parallel-singular and cannot be controlled.
    #[error("uncontrollable configuration: {0}")]
    Uncontrollable(String),

    #[error("inconsistent configuration: closure residual {residual:e} exceeds {limit:e}")]
    InconsistentAssembly { residual: f64, limit: f64 },

    #[error("empty workspace: {0}")]
    EmptyWorkspace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short stable identifier, used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Units(_) => "units",
            Error::Unreachable { .. } => "unreachable",
            Error::JointLimit { .. } => "joint-limit",
            Error::NoAssembly(_) => "no-assembly",
            Error::NewtonNoConvergence => "newton-no-convergence",
            Error::AssemblyIndeterminate(_) => "assembly-indeterminate",
            Error::Uncontrollable(_) => "uncontrollable",
            Error::InconsistentAssembly { .. } => "inconsistent-assembly",
            Error::EmptyWorkspace(_) => "empty-workspace",
            Error::Io(_) => "io",
        }
    }
}
