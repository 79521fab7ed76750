use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("config: {0}")]
    Config(String),
    #[error("singular mass matrix: {0}")]
    SingularMass(String),
    #[error("interface coupling matrix S is singular")]
    SingularInterface,
    #[error("stationary solve ill-posed: sigma2/sigma1 = {ratio:.3e}")]
    IllPosed { ratio: f64 },
    #[error("divergence at step {step}")]
    Divergence { step: usize },
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Config(_) | Error::Mesh(_) | Error::Format(_) => 1,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
