use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("solver failure: {0}")]
    Solver(#[from] bloch_transfer::SolveError),
    #[error("verification failed: {0} check(s) did not pass")]
    Verification(usize),
}

impl CliError {
    /// 1 for configuration and output paths, 2 for numerical failures,
    /// 3 for failed self-checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Output { .. } => 1,
            Self::Solver(_) => 2,
            Self::Verification(_) => 3,
        }
    }
}
