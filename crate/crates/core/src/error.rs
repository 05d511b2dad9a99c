use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(
        "fixed point did not converge after {iterations} iterations \
         (n_o = {n_o:e}, n_e = {n_e:e}, residual = {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        n_o: f64,
        n_e: f64,
        residual: f64,
    },

    #[error("steady state is internally inconsistent: {0}")]
    Inconsistent(String),

    #[error("singular response at delta = {delta:e} rad/s: {what}")]
    Singular { delta: f64, what: String },

    #[error("mean-field evolution diverged at t = {time:e} s")]
    Diverged { time: f64 },

    #[error("mean-field evolution did not settle within {duration:e} s (last relative change {last_change:e})")]
    NotSettled { duration: f64, last_change: f64 },

    #[error("group delay is ill-conditioned: {0}")]
    IllConditionedDelay(String),

    #[error("spectrum axis does not cover the required range: {0}")]
    Coverage(String),

    #[error("eigenvalue iteration failed for drift matrix {0}")]
    Eigen(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::Parse { .. } | Error::Coverage(_) => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
