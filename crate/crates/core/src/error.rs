use thiserror::Error;

/// Errors surfaced by the estimation pipeline and its numeric kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series failed to converge after {terms} terms")]
    SeriesDivergence { terms: usize },

    #[error("solver failed to converge: {0}")]
    Convergence(String),

    #[error("matrix is singular or ill-conditioned: {0}")]
    Singular(String),

    #[error("matrix is indefinite: min eigenvalue {min_eig:e} below tolerance {tol:e}")]
    Indefinite { min_eig: f64, tol: f64 },

    #[error("truncation region holds mass {mass:e}, below the workable floor")]
    DegenerateRegion { mass: f64 },

    #[error("rejection sampler infeasible: acceptance probability {accept:e}")]
    Infeasible { accept: f64 },

    #[error("propensity underflow: fitted pi_B = {value:e} at row {row}")]
    PropensityUnderflow { row: usize, value: f64 },

    #[error("collinear covariates: Gram condition number {cond:e}")]
    Collinear { cond: f64 },

    #[error("parse error at {path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: String,
        message: String,
    },

    #[error("probability file is missing the weight column '{0}'")]
    MissingWeight(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("variance diagnostics: {0}")]
    Diagnostics(String),

    #[error("{dropped} of {total} bootstrap replicates failed (> {limit_pct}% allowed)")]
    ReplicateFailures {
        dropped: usize,
        total: usize,
        limit_pct: f64,
    },

    #[error("double-bootstrap budget exceeded: {cost} replicate solves > cap {cap}")]
    Budget { cost: usize, cap: usize },

    #[error("estimand not supported here: {0}")]
    UnsupportedEstimand(String),

    #[error("dimension l = {0} not supported for bound computation (l <= 3 required)")]
    UnsupportedDimension(usize),

    #[error("empty study: {0}")]
    EmptyStudy(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot read '{path}': {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
