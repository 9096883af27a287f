use thiserror::Error;

/// Errors raised by the stabilization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("empty boundary patch: fraction {fraction} of a side with {side_nodes} nodes selects no node")]
    EmptyPatch { fraction: f64, side_nodes: usize },

    #[error("collar depth {depth} exceeds half the domain width ({limit} cells)")]
    CollarTooDeep { depth: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("Dirichlet map solve remained singular after k escalation (last k = {k}, condition estimate {cond:.3e})")]
    DirichletSingular { k: f64, cond: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("spectral gap {gap:.3e} below the required {required:.1e}; perturb nu0 to separate the spectrum from the imaginary axis")]
    SpectralGap { gap: f64, required: f64 },

    #[error("contour quadrature failed: {0}")]
    Contour(String),

    #[error("biorthogonalization breakdown: Gram condition {0:.3e}")]
    Biorthogonal(f64),

    #[error("actuator selection failed: {0}")]
    Actuators(String),

    #[error("system is not controllable: {0}")]
    Uncontrollable(String),

    #[error("gain design failed: {0}")]
    Design(String),

    #[error("realification mismatch: spectra differ by {0:.3e}")]
    Realify(f64),

    #[error("norm parameters rejected: {0}")]
    NormGate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
