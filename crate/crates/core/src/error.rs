use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate lattice: |w1 x w2| = {area:e} m^2")]
    DegenerateLattice { area: f64 },

    #[error("non-finite intermediate in {context}")]
    NonFinite { context: String },

    #[error("non-finite Green's function at harmonic (p={p}, q={q}): {source}")]
    Harmonic {
        p: i32,
        q: i32,
        #[source]
        source: Box<Error>,
    },

    #[error("singular moment matrix at theta={theta_deg} deg, phi={phi_deg} deg, f={freq} Hz")]
    SingularMatrix { theta_deg: f64, phi_deg: f64, freq: f64 },

    #[error("degenerate {0}")]
    Degenerate(String),

    #[error("evaluation failed at theta={theta_deg} deg, phi={phi_deg} deg, f={freq} Hz: {source}")]
    Node {
        theta_deg: f64,
        phi_deg: f64,
        freq: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
