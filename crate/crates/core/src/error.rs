use std::path::PathBuf;

/// Errors raised anywhere in the retargeting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh is not watertight: {} open edge(s), first {:?}", .open_edges.len(), .open_edges.first())]
    NonWatertight { open_edges: Vec<(u32, u32)> },

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("iso value {iso} outside field range [{min}, {max}]")]
    IsoOutOfRange { iso: f64, min: f64, max: f64 },

    #[error("incompatible lattices: {0}")]
    IncompatibleLattice(String),

    #[error("contact candidate has no contact points on any hand")]
    EmptyCandidate,

    #[error("contact constraint is empty for every hand")]
    EmptyConstraint,

    #[error("track too short: {len} frame(s), need at least {min}")]
    TrackTooShort { len: usize, min: usize },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("every contact candidate was rejected by the penetration filter")]
    AllCandidatesRejected,

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema version mismatch: expected {expected:?}, found {found:?}")]
    SchemaVersionMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }

    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonWatertight { .. } => "non_watertight",
            Error::DegenerateMesh(_) => "degenerate_mesh",
            Error::IsoOutOfRange { .. } => "iso_out_of_range",
            Error::IncompatibleLattice(_) => "incompatible_lattice",
            Error::EmptyCandidate => "empty_candidate",
            Error::EmptyConstraint => "empty_constraint",
            Error::TrackTooShort { .. } => "track_too_short",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::AllCandidatesRejected => "all_candidates_rejected",
            Error::Parse { .. } => "parse_error",
            Error::SchemaVersionMismatch { .. } => "schema_version_mismatch",
            Error::Invalid(_) => "invalid_input",
            Error::Config { .. } => "config_error",
            Error::Io { .. } => "io_error",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
