use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("nearest-neighbor query against an empty cloud")]
    EmptyTarget,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("sampling resolution {resolution} m exceeds body radius {radius} m")]
    ResolutionTooCoarse { resolution: f64, radius: f64 },
    #[error("joint {joint} angle {angle:.4} rad outside [{min:.4}, {max:.4}]")]
    JointLimit { joint: usize, angle: f64, min: f64, max: f64 },
    #[error("hand-eye motions are degenerate: {0}")]
    DegenerateMotions(String),
    #[error("no valid base candidates for this workspace")]
    NoCandidates,
    #[error("knee detection failed: {0}")]
    NoKnee(String),
    #[error("configuration dictionary is empty")]
    EmptyDictionary,
    #[error("no path between base positions")]
    Unreachable,
    #[error("no frames to assemble")]
    NoFrames,
    #[error("ICP found only {found} correspondences (need 10)")]
    InsufficientOverlap { found: usize },
    #[error("ICP correction of {degrees:.2} deg exceeds the 30 deg sanity bound")]
    CoarseAlignmentFailure { degrees: f64 },
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("empty input cloud")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("dictionary hash {found} does not match current configuration {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("PLY error: {0}")]
    Ply(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
