use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no actuators: no lattice point lies within the inclusion radius")]
    NoActuators,

    #[error("pitch too coarse: node pitch {pitch} exceeds half the plate radius {radius}")]
    PitchTooCoarse { pitch: f64, radius: f64 },

    #[error("actuators {first} and {second} map to the same plate node {node}")]
    DuplicateActuatorNode { first: usize, second: usize, node: usize },

    #[error("actuator {index} at ({x}, {y}) does not fall on a plate node")]
    ActuatorOffPlate { index: usize, x: f64, y: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point {index} at radius {radius} lies outside the normalization radius {norm_radius}")]
    PointOutsideAperture { index: usize, radius: f64, norm_radius: f64 },

    #[error("insufficient observation coverage: sampled Zernike basis is rank deficient")]
    InsufficientCoverage,

    #[error("undefined relative error: target wavefront is identically zero")]
    ZeroTarget,

    #[error("unsupported rigid modes: stiffness matrix is singular (pivot {pivot} at row {row})")]
    RigidModes { row: usize, pivot: f64 },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("singular step matrix (E - hA) for h = {h}")]
    SingularStepMatrix { h: f64 },

    #[error("least squares did not converge in {iterations} iterations (residual {residual:e}, optimality {optimality:e})")]
    NotConverged { iterations: usize, residual: f64, optimality: f64 },

    #[error("model too large for a dense influence matrix: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("rank deficient regression ({rank} of {cols} columns resolved); use ridge > 0")]
    RankDeficient { rank: usize, cols: usize },

    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("singular residual covariance; use more data or fewer outputs")]
    SingularCovariance,

    #[error("residual channel {0} is constant; autocorrelation undefined")]
    ConstantChannel(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            reason: reason.into(),
        }
    }
}
