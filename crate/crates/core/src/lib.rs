//! Faceplate deformable-mirror modelling: plate assembly, Zernike reduction,
//! steady-state force computation, backward-Euler simulation and
//! VARX-structured identification.

pub mod error;
pub mod io;
pub mod linalg;
pub mod plate_model;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod sparse;
pub mod steady_state;
pub mod sysid;
pub mod zernike;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = plate_model::SecondOrderModel<f64>;
pub type Grid = plate_model::PlateGrid<f64>;
pub type Layout = plate_model::ActuatorLayout<f64>;
pub type Material = plate_model::MaterialParams<f64>;
pub type Actuator = plate_model::ActuatorParams<f64>;
pub type ZernikeBasis = zernike::ZernikeMap<f64>;
pub type Descriptor = simulate::DescriptorSystem<f64>;
pub type Traj = simulate::Trajectory<f64>;
pub type Varx = sysid::VarxModel<f64>;
pub type Network = sysid::NetworkModel<f64>;
pub type Report = sysid::FitReport<f64>;
pub type Sparse = sparse::CsrMatrix<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
