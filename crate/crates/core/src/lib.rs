//! Planning and key-rate simulation for quantum key distribution sharing a
//! weakly coupled seven-core fiber with classical DWDM traffic.
//!
//! * [`fibergrid`]: core topology, the interleaved quantum/classical grid and
//!   plan validation.
//! * [`xtmodel`]: intercore crosstalk calibration and prediction.
//! * [`qkdrate`]: decoy-state BB84 gains, bounds and secure key rate.
//! * [`planner`]: quantum-core choice and channel assignment.
//! * [`scenario`]: sweeps, length emulation, curve analysis and baseline fitting.
//! * [`io`]: file formats.
//!
//! The physical models are generic over [`Scalar`] (`f32` or `f64`); the
//! `f64` aliases below are what the file formats and the CLI use.

pub mod error;
pub mod fibergrid;
pub mod io;
pub mod planner;
pub mod qkdrate;
pub mod scalar;
pub mod scenario;
pub mod xtmodel;

pub use error::{Error, Result};
pub use fibergrid::{CoreId, CoreTopology, Direction, Freq, FrequencyGrid, Role, Violation};
pub use scalar::Scalar;

pub type ChannelAssignment = fibergrid::ChannelAssignment<f64>;
pub type ChannelPlan = fibergrid::ChannelPlan<f64>;
pub type MeasurementRecord = xtmodel::MeasurementRecord<f64>;
pub type XtalkModel = xtmodel::XtalkModel<f64>;
pub type FilterSpec = xtmodel::FilterSpec<f64>;
pub type Calibration = xtmodel::Calibration<f64>;
pub type DecoyParams = qkdrate::DecoyParams<f64>;
pub type DetectorSpec = qkdrate::DetectorSpec<f64>;
pub type LinkScenario = qkdrate::LinkScenario<f64>;
pub type LinkResult = qkdrate::LinkResult<f64>;
pub type TrafficDemand = planner::TrafficDemand<f64>;
pub type SweepSpec = scenario::SweepSpec<f64>;
pub type Curve = scenario::Curve<f64>;
