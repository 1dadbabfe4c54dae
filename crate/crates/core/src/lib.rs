//! Anchor-pair calibration for TDOA indoor positioning.
//!
//! The deployment area is split into zones. Historical TOA data is replayed
//! with many candidate sets of anchor pairs, and each set is scored by how
//! far its position fixes stray from the doorway the user is known to be
//! walking through. The best set per (zone, heading) is stored in a
//! [`calibration::PairTable`], which the [`runtime`] tracker consults on
//! every epoch to decide which TDOAs to feed its EKF.
//!
//! Supporting modules simulate measurements with through-wall and
//! body-shadowing delays ([`simkit`]), detect doorways on occupancy grids
//! ([`doorfind`]) and score trajectories ([`evalkit`]).

pub mod calibration;
pub mod demo;
pub mod doorfind;
pub mod error;
pub mod evalkit;
pub mod runtime;
pub mod simkit;
pub mod tdoa_ekf;
pub mod world;

pub use calibration::{CalibrationConfig, CostReport, DirectionKey, HeadingClass, PairTable, TransitionWindow};
pub use doorfind::{Cell, DoorDetection, OccupancyGrid};
pub use error::{Error, Result};
pub use evalkit::ErrorSummary;
pub use runtime::{Fix, RuntimeConfig};
pub use simkit::{Pose, SimConfig, ToaFrame};
pub use tdoa_ekf::{AnchorPair, EkfConfig, TdoaMeasurement, TrackerState};
pub use world::{Anchor, Door, Point, Scenario, Wall, Zone};
