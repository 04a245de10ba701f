//! Plants, policies, constraint subspaces and metrics; stability membership,
//! the closed-form stability certificate, and grid scanners.

mod constraint;
mod gain;
mod plant;
mod scan;
mod stability;

pub use constraint::{ConstraintKind, ConstraintSubspace, MetricChoice};
pub use gain::{DynamicPolicy, PolicyTangent, PolicyVector, StaticGain};
pub use plant::{Plant, PlantBuilder, Violation};
pub use scan::{connectivity_scan, landscape_slice, ConnectivityReport, LandscapeGrid, MAX_SCAN_DIM, MIN_SCAN_RESOLUTION};
pub use stability::{certified_step, is_schur, is_stabilizing_dynamic, is_stabilizing_static, stability_certificate};
