//! Stability conditions, BIBS gain and closed-loop coordinates.

mod bibs;
mod coords;
mod stability;

pub use bibs::{bibs_gain, disturbance_battery, BibsBounds, PiecewiseConstant, BOUND_INFLATION};
pub use coords::{
    classify_disturbance, verify_exponential_envelope, wtilde, z_coordinate, DisturbanceClass, DisturbanceReport,
    EnvelopeCheck,
};
pub use stability::{check_corollary1, check_theorem1, StabilityReport, TimeGrid, Verdict, PSD_TOL};
