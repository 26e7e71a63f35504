//! Integral action for linear time-varying state-feedback loops.
//!
//! Extends a given nominal state feedback `u = -K(t) x` by an integrator whose
//! initialisation keeps the nominal closed-loop response untouched when no
//! disturbance acts, while rejecting disturbances that are asymptotically
//! constant with respect to the control input.
//!
//! The crate is `no_std` (it needs `alloc`). IO, configuration files and the
//! command-line front end live in the `ltv-integral-cli` crate.
//!
//! Module map:
//!
//! * [`ltv`]: time-varying matrices, plants, transition matrices, UES constants
//! * [`ode`]: fixed-step RK4 and adaptive Dormand–Prince integration
//! * [`controller`]: the integral controller, `H(t)` heuristics, gain tuning
//! * [`analysis`]: stability conditions, BIBS gain, closed-loop coordinates
//! * [`ti`]: time-invariant specialisation and eigenvalue-union check
//! * [`dual`]: dual closed loop and forward propagation of `H(t)`
//! * [`tank`]: the two-tank tracking case study
//! * [`sim`]: scenario description, co-simulation and tracking metrics
//!
//! ```
//! use ltv_integral::controller::IntegralController;
//! use ltv_integral::ltv::{LtvSystem, MatrixFunction};
//! use ltv_integral::sim::{run_scenario, ControllerSpec, Scenario};
//! use ltv_integral::{DMatrix, DVector};
//!
//! # fn main() -> ltv_integral::Result<()> {
//! let a = MatrixFunction::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
//! let b = MatrixFunction::from_fn(2, 1, |t| DMatrix::from_column_slice(2, 1, &[0.5 * t.sin(), 1.0]));
//! let c = MatrixFunction::constant(DMatrix::identity(2, 2));
//! let sys = LtvSystem::new(a, b.clone(), b.clone(), c)?;
//! let ki = DMatrix::from_element(1, 1, 2.0);
//! let ctrl = IntegralController::new(MatrixFunction::zeros(1, 2), b.transpose(), ki)?;
//! let x0 = DVector::from_vec(vec![1.0, 0.0]);
//! let traj = run_scenario(&Scenario::linear(sys, ControllerSpec::Integral(ctrl), x0, 20.0))?;
//! assert!(traj.samples.last().unwrap().x.norm() < 1e-3);
//! # Ok(())
//! # }
//! ```

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod controller;
pub mod dual;
mod error;
pub mod linalg;
pub mod ltv;
pub mod ode;
pub mod sim;
pub mod tank;
pub mod ti;

pub use error::{Error, Result};

pub use nalgebra::{Complex, DMatrix, DVector};
