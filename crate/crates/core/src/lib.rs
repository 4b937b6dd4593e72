//! Closed-loop simulation and stealthy sensor-attack synthesis for
//! cyber-physical plants.
//!
//! A plant ([`models`]) is closed around an extended Kalman filter
//! ([`estimation`]), a feedback controller and a χ² residue detector
//! ([`detection`]). Attack sequences ([`attack`]) are either computed
//! analytically for unstable LTI plants, or produced by small neural
//! generators trained online against the filter with the reverse-mode
//! differentiation in [`autodiff`]. The [`harness`] wires everything into
//! seeded scenarios, evaluates (ε, α)-success and exports CSV logs.
//!
//! ```no_run
//! use cpsattack::harness::{run_scenario, Scenario};
//!
//! let scenario = Scenario::parse_str(
//!     "model.type = lti\n\
//!      model.A = 1.1\n model.B = 1\n model.C = 1\n\
//!      controller.type = state_feedback\n controller.K = 0.5\n\
//!      attack.kind = theorem1\n attack.t0 = 50\n attack.alpha = 10\n\
//!      run.duration = 300\n",
//! )
//! .unwrap();
//! let record = run_scenario(&scenario).unwrap();
//! println!("success: {}", record.summary.success);
//! ```

pub mod attack;
pub mod autodiff;
pub mod detection;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod models;

mod error;

pub use error::{Error, Result};
