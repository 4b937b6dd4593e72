//! Attack synthesis: the analytic attack on unstable LTI plants, the FNN and
//! delayed-FNN generators, and their online training against the filter.
//!
//! Training at step `t` minimises
//!
//! ```text
//! J'_t = λ Σ_{j<t} J_j + J_t,    J_j = gᵃ_j − δ ‖y_j − h(x̂ᵃ_j)‖
//! ```
//!
//! over the generator parameters. Past steps are replayed with the filter
//! quantities stored at the time (`x̂_{j|j−1}`, `K_j`, `S_j`) held fixed; only
//! the attack and its effect on the residue and the estimate are recomputed.

mod artifact;
mod generator;
mod network;
mod theorem1;
mod training;

pub use artifact::Artifact;
pub use generator::{DfnnGenerator, FnnGenerator, Generator, SensorSupport};
pub use network::{Dense, FeatureForm, InputMap, Mlp};
pub use theorem1::{phi_factor, theorem1_attack, theorem1_attack_with, DEFAULT_PHI_SCALE};
pub use training::{
    instantaneous_cost, objective_gradient, objective_value, train_step_dfnn, train_step_fnn,
    HistoryBuffer, OptimizerKind, StepRecord, StepReport, Trainer, TrainingConfig,
};
