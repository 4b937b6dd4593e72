//! Discrete-time plants `x' = f(x, u) + w`, `y = h(x) + v`.
//!
//! A [`PlantModel`] pairs a deterministic [`Dynamics`] implementation with
//! its noise covariances. Three dynamics ship with the crate: a generic LTI
//! system, a kinematic bicycle and a 12-state quadrotor.

mod lti;
mod quadrotor;
mod vehicle;

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

pub use lti::LtiMatrices;
pub use quadrotor::{Quadrotor, QuadrotorParams, QUAD_MEASURED_STATES};
pub use vehicle::{KinematicBicycle, VehicleParams};

/// Step size used for finite-difference Jacobians of user-supplied dynamics.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;

/// Deterministic part of a discrete-time plant.
pub trait Dynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// `f(x, u)`: the noiseless state after one sample period.
    fn transition(&self, x: &Vector, u: &Vector) -> Vector;

    /// `h(x)`.
    fn output(&self, x: &Vector) -> Vector;

    fn transition_jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        linalg::numeric_jacobian(|v| self.transition(v, u), x, JACOBIAN_FD_STEP)
    }

    fn output_jacobian(&self, x: &Vector) -> Matrix {
        linalg::numeric_jacobian(|v| self.output(v), x, JACOBIAN_FD_STEP)
    }

    /// `Some(C)` when `h(x) = C x` exactly.
    fn linear_output(&self) -> Option<Matrix> {
        None
    }

    /// Lipschitz constant of `h`, when known.
    fn output_lipschitz(&self) -> Option<f64> {
        None
    }

    /// The system matrices when the plant is LTI.
    fn lti(&self) -> Option<&LtiMatrices> {
        None
    }
}

/// True plant state `x_t` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: Vector,
    pub t: usize,
}

impl PlantState {
    pub fn new(x: Vector) -> Self {
        PlantState { x, t: 0 }
    }
}

/// A plant with additive Gaussian process and measurement noise.
#[derive(Clone)]
pub struct PlantModel {
    id: String,
    dynamics: Arc<dyn Dynamics>,
    q: Matrix,
    r: Matrix,
    dt: f64,
    lipschitz: Option<f64>,
    q_factor: Matrix,
    r_factor: Matrix,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("id", &self.id)
            .field("n", &self.n())
            .field("m", &self.m())
            .field("p", &self.p())
            .field("dt", &self.dt)
            .finish()
    }
}

impl PlantModel {
    pub fn new(
        id: impl Into<String>,
        dynamics: Arc<dyn Dynamics>,
        q: Matrix,
        r: Matrix,
        dt: f64,
    ) -> Result<Self> {
        let (n, p) = (dynamics.state_dim(), dynamics.output_dim());
        if q.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Q is {:?}, expected {n}x{n}",
                q.shape()
            )));
        }
        if r.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "R is {:?}, expected {p}x{p}",
                r.shape()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Input(format!(
                "sample time must be positive, got {dt}"
            )));
        }
        let q_factor = linalg::psd_factor(&q)?;
        let r_factor = linalg::psd_factor(&r)?;
        let lipschitz = dynamics.output_lipschitz();
        Ok(PlantModel {
            id: id.into(),
            dynamics,
            q,
            r,
            dt,
            lipschitz,
            q_factor,
            r_factor,
        })
    }

    /// LTI plant `x' = Ax + Bu + w`, `y = Cx + v`.
    pub fn lti(lti: LtiMatrices, q: Matrix, r: Matrix, dt: f64) -> Result<Self> {
        PlantModel::new("lti", Arc::new(lti), q, r, dt)
    }

    pub fn vehicle(params: VehicleParams, q: Matrix, r: Matrix) -> Result<Self> {
        let dt = params.dt;
        PlantModel::new(
            "vehicle",
            Arc::new(KinematicBicycle::new(params)?),
            q,
            r,
            dt,
        )
    }

    pub fn quadrotor(params: QuadrotorParams, q: Matrix, r: Matrix) -> Result<Self> {
        let dt = params.dt;
        PlantModel::new("quadrotor", Arc::new(Quadrotor::new(params)?), q, r, dt)
    }

    /// Kinematic bicycle with `Q = 0.001·I₄`, `R = diag(0.01, 0.01)`.
    pub fn standard_vehicle() -> Self {
        PlantModel::vehicle(
            VehicleParams::default(),
            Matrix::identity(4, 4) * 1e-3,
            Matrix::identity(2, 2) * 1e-2,
        )
        .expect("built-in parameters are valid")
    }

    /// Quadrotor with `Q = 0.001·I₁₂`, `R = 0.05·I₉`.
    pub fn standard_quadrotor() -> Self {
        PlantModel::quadrotor(
            QuadrotorParams::default(),
            Matrix::identity(12, 12) * 1e-3,
            Matrix::identity(9, 9) * 5e-2,
        )
        .expect("built-in parameters are valid")
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn m(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn p(&self) -> usize {
        self.dynamics.output_dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn lti_matrices(&self) -> Option<&LtiMatrices> {
        self.dynamics.lti()
    }

    pub fn f(&self, x: &Vector, u: &Vector) -> Vector {
        self.dynamics.transition(x, u)
    }

    pub fn h(&self, x: &Vector) -> Vector {
        self.dynamics.output(x)
    }

    /// `x_{t+1} = f(x_t, u_t) + w_t`, `w_t ~ N(0, Q)`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &PlantState,
        u: &Vector,
        rng: &mut R,
    ) -> Result<PlantState> {
        if u.len() != self.m() {
            return Err(Error::Dimension(format!(
                "input has {} entries, plant expects {}",
                u.len(),
                self.m()
            )));
        }
        if !linalg::all_finite(u) {
            return Err(Error::Input(format!(
                "non-finite input at step {}",
                state.t
            )));
        }
        let x = self.f(&state.x, u) + linalg::sample_gaussian(&self.q_factor, rng);
        if !linalg::all_finite(&x) {
            return Err(Error::Numeric {
                step: state.t + 1,
                msg: "plant state left the finite range".into(),
            });
        }
        Ok(PlantState { x, t: state.t + 1 })
    }

    /// `y_t = h(x_t) + v_t`, `v_t ~ N(0, R)`.
    pub fn observe<R: Rng + ?Sized>(&self, state: &PlantState, rng: &mut R) -> Vector {
        self.h(&state.x) + linalg::sample_gaussian(&self.r_factor, rng)
    }

    /// `(∂f/∂x at (x_lin, u_lin), ∂h/∂x at f(x_lin, u_lin))`.
    pub fn jacobians(&self, x_lin: &Vector, u_lin: &Vector) -> (Matrix, Matrix) {
        let a = self.dynamics.transition_jacobian(x_lin, u_lin);
        let c = self.dynamics.output_jacobian(&self.f(x_lin, u_lin));
        (a, c)
    }
}
