use super::Dynamics;
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// Geometry of the kinematic bicycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Distance from the centre of mass to the front axle (m).
    pub lf: f64,
    /// Distance from the centre of mass to the rear axle (m).
    pub lr: f64,
    /// Euler step (s).
    pub dt: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            lf: 1.25,
            lr: 1.25,
            dt: 0.05,
        }
    }
}

/// Centre-of-mass kinematic bicycle.
///
/// State `[x, y, ψ, v]`, input `[acceleration, front steering angle]`,
/// output `[x, y]`. With slip angle `β = atan(lr/(lf+lr)·tan δ)`:
///
/// ```text
/// ẋ = v cos(ψ + β)   ẏ = v sin(ψ + β)   ψ̇ = v sin(β) / lr   v̇ = a
/// ```
///
/// integrated with one explicit Euler step per sample.
#[derive(Debug, Clone)]
pub struct KinematicBicycle {
    params: VehicleParams,
}

impl KinematicBicycle {
    pub fn new(params: VehicleParams) -> Result<Self> {
        if !(params.lf > 0.0 && params.lr > 0.0 && params.dt > 0.0) {
            return Err(Error::Input(format!(
                "invalid vehicle parameters {params:?}"
            )));
        }
        Ok(KinematicBicycle { params })
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn wheelbase(&self) -> f64 {
        self.params.lf + self.params.lr
    }

    fn slip(&self, steer: f64) -> f64 {
        (self.params.lr / self.wheelbase() * steer.tan()).atan()
    }
}

impl Dynamics for KinematicBicycle {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        let dt = self.params.dt;
        let (psi, v) = (x[2], x[3]);
        let beta = self.slip(u[1]);
        Vector::from_vec(vec![
            x[0] + dt * v * (psi + beta).cos(),
            x[1] + dt * v * (psi + beta).sin(),
            psi + dt * v * beta.sin() / self.params.lr,
            v + dt * u[0],
        ])
    }

    fn output(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0], x[1]])
    }

    fn transition_jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        let dt = self.params.dt;
        let (psi, v) = (x[2], x[3]);
        let beta = self.slip(u[1]);
        let (s, c) = (psi + beta).sin_cos();
        let mut a = Matrix::identity(4, 4);
        a[(0, 2)] = -dt * v * s;
        a[(0, 3)] = dt * c;
        a[(1, 2)] = dt * v * c;
        a[(1, 3)] = dt * s;
        a[(2, 3)] = dt * beta.sin() / self.params.lr;
        a
    }

    fn output_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    fn linear_output(&self) -> Option<Matrix> {
        Some(self.output_jacobian(&Vector::zeros(4)))
    }

    fn output_lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}
