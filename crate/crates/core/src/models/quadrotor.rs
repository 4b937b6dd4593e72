use super::Dynamics;
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// State indices reported by the quadrotor's sensors: positions, Euler
/// angles and angular rates (linear velocities are not measured).
pub const QUAD_MEASURED_STATES: [usize; 9] = [0, 1, 2, 3, 4, 5, 9, 10, 11];

/// Physical constants of the quadrotor.
///
/// | constant | value | unit |
/// |---|---|---|
/// | mass | 0.65 | kg |
/// | arm length | 0.23 | m |
/// | Ixx, Iyy | 7.5e-3 | kg·m² |
/// | Izz | 1.3e-2 | kg·m² |
/// | gravity | 9.81 | m/s² |
/// | dt | 0.05 | s |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub arm: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        QuadrotorParams {
            mass: 0.65,
            arm: 0.23,
            ixx: 7.5e-3,
            iyy: 7.5e-3,
            izz: 1.3e-2,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

impl QuadrotorParams {
    /// Collective thrust that balances gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Newton–Euler rigid-body quadrotor, Euler-discretised.
///
/// State `[x, y, z, ψ, θ, φ, ẋ, ẏ, ż, ψ̇, θ̇, φ̇]` (yaw, pitch, roll), input
/// `[U1 thrust, U2 roll torque, U3 pitch torque, U4 yaw torque]`. Angular
/// rates are integrated directly into the Euler angles and rotor gyroscopic
/// terms are omitted.
#[derive(Debug, Clone)]
pub struct Quadrotor {
    params: QuadrotorParams,
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams) -> Result<Self> {
        let p = &params;
        if [p.mass, p.arm, p.ixx, p.iyy, p.izz, p.dt]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::Input(format!(
                "invalid quadrotor parameters {params:?}"
            )));
        }
        Ok(Quadrotor { params })
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    /// Continuous-time state derivative.
    fn derivative(&self, x: &Vector, u: &Vector) -> Vector {
        let p = &self.params;
        let (psi, theta, phi) = (x[3], x[4], x[5]);
        let (dpsi, dtheta, dphi) = (x[9], x[10], x[11]);
        let (spsi, cpsi) = psi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sphi, cphi) = phi.sin_cos();
        let k = u[0] / p.mass;
        let mut d = Vector::zeros(12);
        d[0] = x[6];
        d[1] = x[7];
        d[2] = x[8];
        d[3] = dpsi;
        d[4] = dtheta;
        d[5] = dphi;
        d[6] = k * (cphi * sth * cpsi + sphi * spsi);
        d[7] = k * (cphi * sth * spsi - sphi * cpsi);
        d[8] = -p.gravity + k * cphi * cth;
        d[9] = dtheta * dphi * (p.ixx - p.iyy) / p.izz + u[3] / p.izz;
        d[10] = dphi * dpsi * (p.izz - p.ixx) / p.iyy + p.arm * u[2] / p.iyy;
        d[11] = dtheta * dpsi * (p.iyy - p.izz) / p.ixx + p.arm * u[1] / p.ixx;
        d
    }

    fn derivative_jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        let p = &self.params;
        let (psi, theta, phi) = (x[3], x[4], x[5]);
        let (dpsi, dtheta, dphi) = (x[9], x[10], x[11]);
        let (spsi, cpsi) = psi.sin_cos();
        let (sth, cth) = theta.sin_cos();
        let (sphi, cphi) = phi.sin_cos();
        let k = u[0] / p.mass;
        let mut j = Matrix::zeros(12, 12);
        for i in 0..6 {
            j[(i, i + 6)] = 1.0;
        }
        j[(6, 3)] = k * (-cphi * sth * spsi + sphi * cpsi);
        j[(6, 4)] = k * cphi * cth * cpsi;
        j[(6, 5)] = k * (-sphi * sth * cpsi + cphi * spsi);
        j[(7, 3)] = k * (cphi * sth * cpsi + sphi * spsi);
        j[(7, 4)] = k * cphi * cth * spsi;
        j[(7, 5)] = k * (-sphi * sth * spsi - cphi * cpsi);
        j[(8, 4)] = -k * cphi * sth;
        j[(8, 5)] = -k * sphi * cth;
        let a_psi = (p.ixx - p.iyy) / p.izz;
        let a_theta = (p.izz - p.ixx) / p.iyy;
        let a_phi = (p.iyy - p.izz) / p.ixx;
        j[(9, 10)] = a_psi * dphi;
        j[(9, 11)] = a_psi * dtheta;
        j[(10, 9)] = a_theta * dphi;
        j[(10, 11)] = a_theta * dpsi;
        j[(11, 9)] = a_phi * dtheta;
        j[(11, 10)] = a_phi * dpsi;
        j
    }

    fn selection() -> Matrix {
        let mut c = Matrix::zeros(9, 12);
        for (row, &col) in QUAD_MEASURED_STATES.iter().enumerate() {
            c[(row, col)] = 1.0;
        }
        c
    }
}

impl Dynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }

    fn input_dim(&self) -> usize {
        4
    }

    fn output_dim(&self) -> usize {
        9
    }

    fn transition(&self, x: &Vector, u: &Vector) -> Vector {
        x + self.derivative(x, u) * self.params.dt
    }

    fn output(&self, x: &Vector) -> Vector {
        Vector::from_iterator(9, QUAD_MEASURED_STATES.iter().map(|&i| x[i]))
    }

    fn transition_jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        Matrix::identity(12, 12) + self.derivative_jacobian(x, u) * self.params.dt
    }

    fn output_jacobian(&self, _x: &Vector) -> Matrix {
        Quadrotor::selection()
    }

    fn linear_output(&self) -> Option<Matrix> {
        Some(Quadrotor::selection())
    }

    fn output_lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}
