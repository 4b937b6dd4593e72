//! Feedback laws `u_t = π(x̂_t)` closing the loop on the estimate.

use std::f64::consts::PI;

use crate::linalg::{Matrix, Vector};
use crate::models::{PlantModel, QuadrotorParams};

/// Lane centre line of the vehicle tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Road {
    /// Along the X axis, `Y = 0`.
    Straight,
    /// `Y = amplitude · sin(2πX / wavelength)`.
    Curvy { amplitude: f64, wavelength: f64 },
}

impl Road {
    /// Centre-line lateral position and heading at longitudinal position `x`.
    pub fn reference(&self, x: f64) -> (f64, f64) {
        match *self {
            Road::Straight => (0.0, 0.0),
            Road::Curvy {
                amplitude,
                wavelength,
            } => {
                let k = 2.0 * PI / wavelength;
                (
                    (k * x).sin() * amplitude,
                    (amplitude * k * (k * x).cos()).atan(),
                )
            }
        }
    }

    /// Signed distance from the centre line (positive to the left), to first order.
    pub fn lateral_error(&self, x: f64, y: f64) -> f64 {
        let (y_ref, psi_ref) = self.reference(x);
        (y - y_ref) * psi_ref.cos()
    }
}

/// Lane-keeping gains. Steering `δ = −k_lat·e_lat − k_head·e_ψ`, throttle
/// `a = k_speed·(v_ref − v)`, both saturated.
///
/// At 10 m/s on the default bicycle the defaults put the linearised lateral
/// loop near ω ≈ 7 rad/s with ζ ≈ 1, stiff enough to hold the car within
/// 0.5 m of the centre line under the built-in process noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneKeepingGains {
    pub speed: f64,
    pub k_lat: f64,
    pub k_head: f64,
    pub k_speed: f64,
    pub max_steer: f64,
    pub max_accel: f64,
}

impl Default for LaneKeepingGains {
    fn default() -> Self {
        LaneKeepingGains {
            speed: 10.0,
            k_lat: 1.2,
            k_head: 2.0,
            k_speed: 0.5,
            max_steer: 0.6,
            max_accel: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UavTask {
    /// Climb to and hold `height` above the origin.
    Altitude { height: f64 },
    /// Track `Z(t) = rate·t` above the origin.
    Ramp { rate: f64 },
}

impl UavTask {
    /// Height reference and its rate at time `time` (s).
    pub fn reference(&self, time: f64) -> (f64, f64) {
        match *self {
            UavTask::Altitude { height } => (height, 0.0),
            UavTask::Ramp { rate } => (rate * time, rate),
        }
    }
}

/// Cascaded quadrotor gains: PD on position producing thrust and attitude
/// set-points, PD on attitude producing torques.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavGains {
    pub kp_z: f64,
    pub kd_z: f64,
    pub kp_xy: f64,
    pub kd_xy: f64,
    pub kp_att: f64,
    pub kd_att: f64,
    pub kp_yaw: f64,
    pub kd_yaw: f64,
    /// Attitude set-point limit (rad).
    pub max_tilt: f64,
}

impl Default for UavGains {
    fn default() -> Self {
        UavGains {
            kp_z: 6.0,
            kd_z: 5.0,
            kp_xy: 0.4,
            kd_xy: 1.0,
            kp_att: 16.0,
            kd_att: 6.0,
            kp_yaw: 9.0,
            kd_yaw: 5.0,
            max_tilt: 0.35,
        }
    }
}

/// Controller configuration from the scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    /// `u = 0`.
    Zero,
    /// `u = −K x̂`.
    StateFeedback {
        k: Matrix,
    },
    LaneKeeping {
        road: Road,
        gains: LaneKeepingGains,
    },
    Uav {
        task: UavTask,
        gains: UavGains,
    },
}

/// A feedback law bound to a plant.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    m: usize,
    quad: QuadrotorParams,
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

impl Controller {
    pub fn new(spec: ControllerSpec, model: &PlantModel, quad: Option<QuadrotorParams>) -> Self {
        Controller {
            spec,
            m: model.m(),
            quad: quad.unwrap_or_default(),
        }
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    /// `π(x̂)` at time `time` seconds.
    pub fn control(&self, x_hat: &Vector, time: f64) -> Vector {
        match &self.spec {
            ControllerSpec::Zero => Vector::zeros(self.m),
            ControllerSpec::StateFeedback { k } => -(k * x_hat),
            ControllerSpec::LaneKeeping { road, gains } => {
                let (x, y, psi, v) = (x_hat[0], x_hat[1], x_hat[2], x_hat[3]);
                let (_, psi_ref) = road.reference(x);
                let e_lat = road.lateral_error(x, y);
                let e_head = wrap_angle(psi - psi_ref);
                let steer = (-gains.k_lat * e_lat - gains.k_head * e_head)
                    .clamp(-gains.max_steer, gains.max_steer);
                let accel =
                    (gains.k_speed * (gains.speed - v)).clamp(-gains.max_accel, gains.max_accel);
                Vector::from_vec(vec![accel, steer])
            }
            ControllerSpec::Uav { task, gains } => self.uav(x_hat, time, task, gains),
        }
    }

    fn uav(&self, s: &Vector, time: f64, task: &UavTask, g: &UavGains) -> Vector {
        let q = &self.quad;
        let (z_ref, vz_ref) = task.reference(time);
        let (psi, theta, phi) = (s[3], s[4], s[5]);
        let az = g.kp_z * (z_ref - s[2]) + g.kd_z * (vz_ref - s[8]);
        let tilt = (phi.cos() * theta.cos()).max(0.5);
        let thrust = (q.mass * (q.gravity + az) / tilt).clamp(0.0, 4.0 * q.mass * q.gravity);
        let ax = g.kp_xy * (0.0 - s[0]) - g.kd_xy * s[6];
        let ay = g.kp_xy * (0.0 - s[1]) - g.kd_xy * s[7];
        let (sp, cp) = psi.sin_cos();
        let theta_d = ((ax * cp + ay * sp) / q.gravity).clamp(-g.max_tilt, g.max_tilt);
        let phi_d = ((ax * sp - ay * cp) / q.gravity).clamp(-g.max_tilt, g.max_tilt);
        let roll = q.ixx / q.arm * (g.kp_att * (phi_d - phi) - g.kd_att * s[11]);
        let pitch = q.iyy / q.arm * (g.kp_att * (theta_d - theta) - g.kd_att * s[10]);
        let yaw = q.izz * (g.kp_yaw * wrap_angle(0.0 - psi) - g.kd_yaw * s[9]);
        Vector::from_vec(vec![thrust, roll, pitch, yaw])
    }
}
