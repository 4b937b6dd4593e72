//! Extended Kalman filter with residue extraction.
//!
//! The covariance recursion is the one-step predictor form
//!
//! ```text
//! S_t     = C_t P_t C_tᵀ + R
//! K_t     = P_t C_tᵀ S_t⁻¹
//! L_t     = A_t K_t          (= A_t P_t C_tᵀ S_t⁻¹)
//! P_{t+1} = A_t P_t A_tᵀ + Q − L_t S_t L_tᵀ
//! ```
//!
//! where `P_t` is the covariance of the prediction `x̂_{t|t−1}`. The measurement
//! update applies the filter gain `K_t`, so `x̂_t` is the usual filtered
//! estimate and on LTI plants the recursion is exactly the textbook Kalman
//! filter. `L_t` is kept alongside as [`EstimatorState::riccati_gain`].
//!
//! The recursion is evaluated as a predict/update split with a Joseph-form
//! covariance update, which is algebraically identical and keeps `P`
//! positive semidefinite over long runs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Tensor, Var};
use crate::linalg::{self, Matrix, Vector};
use crate::models::PlantModel;
use crate::{Error, Result};

/// Innovation of one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct Residue {
    /// `z_t = y^c_t − h(x̂_{t|t−1})`.
    pub z: Vector,
    /// Innovation covariance `S_t`.
    pub s: Matrix,
    /// Detection statistic `zᵀ S⁻¹ z`.
    pub g: f64,
}

/// Runtime state of the filter.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    /// Filtered estimate `x̂_t`.
    pub x_hat: Vector,
    /// Prediction `x̂_{t|t−1}`.
    pub x_pred: Vector,
    /// `h(x̂_{t|t−1})`.
    pub y_pred: Vector,
    /// Covariance of the prediction error, `P_t`.
    pub p: Matrix,
    /// Covariance of the filtered error.
    pub p_post: Matrix,
    /// Applied gain `K_t` (n×p).
    pub l_gain: Matrix,
    /// Predictor-form gain `A_t K_t`.
    pub riccati_gain: Matrix,
    /// `∂f/∂x` used for the latest prediction.
    pub a_jac: Matrix,
    /// `∂h/∂x` at `x̂_{t|t−1}`.
    pub c_jac: Matrix,
    pub s: Matrix,
    pub s_inv: Matrix,
    pub t: usize,
    predicted: bool,
    r: Matrix,
}

impl EstimatorState {
    /// Filter started at `x_hat0` with covariance `p0`.
    pub fn new(model: &PlantModel, x_hat0: Vector, p0: Matrix) -> Result<Self> {
        let (n, p) = (model.n(), model.p());
        if x_hat0.len() != n || p0.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "estimator needs a {n}-vector and {n}x{n} covariance, got {} and {:?}",
                x_hat0.len(),
                p0.shape()
            )));
        }
        let y_pred = model.h(&x_hat0);
        Ok(EstimatorState {
            x_pred: x_hat0.clone(),
            x_hat: x_hat0,
            y_pred,
            p: p0.clone(),
            p_post: p0,
            l_gain: Matrix::zeros(n, p),
            riccati_gain: Matrix::zeros(n, p),
            a_jac: Matrix::identity(n, n),
            c_jac: Matrix::zeros(p, n),
            s: Matrix::identity(p, p),
            s_inv: Matrix::identity(p, p),
            t: 0,
            predicted: false,
            r: model.r().clone(),
        })
    }

    /// Default initialisation: `x̂_0 = x_0 + N(0, σ²I)`, `P_0 = scale·I`.
    pub fn initial<R: Rng + ?Sized>(
        model: &PlantModel,
        x0: &Vector,
        sigma: f64,
        p0_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let noise = Vector::from_fn(x0.len(), |_, _| {
            let xi: f64 = StandardNormal.sample(rng);
            sigma * xi
        });
        let n = model.n();
        EstimatorState::new(model, x0 + noise, Matrix::identity(n, n) * p0_scale)
    }

    pub fn is_predicted(&self) -> bool {
        self.predicted
    }

    /// Time update: `x̂_{t+1|t} = f(x̂_t, u_t)` and the gain for the next measurement.
    pub fn predict(&mut self, model: &PlantModel, u: &Vector) -> Result<()> {
        if u.len() != model.m() {
            return Err(Error::Dimension(format!(
                "input has {} entries, plant expects {}",
                u.len(),
                model.m()
            )));
        }
        if !linalg::all_finite(u) {
            return Err(Error::Input(format!("non-finite input at step {}", self.t)));
        }
        let step = self.t + 1;
        let a = model.dynamics().transition_jacobian(&self.x_hat, u);
        let x_pred = model.f(&self.x_hat, u);
        if !linalg::all_finite(&x_pred) {
            return Err(Error::Numeric {
                step,
                msg: "state prediction is not finite".into(),
            });
        }
        let mut p = &a * &self.p_post * a.transpose() + model.q();
        linalg::symmetrize(&mut p);
        let c = model.dynamics().output_jacobian(&x_pred);
        let mut s = &c * &p * c.transpose() + model.r();
        linalg::symmetrize(&mut s);
        let s_inv = linalg::spd_inverse(&s).ok_or_else(|| Error::Singular {
            step,
            msg: format!(
                "Cholesky of S failed, min eigenvalue {:e}",
                linalg::min_eigenvalue(&s)
            ),
        })?;
        let k = &p * c.transpose() * &s_inv;
        self.riccati_gain = &a * &k;
        self.y_pred = model.h(&x_pred);
        self.x_pred = x_pred;
        self.p = p;
        self.l_gain = k;
        self.a_jac = a;
        self.c_jac = c;
        self.s = s;
        self.s_inv = s_inv;
        self.t = step;
        self.predicted = true;
        Ok(())
    }

    /// Residue that `y_c` would produce, without changing the state.
    pub fn residue(&self, y_c: &Vector) -> Result<Residue> {
        if y_c.len() != self.y_pred.len() {
            return Err(Error::Dimension(format!(
                "measurement has {} entries, expected {}",
                y_c.len(),
                self.y_pred.len()
            )));
        }
        if !linalg::all_finite(y_c) {
            return Err(Error::Input(format!(
                "non-finite measurement at step {}",
                self.t
            )));
        }
        let z = y_c - &self.y_pred;
        let g = linalg::quadratic_form(&z, &self.s_inv);
        Ok(Residue {
            z,
            s: self.s.clone(),
            g,
        })
    }

    /// Measurement update with the (possibly attacked) measurement `y_c`.
    pub fn update(&mut self, y_c: &Vector) -> Result<Residue> {
        if !self.predicted {
            return Err(Error::Contract(format!(
                "update at step {} without a preceding predict",
                self.t
            )));
        }
        let res = self.residue(y_c)?;
        self.x_hat = &self.x_pred + &self.l_gain * &res.z;
        let n = self.x_hat.len();
        let ikc = Matrix::identity(n, n) - &self.l_gain * &self.c_jac;
        let mut p_post =
            &ikc * &self.p * ikc.transpose() + &self.l_gain * &self.r * self.l_gain.transpose();
        linalg::symmetrize(&mut p_post);
        self.p_post = p_post;
        self.predicted = false;
        Ok(res)
    }

    /// Records `y_c = y + a` and the update on `tape`, returning `(x̂ᵃ, gᵃ)`.
    ///
    /// `y` and `a` must be `1×p` rows. `x_pred`, `K` and `S⁻¹` enter as
    /// constants; `x̂ᵃ` is a `1×n` row.
    pub fn update_differentiable(&self, tape: &mut Tape, y: Var, a: Var) -> Result<(Var, Var)> {
        if !self.predicted {
            return Err(Error::Contract(
                "differentiable update without a preceding predict".into(),
            ));
        }
        let (n, p) = self.l_gain.shape();
        if tape.dims(y) != (1, p) || tape.dims(a) != (1, p) {
            return Err(Error::Dimension(format!(
                "update expects 1x{p} rows, got {:?} and {:?}",
                tape.dims(y),
                tape.dims(a)
            )));
        }
        if tape
            .value(y)
            .iter()
            .chain(tape.value(a))
            .any(|v| !v.is_finite())
        {
            return Err(Error::Input(format!(
                "non-finite measurement at step {}",
                self.t
            )));
        }
        let yc = tape.add(y, a)?;
        let neg_pred: Vec<f64> = self.y_pred.iter().map(|v| -v).collect();
        let z = tape.add_const(yc, &neg_pred)?;
        let g = tape.weighted_quadratic(z, &matrix_tensor(&self.s_inv))?;
        let kt = tape.constant(p, n, row_major(&self.l_gain.transpose()))?;
        let corr = tape.matmul(z, kt)?;
        let x_hat = tape.add_const(corr, self.x_pred.as_slice())?;
        Ok((x_hat, g))
    }

    /// Records `h(x)` for a `1×n` row `x`, using the first-order expansion of
    /// `h` about `x̂_{t|t−1}`. Exact when `h` is linear.
    pub fn output_on_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (p, n) = self.c_jac.shape();
        let ct = tape.constant(n, p, row_major(&self.c_jac.transpose()))?;
        let lin = tape.matmul(x, ct)?;
        let offset: Vec<f64> = (&self.y_pred - &self.c_jac * &self.x_pred)
            .iter()
            .copied()
            .collect();
        tape.add_const(lin, &offset)
    }
}

/// Row-major copy of a matrix (nalgebra stores column-major).
pub(crate) fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub(crate) fn matrix_tensor(m: &Matrix) -> Tensor {
    Tensor::matrix(m.nrows(), m.ncols(), row_major(m)).expect("matrix has positive dimensions")
}
