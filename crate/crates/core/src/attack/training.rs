use crate::autodiff::{clip_grad_norm, grad_inf_norm, sgd_step, Adam, RowMatrices, Tape, Var};
use crate::estimation::EstimatorState;
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

use super::generator::{DfnnGenerator, FnnGenerator, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

/// Hyperparameters of the online training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the output-error reward against stealth.
    pub delta: f64,
    /// Weight of past instantaneous costs.
    pub lambda: f64,
    /// Learning rate.
    pub beta: f64,
    /// Number of training steps.
    pub horizon: usize,
    /// Maximum parameter updates per step.
    pub inner_max: usize,
    /// Stop the inner loop once the gradient ∞-norm drops below this.
    pub inner_tol: f64,
    /// Smoothing inside the norm of the output-error term.
    pub eps_smooth: f64,
    pub optimizer: OptimizerKind,
    /// Optional bound on the joint gradient norm.
    pub clip: Option<f64>,
}

/// Adam by default: `J'_t` stiffens roughly like `λt` as history accumulates,
/// and a fixed plain step that is safe late in training barely moves early on.
impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            delta: 0.2,
            lambda: 0.05,
            beta: 5e-5,
            horizon: 1000,
            inner_max: 10,
            inner_tol: 1e-4,
            eps_smooth: 1e-12,
            optimizer: OptimizerKind::Adam,
            clip: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(Error::Input(format!("training {what} out of range: {v}")));
        if !(self.delta >= 0.0) {
            return bad("delta", self.delta);
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda", self.lambda);
        }
        if !(self.beta > 0.0) {
            return bad("beta", self.beta);
        }
        if self.horizon == 0 || self.inner_max == 0 {
            return Err(Error::Input(
                "training horizon and inner_max must be positive".into(),
            ));
        }
        if !(self.inner_tol > 0.0) {
            return bad("inner_tol", self.inner_tol);
        }
        if !(self.eps_smooth > 0.0) {
            return bad("eps_smooth", self.eps_smooth);
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return bad("clip", c);
            }
        }
        Ok(())
    }
}

/// What the attacker stored about step `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub y: Vector,
    pub x_hat_prev: Vector,
    pub x_pred: Vector,
    /// `h(x̂_{j|j−1})`.
    pub y_pred: Vector,
    /// Applied filter gain.
    pub gain: Matrix,
    pub c_jac: Matrix,
    pub s: Matrix,
    pub s_inv: Matrix,
}

impl StepRecord {
    /// Snapshot of a predicted (not yet updated) filter together with the
    /// clean measurement and the estimate the prediction started from.
    pub fn from_estimator(est: &EstimatorState, y: &Vector, x_hat_prev: &Vector) -> Result<Self> {
        if !est.is_predicted() {
            return Err(Error::Contract(
                "history record needs a predicted filter".into(),
            ));
        }
        Ok(StepRecord {
            y: y.clone(),
            x_hat_prev: x_hat_prev.clone(),
            x_pred: est.x_pred.clone(),
            y_pred: est.y_pred.clone(),
            gain: est.l_gain.clone(),
            c_jac: est.c_jac.clone(),
            s: est.s.clone(),
            s_inv: est.s_inv.clone(),
        })
    }

    /// Unattacked residue `y_j − h(x̂_{j|j−1})`.
    pub fn clean_residue(&self) -> Vector {
        &self.y - &self.y_pred
    }
}

/// Append-only history of the training run, with flat row caches for the
/// batched replay.
#[derive(Debug, Clone, Default)]
pub struct HistoryBuffer {
    records: Vec<StepRecord>,
    features: Vec<f64>,
    feature_dim: usize,
    z0: Vec<f64>,
    s_inv: Vec<f64>,
    m: Vec<f64>,
}

fn push_row_major(dst: &mut Vec<f64>, m: &Matrix) {
    for i in 0..m.nrows() {
        dst.extend(m.row(i).iter());
    }
}

impl HistoryBuffer {
    pub fn new() -> Self {
        HistoryBuffer::default()
    }

    /// Append step `len()`; `features` is the generator input for that step.
    pub fn push(&mut self, record: StepRecord, features: Vec<f64>) -> Result<()> {
        if let Some(first) = self.records.first() {
            if features.len() != self.feature_dim || record.y.len() != first.y.len() {
                return Err(Error::Dimension(
                    "history record does not match earlier records".into(),
                ));
            }
        } else {
            self.feature_dim = features.len();
        }
        self.features.extend(features);
        self.z0.extend(record.clean_residue().iter());
        push_row_major(&mut self.s_inv, &record.s_inv);
        push_row_major(&mut self.m, &(&record.c_jac * &record.gain));
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_row(&self, j: usize) -> &[f64] {
        &self.features[j * self.feature_dim..(j + 1) * self.feature_dim]
    }

    fn p(&self) -> usize {
        self.records.first().map_or(0, |r| r.y.len())
    }
}

/// Per-step constants of `J'_t`, built once per training step.
struct Replay {
    rows: usize,
    p: usize,
    z0: Vec<f64>,
    s_inv: RowMatrices,
    m: RowMatrices,
    weights: Vec<f64>,
    delta: f64,
    eps: f64,
}

impl Replay {
    fn new(buffer: &HistoryBuffer, cfg: &TrainingConfig) -> Result<Self> {
        if buffer.is_empty() {
            return Err(Error::Contract("training step on an empty history".into()));
        }
        let rows = buffer.len();
        let p = buffer.p();
        let mut weights = vec![cfg.lambda; rows];
        weights[rows - 1] = 1.0;
        Ok(Replay {
            rows,
            p,
            z0: buffer.z0.clone(),
            s_inv: RowMatrices::new(p, buffer.s_inv.clone())?,
            m: RowMatrices::new(p, buffer.m.clone())?,
            weights,
            delta: cfg.delta,
            eps: cfg.eps_smooth,
        })
    }

    /// `Σ_j w_j (gᵃ_j − δ‖y_j − h(x̂ᵃ_j)‖)` for the `rows × p` attack matrix `a`.
    ///
    /// With `w_j = z0_j + a_j` the attacked residue, `gᵃ_j = w_jᵀS_j⁻¹w_j` and
    /// `y_j − h(x̂ᵃ_j) = z0_j − C_j K_j w_j`.
    fn cost(&self, tape: &mut Tape, a: Var) -> Result<Var> {
        let w = tape.add_const(a, &self.z0)?;
        let g = tape.row_quadratic(w, &self.s_inv)?;
        let cw = tape.row_linear(w, &self.m)?;
        let z0 = tape.constant(self.rows, self.p, self.z0.clone())?;
        let err = tape.sub(z0, cw)?;
        let norms = tape.row_smooth_norm(err, self.eps);
        let reward = tape.scale(norms, self.delta);
        let per_step = tape.sub(g, reward)?;
        tape.weighted_sum(per_step, &self.weights)
    }
}

fn fnn_objective(
    tape: &mut Tape,
    gen: &FnnGenerator,
    buffer: &HistoryBuffer,
    replay: &Replay,
) -> Result<(Var, Vec<Var>)> {
    let params = gen.net.record(tape);
    let x = tape.constant(replay.rows, buffer.feature_dim(), buffer.features.clone())?;
    let out = gen.net.forward_tape(tape, &params, x)?;
    let a = tape.mask_cols(out, &gen.support.mask())?;
    Ok((replay.cost(tape, a)?, params))
}

fn dfnn_objective(
    tape: &mut Tape,
    gen: &DfnnGenerator,
    buffer: &HistoryBuffer,
    replay: &Replay,
) -> Result<(Var, Vec<Var>)> {
    let mut params = gen.net.record(tape);
    let w = tape.leaf(&gen.w);
    let l = gen.latent_dim();
    let d = buffer.feature_dim();
    let mut r_prev = tape.constant(1, l, vec![0.0; l])?;
    let mut latents = Vec::with_capacity(replay.rows);
    for j in 0..replay.rows {
        let y = tape.constant(1, d, buffer.feature_row(j).to_vec())?;
        let input = tape.concat_cols(y, r_prev)?;
        r_prev = gen.net.forward_tape(tape, &params, input)?;
        latents.push(r_prev);
    }
    let r = tape.stack_rows(&latents)?;
    let out = tape.matmul(r, w)?;
    let a = tape.mask_cols(out, &gen.support.mask())?;
    params.push(w);
    Ok((replay.cost(tape, a)?, params))
}

fn objective(
    tape: &mut Tape,
    gen: &Generator,
    buffer: &HistoryBuffer,
    replay: &Replay,
) -> Result<(Var, Vec<Var>)> {
    if buffer.feature_dim() == 0 {
        return Err(Error::Contract("history has no generator features".into()));
    }
    match gen {
        Generator::Fnn(g) => fnn_objective(tape, g, buffer, replay),
        Generator::Dfnn(g) => dfnn_objective(tape, g, buffer, replay),
    }
}

/// `J'_t = λ Σ_{j<t} J_j + J_t` over the whole buffer (`t = len − 1`) under
/// the generator's current parameters.
pub fn objective_value(
    gen: &Generator,
    buffer: &HistoryBuffer,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let replay = Replay::new(buffer, cfg)?;
    let mut tape = Tape::new();
    let (loss, _) = objective(&mut tape, gen, buffer, &replay)?;
    Ok(tape.scalar(loss))
}

/// `J'_t` and its gradient with respect to every trainable tensor, in
/// [`Generator::params_mut`] order.
pub fn objective_gradient(
    gen: &Generator,
    buffer: &HistoryBuffer,
    cfg: &TrainingConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let replay = Replay::new(buffer, cfg)?;
    let mut tape = Tape::new();
    let (loss, vars) = objective(&mut tape, gen, buffer, &replay)?;
    let grads = tape.backward(loss)?;
    Ok((
        tape.scalar(loss),
        vars.into_iter().map(|v| grads.get(v)).collect(),
    ))
}

/// `gᵃ − δ·‖y − h(x̂ᵃ)‖` on a live tape; `h` records the output map.
pub fn instantaneous_cost(
    tape: &mut Tape,
    g_a: Var,
    y: Var,
    x_hat_a: Var,
    h: impl FnOnce(&mut Tape, Var) -> Result<Var>,
    delta: f64,
    eps: f64,
) -> Result<Var> {
    let hx = h(tape, x_hat_a)?;
    let diff = tape.sub(y, hx)?;
    let norm = tape.smooth_norm(diff, eps);
    let reward = tape.scale(norm, delta);
    tape.sub(g_a, reward)
}

/// Outcome of one outer training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub t: usize,
    /// Parameter updates performed.
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Gradient ∞-norm at the last evaluated gradient.
    pub grad_norm: f64,
}

/// Optimizer state carried across training steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainingConfig,
    adam: Option<Adam>,
}

impl Trainer {
    pub fn new(cfg: TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = (cfg.optimizer == OptimizerKind::Adam).then(|| Adam::new(cfg.beta));
        Ok(Trainer { cfg, adam })
    }

    /// Minimise `J'_t` over the generator parameters until the gradient is
    /// small or `inner_max` updates were made.
    pub fn step(&mut self, gen: &mut Generator, buffer: &HistoryBuffer) -> Result<StepReport> {
        let t = buffer.len().saturating_sub(1);
        let replay = Replay::new(buffer, &self.cfg)?;
        let mut report = StepReport {
            t,
            iterations: 0,
            initial_objective: f64::NAN,
            final_objective: f64::NAN,
            grad_norm: f64::NAN,
        };
        loop {
            let mut tape = Tape::new();
            let (loss, vars) = objective(&mut tape, gen, buffer, &replay)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Training {
                    step: t,
                    iteration: report.iterations,
                    msg: format!("objective became {value}"),
                });
            }
            if report.iterations == 0 {
                report.initial_objective = value;
            }
            report.final_objective = value;
            if report.iterations == self.cfg.inner_max {
                break;
            }
            let grads = tape.backward(loss)?;
            drop(tape);
            let mut params = gen.params_mut();
            for (p, v) in params.iter_mut().zip(&vars) {
                p.zero_grad();
                grads.accumulate_into(*v, p)?;
            }
            let gnorm = grad_inf_norm(&params);
            report.grad_norm = gnorm;
            if !gnorm.is_finite() {
                return Err(Error::Training {
                    step: t,
                    iteration: report.iterations,
                    msg: "gradient is not finite".into(),
                });
            }
            if gnorm < self.cfg.inner_tol {
                break;
            }
            if let Some(c) = self.cfg.clip {
                clip_grad_norm(&mut params, c);
            }
            match &mut self.adam {
                Some(adam) => adam.step(&mut params)?,
                None => sgd_step(&mut params, self.cfg.beta)?,
            }
            report.iterations += 1;
        }
        for p in gen.params_mut() {
            p.clear_grad();
        }
        Ok(report)
    }
}

/// One training step of a feedforward generator.
pub fn train_step_fnn(
    gen: FnnGenerator,
    buffer: &HistoryBuffer,
    trainer: &mut Trainer,
) -> Result<(FnnGenerator, StepReport)> {
    let mut g = Generator::Fnn(gen);
    let rep = trainer.step(&mut g, buffer)?;
    match g {
        Generator::Fnn(g) => Ok((g, rep)),
        Generator::Dfnn(_) => unreachable!(),
    }
}

/// One training step of a delayed generator (`θ` and `W` together).
pub fn train_step_dfnn(
    gen: DfnnGenerator,
    buffer: &HistoryBuffer,
    trainer: &mut Trainer,
) -> Result<(DfnnGenerator, StepReport)> {
    let mut g = Generator::Dfnn(gen);
    let rep = trainer.step(&mut g, buffer)?;
    match g {
        Generator::Dfnn(g) => Ok((g, rep)),
        Generator::Fnn(_) => unreachable!(),
    }
}
