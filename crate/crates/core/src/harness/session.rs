use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{
    theorem1_attack, Generator, HistoryBuffer, StepRecord, StepReport, Trainer, TrainingConfig,
};
use crate::detection::DetectorConfig;
use crate::estimation::EstimatorState;
use crate::linalg::{Matrix, Vector};
use crate::models::{PlantModel, PlantState};
use crate::{Error, Result};

use super::controller::Controller;
use super::metrics::{evaluate_success, SuccessReport};
use super::scenario::{ModelKind, Scenario};

/// RNG streams; evaluation and training rollouts of one seed never share noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Evaluation,
    Training,
}

impl Purpose {
    fn streams(self) -> (u64, u64) {
        match self {
            Purpose::Evaluation => (0, 1),
            Purpose::Training => (2, 3),
        }
    }
}

/// What an attacker sees at step `t`: the clean measurement, the filter
/// after its prediction, and the previous estimate and input.
pub struct AttackContext<'a> {
    pub t: usize,
    /// Steps since the attack started (0 at `t0`).
    pub k: usize,
    pub model: &'a PlantModel,
    pub y: &'a Vector,
    pub x_hat_prev: &'a Vector,
    pub u_prev: &'a Vector,
    pub estimator: &'a EstimatorState,
}

/// Produces `a_t` once per attacked step.
pub trait Attacker {
    fn name(&self) -> &str;

    fn attack(&mut self, ctx: &AttackContext<'_>, rng: &mut dyn RngCore) -> Result<Vector>;

    /// Called once before the first attacked step.
    fn start(&mut self) {}
}

/// Analytic attack with `Σ_φ = scale·S_t`.
pub struct Theorem1Attacker {
    pub phi_scale: f64,
}

impl Attacker for Theorem1Attacker {
    fn name(&self) -> &str {
        "theorem1"
    }

    fn attack(&mut self, ctx: &AttackContext<'_>, rng: &mut dyn RngCore) -> Result<Vector> {
        let lti = ctx
            .model
            .lti_matrices()
            .ok_or_else(|| Error::Contract("analytic attack needs an LTI plant".into()))?;
        let cov = &ctx.estimator.s * self.phi_scale;
        theorem1_attack(
            lti,
            ctx.x_hat_prev,
            ctx.u_prev,
            ctx.y,
            &cov,
            &ctx.estimator.s,
            rng,
        )
    }
}

/// A generator with frozen parameters.
pub struct FrozenAttacker {
    pub generator: Generator,
}

impl Attacker for FrozenAttacker {
    fn name(&self) -> &str {
        self.generator.kind()
    }

    fn start(&mut self) {
        self.generator.reset();
    }

    fn attack(&mut self, ctx: &AttackContext<'_>, _rng: &mut dyn RngCore) -> Result<Vector> {
        Ok(self.generator.generate(ctx.model, ctx.y, ctx.x_hat_prev))
    }
}

/// Online training: at each attacked step the step is appended to the
/// history, the generator is trained on `J'_t`, and the updated generator
/// produces `a_t`. After `horizon` steps the parameters are frozen.
pub struct TrainingAttacker {
    pub generator: Generator,
    pub buffer: HistoryBuffer,
    pub reports: Vec<StepReport>,
    trainer: Trainer,
}

impl TrainingAttacker {
    pub fn new(generator: Generator, cfg: TrainingConfig) -> Result<Self> {
        Ok(TrainingAttacker {
            generator,
            buffer: HistoryBuffer::new(),
            reports: Vec::new(),
            trainer: Trainer::new(cfg)?,
        })
    }

    pub fn is_training(&self) -> bool {
        self.buffer.len() < self.trainer.cfg.horizon
    }

    /// Recompute the delayed generator's latent over the whole history under
    /// the current parameters, as the objective does.
    fn sync_latent(&mut self) {
        if let Generator::Dfnn(g) = &mut self.generator {
            let mut r = Vector::zeros(g.latent_dim());
            for rec in self.buffer.records() {
                r = g.step(&rec.y, &r).1;
            }
            g.r = r;
        }
    }
}

impl Attacker for TrainingAttacker {
    fn name(&self) -> &str {
        self.generator.kind()
    }

    fn start(&mut self) {
        self.generator.reset();
    }

    fn attack(&mut self, ctx: &AttackContext<'_>, _rng: &mut dyn RngCore) -> Result<Vector> {
        if !self.is_training() {
            return Ok(self.generator.generate(ctx.model, ctx.y, ctx.x_hat_prev));
        }
        let features = self.generator.features(ctx.model, ctx.y, ctx.x_hat_prev);
        let record = StepRecord::from_estimator(ctx.estimator, ctx.y, ctx.x_hat_prev)?;
        self.buffer.push(record, features.clone())?;
        let mut report = self.trainer.step(&mut self.generator, &self.buffer)?;
        report.t = ctx.t;
        self.reports.push(report);
        Ok(match &self.generator {
            Generator::Fnn(g) => g.generate_from_features(&features),
            Generator::Dfnn(_) => {
                self.sync_latent();
                let Generator::Dfnn(g) = &self.generator else {
                    unreachable!()
                };
                g.readout(&g.r)
            }
        })
    }
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: usize,
    pub x: Vector,
    pub x_hat: Vector,
    pub x_pred: Vector,
    /// `π(x̂_t)`, applied in the transition to `t + 1`.
    pub u: Vector,
    /// Clean measurement.
    pub y: Vector,
    pub a: Vector,
    /// Received measurement `y + a`.
    pub y_c: Vector,
    pub z: Vector,
    pub g: f64,
    pub alarm: bool,
    /// Innovation covariance, kept when the scenario asks for it.
    pub s: Option<Matrix>,
}

impl Row {
    /// `‖x_t − x̂_t‖` over `states` (all states when `None`).
    pub fn error_norm(&self, states: Option<&[usize]>) -> f64 {
        let d = &self.x - &self.x_hat;
        match states {
            None => d.norm(),
            Some(idx) => idx.iter().map(|&i| d[i] * d[i]).sum::<f64>().sqrt(),
        }
    }
}

/// Everything logged by one rollout, plus its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub model_id: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub dt: f64,
    pub seed: u64,
    pub t0: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub error_states: Option<Vec<usize>>,
    pub attacker: String,
    pub rows: Vec<Row>,
    /// Set when the plant left the finite range and the run was cut short.
    pub terminated: Option<String>,
    pub summary: SuccessReport,
}

impl RunRecord {
    /// Recompute the summary from the rows.
    pub fn refresh_summary(&mut self) {
        self.summary = evaluate_success(self, self.alpha, self.epsilon);
    }

    pub fn max_error(&self) -> f64 {
        self.summary.max_error
    }
}

/// Plant, filter, controller and detector of one rollout.
pub struct Session {
    pub model: PlantModel,
    pub controller: Controller,
    pub detector: DetectorConfig,
    pub estimator: EstimatorState,
    pub state: PlantState,
    pub u: Vector,
    pub t: usize,
    plant_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    log_s: bool,
}

impl Session {
    pub fn new(scenario: &Scenario, purpose: Purpose) -> Result<Self> {
        let model = scenario.model.build()?;
        let quad = match scenario.model.kind {
            ModelKind::Quadrotor(p) => Some(p),
            _ => None,
        };
        let controller = Controller::new(scenario.controller.clone(), &model, quad);
        let detector = DetectorConfig::calibrate(scenario.epsilon, model.p())?;
        let (ps, at) = purpose.streams();
        let mut plant_rng = ChaCha8Rng::seed_from_u64(scenario.run.seed);
        plant_rng.set_stream(ps);
        let mut attack_rng = ChaCha8Rng::seed_from_u64(scenario.run.seed);
        attack_rng.set_stream(at);
        let state = PlantState::new(scenario.model.x0.clone());
        let estimator = EstimatorState::initial(
            &model,
            &state.x,
            scenario.estimator_sigma0,
            scenario.estimator_p0_scale,
            &mut plant_rng,
        )?;
        let u = controller.control(&estimator.x_hat, 0.0);
        Ok(Session {
            model,
            controller,
            detector,
            estimator,
            state,
            u,
            t: 0,
            plant_rng,
            attack_rng,
            log_s: scenario.run.log_s,
        })
    }

    /// Advance one step. `attacker` is consulted with `k` steps since the
    /// attack started; `None` leaves the measurement clean.
    pub fn step(&mut self, attacker: Option<(&mut dyn Attacker, usize)>) -> Result<Row> {
        let u_prev = self.u.clone();
        self.state = self.model.step(&self.state, &u_prev, &mut self.plant_rng)?;
        self.t = self.state.t;
        let y = self.model.observe(&self.state, &mut self.plant_rng);
        let x_hat_prev = self.estimator.x_hat.clone();
        self.estimator.predict(&self.model, &u_prev)?;
        let a = match attacker {
            None => Vector::zeros(self.model.p()),
            Some((att, k)) => {
                let ctx = AttackContext {
                    t: self.t,
                    k,
                    model: &self.model,
                    y: &y,
                    x_hat_prev: &x_hat_prev,
                    u_prev: &u_prev,
                    estimator: &self.estimator,
                };
                let a = att.attack(&ctx, &mut self.attack_rng)?;
                if a.len() != self.model.p() || !a.iter().all(|v| v.is_finite()) {
                    return Err(Error::Numeric {
                        step: self.t,
                        msg: format!("attacker `{}` produced an invalid vector", att.name()),
                    });
                }
                a
            }
        };
        let y_c = &y + &a;
        let s = self.log_s.then(|| self.estimator.s.clone());
        let x_pred = self.estimator.x_pred.clone();
        let res = self.estimator.update(&y_c)?;
        if !self.estimator.x_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                step: self.t,
                msg: "estimate left the finite range".into(),
            });
        }
        self.u = self
            .controller
            .control(&self.estimator.x_hat, self.t as f64 * self.model.dt());
        if !self.u.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                step: self.t,
                msg: "controller output is not finite".into(),
            });
        }
        Ok(Row {
            t: self.t,
            x: self.state.x.clone(),
            x_hat: self.estimator.x_hat.clone(),
            x_pred,
            u: self.u.clone(),
            y,
            a,
            y_c,
            z: res.z,
            alarm: self.detector.evaluate(res.g),
            g: res.g,
            s,
        })
    }
}

/// Closed-loop rollout of `scenario.run.duration` steps with `attacker`
/// active from `scenario.attack.t0`. A numeric escape of the plant or the
/// filter ends the run early and is recorded in [`RunRecord::terminated`].
pub fn rollout(
    scenario: &Scenario,
    purpose: Purpose,
    duration: usize,
    mut attacker: Option<&mut dyn Attacker>,
) -> Result<RunRecord> {
    let mut session = Session::new(scenario, purpose)?;
    let t0 = scenario.attack.t0;
    let mut rows = Vec::with_capacity(duration);
    let mut terminated = None;
    let mut started = false;
    for t in 1..=duration {
        let step = match attacker.as_mut() {
            Some(att) if t >= t0 => {
                if !started {
                    att.start();
                    started = true;
                }
                session.step(Some((&mut **att, t - t0)))
            }
            _ => session.step(None),
        };
        match step {
            Ok(row) => rows.push(row),
            Err(Error::Numeric { step, msg } | Error::Singular { step, msg }) => {
                log::warn!("run stopped at step {step}: {msg}");
                terminated = Some(format!("step {step}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let name = attacker.map_or("none".to_string(), |a| a.name().to_string());
    let mut record = RunRecord {
        model_id: session.model.id().to_string(),
        n: session.model.n(),
        m: session.model.m(),
        p: session.model.p(),
        dt: session.model.dt(),
        seed: scenario.run.seed,
        t0,
        eta: session.detector.eta,
        epsilon: scenario.epsilon,
        alpha: scenario.attack.alpha,
        error_states: scenario.run.error_states.clone(),
        attacker: name,
        rows,
        terminated,
        summary: SuccessReport::default(),
    };
    record.refresh_summary();
    Ok(record)
}
