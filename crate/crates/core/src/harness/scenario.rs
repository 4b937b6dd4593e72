//! Flat `key = value` scenario files.
//!
//! ```text
//! # comments start with '#'
//! model.type = vehicle
//! controller.type = lane_keeping
//! controller.road = straight
//! attack.kind = fnn
//! attack.t0 = 600
//! attack.alpha = 2
//! train.T = 1000
//! run.duration = 3600
//! run.seed = 7
//! ```
//!
//! Matrices are written row by row, rows separated by `;`. Lists are
//! whitespace or comma separated. Every key is checked; an unknown key is an
//! error, so a typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::attack::{FeatureForm, OptimizerKind, TrainingConfig};
use crate::linalg::{parse_list, parse_matrix, Matrix, Vector};
use crate::models::{LtiMatrices, PlantModel, QuadrotorParams, VehicleParams};
use crate::{Error, Result};

use super::controller::{ControllerSpec, LaneKeepingGains, Road, UavGains, UavTask};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Lti { a: Matrix, b: Matrix, c: Matrix },
    Vehicle(VehicleParams),
    Quadrotor(QuadrotorParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub q: Matrix,
    pub r: Matrix,
    pub dt: f64,
    pub x0: Vector,
    pub lipschitz: Option<f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<PlantModel> {
        let model = match &self.kind {
            ModelKind::Lti { a, b, c } => PlantModel::lti(
                LtiMatrices::new(a.clone(), b.clone(), c.clone())?,
                self.q.clone(),
                self.r.clone(),
                self.dt,
            )?,
            ModelKind::Vehicle(p) => PlantModel::vehicle(*p, self.q.clone(), self.r.clone())?,
            ModelKind::Quadrotor(p) => PlantModel::quadrotor(*p, self.q.clone(), self.r.clone())?,
        };
        Ok(match self.lipschitz {
            Some(l) => model.with_lipschitz(l),
            None => model,
        })
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            ModelKind::Lti { .. } => "lti",
            ModelKind::Vehicle(_) => "vehicle",
            ModelKind::Quadrotor(_) => "quadrotor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    None,
    Theorem1,
    Fnn,
    Dfnn,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Theorem1 => "theorem1",
            AttackKind::Fnn => "fnn",
            AttackKind::Dfnn => "dfnn",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, AttackKind::Fnn | AttackKind::Dfnn)
    }
}

/// Architecture and input map of a learned generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub hidden: Vec<usize>,
    /// Latent size `l` (delayed generator only).
    pub latent: usize,
    pub form: FeatureForm,
    pub select: Vec<usize>,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub init_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// First attacked step.
    pub t0: usize,
    /// Target estimation error.
    pub alpha: f64,
    /// 1-based attacked sensors.
    pub support: Vec<usize>,
    /// `Σ_φ = phi_scale·S` for the analytic attack.
    pub phi_scale: f64,
    /// Pre-trained generator to load instead of training.
    pub model: Option<PathBuf>,
    pub generator: GeneratorSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub seed: u64,
    /// Number of simulated steps (rows of the record).
    pub duration: usize,
    /// Also log the innovation covariance.
    pub log_s: bool,
    /// 0-based state indices entering `‖Δx‖`; all when `None`.
    pub error_states: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSpec,
    pub estimator_sigma0: f64,
    pub estimator_p0_scale: f64,
    pub controller: ControllerSpec,
    pub epsilon: f64,
    pub attack: AttackSpec,
    pub training: TrainingConfig,
    /// Step at which online training starts.
    pub train_t0: usize,
    pub run: RunSpec,
}

/// Key/value pairs with use tracking.
struct Entries {
    map: BTreeMap<String, (String, bool)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", i + 1),
                    format!("expected `key = value`, found `{line}`"),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}", i + 1), "empty key"));
            }
            if map.insert(k.to_string(), (v.to_string(), false)).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
        }
        Ok(Entries { map })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.map.get_mut(key).map(|(v, used)| {
            *used = true;
            v.clone()
        })
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn real(&mut self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.or(key, default)?;
        if !v.is_finite() {
            return Err(Error::config(key, "must be finite"));
        }
        Ok(v)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.real(key, default)?;
        if v <= 0.0 {
            return Err(Error::config(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonneg(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.real(key, default)?;
        if v < 0.0 {
            return Err(Error::config(key, format!("must be nonnegative, got {v}")));
        }
        Ok(v)
    }

    fn matrix(&mut self, key: &str) -> Result<Option<Matrix>> {
        self.raw(key)
            .map(|v| parse_matrix(&v).map_err(|e| Error::config(key, e)))
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|v| parse_list(&v).map_err(|e| Error::config(key, e)))
            .transpose()
    }

    fn usizes(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        self.raw(key)
            .map(|v| {
                v.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse().map_err(|_| {
                            Error::config(key, format!("`{s}` is not a nonnegative integer"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn choice<'a>(&mut self, key: &str, default: &'a str, allowed: &[&'a str]) -> Result<String> {
        let v = self.raw(key).unwrap_or_else(|| default.to_string());
        if !allowed.contains(&v.as_str()) {
            return Err(Error::config(
                key,
                format!("`{v}` is not one of {}", allowed.join(", ")),
            ));
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        match self.map.iter().find(|(_, (_, used))| !used) {
            Some((k, _)) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }
}

fn covariance(e: &mut Entries, key: &str, dim: usize, default_scale: f64) -> Result<Matrix> {
    let scale_key = format!("{key}_scale");
    let full = e.matrix(key)?;
    let scale: Option<f64> = e.get(&scale_key)?;
    match (full, scale) {
        (Some(_), Some(_)) => Err(Error::config(
            key,
            format!("give either {key} or {scale_key}, not both"),
        )),
        (Some(m), None) => {
            if m.shape() != (dim, dim) {
                return Err(Error::config(
                    key,
                    format!("expected {dim}x{dim}, found {:?}", m.shape()),
                ));
            }
            Ok(m)
        }
        (None, s) => {
            let s = s.unwrap_or(default_scale);
            if !(s >= 0.0) {
                return Err(Error::config(scale_key, "must be nonnegative"));
            }
            Ok(Matrix::identity(dim, dim) * s)
        }
    }
}

fn parse_model(e: &mut Entries) -> Result<(ModelSpec, f64)> {
    if !e.map.contains_key("model.type") {
        return Err(Error::config(
            "model.type",
            "required: lti, vehicle or quadrotor",
        ));
    }
    let kind = e.choice("model.type", "", &["lti", "vehicle", "quadrotor"])?;
    let mut speed = 0.0;
    let (kind, n, p, q_default, r_default, dt) = match kind.as_str() {
        "lti" => {
            let req = |e: &mut Entries, k: &str| {
                e.matrix(k)?
                    .ok_or_else(|| Error::config(k, "required for an LTI model"))
            };
            let a = req(e, "model.A")?;
            let b = req(e, "model.B")?;
            let c = req(e, "model.C")?;
            let (n, p) = (a.nrows(), c.nrows());
            let dt = e.positive("model.dt", 1.0)?;
            (ModelKind::Lti { a, b, c }, n, p, 0.01, 0.01, dt)
        }
        "vehicle" => {
            let d = VehicleParams::default();
            let params = VehicleParams {
                lf: e.positive("model.lf", d.lf)?,
                lr: e.positive("model.lr", d.lr)?,
                dt: e.positive("model.dt", d.dt)?,
            };
            speed = 10.0;
            (ModelKind::Vehicle(params), 4, 2, 1e-3, 1e-2, params.dt)
        }
        _ => {
            let d = QuadrotorParams::default();
            let params = QuadrotorParams {
                mass: e.positive("model.mass", d.mass)?,
                dt: e.positive("model.dt", d.dt)?,
                ..d
            };
            (ModelKind::Quadrotor(params), 12, 9, 1e-3, 5e-2, params.dt)
        }
    };
    let q = covariance(e, "model.Q", n, q_default)?;
    let r = covariance(e, "model.R", p, r_default)?;
    let x0 = match e.list("model.x0")? {
        Some(v) if v.len() == n => Vector::from_vec(v),
        Some(v) => {
            return Err(Error::config(
                "model.x0",
                format!("expected {n} entries, found {}", v.len()),
            ))
        }
        None => Vector::zeros(n),
    };
    let lipschitz = e.get("model.lipschitz")?;
    Ok((
        ModelSpec {
            kind,
            q,
            r,
            dt,
            x0,
            lipschitz,
        },
        speed,
    ))
}

fn parse_controller(
    e: &mut Entries,
    model: &mut ModelSpec,
    default_speed: f64,
) -> Result<ControllerSpec> {
    let default = match model.kind {
        ModelKind::Lti { .. } => "state_feedback",
        ModelKind::Vehicle(_) => "lane_keeping",
        ModelKind::Quadrotor(_) => "uav",
    };
    let kind = e.choice(
        "controller.type",
        default,
        &["none", "state_feedback", "lane_keeping", "uav"],
    )?;
    let compatible = match (&model.kind, kind.as_str()) {
        (_, "none") => true,
        (ModelKind::Lti { .. }, "state_feedback") => true,
        (ModelKind::Vehicle(_), "lane_keeping") => true,
        (ModelKind::Quadrotor(_), "uav") => true,
        _ => false,
    };
    if !compatible {
        return Err(Error::config(
            "controller.type",
            format!("`{kind}` cannot drive a {} model", model.id()),
        ));
    }
    Ok(match kind.as_str() {
        "none" => ControllerSpec::Zero,
        "state_feedback" => {
            let ModelKind::Lti { a, b, .. } = &model.kind else {
                unreachable!()
            };
            let (n, m) = (a.nrows(), b.ncols());
            let k = e
                .matrix("controller.K")?
                .unwrap_or_else(|| Matrix::zeros(m, n));
            if k.shape() != (m, n) {
                return Err(Error::config(
                    "controller.K",
                    format!("expected {m}x{n}, found {:?}", k.shape()),
                ));
            }
            ControllerSpec::StateFeedback { k }
        }
        "lane_keeping" => {
            let road = match e
                .choice("controller.road", "straight", &["straight", "curvy"])?
                .as_str()
            {
                "straight" => Road::Straight,
                _ => Road::Curvy {
                    amplitude: e.nonneg("controller.amplitude", 4.0)?,
                    wavelength: e.positive("controller.wavelength", 150.0)?,
                },
            };
            let d = LaneKeepingGains::default();
            let gains = LaneKeepingGains {
                speed: e.positive("controller.speed", default_speed)?,
                k_lat: e.nonneg("controller.k_lat", d.k_lat)?,
                k_head: e.nonneg("controller.k_head", d.k_head)?,
                k_speed: e.nonneg("controller.k_speed", d.k_speed)?,
                max_steer: e.positive("controller.max_steer", d.max_steer)?,
                max_accel: e.positive("controller.max_accel", d.max_accel)?,
                ..d
            };
            if e.map.get("model.x0").is_none() {
                let (y0, psi0) = road.reference(0.0);
                model.x0 = Vector::from_vec(vec![0.0, y0, psi0, gains.speed]);
            }
            ControllerSpec::LaneKeeping { road, gains }
        }
        _ => {
            let task = match e
                .choice("controller.task", "altitude", &["altitude", "ramp"])?
                .as_str()
            {
                "altitude" => UavTask::Altitude {
                    height: e.real("controller.altitude", 20.0)?,
                },
                _ => UavTask::Ramp {
                    rate: e.real("controller.climb_rate", 0.2)?,
                },
            };
            let d = UavGains::default();
            let gains = UavGains {
                kp_z: e.nonneg("controller.kp_z", d.kp_z)?,
                kd_z: e.nonneg("controller.kd_z", d.kd_z)?,
                kp_xy: e.nonneg("controller.kp_xy", d.kp_xy)?,
                kd_xy: e.nonneg("controller.kd_xy", d.kd_xy)?,
                kp_att: e.nonneg("controller.kp_att", d.kp_att)?,
                kd_att: e.nonneg("controller.kd_att", d.kd_att)?,
                kp_yaw: e.nonneg("controller.kp_yaw", d.kp_yaw)?,
                kd_yaw: e.nonneg("controller.kd_yaw", d.kd_yaw)?,
                ..d
            };
            ControllerSpec::Uav { task, gains }
        }
    })
}

/// Defaults of the learned generators per plant.
fn default_generator(model: &ModelSpec, kind: AttackKind) -> GeneratorSpec {
    let (n, p) = (
        model.x0.len(),
        match &model.kind {
            ModelKind::Lti { c, .. } => c.nrows(),
            ModelKind::Vehicle(_) => 2,
            ModelKind::Quadrotor(_) => 9,
        },
    );
    let dfnn = kind == AttackKind::Dfnn;
    let (hidden, latent) = match model.kind {
        ModelKind::Quadrotor(_) => (vec![50, 100, 100, 100], 20),
        _ => (vec![15, 15], 3),
    };
    let (select, scale): (Vec<usize>, Vec<f64>) = match (&model.kind, dfnn) {
        // The longitudinal position grows without bound along the road; the
        // feedforward generator drops it and the delayed one sees it shrunk.
        (ModelKind::Vehicle(_), false) => (vec![0, 1, 3, 4, 5], vec![1.0; 5]),
        (ModelKind::Vehicle(_), true) => (vec![0, 1], vec![1e-3, 1.0]),
        (_, false) => ((0..n + p).collect(), vec![1.0; n + p]),
        (_, true) => ((0..p).collect(), vec![1.0; p]),
    };
    GeneratorSpec {
        hidden,
        latent,
        form: FeatureForm::Innovation,
        offset: vec![0.0; select.len()],
        select,
        scale,
        init_gain: 1.0,
    }
}

fn parse_generator(e: &mut Entries, model: &ModelSpec, kind: AttackKind) -> Result<GeneratorSpec> {
    let mut g = default_generator(model, kind);
    if let Some(h) = e.usizes("attack.hidden")? {
        if h.contains(&0) {
            return Err(Error::config(
                "attack.hidden",
                "layer sizes must be positive",
            ));
        }
        g.hidden = h;
    }
    g.latent = e.or("attack.latent", g.latent)?;
    if g.latent == 0 {
        return Err(Error::config("attack.latent", "must be positive"));
    }
    if let Some(f) = e.raw("attack.form") {
        g.form = FeatureForm::parse(&f).ok_or_else(|| {
            Error::config("attack.form", format!("`{f}` is not raw or innovation"))
        })?;
    }
    let explicit_select = e.usizes("attack.select")?;
    if let Some(sel) = explicit_select {
        g.offset = vec![0.0; sel.len()];
        g.scale = vec![1.0; sel.len()];
        g.select = sel;
    }
    if let Some(o) = e.list("attack.offset")? {
        g.offset = o;
    }
    if let Some(s) = e.list("attack.scale")? {
        g.scale = s;
    }
    if g.offset.len() != g.select.len() || g.scale.len() != g.select.len() {
        return Err(Error::config(
            "attack.select",
            "select, offset and scale must have the same length",
        ));
    }
    g.init_gain = e.nonneg("attack.init_gain", g.init_gain)?;
    Ok(g)
}

fn parse_training(e: &mut Entries) -> Result<TrainingConfig> {
    let d = TrainingConfig::default();
    let optimizer = match e.raw("train.optimizer") {
        None => d.optimizer,
        Some(v) => OptimizerKind::parse(&v)
            .ok_or_else(|| Error::config("train.optimizer", format!("`{v}` is not sgd or adam")))?,
    };
    let clip = match e.raw("train.clip") {
        None => None,
        Some(v) if v == "none" => None,
        Some(v) => Some(
            v.parse()
                .map_err(|_| Error::config("train.clip", format!("cannot parse `{v}`")))?,
        ),
    };
    let cfg = TrainingConfig {
        delta: e.nonneg("train.delta", d.delta)?,
        lambda: e.nonneg("train.lambda", d.lambda)?,
        beta: e.positive("train.beta", d.beta)?,
        horizon: e.or("train.T", d.horizon)?,
        inner_max: e.or("train.inner_max", d.inner_max)?,
        inner_tol: e.positive("train.inner_tol", d.inner_tol)?,
        eps_smooth: e.positive("train.eps_smooth", d.eps_smooth)?,
        optimizer,
        clip,
    };
    cfg.validate()
        .map_err(|err| Error::config("train", err.to_string()))?;
    Ok(cfg)
}

impl Scenario {
    /// Parse scenario text; relative paths resolve against the working directory.
    pub fn parse_str(text: &str) -> Result<Self> {
        Scenario::parse_with_base(text, Path::new("."), "scenario")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario");
        Scenario::parse_with_base(&text, base, name)
    }

    fn parse_with_base(text: &str, base: &Path, name: &str) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let (mut model, speed) = parse_model(&mut e)?;
        let controller = parse_controller(&mut e, &mut model, speed)?;
        let p = match &model.kind {
            ModelKind::Lti { c, .. } => c.nrows(),
            ModelKind::Vehicle(_) => 2,
            ModelKind::Quadrotor(_) => 9,
        };
        let n = model.x0.len();
        let estimator_sigma0 = e.nonneg("estimator.sigma0", 0.1)?;
        let estimator_p0_scale = e.nonneg("estimator.P0_scale", 1.0)?;
        let epsilon = e.real("detector.epsilon", 0.05)?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::config("detector.epsilon", "must lie in (0, 1)"));
        }
        let kind = match e
            .choice("attack.kind", "none", &["none", "theorem1", "fnn", "dfnn"])?
            .as_str()
        {
            "none" => AttackKind::None,
            "theorem1" => AttackKind::Theorem1,
            "fnn" => AttackKind::Fnn,
            _ => AttackKind::Dfnn,
        };
        if kind == AttackKind::Theorem1 && !matches!(model.kind, ModelKind::Lti { .. }) {
            return Err(Error::config(
                "attack.kind",
                "the analytic attack needs an LTI model",
            ));
        }
        let t0 = e.or("attack.t0", 0usize)?;
        let alpha = e.nonneg("attack.alpha", 1.0)?;
        let support = e
            .usizes("attack.support")?
            .unwrap_or_else(|| (1..=p).collect());
        if support.iter().any(|&i| i == 0 || i > p) {
            return Err(Error::config(
                "attack.support",
                format!("sensor numbers run from 1 to {p}"),
            ));
        }
        let phi_scale = e.nonneg("attack.phi_scale", crate::attack::DEFAULT_PHI_SCALE)?;
        let model_path = e.raw("attack.model").map(|s| base.join(s));
        let generator = parse_generator(&mut e, &model, kind)?;
        let training = parse_training(&mut e)?;
        let train_t0 = e.or("train.t0", t0)?;
        let duration = e.or("run.duration", 1000usize)?;
        if duration == 0 {
            return Err(Error::config("run.duration", "must be positive"));
        }
        let error_states = e.usizes("run.error_states")?;
        if let Some(s) = &error_states {
            if s.is_empty() || s.iter().any(|&i| i >= n) {
                return Err(Error::config(
                    "run.error_states",
                    format!("state indices run from 0 to {}", n - 1),
                ));
            }
        }
        let run = RunSpec {
            seed: e.or("run.seed", 0u64)?,
            duration,
            log_s: e.or("run.log_s", false)?,
            error_states,
        };
        e.finish()?;
        Ok(Scenario {
            name: name.to_string(),
            model,
            estimator_sigma0,
            estimator_p0_scale,
            controller,
            epsilon,
            attack: AttackSpec {
                kind,
                t0,
                alpha,
                support,
                phi_scale,
                model: model_path,
                generator,
            },
            training,
            train_t0,
            run,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.run.seed = seed;
        s
    }
}
