use rand::Rng;

use super::network::{FeatureForm, InputMap, Mlp};
use crate::autodiff::Tensor;
use crate::linalg::Vector;
use crate::models::PlantModel;
use crate::{Error, Result};

/// Sensors the attacker can corrupt. Stored 0-based; parsed and printed 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSupport {
    indices: Vec<usize>,
    p: usize,
}

impl SensorSupport {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::Input(format!(
                "sensor index {} outside 1..={p}",
                bad + 1
            )));
        }
        Ok(SensorSupport { indices, p })
    }

    /// From 1-based sensor numbers.
    pub fn from_one_based(numbers: &[usize], p: usize) -> Result<Self> {
        if numbers.contains(&0) {
            return Err(Error::Input("sensor numbers are 1-based".into()));
        }
        SensorSupport::new(numbers.iter().map(|i| i - 1).collect(), p)
    }

    pub fn all(p: usize) -> Self {
        SensorSupport {
            indices: (0..p).collect(),
            p,
        }
    }

    pub fn none(p: usize) -> Self {
        SensorSupport {
            indices: Vec::new(),
            p,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// 1 on attacked channels, 0 elsewhere.
    pub fn mask(&self) -> Vec<f64> {
        (0..self.p)
            .map(|i| if self.contains(i) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Zero every off-support entry of `a`.
    pub fn apply(&self, a: &mut Vector) {
        for i in 0..a.len() {
            if !self.contains(i) {
                a[i] = 0.0;
            }
        }
    }
}

/// Feedforward generator `a_t = H_θ(y_t, x̂_{t−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnGenerator {
    pub net: Mlp,
    pub form: FeatureForm,
    pub input: InputMap,
    pub support: SensorSupport,
}

impl FnnGenerator {
    /// `hidden` lists the hidden widths; input and output sizes follow from
    /// the input map and the support's `p`.
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        form: FeatureForm,
        input: InputMap,
        support: SensorSupport,
        init_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input.dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(support.p());
        let net = Mlp::new(&sizes, init_gain, rng)?;
        Ok(FnnGenerator {
            net,
            form,
            input,
            support,
        })
    }

    pub fn check(&self, model: &PlantModel) -> Result<()> {
        let raw = model.n() + model.p();
        if self.support.p() != model.p() || self.net.output_dim() != model.p() {
            return Err(Error::Dimension(format!(
                "generator emits {} channels, plant measures {}",
                self.net.output_dim(),
                model.p()
            )));
        }
        if self.input.select.iter().any(|&i| i >= raw) || self.net.input_dim() != self.input.dim() {
            return Err(Error::Dimension(format!(
                "generator input map does not fit {raw} raw features"
            )));
        }
        Ok(())
    }

    /// Network input for `(y_t, x̂_{t−1})`.
    pub fn features(&self, model: &PlantModel, y: &Vector, x_hat_prev: &Vector) -> Vec<f64> {
        let mut raw: Vec<f64> = match self.form {
            FeatureForm::Raw => y.iter().copied().collect(),
            FeatureForm::Innovation => (y - model.h(x_hat_prev)).iter().copied().collect(),
        };
        raw.extend(x_hat_prev.iter());
        self.input.apply(&raw)
    }

    pub fn generate_from_features(&self, features: &[f64]) -> Vector {
        let mut a = Vector::from_vec(self.net.forward(features));
        self.support.apply(&mut a);
        a
    }

    /// Masked attack vector.
    pub fn generate(&self, model: &PlantModel, y: &Vector, x_hat_prev: &Vector) -> Vector {
        self.generate_from_features(&self.features(model, y, x_hat_prev))
    }
}

/// Delayed generator `r_t = G_θ(y_t, r_{t−1})`, `a_t = r_t·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfnnGenerator {
    pub net: Mlp,
    /// Latent-to-attack map, `l × p`.
    pub w: Tensor,
    /// Selection and scaling of `y_t`; the latent enters unscaled.
    pub input: InputMap,
    pub support: SensorSupport,
    /// Latent state `r_{t−1}`.
    pub r: Vector,
}

impl DfnnGenerator {
    pub fn new<R: Rng + ?Sized>(
        hidden: &[usize],
        latent: usize,
        input: InputMap,
        support: SensorSupport,
        init_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if latent == 0 {
            return Err(Error::Input("latent dimension must be positive".into()));
        }
        let mut sizes = vec![input.dim() + latent];
        sizes.extend_from_slice(hidden);
        sizes.push(latent);
        let net = Mlp::new(&sizes, init_gain, rng)?;
        let p = support.p();
        let s = init_gain * (1.0 / latent as f64).sqrt();
        let w: Vec<f64> = (0..latent * p)
            .map(|_| {
                if s > 0.0 {
                    rng.random_range(-s..=s)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(DfnnGenerator {
            net,
            w: Tensor::matrix(latent, p, w)?.with_grad(),
            input,
            support,
            r: Vector::zeros(latent),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.w.dims2().0
    }

    pub fn check(&self, model: &PlantModel) -> Result<()> {
        let l = self.latent_dim();
        if self.w.dims2() != (l, model.p()) || self.support.p() != model.p() {
            return Err(Error::Dimension(format!(
                "W is {:?}, plant measures {}",
                self.w.shape(),
                model.p()
            )));
        }
        if self.input.select.iter().any(|&i| i >= model.p())
            || self.net.input_dim() != self.input.dim() + l
            || self.net.output_dim() != l
        {
            return Err(Error::Dimension(
                "generator network does not match its input map".into(),
            ));
        }
        Ok(())
    }

    pub fn features(&self, y: &Vector) -> Vec<f64> {
        self.input.apply(y.as_slice())
    }

    /// `r_t·W`, masked.
    pub fn readout(&self, r: &Vector) -> Vector {
        let (l, p) = self.w.dims2();
        let w = self.w.data();
        let mut a = Vector::from_fn(p, |j, _| (0..l).map(|i| r[i] * w[i * p + j]).sum());
        self.support.apply(&mut a);
        a
    }

    /// Pure step: `(a_t, r_t)` from `y_t` and `r_{t−1}`.
    pub fn step(&self, y: &Vector, r_prev: &Vector) -> (Vector, Vector) {
        let mut input = self.features(y);
        input.extend(r_prev.iter());
        let r = Vector::from_vec(self.net.forward(&input));
        (self.readout(&r), r)
    }

    /// Advances the carried latent and returns the attack.
    pub fn generate(&mut self, y: &Vector) -> Vector {
        let (a, r) = self.step(y, &self.r);
        self.r = r;
        a
    }

    pub fn reset(&mut self) {
        self.r.fill(0.0);
    }
}

/// Either trainable generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Fnn(FnnGenerator),
    Dfnn(DfnnGenerator),
}

impl Generator {
    pub fn kind(&self) -> &'static str {
        match self {
            Generator::Fnn(_) => "fnn",
            Generator::Dfnn(_) => "dfnn",
        }
    }

    pub fn support(&self) -> &SensorSupport {
        match self {
            Generator::Fnn(g) => &g.support,
            Generator::Dfnn(g) => &g.support,
        }
    }

    pub fn check(&self, model: &PlantModel) -> Result<()> {
        match self {
            Generator::Fnn(g) => g.check(model),
            Generator::Dfnn(g) => g.check(model),
        }
    }

    /// Trainable tensors (network parameters, then `W`).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Generator::Fnn(g) => g.net.params_mut(),
            Generator::Dfnn(g) => {
                let mut p = g.net.params_mut();
                p.push(&mut g.w);
                p
            }
        }
    }

    pub fn reset(&mut self) {
        if let Generator::Dfnn(g) = self {
            g.reset();
        }
    }

    /// Stored network input for one step of history.
    pub fn features(&self, model: &PlantModel, y: &Vector, x_hat_prev: &Vector) -> Vec<f64> {
        match self {
            Generator::Fnn(g) => g.features(model, y, x_hat_prev),
            Generator::Dfnn(g) => g.features(y),
        }
    }

    /// Runtime attack; advances the dFNN latent.
    pub fn generate(&mut self, model: &PlantModel, y: &Vector, x_hat_prev: &Vector) -> Vector {
        match self {
            Generator::Fnn(g) => g.generate(model, y, x_hat_prev),
            Generator::Dfnn(g) => g.generate(y),
        }
    }
}
