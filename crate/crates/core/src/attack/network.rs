use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Affine layer `x·W + b` with `W` stored `[in × out]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.w.dims2().0
    }

    pub fn fan_out(&self) -> usize {
        self.w.dims2().1
    }
}

/// Fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Weights and biases uniform in `±gain·sqrt(1/fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], gain: f64, rng: &mut R) -> Result<Self> {
        Mlp::build(sizes, |fan_in, len| {
            let s = gain * (1.0 / fan_in as f64).sqrt();
            (0..len)
                .map(|_| {
                    if s > 0.0 {
                        rng.random_range(-s..=s)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Mlp::build(sizes, |_, len| vec![0.0; len])
    }

    fn build(sizes: &[usize], mut fill: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Input(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|io| {
                let (i, o) = (io[0], io[1]);
                let w = Tensor::matrix(i, o, fill(i, i * o))?.with_grad();
                let b = Tensor::matrix(1, o, fill(i, o))?.with_grad();
                Ok(Dense { w, b })
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Dimension(format!(
                    "layer outputs {} feed a layer expecting {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        for l in &layers {
            if l.b.dims2() != (1, l.fan_out()) {
                return Err(Error::Dimension(format!(
                    "bias shape {:?} for {} outputs",
                    l.b.shape(),
                    l.fan_out()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `[in, hidden.., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(Dense::fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Forward pass of a single input row.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let (fi, fo) = layer.w.dims2();
            let w = layer.w.data();
            let mut out = layer.b.data().to_vec();
            for (i, xi) in cur.iter().enumerate().take(fi) {
                if *xi == 0.0 {
                    continue;
                }
                let row = &w[i * fo..(i + 1) * fo];
                out.iter_mut().zip(row).for_each(|(o, wij)| *o += xi * wij);
            }
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = out;
        }
        cur
    }

    /// Records the parameters as leaves, in [`Mlp::params`] order.
    pub fn record(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p)).collect()
    }

    /// Forward pass of a `rows × in` input on `tape` using recorded parameters.
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut cur = x;
        for k in 0..self.layers.len() {
            let lin = tape.matmul(cur, params[2 * k])?;
            let aff = tape.add_row(lin, params[2 * k + 1])?;
            cur = if k < last { tape.relu(aff) } else { aff };
        }
        Ok(cur)
    }
}

/// How the generator's raw feature vector is assembled from `(y_t, x̂_{t−1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureForm {
    /// `[y_t, x̂_{t−1}]`.
    Raw,
    /// `[y_t − h(x̂_{t−1}), x̂_{t−1}]`.
    Innovation,
}

impl FeatureForm {
    pub fn name(self) -> &'static str {
        match self {
            FeatureForm::Raw => "raw",
            FeatureForm::Innovation => "innovation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw" => Some(FeatureForm::Raw),
            "innovation" => Some(FeatureForm::Innovation),
            _ => None,
        }
    }
}

/// Fixed (non-trainable) feature selection and normalisation:
/// `out_k = (raw[select_k] − offset_k) · scale_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMap {
    pub select: Vec<usize>,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputMap {
    pub fn identity(dim: usize) -> Self {
        InputMap {
            select: (0..dim).collect(),
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn new(
        select: Vec<usize>,
        offset: Vec<f64>,
        scale: Vec<f64>,
        raw_dim: usize,
    ) -> Result<Self> {
        if select.is_empty() || offset.len() != select.len() || scale.len() != select.len() {
            return Err(Error::Dimension(format!(
                "input map with {} selections, {} offsets, {} scales",
                select.len(),
                offset.len(),
                scale.len()
            )));
        }
        if let Some(bad) = select.iter().find(|&&i| i >= raw_dim) {
            return Err(Error::Input(format!(
                "feature {bad} out of range for {raw_dim} raw features"
            )));
        }
        Ok(InputMap {
            select,
            offset,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.select.len()
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        self.select
            .iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(&i, (o, s))| (raw[i] - o) * s)
            .collect()
    }
}
