use super::Tensor;
use crate::{Error, Result};

fn require_grads(params: &[&mut Tensor]) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.grad().is_none() {
            return Err(Error::Contract(format!(
                "parameter {i} has no gradient; run backward first"
            )));
        }
    }
    Ok(())
}

/// `θ ← θ − β·∇θ` for every parameter, then zero the gradients.
pub fn sgd_step(params: &mut [&mut Tensor], beta: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::Input(format!(
            "learning rate must be positive, got {beta}"
        )));
    }
    require_grads(params)?;
    for p in params.iter_mut() {
        let g = p.grad().expect("checked above").to_vec();
        p.data_mut()
            .iter_mut()
            .zip(&g)
            .for_each(|(w, gi)| *w -= beta * gi);
        p.zero_grad();
    }
    Ok(())
}

/// Largest absolute gradient entry across `params` (missing gradients count as zero).
pub fn grad_inf_norm(params: &[&mut Tensor]) -> f64 {
    params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .fold(0.0, |m, g| m.max(g.abs()))
}

/// Rescale all gradients so their joint Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(params: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for p in params.iter_mut() {
            if let Some(g) = p.grad() {
                let scaled: Vec<f64> = g.iter().map(|v| v * k).collect();
                p.clear_grad();
                p.accumulate_grad(&scaled).expect("same length");
            }
        }
    }
    norm
}

/// Adaptive-moment optimizer; moment buffers are created on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        require_grads(params)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::Contract(
                "parameter set changed between steps".into(),
            ));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad().expect("checked above").to_vec();
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *w -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
