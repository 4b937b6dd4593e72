//! χ² residue detector: threshold calibration, alarms, alarm-rate
//! statistics and the output-to-state error bound used to justify training
//! on measurements.

use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Absolute accuracy of [`chi2_quantile`].
pub const QUANTILE_TOL: f64 = 1e-9;

/// Confidence level of the binomial allowance used by [`stealth_threshold`].
pub const STEALTH_CONFIDENCE: f64 = 0.95;

/// `P(X ≤ q)` for `X ~ χ²(dof)`.
pub fn chi2_cdf(q: f64, dof: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q.is_infinite() {
        return 1.0;
    }
    gamma_lr(dof as f64 / 2.0, q / 2.0)
}

fn chi2_pdf(q: f64, dof: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * q.ln() - q / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Inverse χ² CDF by safeguarded Newton iteration on the regularised lower
/// incomplete gamma function.
pub fn chi2_quantile(prob: f64, dof: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Input(format!(
            "probability must lie in (0, 1), got {prob}"
        )));
    }
    if dof == 0 {
        return Err(Error::Input(
            "χ² degrees of freedom must be positive".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(hi, dof) < prob {
        lo = hi;
        hi *= 2.0;
    }
    let mut q = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(q, dof) - prob;
        if f < 0.0 {
            lo = q;
        } else {
            hi = q;
        }
        if hi - lo < 0.01 * QUANTILE_TOL {
            break;
        }
        let d = chi2_pdf(q, dof);
        let newton = q - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - q).abs() < 0.01 * QUANTILE_TOL {
            q = next;
            break;
        }
        q = next;
    }
    Ok(q)
}

/// Calibrated χ² detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Target false-alarm probability.
    pub epsilon: f64,
    /// Alarm threshold `η`.
    pub eta: f64,
    /// Degrees of freedom (measurement dimension).
    pub p_dof: usize,
}

impl DetectorConfig {
    /// `η = χ²⁻¹(1 − ε; p)`.
    pub fn calibrate(epsilon: f64, p_dof: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Input(format!(
                "false-alarm rate must lie in (0, 1), got {epsilon}"
            )));
        }
        let eta = chi2_quantile(1.0 - epsilon, p_dof)?;
        Ok(DetectorConfig {
            epsilon,
            eta,
            p_dof,
        })
    }

    /// Detector with an explicit threshold, e.g. one recalibrated from data.
    pub fn with_threshold(epsilon: f64, eta: f64, p_dof: usize) -> Result<Self> {
        if !(eta > 0.0) || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Input(format!(
                "invalid detector (ε = {epsilon}, η = {eta})"
            )));
        }
        Ok(DetectorConfig {
            epsilon,
            eta,
            p_dof,
        })
    }

    /// Alarm iff `g > η`.
    pub fn evaluate(&self, g: f64) -> bool {
        g > self.eta
    }
}

/// Detection values with their alarm decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlarmTrace {
    pub g_values: Vec<f64>,
    pub alarms: Vec<bool>,
    pub alarm_rate: f64,
}

impl AlarmTrace {
    pub fn from_values(det: &DetectorConfig, g_values: Vec<f64>) -> Self {
        let alarms: Vec<bool> = g_values.iter().map(|&g| det.evaluate(g)).collect();
        let alarm_rate = empirical_alarm_rate(&alarms).unwrap_or(0.0);
        AlarmTrace {
            g_values,
            alarms,
            alarm_rate,
        }
    }

    pub fn push(&mut self, det: &DetectorConfig, g: f64) {
        let n = self.alarms.len() as f64;
        let alarm = det.evaluate(g);
        self.g_values.push(g);
        self.alarms.push(alarm);
        self.alarm_rate = (self.alarm_rate * n + f64::from(u8::from(alarm))) / (n + 1.0);
    }

    /// Alarm rate over `alarms[range]`.
    pub fn window_rate(&self, range: std::ops::Range<usize>) -> Result<f64> {
        let window = self.alarms.get(range.clone()).ok_or_else(|| {
            Error::Input(format!(
                "window {range:?} outside trace of {}",
                self.alarms.len()
            ))
        })?;
        empirical_alarm_rate(window)
    }
}

/// Fraction of alarmed steps in a window.
pub fn empirical_alarm_rate(alarms: &[bool]) -> Result<f64> {
    if alarms.is_empty() {
        return Err(Error::Input("alarm rate of an empty window".into()));
    }
    Ok(alarms.iter().filter(|&&a| a).count() as f64 / alarms.len() as f64)
}

/// Smallest alarm count `k` with `P(Bin(n, ε) ≤ k) ≥ confidence`.
pub fn binomial_allowance(n: usize, epsilon: f64, confidence: f64) -> Result<u64> {
    if n == 0 {
        return Err(Error::Input("binomial allowance for zero samples".into()));
    }
    let bin = Binomial::new(epsilon, n as u64)
        .map_err(|e| Error::Input(format!("binomial allowance: {e}")))?;
    Ok(bin.inverse_cdf(confidence).min(n as u64))
}

/// Highest alarm rate over `n` steps still consistent with a per-step alarm
/// probability of `ε` at the 95% level.
pub fn stealth_threshold(n: usize, epsilon: f64) -> Result<f64> {
    let k = binomial_allowance(n, epsilon, STEALTH_CONFIDENCE)?;
    Ok((k as f64 / n as f64).max(epsilon))
}

/// Smallest `σ` with `R ⪯ σI`.
pub fn noise_bound_sigma(r: &Matrix) -> f64 {
    -linalg::min_eigenvalue(&(-r.clone()))
}

/// Lower bound on `‖x − x̂‖` implied by `‖y − h(x̂)‖ ≥ α`, and the probability
/// `1 − p/k²` with which it holds, for `h` Lipschitz with constant `l` and
/// `R ⪯ σI`.
pub fn theorem2_bound(alpha: f64, sigma: f64, k: f64, l: f64, p_dof: usize) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && sigma > 0.0 && k > 0.0 && l > 0.0) || p_dof == 0 {
        return Err(Error::Input(format!(
            "bound needs positive α, σ, k, L and p (got {alpha}, {sigma}, {k}, {l}, {p_dof})"
        )));
    }
    if k >= alpha / sigma {
        return Err(Error::Input(format!(
            "k = {k} must be below α/σ = {}",
            alpha / sigma
        )));
    }
    Ok(((alpha - sigma.sqrt() * k) / l, 1.0 - p_dof as f64 / (k * k)))
}
