use crate::detection::stealth_threshold;

use super::session::RunRecord;

/// (ε, α)-success of one record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuccessReport {
    /// Largest `‖Δx_t‖` at or after `t0`.
    pub max_error: f64,
    /// First step at or after `t0` with `‖Δx_t‖ ≥ α`.
    pub first_crossing: Option<usize>,
    pub steps_before: usize,
    pub attacked_steps: usize,
    pub alarm_rate_before: f64,
    /// Alarm rate over `[t0, end]`.
    pub alarm_rate: f64,
    /// `ε` widened by the binomial allowance at `attacked_steps`.
    pub allowed_rate: f64,
    pub error_reached: bool,
    pub stealthy: bool,
    pub success: bool,
}

fn rate(alarms: impl Iterator<Item = bool>) -> (usize, f64) {
    let (n, k) = alarms.fold((0usize, 0usize), |(n, k), a| (n + 1, k + a as usize));
    (n, if n == 0 { 0.0 } else { k as f64 / n as f64 })
}

/// Success iff some attacked step reaches `‖Δx‖ ≥ α` and the attacked alarm
/// rate stays within `ε` plus the binomial allowance for the number of
/// attacked steps. A record with no attacked step is never successful.
pub fn evaluate_success(rec: &RunRecord, alpha: f64, epsilon: f64) -> SuccessReport {
    let states = rec.error_states.as_deref();
    let (before, after): (Vec<_>, Vec<_>) = rec.rows.iter().partition(|r| r.t < rec.t0);
    let (steps_before, alarm_rate_before) = rate(before.iter().map(|r| r.alarm));
    let (attacked_steps, alarm_rate) = rate(after.iter().map(|r| r.alarm));
    let mut max_error = 0.0f64;
    let mut first_crossing = None;
    for r in &after {
        let e = r.error_norm(states);
        max_error = max_error.max(e);
        if first_crossing.is_none() && e >= alpha {
            first_crossing = Some(r.t);
        }
    }
    let allowed_rate = if attacked_steps == 0 {
        epsilon
    } else {
        stealth_threshold(attacked_steps, epsilon).unwrap_or(epsilon)
    };
    let error_reached = first_crossing.is_some();
    let stealthy = attacked_steps > 0 && alarm_rate <= allowed_rate;
    SuccessReport {
        max_error,
        first_crossing,
        steps_before,
        attacked_steps,
        alarm_rate_before,
        alarm_rate,
        allowed_rate,
        error_reached,
        stealthy,
        success: error_reached && stealthy,
    }
}
