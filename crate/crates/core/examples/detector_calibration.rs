//! Calibrate the χ² detector and compare its false-alarm rate on an
//! unattacked LTI loop with the target.

use cpsattack::detection::{binomial_allowance, chi2_cdf, DetectorConfig};
use cpsattack::harness::{run_scenario, Scenario};

const PLANT: &str = "
model.type = lti
model.A = 1.1 0.1; 0 0.8
model.B = 1 0; 0 1
model.C = 1 0; 0 1
model.Q = 0.01 0; 0 0.01
model.R = 0.01 0; 0 0.01
controller.type = state_feedback
controller.K = 0.6 0.1; 0 0.3
attack.kind = none
run.duration = 10000
";

fn main() -> cpsattack::Result<()> {
    for eps in [0.01, 0.05, 0.1] {
        let det = DetectorConfig::calibrate(eps, 2)?;
        println!(
            "eps {eps:<5} eta {:.6}  P(g <= eta) = {:.6}",
            det.eta,
            chi2_cdf(det.eta, 2)
        );
    }

    let base = Scenario::parse_str(PLANT)?;
    let det = DetectorConfig::calibrate(base.epsilon, 2)?;
    let mut alarms = 0usize;
    let mut steps = 0usize;
    for seed in 0..5 {
        let rec = run_scenario(&base.with_seed(seed))?;
        // skip the filter transient
        let tail = &rec.rows[100..];
        let k = tail.iter().filter(|r| det.evaluate(r.g)).count();
        println!("seed {seed}: {k} alarms in {} steps", tail.len());
        alarms += k;
        steps += tail.len();
    }
    let rate = alarms as f64 / steps as f64;
    let slack = binomial_allowance(steps, base.epsilon, 0.95)?;
    println!(
        "empirical rate {rate:.4} against eps {} (95% upper count {slack} of {steps})",
        base.epsilon
    );
    Ok(())
}
