//! A hand-written attacker: a slow bias on the lateral position sensor,
//! plugged into the closed loop through the `Attacker` trait.

use std::path::Path;

use cpsattack::harness::{rollout, AttackContext, Attacker, Purpose, Scenario};
use cpsattack::linalg::Vector;
use rand::RngCore;

struct LateralDrift {
    per_step: f64,
}

impl Attacker for LateralDrift {
    fn name(&self) -> &str {
        "lateral_drift"
    }

    fn attack(
        &mut self,
        ctx: &AttackContext<'_>,
        _rng: &mut dyn RngCore,
    ) -> cpsattack::Result<Vector> {
        let mut a = Vector::zeros(ctx.model.p());
        a[1] = self.per_step * ctx.k as f64;
        Ok(a)
    }
}

fn main() -> cpsattack::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/vehicle_straight_none.txt");
    let mut sc = Scenario::from_file(&path)?;
    sc.attack.t0 = 200;
    sc.attack.alpha = 1.0;

    for per_step in [0.0005, 0.002, 0.01] {
        let mut attacker = LateralDrift { per_step };
        let rec = rollout(&sc, Purpose::Evaluation, 1200, Some(&mut attacker))?;
        let s = &rec.summary;
        println!(
            "drift {per_step:<6} m/step: max position error {:.3} m, alarm rate {:.4} (allowed {:.4}), success {}",
            s.max_error, s.alarm_rate, s.allowed_rate, s.success
        );
    }
    Ok(())
}
