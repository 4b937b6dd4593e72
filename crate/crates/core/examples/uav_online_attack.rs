//! Online attack on the quadrotor's position sensors. On this plant the
//! training rollout itself is the attack; its record is what gets scored.

use std::path::Path;

use cpsattack::harness::{train_generator, Scenario};

fn main() -> cpsattack::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let sc = Scenario::from_file(&root.join("scenarios/uav_altitude_fnn.txt"))?;
    let outcome = train_generator(&sc)?;
    let rec = &outcome.record;
    for r in rec
        .rows
        .iter()
        .filter(|r| r.t >= rec.t0 && (r.t - rec.t0) % 50 == 0)
    {
        println!(
            "t {:>3}  position error {:>8.3} m  altitude {:>7.3} m  g {:.2}",
            r.t,
            r.error_norm(Some(&[0, 1, 2])),
            r.x[2],
            r.g
        );
    }
    let s = &rec.summary;
    println!(
        "max error {:.2} m over {} attacked steps, alarm rate {:.4} (allowed {:.4}), success {}",
        s.max_error, s.attacked_steps, s.alarm_rate, s.allowed_rate, s.success
    );
    Ok(())
}
