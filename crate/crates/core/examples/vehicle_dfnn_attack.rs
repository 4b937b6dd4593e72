//! The delayed generator carries a latent state across steps. Its training
//! cost grows with the square of the horizon; expect about a minute.

use std::path::Path;

use cpsattack::harness::{attack_with, train_generator, Scenario};

fn main() -> cpsattack::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let sc = Scenario::from_file(&root.join("scenarios/vehicle_straight_dfnn.txt"))?;

    let outcome = train_generator(&sc)?;
    println!(
        "online record: max position error {:.2} m, alarm rate {:.4}",
        outcome.record.summary.max_error, outcome.record.summary.alarm_rate
    );
    let rec = attack_with(&sc, &outcome.artifact)?;
    let s = &rec.summary;
    println!(
        "frozen attack over {} steps: max position error {:.2} m, alarm rate {:.4} (allowed {:.4}), success {}",
        s.attacked_steps, s.max_error, s.alarm_rate, s.allowed_rate, s.success
    );
    Ok(())
}
