//! Train a feed-forward generator online against the vehicle's filter, save
//! it, reload it and attack with the frozen copy.

use std::path::Path;

use cpsattack::attack::Artifact;
use cpsattack::harness::{attack_with, train_generator, Scenario};

fn main() -> cpsattack::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let sc = Scenario::from_file(&root.join("scenarios/vehicle_straight_fnn.txt"))?;

    let outcome = train_generator(&sc)?;
    let online = &outcome.record.summary;
    println!(
        "trained for {} steps; online max position error {:.2} m, alarm rate {:.4}",
        outcome.reports.len(),
        online.max_error,
        online.alarm_rate
    );

    let dir = root.join("../../target/examples_out");
    std::fs::create_dir_all(&dir)?;
    let dir = dir.canonicalize()?;
    let file = dir.join("vehicle_fnn.gen");
    outcome.artifact.save(&file)?;
    let artifact = Artifact::load(&file)?;
    println!("saved and reloaded {}", file.display());

    let rec = attack_with(&sc, &artifact)?;
    let s = &rec.summary;
    println!(
        "frozen attack: max position error {:.2} m (alpha {}), alarm rate {:.4} (allowed {:.4}), success {}",
        s.max_error, rec.alpha, s.alarm_rate, s.allowed_rate, s.success
    );
    Ok(())
}
