//! Lane keeping on a straight road without an attack. Writes the record and a
//! plotting script to `target/examples_out`.

use std::path::Path;

use cpsattack::harness::{export_plots, run_scenario, Scenario};

fn main() -> cpsattack::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut sc = Scenario::from_file(&root.join("scenarios/vehicle_straight_none.txt"))?;
    sc.name = "vehicle_baseline".into();
    sc.run.duration = 1200;
    let rec = run_scenario(&sc)?;

    let worst = rec
        .rows
        .iter()
        .map(|r| r.error_norm(Some(&[0, 1])))
        .fold(0.0, f64::max);
    let offset = rec
        .rows
        .iter()
        .skip(100)
        .map(|r| r.x[1].abs())
        .fold(0.0, f64::max);
    let alarms = rec.rows.iter().filter(|r| r.alarm).count();
    println!("{} steps at dt = {}", rec.rows.len(), rec.dt);
    println!("largest position estimation error {worst:.3} m");
    println!("largest lateral offset after 5 s {offset:.3} m");
    println!(
        "alarm rate {:.4} (eta {:.3})",
        alarms as f64 / rec.rows.len() as f64,
        rec.eta
    );

    let out = root.join("../../target/examples_out");
    std::fs::create_dir_all(&out)?;
    let out = out.canonicalize()?;
    let files = export_plots(&rec, &out, "vehicle_baseline")?;
    println!(
        "wrote {} and {}",
        files.csv.display(),
        files.script.display()
    );
    Ok(())
}
