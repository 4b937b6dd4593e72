//! Success table of the analytic attack over a range of seeds.

use std::path::Path;

use cpsattack::harness::{sweep, Scenario};

fn main() -> cpsattack::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/lti_theorem1.txt");
    let sc = Scenario::from_file(&path)?;
    let seeds: Vec<u64> = (0..20).collect();
    let report = sweep(&sc, &seeds)?;
    print!("{}", report.to_table());
    Ok(())
}
