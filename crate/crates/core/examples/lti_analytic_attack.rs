//! Analytic attack on an unstable scalar plant: the estimation error grows
//! geometrically while the residue keeps its attack-free statistics.

use std::path::Path;

use cpsattack::harness::{run_scenario, Scenario};

fn main() -> cpsattack::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/lti_theorem1.txt");
    let sc = Scenario::from_file(&path)?;
    let rec = run_scenario(&sc)?;

    for r in rec
        .rows
        .iter()
        .filter(|r| r.t >= sc.attack.t0 && (r.t - sc.attack.t0) % 25 == 0)
    {
        println!(
            "t {:>3}  |x - xhat| {:>12.4}  g {:.3}",
            r.t,
            r.error_norm(None),
            r.g
        );
    }
    let s = &rec.summary;
    let g_mean = {
        let attacked: Vec<f64> = rec
            .rows
            .iter()
            .filter(|r| r.t >= rec.t0)
            .map(|r| r.g)
            .collect();
        attacked.iter().sum::<f64>() / attacked.len() as f64
    };
    println!(
        "crossed alpha = {} at t = {:?}; attacked alarm rate {:.3} (allowed {:.3}); mean g {g_mean:.3}; success {}",
        rec.alpha, s.first_crossing, s.alarm_rate, s.allowed_rate, s.success
    );
    Ok(())
}
