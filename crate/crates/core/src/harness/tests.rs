use std::fs;

use rand::RngCore;

use super::*;
use crate::linalg::Vector;

const LTI: &str = "model.type = lti\n\
                   model.A = 1.1\n\
                   model.B = 1\n\
                   model.C = 1\n\
                   controller.K = 0.5\n";

fn lti(extra: &str) -> Scenario {
    Scenario::parse_str(&format!("{LTI}{extra}")).unwrap()
}

fn config_path(text: &str) -> String {
    match Scenario::parse_str(text) {
        Err(Error::Config { path, .. }) => path,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn parser_defaults() {
    let sc = Scenario::parse_str("model.type = vehicle\n").unwrap();
    assert_eq!(sc.model.id(), "vehicle");
    assert_eq!(sc.epsilon, 0.05);
    assert_eq!(sc.attack.kind, AttackKind::None);
    assert_eq!(sc.attack.support, vec![1, 2]);
    assert_eq!(sc.run.duration, 1000);
    assert_eq!(sc.training.delta, 0.2);
    assert_eq!(sc.training.lambda, 0.05);
    assert_eq!(sc.training.horizon, 1000);
    assert!(matches!(
        sc.controller,
        ControllerSpec::LaneKeeping {
            road: Road::Straight,
            ..
        }
    ));
    let sc = Scenario::parse_str("model.type = quadrotor\nattack.kind = fnn  # comment\n").unwrap();
    assert_eq!(sc.attack.generator.hidden, vec![50, 100, 100, 100]);
    assert_eq!(sc.attack.support.len(), 9);
    assert_eq!(sc.with_seed(7).run.seed, 7);
}

#[test]
fn parser_rejects_bad_input() {
    assert_eq!(
        config_path("model.type = vehicle\nmodel.Q_scal = 2\n"),
        "model.Q_scal"
    );
    assert_eq!(
        config_path("model.type = vehicle\nrun.seed = 1\nrun.seed = 2\n"),
        "run.seed"
    );
    assert_eq!(config_path("attack.kind = fnn\n"), "model.type");
    assert_eq!(config_path("model.type = boat\n"), "model.type");
    assert_eq!(
        config_path("model.type = vehicle\nattack.kind = theorem1\n"),
        "attack.kind"
    );
    assert_eq!(
        config_path("model.type = vehicle\nattack.support = 3\n"),
        "attack.support"
    );
    assert_eq!(
        config_path("model.type = vehicle\ndetector.epsilon = 1.5\n"),
        "detector.epsilon"
    );
    assert_eq!(
        config_path("model.type = vehicle\nrun.duration = ten\n"),
        "run.duration"
    );
    assert_eq!(
        config_path("model.type = vehicle\ncontroller.type = uav\n"),
        "controller.type"
    );
    assert_eq!(
        config_path(&format!("{LTI}controller.K = 1 2\n")),
        "controller.K"
    );
    assert!(Scenario::parse_str("model.type vehicle\n")
        .unwrap_err()
        .is_config());
    assert!(
        Scenario::from_file(std::path::Path::new("/nonexistent/scenario.txt"))
            .unwrap_err()
            .is_config()
    );
}

#[test]
fn csv_header_layout() {
    let rec = rollout(
        &Scenario::parse_str("model.type = vehicle\n").unwrap(),
        Purpose::Evaluation,
        3,
        None,
    )
    .unwrap();
    let expect = "t,x0,x1,x2,x3,xhat0,xhat1,xhat2,xhat3,u0,u1,y0,y1,a0,a1,z0,z1,g,alarm";
    assert_eq!(csv_header(&rec).join(","), expect);
}

#[test]
fn empty_record_exports_header_only() {
    let mut rec = rollout(&lti(""), Purpose::Evaluation, 1, None).unwrap();
    rec.rows.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    export_csv(&rec, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text, "t,x0,xhat0,u0,y0,a0,z0,g,alarm\n");
    assert!(read_csv(&path).unwrap().rows.is_empty());
    assert!(export_plots(&rec, dir.path(), "empty").is_err());
}

#[test]
fn vehicle_run_row_count_and_round_trip() {
    let sc = Scenario::parse_str("model.type = vehicle\nrun.duration = 3000\n").unwrap();
    let rec = run_scenario(&sc).unwrap();
    assert_eq!(rec.rows.len(), 3000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("veh.csv");
    export_csv(&rec, &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3001);
    let table = read_csv(&path).unwrap();
    for (row, r) in table.rows.iter().zip(&rec.rows) {
        let mut expect = vec![r.t as f64];
        for v in [&r.x, &r.x_hat, &r.u, &r.y, &r.a, &r.z] {
            expect.extend(v.iter());
        }
        expect.push(r.g);
        expect.push(r.alarm as u8 as f64);
        assert_eq!(row.len(), expect.len());
        for (a, b) in row.iter().zip(&expect) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = lti("attack.kind = theorem1\nattack.t0 = 20\nrun.duration = 200\nrun.seed = 9\n");
    let mut files = Vec::new();
    for (i, seed) in [9, 9, 10].into_iter().enumerate() {
        let path = dir.path().join(format!("{i}.csv"));
        export_csv(&run_scenario(&sc.with_seed(seed)).unwrap(), &path).unwrap();
        files.push(fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn logged_residue_matches_covariance() {
    let sc = Scenario::parse_str("model.type = vehicle\nrun.log_s = true\nrun.duration = 300\n")
        .unwrap();
    let rec = run_scenario(&sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    export_csv(&rec, &path).unwrap();
    let table = read_csv(&path).unwrap();
    let col = |name: &str| table.column(name).unwrap();
    let (z0, z1, g) = (col("z0"), col("z1"), col("g"));
    let (s00, s01, s10, s11) = (col("s0_0"), col("s0_1"), col("s1_0"), col("s1_1"));
    for i in 0..table.rows.len() {
        let det = s00[i] * s11[i] - s01[i] * s10[i];
        let q = (s11[i] * z0[i] * z0[i] - (s01[i] + s10[i]) * z0[i] * z1[i]
            + s00[i] * z1[i] * z1[i])
            / det;
        assert!(
            (q - g[i]).abs() <= 1e-9 * g[i].max(1.0),
            "step {i}: {q} vs {}",
            g[i]
        );
    }
}

#[test]
fn success_edge_cases() {
    let mut rec = rollout(
        &lti("attack.t0 = 100\nrun.duration = 199\n"),
        Purpose::Evaluation,
        199,
        None,
    )
    .unwrap();
    for r in rec.rows.iter_mut() {
        r.alarm = r.t == 150;
    }
    let rep = evaluate_success(&rec, 0.0, 0.05);
    assert_eq!(rep.attacked_steps, 100);
    assert_eq!(rep.steps_before, 99);
    assert!(rep.error_reached);
    assert_eq!(rep.first_crossing, Some(100));
    assert_eq!(rep.alarm_rate, 0.01);
    assert!(rep.stealthy && rep.success);
    assert_eq!(evaluate_success(&rec, 0.0, 0.05), rep);
    assert!(!evaluate_success(&rec, 1e9, 0.05).success);
    for r in rec.rows.iter_mut() {
        r.alarm = r.t >= 100;
    }
    assert!(!evaluate_success(&rec, 0.0, 0.05).stealthy);
    rec.t0 = 1000;
    let none = evaluate_success(&rec, 0.0, 0.05);
    assert_eq!(none.attacked_steps, 0);
    assert!(!none.success);
}

fn max_after(rec: &RunRecord, skip: usize, f: impl Fn(&Row) -> f64) -> f64 {
    rec.rows.iter().skip(skip).map(f).fold(0.0, f64::max)
}

#[test]
fn vehicle_baseline_stays_in_lane() {
    for road in ["straight", "curvy"] {
        let sc = Scenario::parse_str(&format!(
            "model.type = vehicle\ncontroller.road = {road}\nrun.duration = 3000\n"
        ))
        .unwrap();
        let ControllerSpec::LaneKeeping { road: r, .. } = sc.controller else {
            unreachable!()
        };
        let mut alarms = 0;
        for seed in 0..5 {
            let rec = run_scenario(&sc.with_seed(seed)).unwrap();
            let lateral = max_after(&rec, 100, |row| r.lateral_error(row.x[0], row.x[1]).abs());
            assert!(lateral < 0.5, "{road} seed {seed}: lateral error {lateral}");
            let err = max_after(&rec, 0, |row| row.error_norm(Some(&[0, 1])));
            assert!(
                err < 0.5,
                "{road} seed {seed}: position estimation error {err}"
            );
            alarms += rec.rows.iter().filter(|row| row.alarm).count();
        }
        let rate = alarms as f64 / 15000.0;
        assert!((0.035..0.065).contains(&rate), "{road}: alarm rate {rate}");
    }
}

#[test]
fn uav_baseline_holds_altitude() {
    for task in ["altitude", "ramp"] {
        let sc = Scenario::parse_str(&format!(
            "model.type = quadrotor\ncontroller.task = {task}\nrun.duration = 3000\n"
        ))
        .unwrap();
        let ControllerSpec::Uav { task: tk, .. } = sc.controller else {
            unreachable!()
        };
        for seed in 0..3 {
            let rec = run_scenario(&sc.with_seed(seed)).unwrap();
            let errs: Vec<f64> = rec.rows[400..]
                .iter()
                .map(|r| (r.x[2] - tk.reference(r.t as f64 * rec.dt).0).abs())
                .collect();
            let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            let within = errs.iter().filter(|e| **e < 0.5).count() as f64 / errs.len() as f64;
            assert!(rms < 0.5, "{task} seed {seed}: rms {rms}");
            assert!(within >= 0.95, "{task} seed {seed}: within band {within}");
        }
    }
}

#[test]
fn theorem1_sweep_succeeds_everywhere() {
    let sc = lti("attack.kind = theorem1\nattack.t0 = 50\nattack.alpha = 10\nrun.duration = 250\n");
    let seeds: Vec<u64> = (0..20).collect();
    let report = sweep(&sc, &seeds).unwrap();
    assert_eq!(
        report.rows.iter().map(|r| r.seed).collect::<Vec<_>>(),
        seeds
    );
    assert_eq!(report.successes(), 20);
    assert!(report.to_table().ends_with("success rate 20/20\n"));
}

struct ZeroAttacker;

impl Attacker for ZeroAttacker {
    fn name(&self) -> &str {
        "zero"
    }

    fn attack(&mut self, ctx: &AttackContext<'_>, rng: &mut dyn RngCore) -> crate::Result<Vector> {
        rng.next_u64();
        Ok(Vector::zeros(ctx.model.p()))
    }
}

#[test]
fn zero_attacker_leaves_the_loop_unchanged() {
    let sc =
        Scenario::parse_str("model.type = vehicle\nattack.t0 = 50\nrun.duration = 200\n").unwrap();
    let clean = rollout(&sc, Purpose::Evaluation, 200, None).unwrap();
    let zero = rollout(&sc, Purpose::Evaluation, 200, Some(&mut ZeroAttacker)).unwrap();
    assert_eq!(zero.attacker, "zero");
    assert_eq!(clean.rows, zero.rows);
    let other = rollout(&sc, Purpose::Training, 200, None).unwrap();
    assert_ne!(clean.rows[10].y, other.rows[10].y);
}

#[test]
fn numeric_escape_gives_partial_record() {
    let sc = Scenario::parse_str(
        "model.type = lti\nmodel.A = 1e80\nmodel.B = 1\nmodel.C = 1\nrun.duration = 100\n",
    )
    .unwrap();
    let rec = run_scenario(&sc).unwrap();
    assert!(rec.terminated.is_some());
    assert!(rec.rows.len() < 100);
}

#[test]
fn training_then_frozen_attack() {
    let sc = Scenario::parse_str(
        "model.type = vehicle\nattack.kind = fnn\nattack.t0 = 30\ntrain.T = 15\nrun.duration = 80\n",
    )
    .unwrap();
    let out = train_generator(&sc).unwrap();
    assert_eq!(out.reports.len(), 15);
    assert_eq!(out.record.rows.len(), 30 + 15 - 1);
    assert_eq!(out.artifact.model_id, "vehicle");
    let rec = attack_with(&sc, &out.artifact).unwrap();
    assert_eq!(rec.rows.len(), 80);
    assert!(rec.rows[..29].iter().all(|r| r.a.iter().all(|v| *v == 0.0)));
    assert!(rec.rows[29..].iter().any(|r| r.a.iter().any(|v| *v != 0.0)));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.txt");
    out.artifact.save(&path).unwrap();
    let mut loaded = sc.clone();
    loaded.attack.model = Some(path.clone());
    assert_eq!(run_scenario(&loaded).unwrap().rows, rec.rows);
    loaded.attack.kind = AttackKind::Dfnn;
    assert!(run_scenario(&loaded).unwrap_err().is_config());

    let quad = Scenario::parse_str("model.type = quadrotor\nattack.kind = fnn\n").unwrap();
    assert!(attack_with(&quad, &out.artifact).unwrap_err().is_config());
    assert!(train_generator(&lti("")).unwrap_err().is_config());
}

#[test]
fn plot_script_names_its_outputs() {
    let rec = run_scenario(&lti(
        "attack.kind = theorem1\nattack.t0 = 10\nrun.duration = 40\n",
    ))
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_plots(&rec, dir.path(), "lti").unwrap();
    assert!(files.csv.exists());
    let script = fs::read_to_string(&files.script).unwrap();
    for png in ["lti_trajectory.png", "lti_error.png", "lti_residue.png"] {
        assert!(script.contains(png));
    }
}

#[test]
fn lane_keeping_law() {
    let model = Scenario::parse_str("model.type = vehicle\n")
        .unwrap()
        .model
        .build()
        .unwrap();
    let gains = LaneKeepingGains::default();
    let c = Controller::new(
        ControllerSpec::LaneKeeping {
            road: Road::Straight,
            gains,
        },
        &model,
        None,
    );
    let u = c.control(&Vector::from_vec(vec![3.0, 0.0, 0.0, gains.speed]), 0.0);
    assert_eq!(u.as_slice(), &[0.0, 0.0]);
    let u = c.control(
        &Vector::from_vec(vec![3.0, 0.1, 0.0, gains.speed - 1.0]),
        0.0,
    );
    assert!((u[1] + gains.k_lat * 0.1).abs() < 1e-15);
    assert!((u[0] - gains.k_speed).abs() < 1e-15);
    let u = c.control(&Vector::from_vec(vec![0.0, 100.0, 0.0, gains.speed]), 0.0);
    assert_eq!(u[1], -gains.max_steer);
    let curvy = Road::Curvy {
        amplitude: 4.0,
        wavelength: 150.0,
    };
    let (y, psi) = curvy.reference(37.5);
    assert!((y - 4.0).abs() < 1e-12 && psi.abs() < 1e-12);
}
