//! Scenario-driven closed-loop runs.
//!
//! A [`Scenario`] names the plant, the controller, the detector level, the
//! attack and the run length. [`run_scenario`] executes it: plant step,
//! measurement, attack from `t0`, filter update, detector, controller. Learned
//! attacks are first trained online on a separate noise stream (or loaded
//! from an artifact) and then rolled out frozen. Every random draw comes from
//! the scenario seed, so a scenario and a seed fix the record bit for bit.

mod controller;
mod export;
mod metrics;
mod scenario;
mod session;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attack::{
    Artifact, DfnnGenerator, FnnGenerator, Generator, InputMap, SensorSupport, StepReport,
};
use crate::{Error, Result};

pub use controller::{Controller, ControllerSpec, LaneKeepingGains, Road, UavGains, UavTask};
pub use export::{csv_header, export_csv, export_plots, read_csv, CsvTable, PlotFiles};
pub use metrics::{evaluate_success, SuccessReport};
pub use scenario::{
    AttackKind, AttackSpec, GeneratorSpec, ModelKind, ModelSpec, RunSpec, Scenario,
};
pub use session::{
    rollout, AttackContext, Attacker, FrozenAttacker, Purpose, Row, RunRecord, Session,
    Theorem1Attacker, TrainingAttacker,
};

/// Fresh generator for the scenario's learned attack, initialised from the seed.
pub fn build_generator(scenario: &Scenario) -> Result<Generator> {
    let model = scenario.model.build()?;
    let spec = &scenario.attack.generator;
    let support = SensorSupport::from_one_based(&scenario.attack.support, model.p())?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.run.seed);
    rng.set_stream(4);
    let raw_dim = match scenario.attack.kind {
        AttackKind::Fnn => model.n() + model.p(),
        AttackKind::Dfnn => model.p(),
        k => {
            return Err(Error::config(
                "attack.kind",
                format!("`{}` has no generator", k.name()),
            ))
        }
    };
    let input = InputMap::new(
        spec.select.clone(),
        spec.offset.clone(),
        spec.scale.clone(),
        raw_dim,
    )
    .map_err(|e| Error::config("attack.select", e.to_string()))?;
    let gen = match scenario.attack.kind {
        AttackKind::Fnn => Generator::Fnn(FnnGenerator::new(
            &spec.hidden,
            spec.form,
            input,
            support,
            spec.init_gain,
            &mut rng,
        )?),
        _ => Generator::Dfnn(DfnnGenerator::new(
            &spec.hidden,
            spec.latent,
            input,
            support,
            spec.init_gain,
            &mut rng,
        )?),
    };
    gen.check(&model)?;
    Ok(gen)
}

/// Result of online training.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub artifact: Artifact,
    pub reports: Vec<StepReport>,
    /// The training rollout itself.
    pub record: RunRecord,
}

/// Train the scenario's generator online for `train.T` attacked steps,
/// starting at `train.t0`, on the training noise stream of the seed.
pub fn train_generator(scenario: &Scenario) -> Result<TrainingOutcome> {
    if !scenario.attack.kind.is_learned() {
        return Err(Error::config(
            "attack.kind",
            "training needs attack.kind = fnn or dfnn",
        ));
    }
    let mut sc = scenario.clone();
    let start = scenario.train_t0.max(1);
    sc.attack.t0 = start;
    let duration = start + scenario.training.horizon - 1;
    let mut attacker =
        TrainingAttacker::new(build_generator(scenario)?, scenario.training.clone())?;
    let record = rollout(&sc, Purpose::Training, duration, Some(&mut attacker))?;
    if let Some(why) = &record.terminated {
        return Err(Error::Numeric {
            step: record.rows.len(),
            msg: format!("training rollout stopped: {why}"),
        });
    }
    let mut generator = attacker.generator;
    generator.reset();
    Ok(TrainingOutcome {
        artifact: Artifact {
            generator,
            model_id: scenario.model.id().to_string(),
            training: scenario.training.clone(),
        },
        reports: attacker.reports,
        record,
    })
}

/// Evaluation rollout with a frozen generator.
pub fn attack_with(scenario: &Scenario, artifact: &Artifact) -> Result<RunRecord> {
    if artifact.model_id != scenario.model.id() {
        return Err(Error::config(
            "attack.model",
            format!(
                "generator was trained on `{}`, scenario uses `{}`",
                artifact.model_id,
                scenario.model.id()
            ),
        ));
    }
    artifact.generator.check(&scenario.model.build()?)?;
    let mut attacker = FrozenAttacker {
        generator: artifact.generator.clone(),
    };
    rollout(
        scenario,
        Purpose::Evaluation,
        scenario.run.duration,
        Some(&mut attacker),
    )
}

/// Run the scenario end to end. Learned attacks use `attack.model` when
/// given and are trained first otherwise.
pub fn run_scenario(scenario: &Scenario) -> Result<RunRecord> {
    match scenario.attack.kind {
        AttackKind::None => rollout(scenario, Purpose::Evaluation, scenario.run.duration, None),
        AttackKind::Theorem1 => {
            let mut attacker = Theorem1Attacker {
                phi_scale: scenario.attack.phi_scale,
            };
            rollout(
                scenario,
                Purpose::Evaluation,
                scenario.run.duration,
                Some(&mut attacker),
            )
        }
        kind => {
            let artifact = match &scenario.attack.model {
                Some(path) => {
                    let art = Artifact::load(path)?;
                    if art.generator.kind() != kind.name() {
                        return Err(Error::config(
                            "attack.model",
                            format!(
                                "{} holds a {} generator",
                                path.display(),
                                art.generator.kind()
                            ),
                        ));
                    }
                    art
                }
                None => train_generator(scenario)?.artifact,
            };
            attack_with(scenario, &artifact)
        }
    }
}

/// One line of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub summary: SuccessReport,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn successes(&self) -> usize {
        self.rows.iter().filter(|r| r.summary.success).count()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "seed,success,max_error,first_crossing,alarm_rate,allowed_rate,terminated\n",
        );
        for r in &self.rows {
            let cross = r
                .summary
                .first_crossing
                .map_or("-".to_string(), |t| t.to_string());
            writeln!(
                s,
                "{},{},{:.6},{},{:.6},{:.6},{}",
                r.seed,
                r.summary.success as u8,
                r.summary.max_error,
                cross,
                r.summary.alarm_rate,
                r.summary.allowed_rate,
                r.terminated as u8
            )
            .expect("writing to a String");
        }
        writeln!(s, "success rate {}/{}", self.successes(), self.rows.len())
            .expect("writing to a String");
        s
    }
}

/// Run the scenario for each seed (in parallel); rows come back in seed order.
pub fn sweep(scenario: &Scenario, seeds: &[u64]) -> Result<SweepReport> {
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let rec = run_scenario(&scenario.with_seed(seed))?;
            Ok(SweepRow {
                seed,
                summary: rec.summary,
                terminated: rec.terminated.is_some(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests;
