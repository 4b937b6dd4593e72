use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpsattack::attack::Artifact;
use cpsattack::detection::DetectorConfig;
use cpsattack::harness::{
    attack_with, export_csv, export_plots, run_scenario, sweep, train_generator, RunRecord,
    Scenario,
};
use cpsattack::{Error, Result};

/// Closed-loop simulation and stealthy sensor-attack synthesis.
#[derive(Parser)]
#[command(name = "cpsattack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Override `run.seed` of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for exported files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and export its record.
    Run {
        scenario: PathBuf,
        /// Also write a matplotlib script for the record.
        #[arg(long)]
        plots: bool,
    },
    /// Train the scenario's generator online and save it.
    Train {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a saved generator, frozen.
    Attack {
        scenario: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Print the detector threshold for a false-alarm rate.
    Calibrate {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        dof: usize,
    },
    /// Success table over seeds `seed .. seed + N`.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        seeds: u64,
    },
}

fn load(path: &Path, common: &Common) -> Result<Scenario> {
    let sc = Scenario::from_file(path)?;
    Ok(match common.seed {
        Some(s) => sc.with_seed(s),
        None => sc,
    })
}

fn export(rec: &RunRecord, sc: &Scenario, common: &Common, plots: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out_dir)?;
    let stem = format!("{}_seed{}", sc.name, sc.run.seed);
    match common.format {
        Format::Csv if plots => Ok(export_plots(rec, &common.out_dir, &stem)?.csv),
        Format::Csv => {
            let path = common.out_dir.join(format!("{stem}.csv"));
            export_csv(rec, &path)?;
            Ok(path)
        }
    }
}

fn report(rec: &RunRecord, path: &Path, common: &Common) {
    if common.quiet {
        return;
    }
    let s = &rec.summary;
    println!(
        "wrote {} ({} steps, attacker {})",
        path.display(),
        rec.rows.len(),
        rec.attacker
    );
    if let Some(why) = &rec.terminated {
        println!("terminated early: {why}");
    }
    let cross = s
        .first_crossing
        .map_or("never".to_string(), |t| t.to_string());
    println!(
        "max error {:.4} (alpha {}, first crossing {cross}), alarm rate {:.4} before / {:.4} after t0 (allowed {:.4}), success {}",
        s.max_error, rec.alpha, s.alarm_rate_before, s.alarm_rate, s.allowed_rate, s.success
    );
}

fn execute(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Run { scenario, plots } => {
            let sc = load(scenario, common)?;
            let rec = run_scenario(&sc)?;
            let path = export(&rec, &sc, common, *plots)?;
            report(&rec, &path, common);
        }
        Command::Train { scenario, out } => {
            let sc = load(scenario, common)?;
            let outcome = train_generator(&sc)?;
            outcome.artifact.save(out)?;
            let mut online = sc.clone();
            online.name = format!("{}_train", sc.name);
            let path = export(&outcome.record, &online, common, false)?;
            report(&outcome.record, &path, common);
            if !common.quiet {
                let last = outcome.reports.last();
                println!(
                    "trained {} generator for {} steps, final objective {:.6}; saved to {}",
                    outcome.artifact.generator.kind(),
                    outcome.reports.len(),
                    last.map_or(f64::NAN, |r| r.final_objective),
                    out.display()
                );
            }
        }
        Command::Attack { scenario, model } => {
            let sc = load(scenario, common)?;
            let artifact = Artifact::load(model)?;
            let rec = attack_with(&sc, &artifact)?;
            let path = export(&rec, &sc, common, false)?;
            report(&rec, &path, common);
        }
        Command::Calibrate { eps, dof } => {
            let det = DetectorConfig::calibrate(*eps, *dof).map_err(|e| Error::Config {
                path: "--eps".into(),
                msg: e.to_string(),
            })?;
            println!("{}", det.eta);
        }
        Command::Sweep { scenario, seeds } => {
            let sc = load(scenario, common)?;
            let first = sc.run.seed;
            let list: Vec<u64> = (first..first + seeds).collect();
            let table = sweep(&sc, &list)?.to_table();
            std::fs::create_dir_all(&common.out_dir)?;
            std::fs::write(
                common.out_dir.join(format!("{}_sweep.csv", sc.name)),
                &table,
            )?;
            if !common.quiet {
                print!("{table}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
