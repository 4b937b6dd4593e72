use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

use super::session::RunRecord;

/// CSV column names for a record.
pub fn csv_header(rec: &RunRecord) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let mut group = |name: &str, k: usize| h.extend((0..k).map(|i| format!("{name}{i}")));
    group("x", rec.n);
    group("xhat", rec.n);
    group("u", rec.m);
    group("y", rec.p);
    group("a", rec.p);
    group("z", rec.p);
    h.push("g".into());
    h.push("alarm".into());
    if rec.rows.first().is_some_and(|r| r.s.is_some()) {
        for i in 0..rec.p {
            for j in 0..rec.p {
                h.push(format!("s{i}_{j}"));
            }
        }
    }
    h
}

/// Write the record as CSV, one row per step. Reals carry 17 significant
/// digits, so reading them back is exact.
pub fn export_csv(rec: &RunRecord, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", csv_header(rec).join(","))?;
    let mut line = String::new();
    for r in &rec.rows {
        line.clear();
        write!(line, "{}", r.t).expect("writing to a String");
        let vectors = [&r.x, &r.x_hat, &r.u, &r.y, &r.a, &r.z];
        for v in vectors {
            for x in v.iter() {
                write!(line, ",{x:.16e}").expect("writing to a String");
            }
        }
        write!(line, ",{:.16e},{}", r.g, r.alarm as u8).expect("writing to a String");
        if let Some(s) = &r.s {
            for i in 0..s.nrows() {
                for j in 0..s.ncols() {
                    write!(line, ",{:.16e}", s[(i, j)]).expect("writing to a String");
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// A parsed CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: String| Error::Input(format!("{}: {msg}", path.display()));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: `{v}` is not a number", i + 2)))
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(bad(format!(
                "line {} has {} fields, header has {}",
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

/// Files written by [`export_plots`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub csv: PathBuf,
    pub script: PathBuf,
}

/// Write `<stem>.csv` and a matplotlib script `<stem>_plot.py` in `dir`.
///
/// Running the script produces `<stem>_trajectory.png` (true against
/// estimated trajectory), `<stem>_error.png` (per-state estimation error)
/// and `<stem>_residue.png` (`g_t` with the threshold and the attack start).
pub fn export_plots(rec: &RunRecord, dir: &Path, stem: &str) -> Result<PlotFiles> {
    if rec.rows.is_empty() {
        return Err(Error::Input("cannot plot an empty record".into()));
    }
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    export_csv(rec, &csv)?;
    let script = dir.join(format!("{stem}_plot.py"));
    let trajectory = match rec.model_id.as_str() {
        "vehicle" => {
            "ax.plot(d['x0'], d['x1'], 'r', label='actual')\n\
             ax.plot(d['xhat0'], d['xhat1'], 'g', label='estimated')\n\
             if attacked.any():\n    i = np.argmax(attacked)\n    ax.plot(d['x0'][i], d['x1'][i], 'ro')\n\
             ax.set_xlabel('X (m)')\nax.set_ylabel('Y (m)')\n"
        }
        "quadrotor" => {
            "ax.plot(time, d['x2'], 'r', label='actual')\n\
             ax.plot(time, d['xhat2'], 'g', label='estimated')\n\
             ax.axvline(t0 * dt, color='b', ls=':')\n\
             ax.set_xlabel('time (s)')\nax.set_ylabel('Z (m)')\n"
        }
        _ => {
            "ax.plot(time, d['x0'], 'r', label='actual')\n\
             ax.plot(time, d['xhat0'], 'g', label='estimated')\n\
             ax.axvline(t0 * dt, color='b', ls=':')\n\
             ax.set_xlabel('time (s)')\nax.set_ylabel('x0')\n"
        }
    };
    let text = format!(
        "import os\n\
         import numpy as np\n\
         import matplotlib\n\
         matplotlib.use('Agg')\n\
         import matplotlib.pyplot as plt\n\
         \n\
         here = os.path.dirname(os.path.abspath(__file__))\n\
         d = np.genfromtxt(os.path.join(here, '{stem}.csv'), delimiter=',', names=True)\n\
         n, eta, t0, dt = {n}, {eta:?}, {t0}, {dt:?}\n\
         time = d['t'] * dt\n\
         attacked = d['t'] >= t0\n\
         \n\
         fig, ax = plt.subplots(figsize=(8, 4))\n\
         {trajectory}\
         ax.legend()\n\
         fig.tight_layout()\n\
         fig.savefig(os.path.join(here, '{stem}_trajectory.png'), dpi=120)\n\
         \n\
         fig, axes = plt.subplots(n, 1, figsize=(8, 1.6 * n), sharex=True, squeeze=False)\n\
         for i, ax in enumerate(axes[:, 0]):\n    \
             ax.plot(time, d['x%d' % i] - d['xhat%d' % i], 'k', lw=0.8)\n    \
             ax.axvline(t0 * dt, color='b', ls=':')\n    \
             ax.set_ylabel('err x%d' % i)\n\
         axes[-1, 0].set_xlabel('time (s)')\n\
         fig.tight_layout()\n\
         fig.savefig(os.path.join(here, '{stem}_error.png'), dpi=120)\n\
         \n\
         fig, ax = plt.subplots(figsize=(8, 3))\n\
         ax.plot(time, d['g'], 'k.', ms=2)\n\
         ax.axhline(eta, color='r', label='threshold')\n\
         ax.axvline(t0 * dt, color='b', ls=':', label='attack start')\n\
         ax.set_xlabel('time (s)')\n\
         ax.set_ylabel('g')\n\
         ax.legend()\n\
         fig.tight_layout()\n\
         fig.savefig(os.path.join(here, '{stem}_residue.png'), dpi=120)\n",
        n = rec.n,
        eta = rec.eta,
        t0 = rec.t0,
        dt = rec.dt,
    );
    fs::write(&script, text)?;
    Ok(PlotFiles { csv, script })
}
