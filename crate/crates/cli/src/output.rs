//! Result files and the JSON-lines run ledger.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use subfrac::report::{fmt_f64, CheckRow, CSV_COLUMNS};

use crate::config::ExperimentConfig;
use crate::experiments::{EigenRecord, Outcome};
use crate::{CliError, VERSION};

/// A check row as stored in the ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub experiment: String,
    pub check_id: String,
    pub group: String,
    pub norm: String,
    pub s: f64,
    pub p: f64,
    pub param: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub config_hash: String,
    pub version: String,
}

/// One line of `ledger.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LedgerEntry {
    Check(CheckRecord),
    Eigen(EigenRecord),
}

pub fn results_csv(rows: &[CheckRow], hash: &str) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push_str(",config_hash,version\n");
    for r in rows {
        out.push_str(&r.csv_fields().join(","));
        out.push_str(&format!(",{hash},{VERSION}\n"));
    }
    out
}

pub fn eigen_csv(records: &[EigenRecord]) -> String {
    let mut out =
        String::from("run_id,group,norm,s,p,R,h,lambda1,residual,iters,config_hash,version\n");
    for e in records {
        let nums = [e.s, e.p, e.radius, e.h, e.lambda1, e.residual].map(fmt_f64);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.run_id,
            e.group,
            e.norm,
            nums.join(","),
            e.iters,
            e.config_hash,
            e.version
        ));
    }
    out
}

pub fn summary_text(
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    elapsed: Option<Duration>,
) -> String {
    let mut out = format!(
        "experiment {}  (config {}, version {VERSION})\n",
        cfg.experiment.id(),
        cfg.hash()
    );
    out.push_str(&format!(
        "group {}  norm {}  s = {}  p = {}\n\n",
        cfg.group,
        cfg.norm,
        fmt_f64(cfg.s),
        fmt_f64(cfg.p)
    ));
    // Pass/fail counts per check id, in first-appearance order.
    let mut ids: Vec<&str> = Vec::new();
    for r in &outcome.rows {
        if !ids.contains(&r.check_id.as_str()) {
            ids.push(&r.check_id);
        }
    }
    out.push_str(&format!(
        "{:<26} {:>6} {:>6} {:>14}\n",
        "check", "pass", "fail", "min margin"
    ));
    for id in ids {
        let rows: Vec<&CheckRow> = outcome.rows.iter().filter(|r| r.check_id == id).collect();
        let pass = rows.iter().filter(|r| r.pass).count();
        let min = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        out.push_str(&format!(
            "{:<26} {:>6} {:>6} {:>14.6e}\n",
            id,
            pass,
            rows.len() - pass,
            min
        ));
    }
    out.push('\n');
    for line in &outcome.summary {
        out.push_str(line);
        out.push('\n');
    }
    if let Some(t) = elapsed {
        out.push_str(&format!("elapsed: {:.3} s\n", t.as_secs_f64()));
    }
    out
}

/// Writes `results.csv`, `summary.txt`, `eigen.csv` (when present), the
/// plot-data files, and appends to `ledger.jsonl`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    elapsed: Option<Duration>,
) -> Result<(), CliError> {
    let dir = cfg.out.as_path();
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    fs::write(dir.join("results.csv"), results_csv(&outcome.rows, &hash))?;
    fs::write(dir.join("summary.txt"), summary_text(cfg, outcome, elapsed))?;
    if !outcome.eigen.is_empty() {
        fs::write(dir.join("eigen.csv"), eigen_csv(&outcome.eigen))?;
    }
    for (name, content) in &outcome.plots {
        fs::write(dir.join(name), content)?;
    }
    let entries = outcome
        .rows
        .iter()
        .map(|r| {
            LedgerEntry::Check(CheckRecord {
                experiment: cfg.experiment.id().into(),
                check_id: r.check_id.clone(),
                group: r.group.clone(),
                norm: r.norm.clone(),
                s: r.s,
                p: r.p,
                param: r.param,
                lhs: r.lhs,
                rhs: r.rhs,
                margin: r.margin,
                tolerance: r.tolerance,
                pass: r.pass,
                config_hash: hash.clone(),
                version: VERSION.into(),
            })
        })
        .chain(outcome.eigen.iter().cloned().map(LedgerEntry::Eigen));
    append_ledger(&dir.join("ledger.jsonl"), entries)
}

/// Appends entries through a single buffered write so concurrent runs
/// never interleave partial lines.
pub fn append_ledger(
    path: &Path,
    entries: impl IntoIterator<Item = LedgerEntry>,
) -> Result<(), CliError> {
    let mut buf = String::new();
    for e in entries {
        buf.push_str(&serde_json::to_string(&e).map_err(|e| CliError::Io(e.to_string()))?);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read ledger {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Config(format!("ledger line {}: {e}", k + 1)))
        })
        .collect()
}
