//! Ledger summaries: pass/fail matrix, margin statistics, and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use subfrac::report::fmt_f64;

use crate::experiments::EigenRecord;
use crate::output::{read_ledger, CheckRecord, LedgerEntry};
use crate::CliError;

pub const CHECK_HEADER: &str = "check_id,pass,fail,margin_min,margin_mean,margin_max";
pub const EIGEN_HEADER: &str = "s,p,R,lambda1,loglog_slope";

/// Rendered report plus plot-data files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub text: String,
    pub plots: Vec<(String, String)>,
}

/// Least-squares slope of `log y` against `log x`; `None` below two
/// distinct abscissae.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (pts.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

type Key = (String, String);

pub fn build_report(entries: &[LedgerEntry]) -> Report {
    let mut checks: BTreeMap<Key, Vec<&CheckRecord>> = BTreeMap::new();
    let mut eigen: BTreeMap<Key, Vec<&EigenRecord>> = BTreeMap::new();
    for e in entries {
        match e {
            LedgerEntry::Check(c) => checks
                .entry((c.group.clone(), c.norm.clone()))
                .or_default()
                .push(c),
            LedgerEntry::Eigen(r) => eigen
                .entry((r.group.clone(), r.norm.clone()))
                .or_default()
                .push(r),
        }
    }
    let mut keys: Vec<&Key> = checks.keys().chain(eigen.keys()).collect();
    keys.sort();
    keys.dedup();

    let mut text = String::new();
    let mut mu_curve = String::from("group,norm,s,p,x,y\n");
    let mut ratios = String::from("group,norm,s,p,x,y\n");
    let mut lambda = String::from("group,norm,s,p,x,y,loglog_slope\n");

    if keys.is_empty() {
        let _ = writeln!(text, "{CHECK_HEADER}\n\n{EIGEN_HEADER}");
    }
    for key in keys {
        let _ = writeln!(text, "[{} / {}]", key.0, key.1);
        let _ = writeln!(text, "{CHECK_HEADER}");
        let rows = checks.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let mut by_id: BTreeMap<&str, Vec<&CheckRecord>> = BTreeMap::new();
        for r in rows {
            by_id.entry(&r.check_id).or_default().push(r);
        }
        for (id, rs) in &by_id {
            let pass = rs.iter().filter(|r| r.pass).count();
            let m: Vec<f64> = rs.iter().map(|r| r.margin).collect();
            let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = m.iter().sum::<f64>() / m.len() as f64;
            let _ = writeln!(
                text,
                "{id},{pass},{},{},{},{}",
                rs.len() - pass,
                fmt_f64(min),
                fmt_f64(mean),
                fmt_f64(max)
            );
        }
        for r in rows {
            let prefix = format!("{},{},{},{}", r.group, r.norm, fmt_f64(r.s), fmt_f64(r.p));
            let x = r.param.map(fmt_f64).unwrap_or_default();
            match r.check_id.as_str() {
                "hardy_mu" => {
                    let _ = writeln!(mu_curve, "{prefix},{x},{}", fmt_f64(r.lhs));
                }
                "sobolev_ratio" => {
                    let _ = writeln!(ratios, "{prefix},{x},{}", fmt_f64(r.margin));
                }
                _ => {}
            }
        }

        let _ = writeln!(text, "\n{EIGEN_HEADER}");
        let runs = eigen.get(key).map(Vec::as_slice).unwrap_or(&[]);
        // One slope per (s, p) series; the bits make the f64 pair a map key.
        let mut series: BTreeMap<(u64, u64), Vec<&EigenRecord>> = BTreeMap::new();
        for r in runs {
            series
                .entry((r.s.to_bits(), r.p.to_bits()))
                .or_default()
                .push(r);
        }
        for rs in series.values_mut() {
            rs.sort_by(|a, b| a.radius.total_cmp(&b.radius));
            let pts: Vec<(f64, f64)> = rs.iter().map(|r| (r.radius, r.lambda1)).collect();
            let slope = loglog_slope(&pts).map(fmt_f64).unwrap_or_default();
            for r in rs.iter() {
                let (s, p, rad, l) = (
                    fmt_f64(r.s),
                    fmt_f64(r.p),
                    fmt_f64(r.radius),
                    fmt_f64(r.lambda1),
                );
                let _ = writeln!(text, "{s},{p},{rad},{l},{slope}");
                let _ = writeln!(lambda, "{},{},{s},{p},{rad},{l},{slope}", r.group, r.norm);
            }
        }
        text.push('\n');
    }
    Report {
        text,
        plots: vec![
            ("mu_curve.csv".into(), mu_curve),
            ("lambda_vs_R.csv".into(), lambda),
            ("sobolev_ratios.csv".into(), ratios),
        ],
    }
}

/// Reads the ledger and, when `out` is given, writes `report.txt` and the
/// plot-data files there.
pub fn report(ledger: &Path, out: Option<&Path>) -> Result<Report, CliError> {
    let rep = build_report(&read_ledger(ledger)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), &rep.text)?;
        for (name, content) in &rep.plots {
            fs::write(dir.join(name), content)?;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&r: &f64| (r, 3.0 * r.powf(-0.75)))
            .collect();
        assert!((loglog_slope(&pts).unwrap() + 0.75).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn empty_ledger_gives_headers_only() {
        let rep = build_report(&[]);
        assert_eq!(rep.text, format!("{CHECK_HEADER}\n\n{EIGEN_HEADER}\n"));
        assert!(rep.plots.iter().all(|(_, c)| c.lines().count() == 1));
    }
}
