//! Check rows shared by every oracle and their CSV encoding.

use std::fmt::Write as _;

use serde::Serialize;

use crate::group::{GroupDescriptor, QuasiNorm};
use crate::operator::FracParams;

pub const CSV_COLUMNS: [&str; 11] = [
    "check_id",
    "group",
    "norm",
    "s",
    "p",
    "param",
    "lhs",
    "rhs",
    "margin",
    "tolerance",
    "pass",
];

/// One verified inequality instance: `lhs ≤ rhs` (or whatever relation the
/// check names) with a signed margin and the tolerance it was judged by.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub check_id: String,
    pub group: String,
    pub norm: String,
    pub s: f64,
    pub p: f64,
    /// γ, θ, λ or another check-specific parameter.
    pub param: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        check_id: &str,
        g: &GroupDescriptor,
        norm: QuasiNorm,
        params: Option<&FracParams>,
        param: Option<f64>,
        lhs: f64,
        rhs: f64,
        margin: f64,
        tolerance: f64,
        pass: bool,
    ) -> Self {
        Self {
            check_id: check_id.to_string(),
            group: g.name().to_string(),
            norm: norm.id().to_string(),
            s: params.map_or(f64::NAN, |p| p.s()),
            p: params.map_or(f64::NAN, |p| p.p()),
            param,
            lhs,
            rhs,
            margin,
            tolerance,
            pass,
        }
    }

    /// Fields in `CSV_COLUMNS` order. Floats use the shortest round-trip
    /// representation so that output is reproducible byte for byte.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.check_id.clone(),
            self.group.clone(),
            self.norm.clone(),
            fmt_f64(self.s),
            fmt_f64(self.p),
            self.param.map(fmt_f64).unwrap_or_default(),
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            fmt_f64(self.margin),
            fmt_f64(self.tolerance),
            self.pass.to_string(),
        ]
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

/// Header plus one line per row.
pub fn rows_to_csv(rows: &[CheckRow]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_fields().join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let g = GroupDescriptor::heisenberg();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let r = CheckRow::new(
            "x",
            &g,
            QuasiNorm::Koranyi,
            Some(&params),
            Some(0.1),
            1.0 / 3.0,
            2.0,
            0.5,
            1e-8,
            true,
        );
        let csv = rows_to_csv(&[r]);
        let line = csv.lines().nth(1).unwrap();
        let lhs: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert_eq!(lhs, 1.0 / 3.0);
        assert!(line.starts_with("x,heisenberg1,koranyi,0.5,2.0,0.1,"));
    }
}
