//! Deterministic test-function families.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::{GridSpec, SampledFunction};
use crate::group::{GroupDescriptor, QuasiNorm};

/// `((r − a)(b − r))_+^m` normalized to peak 1.
fn bump(r: f64, a: f64, b: f64, m: f64) -> f64 {
    if r <= a || r >= b {
        return 0.0;
    }
    let mid = 0.25 * (b - a) * (b - a);
    ((r - a) * (b - r) / mid).powf(m)
}

/// Twelve functions supported in the quasi-annulus `r_in < q(x) < r_out`:
/// radial bumps of several widths and smoothness, sign-changing and
/// angularly modulated variants (on ℝ¹ the angular factor is a sign).
pub fn annulus_family(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    grid: &GridSpec,
    r_in: f64,
    r_out: f64,
) -> Result<Vec<SampledFunction>> {
    norm.check_compatible(g)?;
    let w = r_out - r_in;
    let specs: Vec<Box<dyn Fn(&[f64], f64) -> f64>> = vec![
        Box::new(move |_, r| bump(r, r_in, r_out, 1.0)),
        Box::new(move |_, r| bump(r, r_in, r_out, 2.0)),
        Box::new(move |_, r| bump(r, r_in, r_out, 3.0)),
        Box::new(move |_, r| bump(r, r_in, r_in + 0.5 * w, 2.0)),
        Box::new(move |_, r| bump(r, r_in + 0.5 * w, r_out, 2.0)),
        Box::new(move |_, r| bump(r, r_in + 0.25 * w, r_out - 0.25 * w, 2.0)),
        Box::new(move |_, r| bump(r, r_in, r_out, 2.0) * (2.0 * PI * (r - r_in) / w).cos()),
        Box::new(move |_, r| bump(r, r_in, r_out, 0.5)),
        Box::new(move |x, r| bump(r, r_in, r_out, 2.0) * (1.0 + 0.5 * x[0] / r)),
        Box::new(move |x, r| bump(r, r_in, r_out, 2.0) * x[0] / r),
        Box::new(move |_, r| bump(r, r_in, r_out, 2.0) * (r - r_in) / w),
        Box::new(move |_, r| 3.0 * bump(r, r_in, r_out, 1.5)),
    ];
    specs
        .iter()
        .map(|f| {
            SampledFunction::from_fn(g, grid.clone(), |x| {
                let r = norm.eval(g, x);
                if r == 0.0 {
                    0.0
                } else {
                    f(x, r)
                }
            })
        })
        .collect()
}
