//! Picone-type inequality: for `ω > 0` on `Ω` and `g = u/ω`,
//! `R(x, y) = |u(x) − u(y)|^p − (|g(x)|^p ω(x) − |g(y)|^p ω(y)) φ_p(ω(x) − ω(y)) ≥ 0`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::SampledFunction;
use crate::group::{GroupDescriptor, QuasiNorm};
use crate::operator::{
    abs_pow, phi, seminorm_on_domain, weak_form, FracParams, QuadratureConfig, WeakScope,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiconeReport {
    pub pairs: usize,
    pub min_remainder: f64,
    /// `[u]^p` over `Ω × Ω`.
    pub seminorm_domain: f64,
    /// `W_Ω(ω, |u|^p/ω^{p−1})`.
    pub weak_domain: f64,
}

#[inline]
pub fn picone_remainder(ux: f64, uy: f64, wx: f64, wy: f64, p: f64) -> f64 {
    let vx = abs_pow(ux, p) / wx.powf(p - 1.0);
    let vy = abs_pow(uy, p) / wy.powf(p - 1.0);
    abs_pow(ux - uy, p) - (vx - vy) * phi(wx - wy, p)
}

/// Scans every ordered pair of `Ω` and evaluates the integrated form.
pub fn picone_check(
    g: &GroupDescriptor,
    norm: QuasiNorm,
    params: &FracParams,
    omega: &SampledFunction,
    u: &SampledFunction,
    mask: &[bool],
    cfg: &QuadratureConfig,
) -> Result<PiconeReport> {
    if !omega.grid.same_as(&u.grid) || mask.len() != u.len() {
        return invalid("ω, u and the domain mask must share one grid");
    }
    let dom: Vec<usize> = (0..u.len()).filter(|&i| mask[i]).collect();
    if dom.iter().any(|&i| !(omega.values[i] > 0.0)) {
        return invalid("ω must be positive on Ω");
    }
    if (0..u.len()).any(|i| !mask[i] && u.values[i] != 0.0) {
        return invalid("u must vanish off Ω");
    }
    let p = params.p();
    let (uv, wv) = (&u.values, &omega.values);
    let min_remainder = cfg
        .exec
        .map(dom.len(), |a| {
            let i = dom[a];
            dom.iter()
                .map(|&j| picone_remainder(uv[i], uv[j], wv[i], wv[j], p))
                .fold(f64::INFINITY, f64::min)
        })
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let v = u.map(|_| 0.0).and_then(|mut v| {
        for &i in &dom {
            v.values[i] = abs_pow(uv[i], p) / wv[i].powf(p - 1.0);
        }
        Ok(v)
    })?;
    // ω is only meaningful on Ω; zero it elsewhere so that the Ω × Ω form
    // sees exactly the scanned values.
    let mut w = omega.clone();
    for (i, x) in w.values.iter_mut().enumerate() {
        if !mask[i] {
            *x = 0.0;
        }
    }
    Ok(PiconeReport {
        pairs: dom.len() * dom.len(),
        min_remainder,
        seminorm_domain: seminorm_on_domain(g, norm, params, u, mask, cfg)?,
        weak_domain: weak_form(g, norm, params, &w, &v, mask, WeakScope::Domain, cfg)?,
    })
}
