//! Cell-centred uniform grids over boxes and functions sampled on them.
//!
//! A grid with `n_i` cells on `[lo_i, hi_i]` has nodes at
//! `lo_i + (k + ½) h_i`, `h_i = (hi_i − lo_i)/n_i`, and every node carries
//! the midpoint weight `Π h_i`. Values are stored row-major (last axis
//! fastest). The sampled function is taken to be zero off the grid box.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::group::{GroupDescriptor, MAX_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() || lo.is_empty() || lo.len() > MAX_DIM {
            return invalid("grid bounds and counts must share a dimension in 1..=8");
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite() && hi[i] > lo[i]) {
                return invalid(format!(
                    "grid axis {i}: need finite lo < hi, got [{}, {}]",
                    lo[i], hi[i]
                ));
            }
            if n[i] == 0 {
                return invalid(format!("grid axis {i}: zero cells"));
            }
        }
        let h = (0..lo.len())
            .map(|i| (hi[i] - lo[i]) / n[i] as f64)
            .collect();
        let mut strides = vec![1; n.len()];
        for i in (0..n.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * n[i + 1];
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            n: n.to_vec(),
            h,
            strides,
        })
    }

    /// Cube `[−half, half]^N` split into `n` cells per axis.
    pub fn cube(dim: usize, half: f64, n: usize) -> Result<Self> {
        Self::new(&vec![-half; dim], &vec![half; dim], &vec![n; dim])
    }

    /// Symmetric box with the given half-widths and per-axis counts.
    pub fn centered(half: &[f64], n: &[usize]) -> Result<Self> {
        let lo: Vec<f64> = half.iter().map(|v| -v).collect();
        Self::new(&lo, half, n)
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn counts(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Midpoint weight `Π h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    #[inline]
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for i in 0..self.dim() {
            out[i] = flat / self.strides[i];
            flat %= self.strides[i];
        }
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    #[inline]
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for i in 0..self.dim() {
            let k = rem / self.strides[i];
            rem %= self.strides[i];
            out[i] = self.lo[i] + (k as f64 + 0.5) * self.h[i];
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(flat, &mut out);
        out
    }

    /// All node coordinates, row-major, `len() × dim()`.
    pub fn coordinates(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.len() * d];
        for (flat, chunk) in out.chunks_exact_mut(d).enumerate() {
            self.node_into(flat, chunk);
        }
        out
    }

    /// Flat index of the node within `tol · h` of `x` on every axis.
    pub fn locate_node(&self, x: &[f64], tol: f64) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for i in 0..self.dim() {
            let t = (x[i] - self.lo[i]) / self.h[i] - 0.5;
            let k = t.round();
            if (t - k).abs() > tol || k < 0.0 || k >= self.n[i] as f64 {
                return None;
            }
            flat += k as usize * self.strides[i];
        }
        Some(flat)
    }

    /// Flat index of the cell containing `x`, if inside the box.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for i in 0..self.dim() {
            let t = ((x[i] - self.lo[i]) / self.h[i]).floor();
            if !(t >= 0.0 && t < self.n[i] as f64) {
                return None;
            }
            flat += t as usize * self.strides[i];
        }
        Some(flat)
    }

    /// The grid whose box is `δ_λ` of this one, with the same cell counts:
    /// node `k` of the result is `δ_λ` of node `k` here.
    pub fn dilated(&self, g: &GroupDescriptor, lambda: f64) -> Result<Self> {
        if g.dim() != self.dim() {
            return invalid("group and grid dimensions differ");
        }
        let mut lo = vec![0.0; self.dim()];
        let mut hi = vec![0.0; self.dim()];
        g.dilate_into(lambda, &self.lo, &mut lo);
        g.dilate_into(lambda, &self.hi, &mut hi);
        Self::new(&lo, &hi, &self.n)
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && self
                .lo
                .iter()
                .zip(&other.lo)
                .chain(self.hi.iter().zip(&other.hi))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}

/// A function sampled at the nodes of a [`GridSpec`], zero off the box.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    pub group: String,
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(group: &str, grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("sampled values must be finite");
        }
        Ok(Self {
            group: group.to_string(),
            grid,
            values,
        })
    }

    pub fn zeros(g: &GroupDescriptor, grid: GridSpec) -> Self {
        let len = grid.len();
        Self {
            group: g.name().to_string(),
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        g: &GroupDescriptor,
        grid: GridSpec,
        f: F,
    ) -> Result<Self> {
        if g.dim() != grid.dim() {
            return invalid("group and grid dimensions differ");
        }
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|k| {
                grid.node_into(k, &mut x);
                f(&x)
            })
            .collect();
        Self::new(g.name(), grid, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of complete outer layers on which the function vanishes.
    pub fn support_margin(&self) -> usize {
        let d = self.grid.dim();
        let mut idx = vec![0usize; d];
        let mut margin = usize::MAX;
        for (flat, v) in self.values.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            self.grid.multi_index(flat, &mut idx);
            for i in 0..d {
                let layer = idx[i].min(self.grid.n[i] - 1 - idx[i]);
                margin = margin.min(layer);
            }
        }
        if margin == usize::MAX {
            *self.grid.n.iter().min().unwrap()
        } else {
            margin
        }
    }

    /// Indices of nonzero samples.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `∫ |u|^r` by the midpoint rule.
    pub fn lp_norm_pow(&self, r: f64) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs().powf(r)).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(
            &self.group,
            self.grid.clone(),
            self.values.iter().map(|v| f(*v)).collect(),
        )
    }

    /// `u_λ(x) = u(δ_λ x)`, represented exactly on the grid `δ_{1/λ}(box)`.
    pub fn dilated(&self, g: &GroupDescriptor, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return invalid("dilation factor must be positive");
        }
        Ok(Self {
            group: self.group.clone(),
            grid: self.grid.dilated(g, 1.0 / lambda)?,
            values: self.values.clone(),
        })
    }

    /// `u_a(x) = u(a ∘ x)` on the same grid. Requires `a ∘ ·` to map grid
    /// nodes onto grid nodes (checked), and the support of `u_a` to stay
    /// inside the box (checked).
    pub fn left_translated(&self, g: &GroupDescriptor, a: &[f64]) -> Result<Self> {
        if a.len() != g.dim() || g.dim() != self.grid.dim() {
            return invalid("translation vector has the wrong dimension");
        }
        let d = self.grid.dim();
        let mut x = [0.0; MAX_DIM];
        let mut ax = [0.0; MAX_DIM];
        let mut values = vec![0.0; self.len()];
        // Every nonzero sample of u must be hit from some node of u_a.
        let mut hits = 0usize;
        for (k, slot) in values.iter_mut().enumerate() {
            self.grid.node_into(k, &mut x[..d]);
            g.compose_into(a, &x[..d], &mut ax[..d]);
            let inside = (0..d).all(|i| {
                let t = (ax[i] - self.grid.lo[i]) / self.grid.h[i];
                t > -0.5 && t < self.grid.n[i] as f64 + 0.5
            });
            if !inside {
                continue;
            }
            match self.grid.locate_node(&ax[..d], 1e-7) {
                Some(src) => {
                    *slot = self.values[src];
                    if self.values[src] != 0.0 {
                        hits += 1;
                    }
                }
                None => {
                    if self.grid.cell_of(&ax[..d]).is_some() {
                        return Err(Error::InvalidInput(
                            "translation does not map the lattice onto itself".into(),
                        ));
                    }
                }
            }
        }
        let nonzero = self.values.iter().filter(|v| **v != 0.0).count();
        if hits != nonzero {
            return Err(Error::InvalidInput(
                "translated support leaves the grid box".into(),
            ));
        }
        Self::new(&self.group, self.grid.clone(), values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(s, "# subfrac-grid v1").unwrap();
        writeln!(s, "group,{}", self.group).unwrap();
        writeln!(s, "lo,{}", join(&self.grid.lo)).unwrap();
        writeln!(s, "hi,{}", join(&self.grid.hi)).unwrap();
        writeln!(
            s,
            "n,{}",
            self.grid
                .n
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        writeln!(s, "h,{}", join(&self.grid.h)).unwrap();
        writeln!(s, "values").unwrap();
        for v in &self.values {
            writeln!(s, "{v:?}").unwrap();
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of grid file".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != "# subfrac-grid v1" {
            return Err(Error::Parse("missing grid header".into()));
        }
        let field = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(&format!("{key},"))
                .map(|s| s.to_string())
                .ok_or_else(|| Error::Parse(format!("expected '{key}' row")))
        };
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad number '{t}': {e}")))
                })
                .collect()
        };
        let group = field(next()?, "group")?;
        let lo = floats(field(next()?, "lo")?)?;
        let hi = floats(field(next()?, "hi")?)?;
        let n: Vec<usize> = field(next()?, "n")?
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad count '{t}': {e}")))
            })
            .collect::<Result<_>>()?;
        let _h = floats(field(next()?, "h")?)?;
        if next()?.trim() != "values" {
            return Err(Error::Parse("expected 'values' row".into()));
        }
        let grid = GridSpec::new(&lo, &hi, &n).map_err(|e| Error::Parse(e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            values.push(
                line.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value: {e}")))?,
            );
        }
        Self::new(&group, grid, values).map_err(|e| Error::Parse(e.to_string()))
    }

    const MAGIC: &'static [u8; 8] = b"SFGRID01";

    /// Little-endian binary layout: magic, group id (u32 length + UTF-8),
    /// dimension (u32), lo, hi (f64), n (u64), h (f64), then the values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&(self.group.len() as u32).to_le_bytes());
        buf.extend_from_slice(self.group.as_bytes());
        buf.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        for v in self.grid.lo.iter().chain(&self.grid.hi) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for n in &self.grid.n {
            buf.extend_from_slice(&(*n as u64).to_le_bytes());
        }
        for v in self.grid.h.iter().chain(&self.values) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            if pos + k > bytes.len() {
                return Err(Error::Parse("truncated binary grid".into()));
            }
            let s = &bytes[pos..pos + k];
            pos += k;
            Ok(s)
        };
        if take(8)? != Self::MAGIC {
            return Err(Error::Parse("bad magic in binary grid".into()));
        }
        let glen = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let group = String::from_utf8(take(glen)?.to_vec())
            .map_err(|_| Error::Parse("group id is not UTF-8".into()))?;
        let d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if d == 0 || d > MAX_DIM {
            return Err(Error::Parse(format!("bad dimension {d}")));
        }
        let mut f64s = |k: usize| -> Result<Vec<f64>> {
            (0..k)
                .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
                .collect()
        };
        let lo = f64s(d)?;
        let hi = f64s(d)?;
        let mut n = Vec::with_capacity(d);
        for _ in 0..d {
            n.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let mut f64s = |k: usize| -> Result<Vec<f64>> {
            (0..k)
                .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
                .collect()
        };
        let _h = f64s(d)?;
        let grid = GridSpec::new(&lo, &hi, &n).map_err(|e| Error::Parse(e.to_string()))?;
        let values = f64s(grid.len())?;
        Self::new(&group, grid, values).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.write_csv(f),
            _ => self.write_binary(f),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(std::io::BufReader::new(f)),
            _ => Self::read_binary(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < 1.0 {
            (1.0 - r2).powi(2)
        } else {
            0.0
        }
    }

    #[test]
    fn nodes_and_indices_round_trip() {
        let grid = GridSpec::new(&[-1.0, 0.0, 2.0], &[1.0, 3.0, 4.0], &[4, 3, 5]).unwrap();
        let mut idx = [0usize; 3];
        for k in 0..grid.len() {
            grid.multi_index(k, &mut idx);
            assert_eq!(grid.flat_index(&idx), k);
            let x = grid.node(k);
            assert_eq!(grid.locate_node(&x, 1e-9), Some(k));
            assert_eq!(grid.cell_of(&x), Some(k));
        }
        assert_eq!(grid.node(0), vec![-0.75, 0.5, 2.2]);
        assert!((grid.cell_volume() - 0.5 * 1.0 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let g = GroupDescriptor::heisenberg();
        let grid = GridSpec::cube(3, 1.5, 6).unwrap();
        let u = SampledFunction::from_fn(&g, grid, |x| bump(x) * 1.0 / 3.0).unwrap();
        let mut csv = Vec::new();
        u.write_csv(&mut csv).unwrap();
        let back = SampledFunction::read_csv(&csv[..]).unwrap();
        assert_eq!(back, u);
        let mut bin = Vec::new();
        u.write_binary(&mut bin).unwrap();
        assert_eq!(SampledFunction::read_binary(&bin[..]).unwrap(), u);
        assert!(SampledFunction::read_binary(&bin[..bin.len() - 3]).is_err());
        assert!(SampledFunction::read_csv(&b"nonsense\n"[..]).is_err());
    }

    #[test]
    fn files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let g = GroupDescriptor::abelian(2).unwrap();
        let u = SampledFunction::from_fn(&g, GridSpec::cube(2, 2.0, 8).unwrap(), bump).unwrap();
        for name in ["u.csv", "u.bin"] {
            let p = dir.path().join(name);
            u.save(&p).unwrap();
            assert_eq!(SampledFunction::load(&p).unwrap(), u);
        }
    }

    #[test]
    fn support_margin_counts_zero_layers() {
        let g = GroupDescriptor::abelian(1).unwrap();
        let u = SampledFunction::from_fn(&g, GridSpec::cube(1, 2.0, 16).unwrap(), bump).unwrap();
        // |x| < 1 covers the middle 8 cells, leaving 4 zero layers per side.
        assert_eq!(u.support_margin(), 4);
        assert_eq!(u.support().len(), 8);
    }

    #[test]
    fn dilation_relabels_the_box() {
        let g = GroupDescriptor::heisenberg();
        let grid = GridSpec::cube(3, 2.0, 8).unwrap();
        let u = SampledFunction::from_fn(&g, grid, bump).unwrap();
        let lam = 2.0;
        let ul = u.dilated(&g, lam).unwrap();
        let mut dx = [0.0; 3];
        for k in 0..ul.len() {
            g.dilate_into(lam, &ul.grid.node(k), &mut dx);
            assert!((ul.values[k] - bump(&dx)).abs() < 1e-14);
        }
    }

    #[test]
    fn heisenberg_lattice_translation() {
        // With h₃ = h₁h₂/2 and an even symmetric grid, a = (2h₁, 0, h₃)
        // permutes lattice nodes.
        let g = GroupDescriptor::heisenberg();
        let grid = GridSpec::centered(&[2.0, 2.0, 2.0], &[16, 16, 128]).unwrap();
        let h = grid.spacing().to_vec();
        assert!((h[2] - h[0] * h[1] / 2.0).abs() < 1e-15);
        let f = |x: &[f64]| bump(&[x[0], x[1], 2.0 * x[2]]);
        let u = SampledFunction::from_fn(&g, grid.clone(), f).unwrap();
        let a = [2.0 * h[0], 0.0, h[2]];
        let ua = u.left_translated(&g, &a).unwrap();
        let mut ax = [0.0; 3];
        for k in 0..ua.len() {
            g.compose_into(&a, &grid.node(k), &mut ax);
            assert!((ua.values[k] - f(&ax)).abs() < 1e-12);
        }
        assert!(u.left_translated(&g, &[0.3 * h[0], 0.0, 0.0]).is_err());
    }
}
