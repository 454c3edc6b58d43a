//! Uniform grids on the torus: n-dimensional FFTs, grid transforms and fast
//! evaluation of band-limited fields at points near grid nodes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{KamError, Result};
use crate::fourier::{cis, FourierField};

/// A uniform grid with `g` points per axis on T^dim.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    g: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid {{ dim: {}, g: {} }}", self.dim, self.g)
    }
}

impl Grid {
    pub fn new(dim: usize, g: usize) -> Self {
        let mut planner = FftPlanner::new();
        Grid { dim, g, fwd: planner.plan_fft_forward(g), inv: planner.plan_fft_inverse(g) }
    }

    /// The dealiasing grid for fields of box `b`.
    pub fn for_box(dim: usize, b: usize) -> Self {
        Self::new(dim, (4 * b).max(4))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn size(&self) -> usize {
        self.g
    }
    pub fn len(&self) -> usize {
        self.g.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer coordinates of a node.
    pub fn node_index(&self, mut lin: usize) -> Vec<usize> {
        let mut v = vec![0usize; self.dim];
        for slot in v.iter_mut().rev() {
            *slot = lin % self.g;
            lin /= self.g;
        }
        v
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.g + i)
    }

    /// Point of T^dim at a node.
    pub fn node(&self, lin: usize) -> Vec<f64> {
        self.node_index(lin).into_iter().map(|i| i as f64 / self.g as f64).collect()
    }

    fn fft_nd(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inv } else { &self.fwd };
        let g = self.g;
        let len = data.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for axis in 0..self.dim {
            let stride = g.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            // Gather lines with contiguous reads: line (outer, inner) holds
            // data[outer * block + k * stride + inner] at position k.
            let block = g * stride;
            for outer in 0..len / block {
                let src = &data[outer * block..(outer + 1) * block];
                let dst = &mut buf[outer * block..(outer + 1) * block];
                for k in 0..g {
                    let row = &src[k * stride..(k + 1) * stride];
                    for (inner, v) in row.iter().enumerate() {
                        dst[inner * g + k] = *v;
                    }
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for outer in 0..len / block {
                let src = &buf[outer * block..(outer + 1) * block];
                let dst = &mut data[outer * block..(outer + 1) * block];
                for k in 0..g {
                    let row = &mut dst[k * stride..(k + 1) * stride];
                    for (inner, v) in row.iter_mut().enumerate() {
                        *v = src[inner * g + k];
                    }
                }
            }
        }
    }

    fn check_box(&self, b: usize) -> Result<()> {
        if self.g < 4 * b {
            return Err(KamError::GridTooSmall { grid: self.g, box_: b, need: 4 * b });
        }
        Ok(())
    }

    /// Places coefficients at their residues mod g, then synthesises.
    fn synthesize(&self, f: &FourierField, mult: Option<&dyn Fn(&[i64]) -> Complex64>) -> Vec<Complex64> {
        let g = self.g as i64;
        let mut data = vec![Complex64::new(0.0, 0.0); self.len()];
        for (i, c) in f.coeffs().iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let idx = f.index_of(i);
            let lin = idx.iter().fold(0usize, |acc, &k| acc * self.g + k.rem_euclid(g) as usize);
            let w = mult.map_or(Complex64::new(1.0, 0.0), |m| m(&idx));
            data[lin] += c * w;
        }
        self.fft_nd(&mut data, true);
        data
    }

    /// Largest node value of any derivative of order at most `r` of the trig
    /// interpolant of `values`. The Nyquist mode is dropped from derivatives.
    pub fn spectral_sup(&self, values: &[f64], r: usize) -> Result<f64> {
        if values.len() != self.len() {
            return Err(KamError::Dimension("grid values do not match grid".into()));
        }
        let mut hat: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft_nd(&mut hat, false);
        let scale = 1.0 / self.len() as f64;
        let g = self.g;
        let freq = |i: usize| -> Option<f64> {
            if 2 * i == g {
                None
            } else if 2 * i < g {
                Some(i as f64)
            } else {
                Some(i as f64 - g as f64)
            }
        };
        let mut best: f64 = values.iter().fold(0.0, |m, x| m.max(x.abs()));
        let mut data = vec![Complex64::new(0.0, 0.0); self.len()];
        for iota in crate::fourier::box_indices(self.dim, r) {
            let order: i64 = iota.iter().sum();
            if order == 0 || iota.iter().any(|&x| x < 0) || order as usize > r {
                continue;
            }
            for (lin, (d, h)) in data.iter_mut().zip(&hat).enumerate() {
                let idx = self.node_index(lin);
                let mut w = Complex64::new(scale, 0.0);
                for (&i, &p) in idx.iter().zip(&iota) {
                    if p == 0 {
                        continue;
                    }
                    match freq(i) {
                        Some(k) => w *= Complex64::new(0.0, 2.0 * PI * k).powu(p as u32),
                        None => w = Complex64::new(0.0, 0.0),
                    }
                }
                *d = h * w;
            }
            self.fft_nd(&mut data, true);
            best = best.max(data.iter().fold(0.0, |m, z| m.max(z.norm())));
        }
        Ok(best)
    }

    /// Values at all nodes; requires g >= 4 * box.
    pub fn to_grid_complex(&self, f: &FourierField) -> Result<Vec<Complex64>> {
        self.check_dim(f)?;
        self.check_box(f.box_size())?;
        Ok(self.synthesize(f, None))
    }

    /// Real part of the node values.
    pub fn to_grid(&self, f: &FourierField) -> Result<Vec<f64>> {
        Ok(self.to_grid_complex(f)?.into_iter().map(|c| c.re).collect())
    }

    /// Exact node values for any support (modes folded mod g).
    pub fn sample(&self, f: &FourierField) -> Vec<Complex64> {
        self.synthesize(f, None)
    }

    /// Node values of the derivative with multi-index `iota`.
    pub fn sample_derivative(&self, f: &FourierField, iota: &[usize]) -> Vec<Complex64> {
        let m = |idx: &[i64]| {
            let mut w = Complex64::new(1.0, 0.0);
            for (k, &p) in idx.iter().zip(iota) {
                w *= Complex64::new(0.0, 2.0 * PI * *k as f64).powu(p as u32);
            }
            w
        };
        self.synthesize(f, Some(&m))
    }

    /// Coefficients with max-norm at most `b` from node values.
    pub fn from_grid_complex(&self, values: &[Complex64], d1: usize, d2: usize, b: usize) -> Result<FourierField> {
        if d1 + d2 != self.dim || values.len() != self.len() {
            return Err(KamError::Dimension("grid values do not match grid".into()));
        }
        self.check_box(b)?;
        let mut data = values.to_vec();
        self.fft_nd(&mut data, false);
        let norm = 1.0 / self.len() as f64;
        let mut out = FourierField::zeros(d1, d2, b);
        let gi = self.g as i64;
        for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
            let mut rem = i;
            let side = 2 * b + 1;
            let mut lin = 0usize;
            let mut mult = 1usize;
            for _ in 0..self.dim {
                let k = (rem % side) as i64 - b as i64;
                rem /= side;
                lin += k.rem_euclid(gi) as usize * mult;
                mult *= self.g;
            }
            *c = data[lin] * norm;
        }
        Ok(out)
    }

    pub fn from_grid(&self, values: &[f64], d1: usize, d2: usize, b: usize) -> Result<FourierField> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.from_grid_complex(&v, d1, d2, b)
    }

    fn check_dim(&self, f: &FourierField) -> Result<()> {
        if f.dim() != self.dim {
            return Err(KamError::Dimension(format!("field dim {} on grid dim {}", f.dim(), self.dim)));
        }
        Ok(())
    }
}

/// All multi-indices of length `dim` with total degree at most `p`, graded,
/// together with a parent table: `parent[i] = (j, axis)` with
/// `iota_i = iota_j + e_axis`.
fn multi_indices(dim: usize, p: usize) -> (Vec<Vec<usize>>, Vec<(usize, usize)>) {
    let mut list: Vec<Vec<usize>> = vec![vec![0; dim]];
    let mut parent = vec![(0usize, 0usize)];
    let mut start = 0;
    for _deg in 1..=p {
        let end = list.len();
        for j in start..end {
            // Extend only along axes at or after the last nonzero axis to
            // enumerate each multi-index once.
            let last = list[j].iter().rposition(|&x| x > 0).unwrap_or(0);
            for axis in last..dim {
                let mut next = list[j].clone();
                next[axis] += 1;
                list.push(next);
                parent.push((j, axis));
            }
        }
        start = end;
    }
    (list, parent)
}

pub fn count_multi_indices(dim: usize, p: usize) -> usize {
    // binomial(dim + p, p)
    let mut c = 1usize;
    for i in 1..=p {
        c = c * (dim + i) / i;
    }
    c
}

/// Absolute floor below which Taylor truncation is considered exact.
const TAYLOR_ABS_TOL: f64 = 1e-17;
const TAYLOR_REL_TOL: f64 = 1e-16;
const MAX_ORDER: usize = 40;
const DIRECT_NNZ: usize = 48;
/// Memory budget for derivative tables, in f64 entries.
const TABLE_BUDGET: usize = 40_000_000;

enum Mode {
    Direct { modes: Vec<Vec<(Vec<i64>, Complex64)>> },
    Taylor {
        fine: usize,
        order: usize,
        radius: f64,
        indices: Vec<Vec<usize>>,
        parent: Vec<(usize, usize)>,
        /// lower[mono * dim + axis]: index of `iota - e_axis`, or usize::MAX.
        lower: Vec<usize>,
        /// table[(node * nmono + mono) * nfields + field]
        table: Vec<f64>,
    },
}

/// Evaluates a set of real band-limited fields at arbitrary points, fast when
/// points sit within a known radius of grid nodes.
pub struct DisplacedEvaluator {
    dim: usize,
    nfields: usize,
    fields: Vec<FourierField>,
    mode: Mode,
}

/// Taylor remainder bound for total degree `p` and l1 displacement `s`.
fn remainder(weights: &[(f64, f64)], s: f64, p: usize) -> f64 {
    let mut fact = 1.0;
    for i in 1..=p + 1 {
        fact *= i as f64;
    }
    weights.iter().map(|(c, k)| c * (2.0 * PI * k * s).powi(p as i32 + 1)).sum::<f64>() / fact
}

impl DisplacedEvaluator {
    /// `radius`: per-coordinate bound on the distance from each evaluation
    /// point to the base grid node it belongs to. `base` is the base grid size.
    pub fn new(fields: &[FourierField], base: usize, radius: f64) -> Result<Self> {
        Self::with_tolerance(fields, base, radius, None)
    }

    /// As `new`, with an absolute bound on the Taylor remainder instead of
    /// the default relative one.
    pub fn with_tolerance(fields: &[FourierField], base: usize, radius: f64, tol: Option<f64>) -> Result<Self> {
        let dim = fields.first().map(|f| f.dim()).ok_or_else(|| KamError::Precondition("no fields".into()))?;
        let nfields = fields.len();
        let nnz: usize = fields.iter().map(|f| f.nnz()).max().unwrap_or(0);
        let fields: Vec<FourierField> = fields.to_vec();
        if nnz <= DIRECT_NNZ {
            let modes = fields.iter().map(|f| f.support().collect()).collect();
            return Ok(DisplacedEvaluator { dim, nfields, fields, mode: Mode::Direct { modes } });
        }
        let mut weights: Vec<(f64, f64)> = Vec::new();
        let mut l1: f64 = 0.0;
        for f in &fields {
            let mut fl1 = 0.0;
            for (idx, c) in f.support() {
                let k = idx.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64;
                weights.push((c.norm(), k));
                fl1 += c.norm();
            }
            l1 = l1.max(fl1);
        }
        let tol = tol.unwrap_or(TAYLOR_ABS_TOL.max(TAYLOR_REL_TOL * l1));
        let mut best: Option<(usize, usize, f64, usize)> = None; // (cost, fine, local radius, order)
        for s in [1usize, 2, 4, 8] {
            let fine = base * s;
            let local = radius.min(0.5 / fine as f64);
            let l1rad = local * dim as f64;
            let Some(p) = (0..=MAX_ORDER).find(|&p| remainder(&weights, l1rad, p) <= tol) else { continue };
            let nmono = count_multi_indices(dim, p);
            let nodes = fine.pow(dim as u32);
            let entries = nodes * nmono * nfields;
            if entries > TABLE_BUDGET {
                continue;
            }
            // Build cost dominates: one FFT per monomial per field pair.
            let cost = entries + nmono * nodes * ((nfields + 1) / 2) * 4;
            if best.map_or(true, |b| cost < b.0) {
                best = Some((cost, fine, local, p));
            }
        }
        let Some((_, fine, local, order)) = best else {
            let modes = fields.iter().map(|f| f.support().collect()).collect();
            return Ok(DisplacedEvaluator { dim, nfields, fields, mode: Mode::Direct { modes } });
        };
        let (indices, parent) = multi_indices(dim, order);
        let nmono = indices.len();
        let grid = Grid::new(dim, fine);
        let nodes = grid.len();
        let mut table = vec![0.0; nodes * nmono * nfields];
        // Packed supports: field 2j + i sits in the imaginary direction.
        let g = fine as i64;
        let packed: Vec<Vec<(usize, Vec<f64>, Complex64)>> = (0..nfields)
            .step_by(2)
            .map(|pair| {
                let mut out: Vec<(usize, Vec<f64>, Complex64)> = Vec::new();
                for (f, w) in [(pair, Complex64::new(1.0, 0.0)), (pair + 1, Complex64::new(0.0, 1.0))] {
                    if f >= nfields {
                        continue;
                    }
                    for (idx, c) in fields[f].support() {
                        let lin = idx.iter().fold(0usize, |acc, &k| acc * fine + k.rem_euclid(g) as usize);
                        let k: Vec<f64> = idx.iter().map(|&x| 2.0 * PI * x as f64).collect();
                        out.push((lin, k, c * w));
                    }
                }
                out
            })
            .collect();
        let mut data = vec![Complex64::new(0.0, 0.0); nodes];
        for (mi, iota) in indices.iter().enumerate() {
            for (pi, sup) in packed.iter().enumerate() {
                let pair = 2 * pi;
                data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (lin, k, c) in sup {
                    let mut w = *c;
                    for (kk, &p) in k.iter().zip(iota.iter()) {
                        if p > 0 {
                            w *= Complex64::new(0.0, *kk).powu(p as u32);
                        }
                    }
                    data[*lin] += w;
                }
                grid.fft_nd(&mut data, true);
                for (node, v) in data.iter().enumerate() {
                    let base_pos = (node * nmono + mi) * nfields + pair;
                    table[base_pos] = v.re;
                    if pair + 1 < nfields {
                        table[base_pos + 1] = v.im;
                    }
                }
            }
        }
        Ok(DisplacedEvaluator {
            dim,
            nfields,
            fields,
            mode: Mode::Taylor { fine, order, radius: local, lower: lower_table(&indices), indices, parent, table },
        })
    }

    pub fn order(&self) -> Option<usize> {
        match &self.mode {
            Mode::Taylor { order, .. } => Some(*order),
            Mode::Direct { .. } => None,
        }
    }

    pub fn nfields(&self) -> usize {
        self.nfields
    }

    fn direct(&self, y: &[f64], out: &mut [f64]) {
        for (f, o) in self.fields.iter().zip(out.iter_mut()) {
            *o = f.eval(y).re;
        }
    }

    /// Values of all fields at `y`, written to `out`.
    pub fn eval_point_into(&self, y: &[f64], out: &mut [f64], mono: &mut Vec<f64>) {
        match &self.mode {
            Mode::Direct { modes } => {
                for (m, o) in modes.iter().zip(out.iter_mut()) {
                    let mut s = 0.0;
                    for (idx, c) in m {
                        let ph: f64 = idx.iter().zip(y).map(|(k, x)| *k as f64 * x).sum();
                        let (sn, cs) = (2.0 * PI * ph).sin_cos();
                        s += c.re * cs - c.im * sn;
                    }
                    *o = s;
                }
            }
            Mode::Taylor { parent, table, indices, .. } => {
                let Some((lin, delta)) = self.locate(y) else {
                    self.direct(y, out);
                    return;
                };
                let nmono = indices.len();
                fill_monomials(mono, &delta, parent, indices);
                let row = &table[lin * nmono * self.nfields..(lin + 1) * nmono * self.nfields];
                for o in out.iter_mut() {
                    *o = 0.0;
                }
                for (k, w) in mono.iter().enumerate() {
                    let r = &row[k * self.nfields..(k + 1) * self.nfields];
                    for (o, v) in out.iter_mut().zip(r) {
                        *o += w * v;
                    }
                }
            }
        }
    }

    /// Nearest fine node and displacement, or None when `y` is farther
    /// than the table radius.
    fn locate(&self, y: &[f64]) -> Option<(usize, [f64; 8])> {
        let Mode::Taylor { fine, radius, .. } = &self.mode else { return None };
        let g = *fine as f64;
        let mut lin = 0usize;
        let mut delta = [0.0f64; 8];
        for (i, &yi) in y.iter().enumerate() {
            let r = (yi * g).round();
            let d = yi - r / g;
            if d.abs() > *radius * (1.0 + 1e-9) + 1e-15 {
                return None;
            }
            delta[i] = d;
            lin = lin * *fine + (r as i64).rem_euclid(*fine as i64) as usize;
        }
        Some((lin, delta))
    }

    /// Values and first derivatives at `y`; `jac[field * dim + axis]`.
    pub fn eval_with_gradient_into(&self, y: &[f64], out: &mut [f64], jac: &mut [f64], mono: &mut Vec<f64>) {
        let dim = self.dim;
        jac.iter_mut().for_each(|x| *x = 0.0);
        let located = match &self.mode {
            Mode::Taylor { .. } => self.locate(y),
            Mode::Direct { .. } => None,
        };
        match (&self.mode, located) {
            (Mode::Taylor { parent, table, indices, lower, .. }, Some((lin, delta))) => {
                let nmono = indices.len();
                fill_monomials(mono, &delta, parent, indices);
                let row = &table[lin * nmono * self.nfields..(lin + 1) * nmono * self.nfields];
                out.iter_mut().for_each(|o| *o = 0.0);
                for k in 0..nmono {
                    let r = &row[k * self.nfields..(k + 1) * self.nfields];
                    for (o, v) in out.iter_mut().zip(r) {
                        *o += mono[k] * v;
                    }
                    for a in 0..dim {
                        let l = lower[k * dim + a];
                        if l == usize::MAX {
                            continue;
                        }
                        for (f, v) in r.iter().enumerate() {
                            jac[f * dim + a] += mono[l] * v;
                        }
                    }
                }
            }
            _ => {
                for (f, field) in self.fields.iter().enumerate() {
                    let mut s = 0.0;
                    for (idx, c) in field.support() {
                        let ph: f64 = idx.iter().zip(y).map(|(k, x)| *k as f64 * x).sum();
                        let (sn, cs) = (2.0 * PI * ph).sin_cos();
                        s += c.re * cs - c.im * sn;
                        let dphase = -c.re * sn - c.im * cs;
                        for (a, &k) in idx.iter().enumerate() {
                            jac[f * dim + a] += 2.0 * PI * k as f64 * dphase;
                        }
                    }
                    out[f] = s;
                }
            }
        }
    }

    pub fn eval_point(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nfields];
        let mut mono = Vec::new();
        self.eval_point_into(y, &mut out, &mut mono);
        out
    }

    /// Evaluates at many points (flattened, `dim` coordinates each); output
    /// is flattened with `nfields` values per point.
    pub fn eval_many(&self, points: &[f64]) -> Vec<f64> {
        let npts = points.len() / self.dim;
        let mut out = vec![0.0; npts * self.nfields];
        let mut mono = Vec::new();
        for i in 0..npts {
            let (y, o) = (&points[i * self.dim..(i + 1) * self.dim], &mut out[i * self.nfields..(i + 1) * self.nfields]);
            self.eval_point_into(y, o, &mut mono);
        }
        out
    }
}

/// `mono[k] = delta^iota_k / iota_k!`.
fn fill_monomials(mono: &mut Vec<f64>, delta: &[f64], parent: &[(usize, usize)], indices: &[Vec<usize>]) {
    mono.resize(indices.len(), 0.0);
    mono[0] = 1.0;
    for k in 1..indices.len() {
        let (j, axis) = parent[k];
        mono[k] = mono[j] * delta[axis] / indices[k][axis] as f64;
    }
}

fn lower_table(indices: &[Vec<usize>]) -> Vec<usize> {
    let dim = indices.first().map_or(0, |i| i.len());
    let pos: std::collections::HashMap<&[usize], usize> = indices.iter().enumerate().map(|(k, i)| (i.as_slice(), k)).collect();
    let mut out = vec![usize::MAX; indices.len() * dim];
    for (k, iota) in indices.iter().enumerate() {
        for a in 0..dim {
            if iota[a] > 0 {
                let mut low = iota.clone();
                low[a] -= 1;
                out[k * dim + a] = pos[low.as_slice()];
            }
        }
    }
    out
}

/// Sum over a support at a point, with explicit phases: used by tests as an
/// independent reference.
pub fn direct_eval(f: &FourierField, y: &[f64]) -> Complex64 {
    f.support()
        .map(|(idx, c)| c * cis(idx.iter().zip(y).map(|(k, x)| *k as f64 * x).sum()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_enumeration() {
        let (l, p) = multi_indices(3, 4);
        assert_eq!(l.len(), count_multi_indices(3, 4));
        let mut sorted = l.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), l.len());
        for (k, (j, a)) in p.iter().enumerate().skip(1) {
            let mut x = l[*j].clone();
            x[*a] += 1;
            assert_eq!(x, l[k]);
        }
    }

    #[test]
    fn grid_round_trip() {
        let mut f = FourierField::zeros(1, 1, 3);
        for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
            *c = Complex64::new((i as f64).sin(), (i as f64 * 0.7).cos());
        }
        let g = Grid::for_box(2, 3);
        let vals = g.to_grid_complex(&f).unwrap();
        let back = g.from_grid_complex(&vals, 1, 1, 3).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-13);
        let x = g.node(17);
        assert!((vals[17] - f.eval(&x)).norm() < 1e-12);
        assert!(matches!(Grid::new(2, 11).to_grid(&f), Err(KamError::GridTooSmall { .. })));
    }

    #[test]
    fn taylor_matches_direct() {
        let mut f = FourierField::zeros(2, 1, 3);
        for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
            *c = Complex64::new(1e-2 / (1.0 + i as f64), 0.0);
        }
        let f = f.real_part();
        let ev = DisplacedEvaluator::new(&[f.clone(), f.scale(Complex64::new(2.0, 0.0))], 12, 1e-3).unwrap();
        assert!(ev.order().is_some());
        for k in 0..50 {
            let y = [0.25 + 7e-4 * (k as f64).sin(), 0.5 - 3e-4, (k as f64) / 12.0 + 9e-4];
            let v = ev.eval_point(&y);
            let d = f.eval(&y).re;
            assert!((v[0] - d).abs() < 1e-15, "{} vs {}", v[0], d);
            assert!((v[1] - 2.0 * d).abs() < 1e-15);
        }
        // Far points fall back to direct summation.
        let y = [0.3, 0.123, 0.777];
        assert!((ev.eval_point(&y)[0] - f.eval(&y).re).abs() < 1e-15);
    }
}
