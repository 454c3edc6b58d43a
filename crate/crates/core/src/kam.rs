//! The inductive conjugacy step and the full iteration.
//!
//! Maps are lifts `f(x) = Abar x + (0, phi) + df(x)` on `T^{d1} x T^{d2}` with
//! `Abar = A (+) Id`. A step solves the linearised equations in the common
//! eigenbasis, then recomputes the new errors exactly as `H o f o H^{-1}` on a
//! uniform grid, so the new pair is conjugate to the old one to grid precision.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohomology::{approximate_solve, cr_norm_on, SplitReport, TwistedEquation};
use crate::error::{KamError, Result};
use crate::exclusion::{eigen_set, exclude_set_to, in_d, in_d_scalar, next_level, ParamSet};
use crate::family::{FrequencyFamily, ParamFamily};
use crate::fourier::{FourierField, ModeNorm, VectorField};
use crate::grid::{DisplacedEvaluator, Grid};
use crate::lattice::{check_commuting, simultaneous_eigenbasis, IntMatrix, TorusAutomorphism};

const INVERSE_UPDATE_TOL: f64 = 1e-13;
const INVERSE_MAX_ITER: usize = 60;
const INVERSE_RESIDUAL_TOL: f64 = 1e-11;
/// Fixed-point contraction rate above which inversion uses Newton steps.
const NEWTON_SWITCH: f64 = 0.05;
/// Absolute accuracy of off-grid evaluations.
const EVAL_TOL: f64 = 2e-16;
/// Small-divisor exponent used to certify nodes.
pub const DIOPHANTINE_EXPONENT: f64 = 3.0;

/// A pair of commuting perturbed affine maps sampled at parameter nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionPair {
    pub d1: usize,
    pub d2: usize,
    pub a: TorusAutomorphism,
    pub b: TorusAutomorphism,
    pub phi: FrequencyFamily,
    pub psi: FrequencyFamily,
    pub df: ParamFamily<VectorField>,
    pub dg: ParamFamily<VectorField>,
}

/// One parameter node of a pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub df: VectorField,
    pub dg: VectorField,
    /// Commutation defect, when already known.
    #[serde(default)]
    pub defect: Option<f64>,
}

impl ActionPair {
    pub fn new(
        a: TorusAutomorphism,
        b: TorusAutomorphism,
        phi: FrequencyFamily,
        psi: FrequencyFamily,
        df: ParamFamily<VectorField>,
        dg: ParamFamily<VectorField>,
    ) -> Result<Self> {
        let d1 = a.dim();
        let d2 = phi.dim();
        if b.dim() != d1 || psi.dim() != d2 {
            return Err(KamError::Dimension("generators or frequencies differ in dimension".into()));
        }
        if df.nodes != dg.nodes {
            return Err(KamError::Dimension("df and dg sampled at different nodes".into()));
        }
        for v in df.values.iter().chain(&dg.values) {
            if v.components.len() != d1 + d2 || v.components.iter().any(|c| c.d1() != d1 || c.d2() != d2) {
                return Err(KamError::Dimension("perturbation field has the wrong shape".into()));
            }
        }
        if !check_commuting(&a, &b)? {
            return Err(KamError::NotCommuting);
        }
        Ok(ActionPair { d1, d2, a, b, phi, psi, df, dg })
    }

    /// The affine model itself at the given nodes.
    pub fn unperturbed(
        a: TorusAutomorphism,
        b: TorusAutomorphism,
        phi: FrequencyFamily,
        psi: FrequencyFamily,
        nodes: Vec<f64>,
        box_: usize,
    ) -> Result<Self> {
        let (d1, d2) = (a.dim(), phi.dim());
        let zero = VectorField::zeros(d1, d2, box_);
        let interval = phi.interval();
        let fam = ParamFamily::new(interval, nodes.clone(), vec![zero; nodes.len()])?;
        Self::new(a, b, phi, psi, fam.clone(), fam)
    }

    pub fn node_states(&self) -> Vec<NodeState> {
        self.df
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &t)| NodeState {
                t,
                phi: self.phi.eval(t),
                psi: self.psi.eval(t),
                df: self.df.values[i].clone(),
                dg: self.dg.values[i].clone(),
                defect: None,
            })
            .collect()
    }

    /// Elliptic averages of the perturbations, worst node.
    pub fn max_elliptic_average(&self) -> f64 {
        self.df
            .values
            .iter()
            .chain(&self.dg.values)
            .flat_map(|v| v.elliptic_average(self.d1))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn is_zero(v: &VectorField) -> bool {
    v.components.iter().all(|c| c.nnz() == 0)
}

fn block_diag(p: &DMatrix<Complex64>, extra: usize) -> DMatrix<Complex64> {
    let d1 = p.nrows();
    let mut out = DMatrix::from_element(d1 + extra, d1 + extra, Complex64::new(0.0, 0.0));
    out.view_mut((0, 0), (d1, d1)).copy_from(p);
    for i in d1..d1 + extra {
        out[(i, i)] = Complex64::new(1.0, 0.0);
    }
    out
}

/// Everything a step needs that does not depend on the node.
pub struct Workspace {
    pub d1: usize,
    pub d2: usize,
    pub a: TorusAutomorphism,
    pub b: TorusAutomorphism,
    pub abar: IntMatrix,
    pub bbar: IntMatrix,
    /// (lambda, mu) per eigen-coordinate, elliptic coordinates last.
    pub pairs: Vec<(Complex64, Complex64)>,
    p: DMatrix<Complex64>,
    p_inv: DMatrix<Complex64>,
    pub norm: ModeNorm,
    pub box_: usize,
    pub grid: Grid,
    points: Vec<f64>,
}

impl Workspace {
    /// `box_` is the Fourier box the errors are stored in; `g` the grid size
    /// (0 picks `4 * box_`).
    pub fn new(a: &TorusAutomorphism, b: &TorusAutomorphism, d2: usize, box_: usize, g: usize) -> Result<Self> {
        let d1 = a.dim();
        let basis = simultaneous_eigenbasis(a, b)?;
        let mut pairs: Vec<(Complex64, Complex64)> = basis.pairs.iter().map(|p| (p.lambda, p.mu)).collect();
        pairs.extend(std::iter::repeat((Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))).take(d2));
        let g = if g == 0 { 4 * box_.max(1) } else { g };
        if g < 4 * box_ {
            return Err(KamError::GridTooSmall { grid: g, box_, need: 4 * box_ });
        }
        let d = d1 + d2;
        let grid = Grid::new(d, g);
        let mut points = Vec::with_capacity(grid.len() * d);
        for i in 0..grid.len() {
            points.extend(grid.node(i));
        }
        Ok(Workspace {
            d1,
            d2,
            a: a.clone(),
            b: b.clone(),
            abar: a.matrix().embed_with_identity(d2),
            bbar: b.matrix().embed_with_identity(d2),
            pairs,
            p: block_diag(&basis.p, d2),
            p_inv: block_diag(&basis.p_inv, d2),
            norm: ModeNorm::new(a)?,
            box_,
            grid,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn npts(&self) -> usize {
        self.grid.len()
    }

    /// Grid nodes, flattened.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Node values of a vector field, flattened node-major.
    pub fn values(&self, v: &VectorField) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.npts() * d];
        for (c, comp) in v.components.iter().enumerate() {
            if comp.nnz() == 0 {
                continue;
            }
            for (i, z) in self.grid.sample(comp).iter().enumerate() {
                out[i * d + c] = z.re;
            }
        }
        out
    }

    /// Field with the workspace box from node values.
    pub fn from_values(&self, vals: &[f64]) -> Result<VectorField> {
        let d = self.dim();
        let mut comps = Vec::with_capacity(d);
        let mut buf = vec![0.0; self.npts()];
        for c in 0..d {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = vals[i * d + c];
            }
            comps.push(self.grid.from_grid(&buf, self.d1, self.d2, self.box_)?.real_part());
        }
        Ok(VectorField { components: comps })
    }

    /// C^r norm over the workspace nodes, worst component.
    pub fn cr_norm(&self, v: &VectorField, r: usize) -> f64 {
        v.components.iter().map(|c| cr_norm_on(c, r, &self.grid)).fold(0.0, f64::max)
    }

    /// Grid sup with a margin for the sup between nodes, capped by the
    /// coefficient l1 bound.
    fn sup_bound(&self, v: &VectorField) -> f64 {
        let l1 = v.components.iter().map(|c| c.l1()).fold(0.0, f64::max);
        (1.25 * max_abs(&self.values(v))).min(l1)
    }

    fn evaluator(&self, v: &VectorField, radius: f64) -> Result<DisplacedEvaluator> {
        DisplacedEvaluator::with_tolerance(&v.components, self.grid.size(), radius * (1.0 + 1e-9) + 1e-15, Some(EVAL_TOL))
    }

    /// Values of `v` at `base + delta` where `base` are lifted grid nodes.
    fn eval_displaced(&self, v: &VectorField, base: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        if is_zero(v) {
            return Ok(vec![0.0; base.len()]);
        }
        let ev = self.evaluator(v, max_abs(delta))?;
        let pts: Vec<f64> = base.iter().zip(delta).map(|(b, d)| b + d).collect();
        Ok(ev.eval_many(&pts))
    }

    fn apply_lin(&self, m: &IntMatrix, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(x.len());
        for p in x.chunks(d) {
            out.extend(m.apply_f64(p));
        }
        out
    }

    /// Grid inverse of `Id + h`.
    pub fn invert(&self, h: &VectorField) -> Result<Inverse> {
        let c1 = self.cr_norm(h, 1);
        if c1 > 0.5 {
            return Err(KamError::NotNearIdentity(c1));
        }
        let n = self.points.len();
        if is_zero(h) {
            return Ok(Inverse { grid: self.grid.size(), values: vec![0.0; n], iterations: 0, update: 0.0, residual: 0.0 });
        }
        let ev = self.evaluator(h, self.sup_bound(h))?;
        let mut hbar = vec![0.0; n];
        let mut pts = self.points.clone();
        let mut update = f64::INFINITY;
        let mut iterations = 0;
        let mut newton = false;
        let d = self.dim();
        while iterations < INVERSE_MAX_ITER {
            let previous = update;
            if newton {
                update = newton_sweep(&ev, &self.points, &mut hbar, d);
            } else {
                for ((p, z), hb) in pts.iter_mut().zip(&self.points).zip(&hbar) {
                    *p = z + hb;
                }
                let hv = ev.eval_many(&pts);
                update = 0.0;
                for (hb, v) in hbar.iter_mut().zip(&hv) {
                    update = update.max((*hb + v).abs());
                    *hb = -v;
                }
                // Slow contraction: switch to Newton steps.
                newton = iterations >= 1 && update > NEWTON_SWITCH * previous;
            }
            iterations += 1;
            if update <= INVERSE_UPDATE_TOL {
                break;
            }
        }
        for ((p, z), hb) in pts.iter_mut().zip(&self.points).zip(&hbar) {
            *p = z + hb;
        }
        let hv = ev.eval_many(&pts);
        let residual = hbar.iter().zip(&hv).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        if update > INVERSE_UPDATE_TOL || residual > INVERSE_RESIDUAL_TOL {
            return Err(KamError::NoConvergence(update.max(residual)));
        }
        Ok(Inverse { grid: self.grid.size(), values: hbar, iterations, update, residual })
    }

    /// `H o f o H^{-1} - f_shift` at the grid nodes (flattened node-major).
    pub fn conjugated_values(&self, lin: &IntMatrix, shift: &[f64], df: &VectorField, h: &VectorField, hbar: &[f64]) -> Result<Vec<f64>> {
        Ok(self.conjugate(lin, shift, df, h, hbar)?.e)
    }

    /// Zero-average field of the new error plus its elliptic averages.
    pub fn normalise(&self, e: &[f64]) -> Result<(VectorField, Vec<f64>)> {
        self.split_average(e)
    }

    /// `H o f o H^{-1} - f_shift` at the grid nodes, for
    /// `f = lin x + (0, shift) + df` and `H = Id + h`.
    fn conjugate(&self, lin: &IntMatrix, shift: &[f64], df: &VectorField, h: &VectorField, hbar: &[f64]) -> Result<Conjugated> {
        // x = z + hbar(z); f(x) = lin z + shift + delta.
        let dfx = self.eval_displaced(df, &self.points, hbar)?;
        let mut delta = self.apply_lin(lin, hbar);
        for (d, v) in delta.iter_mut().zip(&dfx) {
            *d += v;
        }
        let lz = self.apply_lin(lin, &self.points);
        let dfz = self.values(df);
        let hz = self.values(h);
        let h_rot = h.rotate(shift);
        let (e, h_at_fz) = if is_zero(h) {
            (delta.clone(), vec![0.0; delta.len()])
        } else {
            let ev = self.evaluator(&h_rot, max_abs(&delta).max(max_abs(&dfz)))?;
            let pts: Vec<f64> = lz.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let hv = ev.eval_many(&pts);
            let pts: Vec<f64> = lz.iter().zip(&dfz).map(|(a, b)| a + b).collect();
            let hf = ev.eval_many(&pts);
            (delta.iter().zip(&hv).map(|(a, b)| a + b).collect(), hf)
        };
        Ok(Conjugated { e, dfz, hz, h_at_fz })
    }

    /// Splits node values of a new error into a zero-average field and the
    /// elliptic averages.
    fn split_average(&self, e: &[f64]) -> Result<(VectorField, Vec<f64>)> {
        let mut v = self.from_values(e)?;
        let zero = vec![0i64; self.dim()];
        let mut avg = Vec::with_capacity(self.d2);
        for c in &mut v.components[self.d1..] {
            avg.push(c.get(&zero).re);
            c.set(&zero, Complex64::new(0.0, 0.0))?;
        }
        Ok((v, avg))
    }

    /// Grid sup of `H o f - f_new o H` with the data of `conjugate`.
    fn bookkeeping(&self, lin: &IntMatrix, c: &Conjugated, shift_change: &[f64], df_new: &VectorField) -> Result<f64> {
        let lh = self.apply_lin(lin, &c.hz);
        let fn_at = self.eval_displaced(df_new, &self.points, &c.hz)?;
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..c.e.len() {
            let comp = i % d;
            let mut r = c.dfz[i] + c.h_at_fz[i] - lh[i] - fn_at[i];
            if comp >= self.d1 {
                r -= shift_change[comp - self.d1];
            }
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }

    /// Grid sup of `f o g - g o f`.
    pub fn commutation_defect(&self, phi: &[f64], psi: &[f64], df: &VectorField, dg: &VectorField) -> Result<f64> {
        let dfz = self.values(df);
        let dgz = self.values(dg);
        let bz = self.apply_lin(&self.bbar, &self.points);
        let az = self.apply_lin(&self.abar, &self.points);
        let f_at = self.eval_displaced(&df.rotate(psi), &bz, &dgz)?;
        let g_at = self.eval_displaced(&dg.rotate(phi), &az, &dfz)?;
        let adg = self.apply_lin(&self.abar, &dgz);
        let bdf = self.apply_lin(&self.bbar, &dfz);
        Ok((0..dfz.len()).map(|i| (adg[i] + f_at[i] - bdf[i] - g_at[i]).abs()).fold(0.0, f64::max))
    }

    /// Whether the frequency passes the small-divisor check at level n.
    pub fn certified(&self, phi: &[f64], n: usize) -> Result<bool> {
        let eigs = eigen_set(&self.a)?;
        Ok(if phi.len() == 1 {
            in_d_scalar(phi[0], n, &eigs, DIOPHANTINE_EXPONENT)
        } else {
            in_d(phi, n, &eigs, DIOPHANTINE_EXPONENT).pass
        })
    }
}

/// One Newton step for `y + h(y) = z` at every node, `y = z + hbar`.
/// Returns the largest update.
fn newton_sweep(ev: &DisplacedEvaluator, points: &[f64], hbar: &mut [f64], d: usize) -> f64 {
    let mut val = vec![0.0; d];
    let mut jac = vec![0.0; d * d];
    let mut mono = Vec::new();
    let mut y = vec![0.0; d];
    let mut update: f64 = 0.0;
    for (z, hb) in points.chunks(d).zip(hbar.chunks_mut(d)) {
        for i in 0..d {
            y[i] = z[i] + hb[i];
        }
        ev.eval_with_gradient_into(&y, &mut val, &mut jac, &mut mono);
        // (I + Dh) step = -(hbar + h(y))
        for i in 0..d {
            jac[i * d + i] += 1.0;
            val[i] = -(hb[i] + val[i]);
        }
        solve_in_place(&mut jac, &mut val, d);
        for i in 0..d {
            hb[i] += val[i];
            update = update.max(val[i].abs());
        }
    }
    update
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
fn solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) {
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap_or(c);
        if p != c {
            for k in 0..n {
                a.swap(c * n + k, p * n + k);
            }
            b.swap(c, p);
        }
        let piv = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
            b[r] -= f * b[c];
        }
    }
    for c in (0..n).rev() {
        let mut s = b[c];
        for k in c + 1..n {
            s -= a[c * n + k] * b[k];
        }
        b[c] = s / a[c * n + c];
    }
}

struct Conjugated {
    e: Vec<f64>,
    dfz: Vec<f64>,
    hz: Vec<f64>,
    h_at_fz: Vec<f64>,
}

/// Grid values of the inverse displacement: `(Id + h)^{-1}(z) = z + values(z)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inverse {
    pub grid: usize,
    /// Flattened node-major.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub update: f64,
    /// Grid sup of `(Id + h) o (Id + hbar) - Id`.
    pub residual: f64,
}

/// Inverts `Id + h` on the uniform grid of size `g`.
pub fn invert_near_identity(h: &VectorField, g: usize) -> Result<Inverse> {
    let c = h.components.first().ok_or_else(|| KamError::Precondition("empty field".into()))?;
    let (d1, d2) = (c.d1(), c.d2());
    let dim = d1 + d2;
    let grid = Grid::new(dim, g);
    let mut points = Vec::with_capacity(grid.len() * dim);
    for i in 0..grid.len() {
        points.extend(grid.node(i));
    }
    let ws = Workspace {
        d1,
        d2,
        a: TorusAutomorphism::identity(d1),
        b: TorusAutomorphism::identity(d1),
        abar: IntMatrix::identity(dim),
        bbar: IntMatrix::identity(dim),
        pairs: vec![],
        p: DMatrix::identity(dim, dim),
        p_inv: DMatrix::identity(dim, dim),
        norm: ModeNorm::max_norm(d1),
        box_: g / 4,
        grid,
        points,
    };
    ws.invert(h)
}

/// Per-node diagnostics of one step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StepNorms {
    pub eps_in: f64,
    pub eps_out: f64,
    pub h_sup: f64,
    pub h_c1: f64,
    pub freq_shift: f64,
    pub bookkeeping: f64,
    pub commutation_in: f64,
    pub commutation_out: f64,
    pub elliptic_average_out: f64,
    pub inversion_residual: f64,
    pub inversion_iterations: usize,
    pub split: Vec<SplitReport>,
}

/// Output of the step at one node.
#[derive(Debug, Clone)]
pub struct NodeStep {
    pub h: VectorField,
    pub next: NodeState,
    pub norms: StepNorms,
}

/// Settings of a single step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepConfig {
    pub r: usize,
    pub r_prime: usize,
    /// Skip the independent bookkeeping and commutation checks.
    pub fast: bool,
    /// Check `H o f - f_new o H` on the grid (ignored when `fast`).
    pub bookkeeping: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig { r: 0, r_prime: 2, fast: false, bookkeeping: true }
    }
}

/// One conjugacy step at one node, truncating at `n`.
pub fn node_step(ws: &Workspace, st: &NodeState, n: f64, cfg: &StepConfig) -> Result<NodeStep> {
    let d = ws.dim();
    let v = st.df.eigen_decompose(&ws.p_inv);
    let w = st.dg.eigen_decompose(&ws.p_inv);
    let mut coords = Vec::with_capacity(d);
    let mut split = Vec::with_capacity(d);
    for i in 0..d {
        let (lam, mu) = ws.pairs[i];
        let (vi, wi) = (&v.components[i], &w.components[i]);
        if vi.nnz() == 0 && wi.nnz() == 0 {
            coords.push(FourierField::zeros(ws.d1, ws.d2, ws.box_));
            continue;
        }
        let eq_a = TwistedEquation::new(lam, ws.a.clone(), st.phi.clone(), n);
        let eq_b = TwistedEquation::new(mu, ws.b.clone(), st.psi.clone(), n);
        let comm = eq_a.apply(wi)?.sub(&eq_b.apply(vi)?);
        let sol = approximate_solve(vi, wi, &eq_a, &eq_b, Some(&comm), &ws.norm, cfg.r, cfg.r_prime)?;
        coords.push(sol.h);
        split.push(sol.report);
    }
    let h = VectorField { components: coords }.eigen_reassemble(&ws.p);
    let h = VectorField { components: h.components.iter().map(|c| c.real_part()).collect() };
    let h_c1 = ws.cr_norm(&h, 1);
    if h_c1 >= 0.5 {
        return Err(KamError::NotNearIdentity(h_c1));
    }
    let inv = ws.invert(&h)?;
    let cf = ws.conjugate(&ws.abar, &st.phi, &st.df, &h, &inv.values)?;
    let cg = ws.conjugate(&ws.bbar, &st.psi, &st.dg, &h, &inv.values)?;
    let (df_new, af) = ws.split_average(&cf.e)?;
    let (dg_new, ag) = ws.split_average(&cg.e)?;
    let phi_new: Vec<f64> = st.phi.iter().zip(&af).map(|(p, a)| p + a).collect();
    let psi_new: Vec<f64> = st.psi.iter().zip(&ag).map(|(p, a)| p + a).collect();
    let mut norms = StepNorms {
        eps_in: max_abs(&cf.dfz).max(max_abs(&ws.values(&st.dg))),
        eps_out: max_abs(&cf.e).max(max_abs(&cg.e)),
        h_sup: max_abs(&cf.hz),
        h_c1,
        freq_shift: max_abs(&af).max(max_abs(&ag)),
        elliptic_average_out: df_new.elliptic_average(ws.d1).iter().chain(&dg_new.elliptic_average(ws.d1)).fold(0.0, |m, x| m.max(x.abs())),
        inversion_residual: inv.residual,
        inversion_iterations: inv.iterations,
        split,
        ..Default::default()
    };
    if !cfg.fast {
        if cfg.bookkeeping {
            let bf = ws.bookkeeping(&ws.abar, &cf, &af, &df_new)?;
            let bg = ws.bookkeeping(&ws.bbar, &cg, &ag, &dg_new)?;
            norms.bookkeeping = bf.max(bg);
        }
        norms.commutation_in = match st.defect {
            Some(d) => d,
            None => ws.commutation_defect(&st.phi, &st.psi, &st.df, &st.dg)?,
        };
        norms.commutation_out = ws.commutation_defect(&phi_new, &psi_new, &df_new, &dg_new)?;
    }
    Ok(NodeStep {
        h,
        next: NodeState {
            t: st.t,
            phi: phi_new,
            psi: psi_new,
            df: df_new,
            dg: dg_new,
            defect: if cfg.fast { None } else { Some(norms.commutation_out) },
        },
        norms,
    })
}

/// Result of a step over all nodes of a pair.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub h: ParamFamily<VectorField>,
    pub phi_new: FrequencyFamily,
    pub psi_new: FrequencyFamily,
    pub df_new: ParamFamily<VectorField>,
    pub dg_new: ParamFamily<VectorField>,
    pub norms: Vec<StepNorms>,
}

impl StepResult {
    /// The conjugated pair as a new `ActionPair`.
    pub fn pair(&self, old: &ActionPair) -> ActionPair {
        ActionPair {
            d1: old.d1,
            d2: old.d2,
            a: old.a.clone(),
            b: old.b.clone(),
            phi: self.phi_new.clone(),
            psi: self.psi_new.clone(),
            df: self.df_new.clone(),
            dg: self.dg_new.clone(),
        }
    }
}

fn sampled(interval: (f64, f64), nodes: &[f64], values: Vec<Vec<f64>>) -> Result<FrequencyFamily> {
    FrequencyFamily::samples(interval, nodes.to_vec(), values)
}

/// The step at every node of `pair`, with errors stored in box `box_`.
pub fn inductive_step(pair: &ActionPair, n: f64, box_: usize) -> Result<StepResult> {
    let box_ = box_.max(pair.df.values.iter().chain(&pair.dg.values).map(|v| v.box_size()).max().unwrap_or(1));
    let ws = Workspace::new(&pair.a, &pair.b, pair.d2, box_, 0)?;
    let states = pair.node_states();
    for s in &states {
        if !ws.certified(&s.phi, n.ceil() as usize)? {
            return Err(KamError::Precondition(format!("node t = {} is not certified at N = {n}", s.t)));
        }
    }
    let cfg = StepConfig::default();
    let steps: Vec<NodeStep> = states.par_iter().map(|s| node_step(&ws, s, n, &cfg)).collect::<Result<_>>()?;
    let nodes = pair.df.nodes.clone();
    let interval = pair.df.interval;
    Ok(StepResult {
        h: ParamFamily::new(interval, nodes.clone(), steps.iter().map(|s| s.h.clone()).collect())?,
        phi_new: sampled(pair.phi.interval(), &nodes, steps.iter().map(|s| s.next.phi.clone()).collect())?,
        psi_new: sampled(pair.psi.interval(), &nodes, steps.iter().map(|s| s.next.psi.clone()).collect())?,
        df_new: ParamFamily::new(interval, nodes.clone(), steps.iter().map(|s| s.next.df.clone()).collect())?,
        dg_new: ParamFamily::new(interval, nodes, steps.iter().map(|s| s.next.dg.clone()).collect())?,
        norms: steps.into_iter().map(|s| s.norms).collect(),
    })
}

/// The composed conjugacy `G = H_n o ... o H_1` with `H_k = Id + steps[k-1]`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConjugacyChain {
    pub steps: Vec<VectorField>,
}

impl ConjugacyChain {
    pub fn push(&mut self, h: VectorField) {
        self.steps.push(h);
    }

    /// `G^{-1}(z) - z` at the workspace nodes.
    pub fn inverse_on_grid(&self, ws: &Workspace) -> Result<Vec<f64>> {
        let mut disp = vec![0.0; ws.points.len()];
        for h in self.steps.iter().rev() {
            if is_zero(h) {
                continue;
            }
            let ev = ws.evaluator(h, max_abs(&disp) + ws.sup_bound(h))?;
            // y = x - h(y), x = z + disp.
            let x = disp.clone();
            let mut y = x.clone();
            let mut pts = vec![0.0; y.len()];
            let mut converged = false;
            for _ in 0..INVERSE_MAX_ITER {
                for ((p, z), yy) in pts.iter_mut().zip(&ws.points).zip(&y) {
                    *p = z + yy;
                }
                let hv = ev.eval_many(&pts);
                let mut upd: f64 = 0.0;
                for i in 0..y.len() {
                    let ny = x[i] - hv[i];
                    upd = upd.max((ny - y[i]).abs());
                    y[i] = ny;
                }
                if upd <= 1e-15 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(KamError::NoConvergence(f64::NAN));
            }
            disp = y;
        }
        Ok(disp)
    }

    /// Applies `G` to the points `base + (0, shift) + delta`, returning the
    /// new `delta`. `base` are lifted grid nodes.
    pub fn forward(&self, ws: &Workspace, base: &[f64], shift: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        let mut delta = delta.to_vec();
        for h in &self.steps {
            let hv = ws.eval_displaced(&h.rotate(shift), base, &delta)?;
            for (d, v) in delta.iter_mut().zip(&hv) {
                *d += v;
            }
        }
        Ok(delta)
    }

    /// Grid sup of `G o G^{-1} - Id`.
    pub fn round_trip_error(&self, ws: &Workspace) -> Result<f64> {
        self.round_trip_with(ws, &self.inverse_on_grid(ws)?)
    }

    fn round_trip_with(&self, ws: &Workspace, inv: &[f64]) -> Result<f64> {
        let zero = vec![0.0; ws.d2];
        let fwd = self.forward(ws, &ws.points, &zero, inv)?;
        Ok(max_abs(&fwd))
    }
}

/// Grid sup of `G o f o G^{-1} - f_target` for `f = lin x + (0, shift) + df`.
pub fn conjugation_error(
    ws: &Workspace,
    chain: &ConjugacyChain,
    lin: &IntMatrix,
    shift: &[f64],
    df: &VectorField,
    target: &[f64],
) -> Result<f64> {
    conjugation_error_with(ws, chain, &chain.inverse_on_grid(ws)?, lin, shift, df, target)
}

fn conjugation_error_with(
    ws: &Workspace,
    chain: &ConjugacyChain,
    inv: &[f64],
    lin: &IntMatrix,
    shift: &[f64],
    df: &VectorField,
    target: &[f64],
) -> Result<f64> {
    let inv = inv.to_vec();
    let dfx = ws.eval_displaced(df, &ws.points, &inv)?;
    let mut delta = ws.apply_lin(lin, &inv);
    for (d, v) in delta.iter_mut().zip(&dfx) {
        *d += v;
    }
    let lz = ws.apply_lin(lin, &ws.points);
    let out = chain.forward(ws, &lz, shift, &delta)?;
    let d = ws.dim();
    let mut worst: f64 = 0.0;
    for (i, v) in out.iter().enumerate() {
        let c = i % d;
        let r = if c >= ws.d1 { v + shift[c - ws.d1] - target[c - ws.d1] } else { *v };
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Scheme settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    pub n0: f64,
    pub max_iterations: usize,
    /// Stop once every node's error is at most this.
    pub target: f64,
    pub error_floor: f64,
    pub m: f64,
    pub n_cap: usize,
    /// Fourier box of the stored errors.
    pub box_: usize,
    /// Grid size; 0 picks `4 * box_`.
    pub grid: usize,
    pub r0: usize,
    pub split_r: usize,
    pub split_r_prime: usize,
    /// Verify every surviving node by evaluating the composed chain.
    pub verify: bool,
    /// Run the per-step bookkeeping check.
    pub bookkeeping: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            n0: 8.0,
            max_iterations: 10,
            target: 1e-12,
            error_floor: 1e-12,
            m: 2.5,
            n_cap: 2000,
            box_: 3,
            grid: 0,
            r0: 2,
            split_r: 0,
            split_r_prime: 2,
            verify: true,
            bookkeeping: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Truncation level used by the step.
    pub n: f64,
    pub kept_measure: f64,
    pub measure_bound: f64,
    pub removed: f64,
    pub discarded: f64,
    pub nodes: usize,
    pub eps0: f64,
    pub eps_r0: f64,
    pub max_h_norm: f64,
    pub max_freq_shift: f64,
    pub max_bookkeeping: f64,
    pub max_commutation_in: f64,
    pub max_commutation_out: f64,
    /// Largest per-node increase of the commutation defect in this step.
    pub max_commutation_growth: f64,
    pub max_elliptic_average: f64,
    pub max_inversion_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Converged,
    NotConverged,
    Excluded { iteration: usize, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeOutcome {
    pub t: f64,
    pub status: NodeStatus,
    pub steps: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Error of the last stored pair.
    pub eps: f64,
    pub conjugation_error_f: Option<f64>,
    pub conjugation_error_g: Option<f64>,
    pub chain_round_trip: Option<f64>,
    #[serde(skip)]
    pub chain: ConjugacyChain,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemeReport {
    /// Record 0 describes the input pair.
    pub iterations: Vec<IterationRecord>,
    pub nodes: Vec<NodeOutcome>,
    pub kept: ParamSet,
    pub surviving_fraction: f64,
    pub converged: bool,
}

impl SchemeReport {
    /// Rows of the per-iteration table.
    pub fn csv_rows(&self) -> Vec<(usize, f64, f64, f64, f64, f64)> {
        self.iterations.iter().map(|r| (r.iteration, r.n, r.kept_measure, r.eps0, r.eps_r0, r.max_h_norm)).collect()
    }

    pub fn max_conjugation_error(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.status, NodeStatus::Excluded { .. }))
            .flat_map(|n| [n.conjugation_error_f, n.conjugation_error_g])
            .map(|e| e.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

fn eps_of(ws: &Workspace, st: &NodeState, r0: usize) -> (f64, f64) {
    let e0 = max_abs(&ws.values(&st.df)).max(max_abs(&ws.values(&st.dg)));
    let er = ws.cr_norm(&st.df, r0).max(ws.cr_norm(&st.dg, r0));
    (e0, er)
}

struct Live {
    index: usize,
    state: NodeState,
    chain: ConjugacyChain,
    defect: f64,
}

/// The full iteration: exclusion, then a step on the kept nodes, until the
/// error target, the iteration cap, or an empty kept set.
pub fn run_scheme(pair: &ActionPair, cfg: &SchemeConfig) -> Result<SchemeReport> {
    let box_ = cfg.box_.max(pair.df.values.iter().chain(&pair.dg.values).map(|v| v.box_size()).max().unwrap_or(1));
    let ws = Workspace::new(&pair.a, &pair.b, pair.d2, box_, cfg.grid)?;
    let eigs = eigen_set(&pair.a)?;
    let unit = eigs.iter().filter(|l| (l.norm() - 1.0).abs() <= 1e-12).count();
    let states = pair.node_states();
    let initial = states.clone();
    let (lo, hi) = pair.phi.interval();
    let mut kept = ParamSet::interval(lo, hi);
    let mut report = SchemeReport::default();
    let mut outcomes: Vec<Option<NodeOutcome>> = vec![None; states.len()];
    let defects: Vec<f64> =
        states.par_iter().map(|s| ws.commutation_defect(&s.phi, &s.psi, &s.df, &s.dg)).collect::<Result<_>>()?;
    let mut live: Vec<Live> = states
        .into_iter()
        .zip(defects)
        .enumerate()
        .map(|(index, (mut state, defect))| {
            state.defect = Some(defect);
            Live { index, state, chain: ConjugacyChain::default(), defect }
        })
        .collect();
    let eps: Vec<(f64, f64)> = live.par_iter().map(|l| eps_of(&ws, &l.state, cfg.r0)).collect();
    report.iterations.push(IterationRecord {
        iteration: 0,
        n: cfg.n0,
        kept_measure: kept.measure(),
        measure_bound: kept.measure(),
        nodes: live.len(),
        eps0: eps.iter().map(|e| e.0).fold(0.0, f64::max),
        eps_r0: eps.iter().map(|e| e.1).fold(0.0, f64::max),
        max_commutation_out: live.iter().map(|l| l.defect).fold(0.0, f64::max),
        max_elliptic_average: pair.max_elliptic_average(),
        ..Default::default()
    });
    let mut eps_now: Vec<f64> = eps.iter().map(|e| e.0).collect();
    let mut n = cfg.n0;
    let mut bound = kept.measure();
    let step_cfg = StepConfig { r: cfg.split_r, r_prime: cfg.split_r_prime, fast: false, bookkeeping: cfg.bookkeeping };
    for iteration in 1..=cfg.max_iterations {
        if live.is_empty() || eps_now.iter().all(|&e| e <= cfg.target.max(cfg.error_floor)) {
            break;
        }
        // Exclusion on the current frequencies.
        let n_next = next_level(n).min(cfg.n_cap).max(n.ceil() as usize);
        let nodes: Vec<f64> = live.iter().map(|l| l.state.t).collect();
        let (removed, discarded);
        if pair.d2 == 1 && nodes.len() >= 2 {
            let fam = FrequencyFamily::samples((lo, hi), nodes.clone(), live.iter().map(|l| l.state.phi.clone()).collect())?;
            let (k, cert) = exclude_set_to(&kept, &fam, n, n_next, cfg.m, &eigs)?;
            kept = k;
            removed = cert.removed;
            discarded = cert.discarded;
        } else {
            removed = 0.0;
            discarded = 0.0;
        }
        bound *= (1.0 - 2.0 * unit as f64 * cfg.m * cfg.m / n_next as f64).max(0.0);
        let mut next_live = Vec::with_capacity(live.len());
        for l in live {
            let reason = if pair.d2 == 1 && !kept.contains(l.state.t) {
                Some("excluded by resonance removal".to_string())
            } else if !ws.certified(&l.state.phi, n_next)? {
                Some(format!("frequency not certified at N = {n_next}"))
            } else {
                None
            };
            match reason {
                Some(reason) => outcomes[l.index] = Some(outcome(&l, NodeStatus::Excluded { iteration, reason }, f64::NAN)),
                None => next_live.push(l),
            }
        }
        live = next_live;
        n = n_next as f64;
        let results: Vec<Result<NodeStep>> = live.par_iter().map(|l| node_step(&ws, &l.state, n, &step_cfg)).collect();
        let mut rec = IterationRecord {
            iteration,
            n,
            kept_measure: kept.measure(),
            measure_bound: bound,
            removed,
            discarded,
            max_commutation_growth: f64::NEG_INFINITY,
            ..Default::default()
        };
        let mut next_live = Vec::with_capacity(live.len());
        for (mut l, res) in live.into_iter().zip(results) {
            match res {
                Ok(step) => {
                    let nm = &step.norms;
                    rec.max_h_norm = rec.max_h_norm.max(nm.h_c1);
                    rec.max_freq_shift = rec.max_freq_shift.max(nm.freq_shift);
                    rec.max_bookkeeping = rec.max_bookkeeping.max(nm.bookkeeping);
                    rec.max_commutation_in = rec.max_commutation_in.max(nm.commutation_in);
                    rec.max_commutation_out = rec.max_commutation_out.max(nm.commutation_out);
                    rec.max_commutation_growth = rec.max_commutation_growth.max(nm.commutation_out - nm.commutation_in);
                    rec.max_elliptic_average = rec.max_elliptic_average.max(nm.elliptic_average_out);
                    rec.max_inversion_residual = rec.max_inversion_residual.max(nm.inversion_residual);
                    l.defect = nm.commutation_out;
                    l.chain.push(step.h);
                    l.state = step.next;
                    next_live.push(l);
                }
                Err(e) => {
                    let reason = match e {
                        KamError::NotNearIdentity(x) => format!("condition (C2) violated: |h|_1 = {x:.3e}"),
                        other => other.to_string(),
                    };
                    outcomes[l.index] = Some(outcome(&l, NodeStatus::Excluded { iteration, reason }, f64::NAN));
                }
            }
        }
        live = next_live;
        if live.is_empty() {
            rec.max_commutation_growth = 0.0;
        }
        let eps: Vec<(f64, f64)> = live.par_iter().map(|l| eps_of(&ws, &l.state, cfg.r0)).collect();
        eps_now = eps.iter().map(|e| e.0).collect();
        rec.nodes = live.len();
        rec.eps0 = eps.iter().map(|e| e.0).fold(0.0, f64::max);
        rec.eps_r0 = eps.iter().map(|e| e.1).fold(0.0, f64::max);
        report.iterations.push(rec);
    }
    let target = cfg.target.max(cfg.error_floor);
    let verified: Vec<(usize, NodeOutcome)> = live
        .par_iter()
        .zip(&eps_now)
        .map(|(l, &e)| {
            let status = if e <= target { NodeStatus::Converged } else { NodeStatus::NotConverged };
            let mut o = outcome(l, status, e);
            if cfg.verify {
                let s0 = &initial[l.index];
                let inv = l.chain.inverse_on_grid(&ws)?;
                o.conjugation_error_f =
                    Some(conjugation_error_with(&ws, &l.chain, &inv, &ws.abar, &s0.phi, &s0.df, &l.state.phi)?);
                o.conjugation_error_g =
                    Some(conjugation_error_with(&ws, &l.chain, &inv, &ws.bbar, &s0.psi, &s0.dg, &l.state.psi)?);
                o.chain_round_trip = Some(l.chain.round_trip_with(&ws, &inv)?);
            }
            Ok((l.index, o))
        })
        .collect::<Result<_>>()?;
    for (i, o) in verified {
        outcomes[i] = Some(o);
    }
    report.nodes = outcomes.into_iter().map(|o| o.expect("every node has an outcome")).collect();
    let total = report.nodes.len().max(1) as f64;
    let alive = report.nodes.iter().filter(|o| !matches!(o.status, NodeStatus::Excluded { .. })).count();
    report.surviving_fraction = alive as f64 / total;
    report.converged = alive > 0 && report.nodes.iter().all(|o| !matches!(o.status, NodeStatus::NotConverged));
    report.kept = kept;
    Ok(report)
}

fn outcome(l: &Live, status: NodeStatus, eps: f64) -> NodeOutcome {
    NodeOutcome {
        t: l.state.t,
        status,
        steps: l.chain.steps.len(),
        phi: l.state.phi.clone(),
        psi: l.state.psi.clone(),
        eps,
        conjugation_error_f: None,
        conjugation_error_g: None,
        chain_round_trip: None,
        chain: l.chain.clone(),
    }
}
