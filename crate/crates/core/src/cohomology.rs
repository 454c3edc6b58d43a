//! Twisted cohomological equations `lambda h - h o f_phi = v` over
//! `f_phi(x, theta) = (A x, theta + phi)`.
//!
//! Per mode the equation reads `lambda h_{n,m} - e(m.phi) h_{A* n, m} = v_{n,m}`
//! with `A* = (A^t)^{-1}`. Writing `lambda_m = e(-m.phi) lambda` and
//! `v' = e(-m.phi) v`, it becomes `lambda_m h_n - h_{A* n} = v'_n` along each
//! dual orbit, which is solved by a finite sum on truncated data.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::fourier::{box_indices, cis, FourierField, ModeNorm, WORKING_BOX_LIMIT};
use crate::grid::Grid;
use crate::lattice::{find_pivot, TorusAutomorphism, MODULUS_TOL};

/// Longest orbit segment walked before giving up.
pub const ORBIT_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Contracting,
    Neutral,
    Expanding,
}

#[derive(Debug, Clone)]
pub struct TwistedEquation {
    pub lambda: Complex64,
    pub a: TorusAutomorphism,
    pub phi: Vec<f64>,
    /// Truncation level N; also the frequency cutoff for n = 0 modes and
    /// the small-divisor threshold N^{-3}.
    pub n_trunc: f64,
}

impl TwistedEquation {
    pub fn new(lambda: Complex64, a: TorusAutomorphism, phi: Vec<f64>, n_trunc: f64) -> Self {
        TwistedEquation { lambda, a, phi, n_trunc }
    }

    pub fn regime(&self) -> Regime {
        let r = self.lambda.norm();
        if r > 1.0 + MODULUS_TOL {
            Regime::Expanding
        } else if r < 1.0 - MODULUS_TOL {
            Regime::Contracting
        } else {
            Regime::Neutral
        }
    }

    fn phase(&self, m: &[i64]) -> f64 {
        m.iter().zip(&self.phi).map(|(mi, p)| *mi as f64 * p).sum()
    }

    pub fn lambda_m(&self, m: &[i64]) -> Complex64 {
        cis(-self.phase(m)) * self.lambda
    }

    /// `lambda h - h o f_phi` on coefficients.
    pub fn apply(&self, h: &FourierField) -> Result<FourierField> {
        Ok(h.scale(self.lambda).sub(&h.compose_affine(&self.a, &self.phi)?))
    }
}

/// A segment of one dual orbit: `positions[k+1] = A* positions[k]`, long
/// enough to contain every point of the orbit inside the box, plus the pivot.
#[derive(Debug, Clone)]
pub struct OrbitClass {
    pub positions: Vec<Vec<i64>>,
    pub pivot: usize,
}

/// All dual orbits meeting a box, each recorded once.
#[derive(Debug, Clone)]
pub struct OrbitAtlas {
    pub box_: usize,
    pub classes: Vec<OrbitClass>,
}

fn in_box(x: &[i64], b: usize) -> bool {
    x.iter().all(|v| v.unsigned_abs() as usize <= b)
}

impl OrbitAtlas {
    pub fn build(a: &TorusAutomorphism, b: usize) -> Result<Self> {
        Self::build_from(a, b, box_indices(a.dim(), b))
    }

    /// The classes meeting the support of `v`, for the box of `v`.
    pub fn for_support(a: &TorusAutomorphism, v: &FourierField) -> Result<Self> {
        let d1 = a.dim();
        let mut seeds: Vec<Vec<i64>> = v.support().map(|(idx, _)| idx[..d1].to_vec()).collect();
        seeds.sort();
        seeds.dedup();
        Self::build_from(a, v.box_size(), seeds.into_iter())
    }

    fn build_from(a: &TorusAutomorphism, b: usize, seeds: impl Iterator<Item = Vec<i64>>) -> Result<Self> {
        let dual = a.dual();
        let coords = dual.eigen_coords()?;
        let fwd = a.dual_matrix().clone();
        let bwd = a.matrix().transpose();
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        let mut classes = Vec::new();
        for n in seeds {
            if n.iter().all(|&x| x == 0) || seen.contains(&n) {
                continue;
            }
            let mut back = Vec::new();
            let mut cur = n.clone();
            loop {
                if back.len() > ORBIT_CAP {
                    return Err(KamError::SearchBound(n));
                }
                match bwd.apply(&cur) {
                    Ok(p) if !coords.escaped(&p, b, false) => {
                        back.push(p.clone());
                        cur = p;
                    }
                    _ => break,
                }
            }
            let mut positions: Vec<Vec<i64>> = back.into_iter().rev().collect();
            positions.push(n.clone());
            cur = n.clone();
            loop {
                if positions.len() > 2 * ORBIT_CAP {
                    return Err(KamError::SearchBound(n));
                }
                match fwd.apply(&cur) {
                    Ok(p) if !coords.escaped(&p, b, true) => {
                        positions.push(p.clone());
                        cur = p;
                    }
                    _ => break,
                }
            }
            // Trim to the in-box span.
            let first = positions.iter().position(|p| in_box(p, b)).expect("n is in the box");
            let last = positions.iter().rposition(|p| in_box(p, b)).expect("n is in the box");
            let mut positions: Vec<Vec<i64>> = positions[first..=last].to_vec();
            for p in &positions {
                if in_box(p, b) {
                    seen.insert(p.clone());
                }
            }
            let (_, shift) = find_pivot(a, &positions[0])?;
            let pivot = if shift < 0 {
                let mut pre = Vec::new();
                let mut c = positions[0].clone();
                for _ in 0..(-shift) {
                    c = bwd.apply(&c)?;
                    pre.push(c.clone());
                }
                pre.reverse();
                pre.extend(positions);
                positions = pre;
                0
            } else {
                let s = shift as usize;
                while positions.len() <= s {
                    let next = fwd.apply(positions.last().unwrap())?;
                    positions.push(next);
                }
                s
            };
            classes.push(OrbitClass { positions, pivot });
        }
        Ok(OrbitAtlas { box_: b, classes })
    }
}

/// Twisted values `v'` along an orbit segment for a fixed m.
fn twisted_values(v: &FourierField, eq: &TwistedEquation, positions: &[Vec<i64>], m: &[i64]) -> Vec<Complex64> {
    let tw = cis(-eq.phase(m));
    positions.iter().map(|p| v.get_nm(p, m) * tw).collect()
}

/// Obstruction at `positions[at]` from twisted values, with the sum of term
/// magnitudes (used to judge roundoff).
fn orbit_obstruction(vals: &[Complex64], lm: Complex64, at: usize) -> (Complex64, f64) {
    let inv = 1.0 / lm;
    let mut s = Complex64::new(0.0, 0.0);
    let mut mag = 0.0;
    for (j, v) in vals.iter().enumerate() {
        if v.re == 0.0 && v.im == 0.0 {
            continue;
        }
        let w = inv.powi(j as i32 - at as i32 + 1);
        s += w * v;
        mag += w.norm() * v.norm();
    }
    (s, mag)
}

/// O_{n,m}(v) = sum_k lambda_m^{-(k+1)} v'_{(A*)^k n, m}, summed over the
/// part of the dual orbit inside the support box.
pub fn obstruction(v: &FourierField, eq: &TwistedEquation, n: &[i64], m: &[i64]) -> Result<Complex64> {
    if n.iter().all(|&x| x == 0) {
        return Err(KamError::Precondition("obstructions are defined for n != 0".into()));
    }
    let b = v.box_size();
    let dual = eq.a.dual();
    let coords = dual.eigen_coords()?;
    let lm = eq.lambda_m(m);
    let tw = cis(-eq.phase(m));
    let mut total = Complex64::new(0.0, 0.0);
    for (mat, forward) in [(eq.a.dual_matrix().clone(), true), (eq.a.matrix().transpose(), false)] {
        let mut cur = n.to_vec();
        let mut k: i64 = 0;
        if forward {
            total += lm.powi(-1) * tw * v.get_nm(&cur, m);
        }
        loop {
            if k.unsigned_abs() as usize > ORBIT_CAP {
                return Err(KamError::SearchBound(n.to_vec()));
            }
            cur = match mat.apply(&cur) {
                Ok(p) => p,
                Err(_) => break,
            };
            k += if forward { 1 } else { -1 };
            if coords.escaped(&cur, b, forward) {
                break;
            }
            let c = v.get_nm(&cur, m);
            if c.re != 0.0 || c.im != 0.0 {
                total += lm.powi(-(k as i32 + 1)) * tw * c;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveReport {
    /// Largest |O| / (sum of term magnitudes) over orbit classes.
    pub max_relative_obstruction: f64,
    /// Largest forward/backward disagreement.
    pub max_sum_gap: f64,
    /// Smallest |lambda - e(m.phi)| used at n = 0 (absent if none).
    pub min_small_divisor: Option<f64>,
    pub orbit_classes: usize,
}

pub const OBSTRUCTION_TOL: f64 = 1e-10;
pub const COMMUTATION_TOL: f64 = 1e-9;
const AGREEMENT_TOL: f64 = 1e-12;

/// Distinct elliptic indices m present in the support of `v`.
fn support_ms(v: &FourierField) -> Vec<Vec<i64>> {
    let d1 = v.d1();
    let mut ms: Vec<Vec<i64>> = v.support().map(|(idx, _)| idx[d1..].to_vec()).collect();
    ms.sort();
    ms.dedup();
    ms
}

/// Solves `lambda h - h o f_phi = v` for v with vanishing obstructions.
pub fn solve_twisted(v: &FourierField, eq: &TwistedEquation) -> Result<(FourierField, SolveReport)> {
    let atlas = OrbitAtlas::for_support(&eq.a, v)?;
    solve_twisted_with(v, eq, &atlas)
}

pub fn solve_twisted_with(v: &FourierField, eq: &TwistedEquation, atlas: &OrbitAtlas) -> Result<(FourierField, SolveReport)> {
    solve_twisted_ref(v, eq, atlas, None)
}

/// As `solve_twisted_with`; relative obstructions are measured against the
/// larger of `v` and `reference` along each orbit, so that `v` may be a
/// pivot-corrected copy of `reference`.
pub fn solve_twisted_ref(
    v: &FourierField,
    eq: &TwistedEquation,
    atlas: &OrbitAtlas,
    reference: Option<&FourierField>,
) -> Result<(FourierField, SolveReport)> {
    let (d1, d2) = (v.d1(), v.d2());
    if d1 != eq.a.dim() || d2 != eq.phi.len() {
        return Err(KamError::Dimension("equation does not match field".into()));
    }
    if atlas.box_ < v.box_size() {
        return Err(KamError::Precondition("orbit atlas smaller than field box".into()));
    }
    let mut report = SolveReport { orbit_classes: atlas.classes.len(), ..Default::default() };
    let mut entries: Vec<(Vec<i64>, Complex64)> = Vec::new();
    let ms = support_ms(v);
    for m in &ms {
        let lm = eq.lambda_m(m);
        for class in &atlas.classes {
            let vals = twisted_values(v, eq, &class.positions, m);
            let Some(first) = vals.iter().position(|c| c.re != 0.0 || c.im != 0.0) else { continue };
            let last = vals.iter().rposition(|c| c.re != 0.0 || c.im != 0.0).unwrap();
            let (o0, mut mag0) = orbit_obstruction(&vals, lm, 0);
            if let Some(r) = reference {
                mag0 = mag0.max(orbit_obstruction(&twisted_values(r, eq, &class.positions, m), lm, 0).1);
            }
            let rel = if mag0 > 0.0 { o0.norm() / mag0 } else { 0.0 };
            report.max_relative_obstruction = report.max_relative_obstruction.max(rel);
            if rel > OBSTRUCTION_TOL {
                let n = class.positions[first].clone();
                let (o, _) = orbit_obstruction(&vals, lm, first);
                return Err(KamError::Obstruction { n, m: m.clone(), value: o.norm() });
            }
            // Forward: h_k = (v'_k + h_{k+1}) / lambda_m, zero beyond `last`.
            let len = last - first + 1;
            let mut fwd = vec![Complex64::new(0.0, 0.0); len + 1];
            let mut fmag = vec![0.0f64; len + 1];
            let inv = 1.0 / lm;
            for k in (0..len).rev() {
                fwd[k] = (vals[first + k] + fwd[k + 1]) * inv;
                fmag[k] = (vals[first + k].norm() + fmag[k + 1]) * inv.norm();
            }
            // Backward: h_{k+1} = lambda_m h_k - v'_k, zero at `first`.
            let mut bwd = vec![Complex64::new(0.0, 0.0); len + 1];
            let mut bmag = vec![0.0f64; len + 1];
            for k in 0..len {
                bwd[k + 1] = lm * bwd[k] - vals[first + k];
                bmag[k + 1] = lm.norm() * bmag[k] + vals[first + k].norm();
            }
            for k in 0..=len {
                let gap = (fwd[k] - bwd[k]).norm();
                let explained = lm.norm().powi((first + k) as i32) * o0.norm() * (1.0 + 1e-9);
                let allowed = AGREEMENT_TOL * (fmag[k] + bmag[k]) + explained;
                report.max_sum_gap = report.max_sum_gap.max(gap);
                if gap > allowed && gap > 1e-300 {
                    return Err(KamError::SumDisagreement(gap));
                }
            }
            for k in 1..len {
                let c = fwd[k];
                if c.re != 0.0 || c.im != 0.0 {
                    let idx: Vec<i64> = class.positions[first + k].iter().chain(m).cloned().collect();
                    entries.push((idx, c));
                }
            }
        }
        // n = 0 modes.
        let zero_n = vec![0i64; d1];
        let c = v.get_nm(&zero_n, m);
        let m_norm = m.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64;
        let idx: Vec<i64> = zero_n.iter().chain(m).cloned().collect();
        if m_norm == 0.0 && (eq.lambda - 1.0).norm() < 1e-14 {
            let scale = v.max_abs().max(1e-300);
            if c.norm() > OBSTRUCTION_TOL * scale.max(1.0) {
                return Err(KamError::Precondition(format!("nonzero average {c} with lambda = 1")));
            }
            continue;
        }
        if m_norm > eq.n_trunc {
            continue;
        }
        let divisor = eq.lambda - cis(eq.phase(m));
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let dv = divisor.norm();
        report.min_small_divisor = Some(report.min_small_divisor.map_or(dv, |x: f64| x.min(dv)));
        if (eq.lambda.norm() - 1.0).abs() <= MODULUS_TOL {
            let thr = eq.n_trunc.max(1.0).powi(-3);
            if dv < thr {
                return Err(KamError::SmallDivisor { m: m.clone(), value: dv, threshold: thr });
            }
        }
        entries.push((idx, c / divisor));
    }
    let need = entries
        .iter()
        .flat_map(|(i, _)| i.iter().map(|x| x.unsigned_abs() as usize))
        .max()
        .unwrap_or(0)
        .max(v.box_size());
    if need > WORKING_BOX_LIMIT {
        return Err(KamError::SupportEscape { needed: need, limit: WORKING_BOX_LIMIT });
    }
    let mut h = FourierField::zeros(d1, d2, need);
    for (idx, c) in entries {
        h.set(&idx, c)?;
    }
    Ok((h, report))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RemovalReport {
    pub commutation_residual: f64,
    pub correction_l1: f64,
    pub phi_comm_l1: f64,
    /// correction_l1 / phi_comm_l1 (absent when phi_comm vanishes).
    pub ratio: Option<f64>,
    pub max_relative_obstruction_after: f64,
}

/// Grid sup of a field on its dealiasing grid.
pub fn grid_sup(f: &FourierField) -> f64 {
    let g = Grid::for_box(f.dim(), f.box_size().max(1));
    g.sample(f).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Largest relative obstruction of `v` over all orbit classes and m.
pub fn max_relative_obstruction(v: &FourierField, eq: &TwistedEquation, atlas: &OrbitAtlas) -> f64 {
    let mut worst: f64 = 0.0;
    for m in support_ms(v) {
        let lm = eq.lambda_m(&m);
        for class in &atlas.classes {
            let vals = twisted_values(v, eq, &class.positions, &m);
            let (o, mag) = orbit_obstruction(&vals, lm, 0);
            if mag > 0.0 {
                worst = worst.max(o.norm() / mag);
            }
        }
    }
    worst
}

/// Correction supported on pivots that makes every obstruction of
/// `v - correction` vanish. With `phi_comm` given, first checks
/// `(lambda w - w o f) - (mu v - v o g) = phi_comm`.
pub fn remove_obstructions(
    v: &FourierField,
    w: &FourierField,
    eq_a: &TwistedEquation,
    eq_b: &TwistedEquation,
    phi_comm: Option<&FourierField>,
) -> Result<(FourierField, RemovalReport)> {
    let mut report = RemovalReport::default();
    if let Some(phi) = phi_comm {
        let lhs = eq_a.apply(w)?.sub(&eq_b.apply(v)?);
        let resid = lhs.sub(phi).l1();
        report.commutation_residual = resid;
        if resid > COMMUTATION_TOL {
            return Err(KamError::Commutation { residual: resid, tol: COMMUTATION_TOL });
        }
        report.phi_comm_l1 = phi.l1();
    }
    let atlas = OrbitAtlas::for_support(&eq_a.a, v)?;
    let (corr, after) = obstruction_correction(v, eq_a, &atlas)?;
    report.correction_l1 = corr.l1();
    report.max_relative_obstruction_after = after;
    if report.phi_comm_l1 > 0.0 {
        report.ratio = Some(report.correction_l1 / report.phi_comm_l1);
    }
    Ok((corr, report))
}

/// The pivot correction for `v` on a prebuilt atlas, plus the relative
/// obstruction left in `v - correction`.
pub fn obstruction_correction(v: &FourierField, eq: &TwistedEquation, atlas: &OrbitAtlas) -> Result<(FourierField, f64)> {
    let mut entries = Vec::new();
    let mut after: f64 = 0.0;
    for m in support_ms(v) {
        let lm = eq.lambda_m(&m);
        for class in &atlas.classes {
            let vals = twisted_values(v, eq, &class.positions, &m);
            if vals.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                continue;
            }
            let (o, mag) = orbit_obstruction(&vals, lm, class.pivot);
            // A unit coefficient at the pivot has obstruction 1 / lambda.
            let c = o * eq.lambda;
            let mut corrected = vals.clone();
            corrected[class.pivot] -= c * cis(-eq.phase(&m));
            let (o2, mag2) = orbit_obstruction(&corrected, lm, class.pivot);
            let scale = mag.max(mag2);
            if scale > 0.0 {
                after = after.max(o2.norm() / scale);
            }
            let idx: Vec<i64> = class.positions[class.pivot].iter().chain(&m).cloned().collect();
            entries.push((idx, c));
        }
    }
    let need = entries
        .iter()
        .flat_map(|(i, _)| i.iter().map(|x| x.unsigned_abs() as usize))
        .max()
        .unwrap_or(0)
        .max(v.box_size());
    let mut out = FourierField::zeros(v.d1(), v.d2(), need);
    for (idx, c) in entries {
        out.set(&idx, c)?;
    }
    if after > OBSTRUCTION_TOL {
        return Err(KamError::Obstruction { n: vec![], m: vec![], value: after });
    }
    Ok((out, after))
}

/// Norm bounds of the splitting estimate, evaluated with unit constants.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitReport {
    pub solve: SolveReport,
    pub removal: RemovalReport,
    pub h_bound: SplitBound,
    pub res_v_bound: SplitBound,
    pub res_w_bound: SplitBound,
}

/// Sup over the dealiasing grid of all derivatives of order at most r.
pub fn cr_norm(f: &FourierField, r: usize) -> f64 {
    cr_norm_on(f, r, &Grid::for_box(f.dim(), f.support_box().max(1)))
}

/// Sup over the nodes of `grid` of all derivatives of order at most r. Node
/// values are exact for any support, so a coarse grid gives a lower estimate.
pub fn cr_norm_on(f: &FourierField, r: usize, grid: &Grid) -> f64 {
    let mut best: f64 = 0.0;
    if f.nnz() == 0 {
        return 0.0;
    }
    for iota in box_indices(f.dim(), r) {
        if iota.iter().any(|&x| x < 0) || iota.iter().sum::<i64>() as usize > r {
            continue;
        }
        let iota: Vec<usize> = iota.iter().map(|&x| x as usize).collect();
        let vals = grid.sample_derivative(f, &iota);
        best = best.max(vals.iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    best
}

fn bound(lhs: f64, rhs: f64) -> SplitBound {
    SplitBound { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 } }
}

pub struct ApproxSolution {
    pub h: FourierField,
    pub res_v: FourierField,
    pub res_w: FourierField,
    pub correction: FourierField,
    pub report: SplitReport,
}

/// Approximate simultaneous solve of `lambda h - h o f = v`, `mu h - h o g = w`.
/// Solves the first equation exactly for `T_N v - correction`; the second
/// holds up to `res_w`, computed directly.
#[allow(clippy::too_many_arguments)]
pub fn approximate_solve(
    v: &FourierField,
    w: &FourierField,
    eq_a: &TwistedEquation,
    eq_b: &TwistedEquation,
    phi_comm: Option<&FourierField>,
    norm: &ModeNorm,
    r: usize,
    r_prime: usize,
) -> Result<ApproxSolution> {
    let n = eq_a.n_trunc;
    let tv = v.truncate(norm, n);
    let mut removal = RemovalReport::default();
    if let Some(phi) = phi_comm {
        let lhs = eq_a.apply(w)?.sub(&eq_b.apply(v)?);
        // The coefficient l1 norm bounds the sup norm.
        removal.commutation_residual = lhs.sub(phi).l1();
        if removal.commutation_residual > COMMUTATION_TOL {
            return Err(KamError::Commutation { residual: removal.commutation_residual, tol: COMMUTATION_TOL });
        }
        removal.phi_comm_l1 = phi.l1();
    }
    let atlas = OrbitAtlas::for_support(&eq_a.a, &tv)?;
    let (corr, after) = obstruction_correction(&tv, eq_a, &atlas)?;
    removal.correction_l1 = corr.l1();
    removal.max_relative_obstruction_after = after;
    if removal.phi_comm_l1 > 0.0 {
        removal.ratio = Some(removal.correction_l1 / removal.phi_comm_l1);
    }
    let rhs = tv.sub(&corr);
    let atlas = if rhs.box_size() > atlas.box_ { OrbitAtlas::for_support(&eq_a.a, &rhs)? } else { atlas };
    let (h, solve) = solve_twisted_ref(&rhs, eq_a, &atlas, Some(&tv))?;
    let res_v = v.residue(norm, n).add(&corr);
    let res_w = w.sub(&eq_b.apply(&h)?);
    let d = eq_a.a.dim() as i32;
    let nn = n.max(1.0);
    // All norms are taken on the dealiasing grid of the input box.
    let grid = Grid::for_box(v.dim(), v.box_size().max(1));
    let cr_norm = |f: &FourierField, r: usize| cr_norm_on(f, r, &grid);
    let phi_norm = phi_comm.map_or(0.0, |p| cr_norm(p, r.saturating_sub(2)));
    let sigma = d as f64;
    let h_bound = bound(cr_norm(&h, r + 1), nn.powf(sigma) * (cr_norm(v, r) + phi_norm));
    let tail = nn.powi(d + r as i32 - r_prime as i32);
    let res_v_bound = bound(cr_norm(&res_v, r), tail * cr_norm(v, r_prime) + nn.powf(sigma) * phi_norm);
    let res_w_bound = bound(cr_norm(&res_w, r), tail * cr_norm(w, r_prime) + nn.powf(sigma) * phi_norm);
    Ok(ApproxSolution {
        h,
        res_v,
        res_w,
        correction: corr,
        report: SplitReport { solve, removal, h_bound, res_v_bound, res_w_bound },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> TorusAutomorphism {
        TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn single_mode_obstruction_is_inverse_lambda() {
        let lam = Complex64::new(2.5, 0.3);
        let eq = TwistedEquation::new(lam, cat(), vec![0.37], 8.0);
        let v = FourierField::mode(2, 1, &[1, 0], &[2], Complex64::new(1.0, 0.0)).unwrap();
        let o = obstruction(&v, &eq, &[1, 0], &[2]).unwrap();
        assert!((o - 1.0 / lam).norm() < 1e-15);
    }

    #[test]
    fn small_divisor_mode() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let eq = TwistedEquation::new(Complex64::new(1.0, 0.0), cat(), vec![g], 8.0);
        let v = FourierField::real_mode(2, 1, &[0, 0], &[1], Complex64::new(1.0, 0.0)).unwrap();
        let (h, _) = solve_twisted(&v, &eq).unwrap();
        let expect = 1.0 / (Complex64::new(1.0, 0.0) - cis(g));
        assert!((h.get(&[0, 0, 1]) - expect).norm() < 1e-14);
    }

    #[test]
    fn coboundary_round_trip() {
        let lam = Complex64::new((3.0 + 5f64.sqrt()) / 2.0, 0.0);
        let eq = TwistedEquation::new(lam, cat(), vec![0.2], 8.0);
        let h0 = FourierField::real_mode(2, 1, &[1, -1], &[1], Complex64::new(0.3, 0.1))
            .unwrap()
            .add(&FourierField::real_mode(2, 1, &[2, 1], &[0], Complex64::new(-0.2, 0.0)).unwrap());
        let v = eq.apply(&h0).unwrap();
        let (h, _) = solve_twisted(&v, &eq).unwrap();
        assert!(h.sub(&h0).max_abs() < 1e-12);
    }
}
