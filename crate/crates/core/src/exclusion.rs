//! Diophantine conditions on frequencies and parameter-interval surgery.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::family::FrequencyFamily;
use crate::fourier::{box_indices, cis};
use crate::lattice::TorusAutomorphism;

const BISECTION_STEPS: usize = 80;
const UNIT_TOL: f64 = 1e-12;

/// Finite union of disjoint closed intervals, sorted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub intervals: Vec<(f64, f64)>,
    pub total_measure: f64,
}

impl ParamSet {
    pub fn empty() -> Self {
        ParamSet::default()
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        if hi <= lo {
            return Self::empty();
        }
        Self::from_sorted(vec![(lo, hi)])
    }

    /// Builds from intervals in any order, merging overlaps.
    pub fn from_intervals(mut iv: Vec<(f64, f64)>) -> Self {
        iv.retain(|(a, b)| b > a);
        iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (a, b) in iv {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Self::from_sorted(out)
    }

    fn from_sorted(intervals: Vec<(f64, f64)>) -> Self {
        let total_measure = intervals.iter().map(|(a, b)| b - a).sum();
        ParamSet { intervals, total_measure }
    }

    pub fn measure(&self) -> f64 {
        self.total_measure
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.1 < t);
        i < self.intervals.len() && self.intervals[i].0 <= t
    }

    /// Distance from t to the nearest interval endpoint.
    pub fn endpoint_distance(&self, t: f64) -> f64 {
        let i = self.intervals.partition_point(|iv| iv.1 < t);
        let mut best = f64::INFINITY;
        for j in [i.wrapping_sub(1), i] {
            if let Some((a, b)) = self.intervals.get(j) {
                best = best.min((t - a).abs()).min((t - b).abs());
            }
        }
        best
    }

    pub fn intersect(&self, other: &ParamSet) -> ParamSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_sorted(out)
    }

    /// self minus a union of intervals.
    pub fn subtract(&self, removed: &ParamSet) -> ParamSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &(a, b) in &self.intervals {
            let mut cur = a;
            while j < removed.intervals.len() && removed.intervals[j].1 <= cur {
                j += 1;
            }
            let mut k = j;
            while k < removed.intervals.len() && removed.intervals[k].0 < b {
                let (r0, r1) = removed.intervals[k];
                if r0 > cur {
                    out.push((cur, r0));
                }
                cur = cur.max(r1);
                k += 1;
            }
            if cur < b {
                out.push((cur, b));
            }
        }
        Self::from_sorted(out)
    }
}

/// Eigenvalues of A together with 1.
pub fn eigen_set(a: &TorusAutomorphism) -> Result<Vec<Complex64>> {
    let mut e: Vec<Complex64> = a.eigen_coords()?.values.clone();
    e.push(Complex64::new(1.0, 0.0));
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub lambda: (f64, f64),
    pub min_gap: f64,
    pub k: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineCert {
    pub n: usize,
    pub exponent: f64,
    pub threshold: f64,
    pub gaps: Vec<GapEntry>,
    pub pass: bool,
}

impl DiophantineCert {
    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.min_gap).fold(f64::INFINITY, f64::min)
    }
}

/// Checks |lambda - e(<k, alpha>)| >= N^{-b} for all lambda in `eigs` and
/// 0 < |k|_inf <= N.
pub fn in_d(alpha: &[f64], n: usize, eigs: &[Complex64], b: f64) -> DiophantineCert {
    let threshold = (n.max(1) as f64).powf(-b);
    let mut gaps = Vec::with_capacity(eigs.len());
    let ks: Vec<Vec<i64>> = if alpha.len() == 1 {
        (1..=n as i64).flat_map(|k| [vec![k], vec![-k]]).collect()
    } else {
        box_indices(alpha.len(), n).filter(|k| k.iter().any(|&x| x != 0)).collect()
    };
    for lam in eigs {
        let real = lam.im == 0.0;
        let mut best = f64::INFINITY;
        let mut arg = vec![];
        for k in &ks {
            // For real lambda the gap is even in k.
            if real && first_nonzero(k) < 0 {
                continue;
            }
            let ph: f64 = k.iter().zip(alpha).map(|(ki, a)| *ki as f64 * a).sum();
            let g = (lam - cis(ph)).norm();
            if g < best {
                best = g;
                arg = k.clone();
            }
        }
        gaps.push(GapEntry { lambda: (lam.re, lam.im), min_gap: best, k: arg });
    }
    let pass = gaps.iter().all(|g| g.min_gap >= threshold);
    DiophantineCert { n, exponent: b, threshold, gaps, pass }
}

/// Fast pass/fail form of `in_d` for one-dimensional alpha.
pub fn in_d_scalar(alpha: f64, n: usize, eigs: &[Complex64], b: f64) -> bool {
    let threshold = (n.max(1) as f64).powf(-b);
    for lam in eigs {
        if (lam.norm() - 1.0).abs() > threshold + UNIT_TOL {
            continue;
        }
        let real = lam.im == 0.0;
        let (s1, c1) = (2.0 * std::f64::consts::PI * alpha).sin_cos();
        let step = Complex64::new(c1, s1);
        let mut z = Complex64::new(1.0, 0.0);
        for k in 1..=n {
            z *= step;
            if k % 64 == 0 {
                z = cis(k as f64 * alpha);
            }
            if (lam - z).norm() < threshold || (!real && (lam - z.conj()).norm() < threshold) {
                return false;
            }
        }
    }
    true
}

fn first_nonzero(k: &[i64]) -> i64 {
    k.iter().cloned().find(|&x| x != 0).unwrap_or(0)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExclusionCert {
    pub n: f64,
    pub n_tilde: usize,
    pub m: f64,
    pub radius: f64,
    pub min_fragment: f64,
    pub roots: usize,
    pub interval_measure: f64,
    pub kept: f64,
    pub removed: f64,
    pub discarded: f64,
    pub unit_eigenvalues: usize,
    pub bound: f64,
}

/// Level used after exclusion at N.
pub fn next_level(n: f64) -> usize {
    (n.powf(1.5) - 1e-9).ceil() as usize
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let increasing = f(hi) >= f(lo);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let above = f(mid) >= target;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn unit_angles(eigs: &[Complex64]) -> Vec<f64> {
    // Angles theta with lambda = e(theta) for unit-modulus lambda, conjugates included.
    let mut out: Vec<f64> = Vec::new();
    for l in eigs {
        if (l.norm() - 1.0).abs() <= UNIT_TOL {
            let th = l.im.atan2(l.re) / (2.0 * std::f64::consts::PI);
            for t in [th, -th] {
                if !out.iter().any(|x| (x - t).abs() < 1e-15) {
                    out.push(t);
                }
            }
        }
    }
    out
}

fn count_unit(eigs: &[Complex64]) -> usize {
    let mut seen: Vec<Complex64> = Vec::new();
    for l in eigs {
        if (l.norm() - 1.0).abs() <= UNIT_TOL && !seen.iter().any(|s| (s - l).norm() < 1e-12) {
            seen.push(*l);
        }
    }
    seen.len()
}

fn check_monotone(phi: &FrequencyFamily, lo: f64, hi: f64, m: f64) -> Result<()> {
    let samples = 2048;
    for i in 0..=samples {
        let t = lo + (hi - lo) * i as f64 / samples as f64;
        let d = phi.derivative(t, 1)[0];
        if !(d > 1.0 / m && d < m) {
            return Err(KamError::NotMonotone { lo, hi });
        }
    }
    Ok(())
}

/// Removes resonance neighbourhoods for a scalar frequency on [lo, hi].
pub fn exclude_interval(
    lo: f64,
    hi: f64,
    phi: &FrequencyFamily,
    n: f64,
    m: f64,
    eigs: &[Complex64],
) -> Result<(ParamSet, ExclusionCert)> {
    exclude_interval_to(lo, hi, phi, n, next_level(n), m, eigs)
}

/// `exclude_interval` with an explicit target level.
pub fn exclude_interval_to(
    lo: f64,
    hi: f64,
    phi: &FrequencyFamily,
    n: f64,
    n_tilde: usize,
    m: f64,
    eigs: &[Complex64],
) -> Result<(ParamSet, ExclusionCert)> {
    if phi.dim() != 1 {
        return Err(KamError::Dimension("scalar exclusion needs a one-dimensional frequency".into()));
    }
    let len = hi - lo;
    let nt = n_tilde as f64;
    let radius = m / nt.powi(3);
    let min_fragment = 1.0 / (2.0 * m * nt * nt);
    let d = count_unit(eigs);
    let bound = (1.0 - 2.0 * d as f64 * m * m / nt) * len.max(0.0);
    let mut cert = ExclusionCert {
        n,
        n_tilde,
        m,
        radius,
        min_fragment,
        interval_measure: len.max(0.0),
        unit_eigenvalues: d,
        bound,
        ..Default::default()
    };
    if len <= 0.0 {
        return Ok((ParamSet::empty(), cert));
    }
    if len < 1.0 / (2.0 * m * n * n) {
        return Err(KamError::Precondition(format!("interval length {len} below 1/(2 M N^2)")));
    }
    check_monotone(phi, lo, hi, m)?;
    let f = |t: f64| phi.eval(t)[0];
    let (p_lo, p_hi) = (f(lo), f(hi));
    let mut removed = Vec::new();
    for theta in unit_angles(eigs) {
        for k in 1..=n_tilde {
            let kf = k as f64;
            let g = |t: f64| kf * f(t);
            let j_lo = (kf * p_lo - theta).ceil() as i64;
            let j_hi = (kf * p_hi - theta).floor() as i64;
            for j in j_lo..=j_hi {
                let target = j as f64 + theta;
                let root = bisect(&g, lo, hi, target);
                cert.roots += 1;
                removed.push(((root - radius).max(lo), (root + radius).min(hi)));
            }
        }
    }
    let removed = ParamSet::from_intervals(removed);
    let pieces = ParamSet::interval(lo, hi).subtract(&removed);
    let (kept, short): (Vec<_>, Vec<_>) = pieces.intervals.into_iter().partition(|(a, b)| b - a >= min_fragment);
    let kept = ParamSet::from_sorted(kept);
    cert.removed = removed.measure();
    cert.discarded = short.iter().map(|(a, b)| b - a).sum();
    cert.kept = kept.measure();
    if cert.kept < bound * (1.0 - 1e-12) {
        return Err(KamError::MeasureBound { kept: cert.kept, bound });
    }
    Ok((kept, cert))
}

/// Applies `exclude_interval` to every interval of a set.
pub fn exclude_set(
    set: &ParamSet,
    phi: &FrequencyFamily,
    n: f64,
    m: f64,
    eigs: &[Complex64],
) -> Result<(ParamSet, ExclusionCert)> {
    exclude_set_to(set, phi, n, next_level(n), m, eigs)
}

/// `exclude_set` with an explicit target level.
pub fn exclude_set_to(
    set: &ParamSet,
    phi: &FrequencyFamily,
    n: f64,
    n_tilde: usize,
    m: f64,
    eigs: &[Complex64],
) -> Result<(ParamSet, ExclusionCert)> {
    let mut total = ExclusionCert { n, n_tilde, m, ..Default::default() };
    let mut kept = Vec::new();
    for &(a, b) in &set.intervals {
        if b - a < 1.0 / (2.0 * m * n * n) {
            total.discarded += b - a;
            total.interval_measure += b - a;
            continue;
        }
        let (k, c) = exclude_interval_to(a, b, phi, n, n_tilde, m, eigs)?;
        kept.extend(k.intervals);
        total.radius = c.radius;
        total.min_fragment = c.min_fragment;
        total.roots += c.roots;
        total.interval_measure += c.interval_measure;
        total.kept += c.kept;
        total.removed += c.removed;
        total.discarded += c.discarded;
        total.unit_eigenvalues = c.unit_eigenvalues;
        total.bound += c.bound;
    }
    Ok((ParamSet::from_sorted(kept), total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyartliReport {
    pub pass: bool,
    pub min_det: f64,
    pub witness: f64,
    pub norm: f64,
}

fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap()).unwrap();
        if m[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    d
}

fn derivative_det(rho: &FrequencyFamily, t: f64) -> f64 {
    let d = rho.dim();
    // Columns rho', ..., rho^(d).
    let cols: Vec<Vec<f64>> = (1..=d).map(|o| rho.derivative(t, o)).collect();
    let rows: Vec<Vec<f64>> = (0..d).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    det(rows)
}

/// |det(rho', ..., rho^(d))| >= nu and ||rho||_{C^d} <= 1/nu at every node.
pub fn pyartli_check(rho: &FrequencyFamily, nu: f64, nodes: &[f64]) -> Result<PyartliReport> {
    let d = rho.dim();
    let mut min_det = f64::INFINITY;
    let mut witness = f64::NAN;
    let mut norm: f64 = 0.0;
    let coarse = if let FrequencyFamily::Samples { interval, nodes: sn, values } = rho {
        if sn.len() < 2 * d + 2 {
            return Err(KamError::Unstable("too few samples for the derivative orders".into()));
        }
        let idx: Vec<usize> = (0..sn.len()).step_by(2).collect();
        Some(FrequencyFamily::samples(
            *interval,
            idx.iter().map(|&i| sn[i]).collect(),
            idx.iter().map(|&i| values[i].clone()).collect(),
        )?)
    } else {
        None
    };
    for &t in nodes {
        let dt = derivative_det(rho, t);
        if let Some(c) = &coarse {
            let dc = derivative_det(c, t);
            if (dt - dc).abs() > 0.01 * dt.abs().max(1e-300) {
                return Err(KamError::Unstable(format!("determinant at t = {t} moves from {dc} to {dt}")));
            }
        }
        if dt.abs() < min_det {
            min_det = dt.abs();
            witness = t;
        }
        for o in 0..=d {
            norm = norm.max(rho.derivative(t, o).iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
    }
    Ok(PyartliReport { pass: min_det >= nu && norm <= 1.0 / nu, min_det, witness, norm })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExclusionD2Cert {
    pub n: f64,
    pub n_tilde: usize,
    pub a: f64,
    pub b: f64,
    pub derivative_windows: usize,
    pub roots: usize,
    pub kept: f64,
    pub bound: f64,
    pub verified_nodes: usize,
}

/// Sign-change roots of `g` on [lo, hi] from a uniform sampling.
fn sampled_roots(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev_t = lo;
    let mut prev = g(lo);
    if prev == 0.0 {
        out.push(lo);
    }
    for i in 1..=samples {
        let t = lo + (hi - lo) * i as f64 / samples as f64;
        let v = g(t);
        if v == 0.0 {
            out.push(t);
        } else if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
            out.push(bisect(g, prev_t, t, 0.0));
        }
        prev = v;
        prev_t = t;
    }
    out
}

/// Exclusion for a frequency curve in R^{d2} under a Pyartli condition.
pub fn exclude_interval_d2(
    lo: f64,
    hi: f64,
    phi: &FrequencyFamily,
    n: f64,
    nu: f64,
    eigs: &[Complex64],
) -> Result<(ParamSet, ExclusionD2Cert)> {
    let d2 = phi.dim();
    let a = 4.0 * d2 as f64 + 20.0;
    let b = 30.0 * (d2 * d2) as f64;
    let n_tilde = next_level(n);
    let nt = n_tilde as f64;
    let mut cert = ExclusionD2Cert { n, n_tilde, a, b, ..Default::default() };
    if hi <= lo {
        return Ok((ParamSet::empty(), cert));
    }
    if hi - lo < n.powf(-a) {
        return Err(KamError::Precondition("interval shorter than N^-a".into()));
    }
    let nodes: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
    let py = pyartli_check(phi, nu, &nodes)?;
    if !py.pass {
        return Err(KamError::Precondition(format!("Pyartli condition fails at t = {}", py.witness)));
    }
    let window = n.powf(-a);
    let res_radius = 0.5 * n.powf(a * (d2 as f64 + 1.0) - b);
    let thetas = unit_angles(eigs);
    let mut removed = Vec::new();
    for k in box_indices(d2, n_tilde) {
        if first_nonzero(&k) <= 0 {
            continue;
        }
        let kd: Vec<f64> = k.iter().map(|&x| x as f64).collect();
        let gp = |t: f64| phi.derivative(t, 1).iter().zip(&kd).map(|(p, k)| p * k).sum::<f64>();
        let g = |t: f64| phi.eval(t).iter().zip(&kd).map(|(p, k)| p * k).sum::<f64>();
        let crit = sampled_roots(&gp, lo, hi, 512);
        for c in &crit {
            removed.push((c - 0.5 * window, c + 0.5 * window));
            cert.derivative_windows += 1;
        }
        let mut cuts = vec![lo];
        cuts.extend(crit.iter().cloned());
        cuts.push(hi);
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            let (g0, g1) = (g(s0), g(s1));
            let (gmin, gmax) = (g0.min(g1), g0.max(g1));
            for theta in &thetas {
                // both signs of k are covered by +theta and -theta
                for j in (gmin - theta).ceil() as i64..=(gmax - theta).floor() as i64 {
                    let root = bisect(&g, s0, s1, j as f64 + theta);
                    cert.roots += 1;
                    removed.push((root - res_radius, root + res_radius));
                }
            }
        }
    }
    let removed = ParamSet::from_intervals(removed);
    let pieces = ParamSet::interval(lo, hi).subtract(&removed);
    let min_frag = nt.powf(-a);
    let kept = ParamSet::from_sorted(pieces.intervals.into_iter().filter(|(x, y)| y - x >= min_frag).collect());
    cert.kept = kept.measure();
    cert.bound = (1.0 - 1.0 / nt) * (hi - lo);
    if cert.kept < cert.bound {
        return Err(KamError::MeasureBound { kept: cert.kept, bound: cert.bound });
    }
    for i in 0..=256 {
        let t = lo + (hi - lo) * i as f64 / 256.0;
        if kept.contains(t) {
            let c = in_d(&phi.eval(t), n_tilde, eigs, b);
            if !c.pass {
                return Err(KamError::Precondition(format!("kept node t = {t} fails the Diophantine check")));
            }
            cert.verified_nodes += 1;
        }
    }
    Ok((kept, cert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdcReport {
    pub pass: bool,
    pub k_max: usize,
    /// min over k of max(gap_alpha, gap_beta) - gamma / |k|^tau.
    pub min_margin: f64,
    pub worst_k: Vec<i64>,
    pub violating_k: Option<Vec<i64>>,
}

/// Simultaneous Diophantine check up to |k|_inf <= k_max for every pair.
pub fn sdc_check(
    alpha: &[f64],
    beta: &[f64],
    pairs: &[(Complex64, Complex64)],
    tau: f64,
    gamma: f64,
    k_max: usize,
) -> Result<SdcReport> {
    if alpha.len() != beta.len() {
        return Err(KamError::Dimension("alpha and beta differ in dimension".into()));
    }
    let mut min_margin = f64::INFINITY;
    let mut worst = vec![];
    let mut violating = None;
    for k in box_indices(alpha.len(), k_max) {
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let kn = k.iter().map(|x| x.unsigned_abs()).max().unwrap() as f64;
        let pa: f64 = k.iter().zip(alpha).map(|(ki, a)| *ki as f64 * a).sum();
        let pb: f64 = k.iter().zip(beta).map(|(ki, b)| *ki as f64 * b).sum();
        for (l, mu) in pairs {
            let gap = (l - cis(pa)).norm().max((mu - cis(pb)).norm());
            let margin = gap - gamma / kn.powf(tau);
            if margin < min_margin {
                min_margin = margin;
                worst = k.clone();
            }
            if margin <= 0.0 && violating.is_none() {
                violating = Some(k.clone());
            }
        }
    }
    Ok(SdcReport { pass: violating.is_none(), k_max, min_margin, worst_k: worst, violating_k: violating })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0)]
    }

    #[test]
    fn param_set_algebra() {
        let a = ParamSet::from_intervals(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]);
        assert_eq!(a.intervals, vec![(0.0, 2.0), (3.0, 4.0)]);
        let r = ParamSet::from_intervals(vec![(0.5, 0.6), (1.9, 3.5)]);
        let s = a.subtract(&r);
        assert_eq!(s.intervals, vec![(0.0, 0.5), (0.6, 1.9), (3.5, 4.0)]);
        assert!((s.measure() + r.intersect(&a).measure() - a.measure()).abs() < 1e-15);
        assert!(s.contains(0.7) && !s.contains(0.55));
    }

    #[test]
    fn trivial_in_d_failures() {
        assert!(!in_d(&[0.0], 5, &one(), 3.0).pass);
        assert!(!in_d(&[0.5], 2, &one(), 3.0).pass);
        assert!(!in_d_scalar(0.5, 2, &one(), 3.0));
    }

    #[test]
    fn sdc_trivial() {
        let pairs = vec![(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))];
        assert!(!sdc_check(&[0.0], &[0.0], &pairs, 2.0, 0.1, 5).unwrap().pass);
    }
}
