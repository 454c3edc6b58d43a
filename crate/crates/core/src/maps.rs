//! Pointwise maps of the torus, rotation vectors, and conjugated fixtures.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohomology::cr_norm;
use crate::error::{KamError, Result};
use crate::family::{FrequencyFamily, ParamFamily};
use crate::fourier::{FourierField, VectorField};
use crate::kam::{ActionPair, Workspace};
use crate::lattice::{IntMatrix, TorusAutomorphism};

/// A lift of a torus map.
pub trait TorusMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// Sparse real evaluation of a vector field.
#[derive(Debug, Clone)]
struct SparseField {
    comps: Vec<Vec<(Vec<f64>, Complex64)>>,
}

impl SparseField {
    fn new(v: &VectorField) -> Self {
        let comps = v
            .components
            .iter()
            .map(|c| c.support().map(|(k, z)| (k.iter().map(|&x| x as f64).collect(), z)).collect())
            .collect();
        SparseField { comps }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (modes, o) in self.comps.iter().zip(out.iter_mut()) {
            let mut s = 0.0;
            for (k, c) in modes {
                let ph: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                let (sn, cs) = (2.0 * std::f64::consts::PI * ph).sin_cos();
                s += c.re * cs - c.im * sn;
            }
            *o = s;
        }
    }
}

/// `x -> lin x + (0, shift) + df(x)`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub lin: IntMatrix,
    pub d1: usize,
    pub shift: Vec<f64>,
    df: Option<SparseField>,
}

impl AffineMap {
    pub fn new(a: &TorusAutomorphism, shift: Vec<f64>, df: Option<&VectorField>) -> Self {
        AffineMap {
            lin: a.matrix().embed_with_identity(shift.len()),
            d1: a.dim(),
            shift,
            df: df.map(SparseField::new),
        }
    }
}

impl TorusMap for AffineMap {
    fn dim(&self) -> usize {
        self.lin.dim
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.lin.apply_f64(x);
        for (i, s) in self.shift.iter().enumerate() {
            y[self.d1 + i] += s;
        }
        if let Some(df) = &self.df {
            let mut buf = vec![0.0; y.len()];
            df.eval_into(x, &mut buf);
            for (a, b) in y.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        y
    }
}

/// `H o base o H^{-1}` with `H = Id + h`.
#[derive(Debug, Clone)]
pub struct ConjugatedMap {
    pub base: AffineMap,
    h: SparseField,
}

impl ConjugatedMap {
    pub fn new(base: AffineMap, h: &VectorField) -> Self {
        ConjugatedMap { base, h: SparseField::new(h) }
    }

    /// `H^{-1}(x)` by fixed-point iteration.
    pub fn inverse_h(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut hv = vec![0.0; x.len()];
        for _ in 0..100 {
            self.h.eval_into(&y, &mut hv);
            let mut upd: f64 = 0.0;
            for i in 0..y.len() {
                let ny = x[i] - hv[i];
                upd = upd.max((ny - y[i]).abs());
                y[i] = ny;
            }
            if upd <= 1e-16 {
                break;
            }
        }
        y
    }
}

impl TorusMap for ConjugatedMap {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = self.inverse_h(x);
        let mut z = self.base.apply(&y);
        let mut hv = vec![0.0; z.len()];
        self.h.eval_into(&z, &mut hv);
        for (a, b) in z.iter_mut().zip(&hv) {
            *a += b;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub mean: Vec<f64>,
    /// Largest deviation of a single orbit's average from the mean.
    pub error_bar: f64,
    pub per_orbit: Vec<Vec<f64>>,
}

/// Birkhoff averages of the elliptic displacement over random orbits.
pub fn rotation_vector(map: &dyn TorusMap, d1: usize, orbit_count: usize, orbit_length: usize, seed: u64) -> RotationEstimate {
    let d = map.dim();
    let d2 = d - d1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_orbit = Vec::with_capacity(orbit_count);
    for _ in 0..orbit_count.max(1) {
        let mut x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        // Neumaier summation per coordinate.
        let mut sum = vec![0.0f64; d2];
        let mut comp = vec![0.0f64; d2];
        for _ in 0..orbit_length.max(1) {
            let y = map.apply(&x);
            for j in 0..d2 {
                let v = y[d1 + j] - x[d1 + j];
                let t = sum[j] + v;
                if sum[j].abs() >= v.abs() {
                    comp[j] += (sum[j] - t) + v;
                } else {
                    comp[j] += (v - t) + sum[j];
                }
                sum[j] = t;
            }
            x = y.into_iter().map(|v| v.rem_euclid(1.0)).collect();
        }
        per_orbit.push(sum.iter().zip(&comp).map(|(s, c)| (s + c) / orbit_length.max(1) as f64).collect::<Vec<f64>>());
    }
    let n = per_orbit.len() as f64;
    let mean: Vec<f64> = (0..d2).map(|j| per_orbit.iter().map(|o| o[j]).sum::<f64>() / n).collect();
    let error_bar = per_orbit
        .iter()
        .flat_map(|o| o.iter().zip(&mean).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    RotationEstimate { mean, error_bar, per_orbit }
}

/// A random real trigonometric polynomial in each component, supported on
/// `(n, m)` with `n` in `ns`, `|m|_inf <= m_max`, no constant term, scaled so
/// the largest C^1 grid norm of a component equals `c1`.
pub fn random_displacement(d1: usize, d2: usize, ns: &[Vec<i64>], m_max: usize, c1: f64, seed: u64) -> Result<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms: Vec<Vec<i64>> = crate::fourier::box_indices(d2, m_max).collect();
    let mut comps = Vec::with_capacity(d1 + d2);
    for _ in 0..d1 + d2 {
        let mut f = FourierField::zeros(d1, d2, m_max.max(ns.iter().flatten().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0)));
        for n in ns {
            for m in &ms {
                if n.iter().chain(m).all(|&x| x == 0) {
                    continue;
                }
                let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                f = f.add(&FourierField::real_mode(d1, d2, n, m, c)?);
            }
        }
        comps.push(f);
    }
    let norm = comps.iter().map(|c| cr_norm(c, 1)).fold(0.0, f64::max);
    if norm == 0.0 {
        return Err(KamError::Precondition("empty displacement support".into()));
    }
    let s = Complex64::new(c1 / norm, 0.0);
    Ok(VectorField { components: comps.iter().map(|c| c.scale(s)).collect() })
}

/// The pair `(H0 o f_phi o H0^{-1}, H0 o g_psi o H0^{-1})` at `nodes`, with
/// errors stored in `box_` on a grid of size `g` (0 for `4 * box_`). The
/// elliptic averages of the errors are moved into the frequencies, so the
/// returned frequency families are sampled.
#[allow(clippy::too_many_arguments)]
pub fn conjugated_pair(
    a: &TorusAutomorphism,
    b: &TorusAutomorphism,
    h0: &VectorField,
    phi: &FrequencyFamily,
    psi: &FrequencyFamily,
    nodes: &[f64],
    box_: usize,
    g: usize,
) -> Result<ActionPair> {
    let d2 = phi.dim();
    let ws = Workspace::new(a, b, d2, box_, g)?;
    let inv = ws.invert(h0)?;
    let zero = VectorField::zeros(a.dim(), d2, box_);
    let mut dfs = Vec::with_capacity(nodes.len());
    let mut dgs = Vec::with_capacity(nodes.len());
    let mut phis = Vec::with_capacity(nodes.len());
    let mut psis = Vec::with_capacity(nodes.len());
    for &t in nodes {
        let (p, q) = (phi.eval(t), psi.eval(t));
        let (df, af) = ws.normalise(&ws.conjugated_values(&ws.abar, &p, &zero, h0, &inv.values)?)?;
        let (dg, ag) = ws.normalise(&ws.conjugated_values(&ws.bbar, &q, &zero, h0, &inv.values)?)?;
        phis.push(p.iter().zip(&af).map(|(x, y)| x + y).collect());
        psis.push(q.iter().zip(&ag).map(|(x, y)| x + y).collect());
        dfs.push(df);
        dgs.push(dg);
    }
    let interval = phi.interval();
    ActionPair::new(
        a.clone(),
        b.clone(),
        FrequencyFamily::samples(interval, nodes.to_vec(), phis)?,
        FrequencyFamily::samples(psi.interval(), nodes.to_vec(), psis)?,
        ParamFamily::new(interval, nodes.to_vec(), dfs)?,
        ParamFamily::new(interval, nodes.to_vec(), dgs)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_map_rotation_is_exact() {
        let cat = TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let f = AffineMap::new(&cat, vec![alpha], None);
        let r = rotation_vector(&f, 2, 3, 10_000, 1);
        assert!((r.mean[0] - alpha).abs() < 1e-12, "{:?}", r);
        assert!(r.error_bar <= 1e-12);
    }

    #[test]
    fn conjugated_map_inverts() {
        let cat = TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let h = random_displacement(2, 1, &[vec![1, 0], vec![0, 1]], 1, 1e-2, 3).unwrap();
        let f = ConjugatedMap::new(AffineMap::new(&cat, vec![0.3], None), &h);
        let x = [0.1, 0.7, 0.4];
        let y = f.inverse_h(&x);
        let mut hv = vec![0.0; 3];
        f.h.eval_into(&y, &mut hv);
        for i in 0..3 {
            assert!((y[i] + hv[i] - x[i]).abs() < 1e-15);
        }
    }
}
