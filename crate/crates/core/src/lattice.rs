//! Exact integer-matrix dynamics on the torus and its dual lattice.
//!
//! `TorusAutomorphism` wraps a unimodular integer matrix. Spectral data is
//! computed lazily in floating point; everything that decides a discrete
//! property (commutation, ergodicity, orbits) is exact.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::linalg::{condition_number, eigen_system, invert};
use crate::poly;

/// Tolerance for classifying eigenvalue moduli against 1.
pub const MODULUS_TOL: f64 = 1e-12;

/// Square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntMatrix {
    pub dim: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn new(dim: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(KamError::Dimension(format!("{} entries for a {dim}x{dim} matrix", data.len())));
        }
        Ok(IntMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(KamError::Dimension("matrix rows must form a square".into()));
        }
        Self::new(d, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1;
        }
        IntMatrix { dim, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.dim + j]
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut data = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[j * d + i] = self.get(i, j);
            }
        }
        IntMatrix { dim: d, data }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(KamError::Dimension(format!("{} vs {}", self.dim, other.dim)));
        }
        let d = self.dim;
        let mut data = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s: i64 = 0;
                for l in 0..d {
                    let p = self.get(i, l).checked_mul(other.get(l, j)).ok_or(KamError::Overflow)?;
                    s = s.checked_add(p).ok_or(KamError::Overflow)?;
                }
                data[i * d + j] = s;
            }
        }
        Ok(IntMatrix { dim: d, data })
    }

    pub fn apply(&self, v: &[i64]) -> Result<Vec<i64>> {
        if v.len() != self.dim {
            return Err(KamError::Dimension(format!("vector of length {} for dim {}", v.len(), self.dim)));
        }
        let d = self.dim;
        let mut out = vec![0i64; d];
        for i in 0..d {
            let mut s: i64 = 0;
            for j in 0..d {
                let p = self.get(i, j).checked_mul(v[j]).ok_or(KamError::Overflow)?;
                s = s.checked_add(p).ok_or(KamError::Overflow)?;
            }
            out[i] = s;
        }
        Ok(out)
    }

    pub fn apply_f64(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| (0..d).map(|j| self.get(i, j) as f64 * v[j]).sum()).collect()
    }

    /// Determinant by fraction-free Gaussian elimination in i128.
    pub fn det(&self) -> i64 {
        let d = self.dim;
        if d == 0 {
            return 1;
        }
        let mut a: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..d {
            if a[k * d + k] == 0 {
                let Some(p) = (k + 1..d).find(|&r| a[r * d + k] != 0) else { return 0 };
                for c in 0..d {
                    a.swap(k * d + c, p * d + c);
                }
                sign = -sign;
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
                }
            }
            prev = a[k * d + k];
        }
        (sign * a[(d - 1) * d + (d - 1)]) as i64
    }

    /// Exact inverse of a unimodular matrix via the adjugate.
    pub fn inverse_unimodular(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() != 1 {
            return Err(KamError::NotUnimodular(det));
        }
        let d = self.dim;
        if d == 1 {
            return Ok(IntMatrix { dim: 1, data: vec![det] });
        }
        let mut data = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut minor = Vec::with_capacity((d - 1) * (d - 1));
                for r in 0..d {
                    if r == j {
                        continue;
                    }
                    for c in 0..d {
                        if c == i {
                            continue;
                        }
                        minor.push(self.get(r, c));
                    }
                }
                let m = IntMatrix { dim: d - 1, data: minor };
                let sgn = if (i + j) % 2 == 0 { 1 } else { -1 };
                data[i * d + j] = sgn * m.det() * det;
            }
        }
        Ok(IntMatrix { dim: d, data })
    }

    /// Block-diagonal embedding `self ⊕ Id_extra`.
    pub fn embed_with_identity(&self, extra: usize) -> Self {
        let d = self.dim + extra;
        let mut data = vec![0i64; d * d];
        for i in 0..self.dim {
            for j in 0..self.dim {
                data[i * d + j] = self.get(i, j);
            }
        }
        for i in self.dim..d {
            data[i * d + i] = 1;
        }
        IntMatrix { dim: d, data }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data.iter().map(|&x| x as f64).collect::<Vec<_>>())
    }

    fn to_big(&self) -> Vec<BigInt> {
        self.data.iter().map(|&x| BigInt::from(x)).collect()
    }
}

fn big_mul(a: &[BigInt], b: &[BigInt], d: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = BigInt::zero();
            for l in 0..d {
                s += &a[i * d + l] * &b[l * d + j];
            }
            out[i * d + j] = s;
        }
    }
    out
}

fn big_identity(d: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); d * d];
    for i in 0..d {
        out[i * d + i] = BigInt::one();
    }
    out
}

/// Eigen-splitting of a real matrix by modulus against 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSplitting {
    pub expanding: Vec<(Complex64, Vec<Complex64>)>,
    pub contracting: Vec<(Complex64, Vec<Complex64>)>,
    pub neutral: Vec<(Complex64, Vec<Complex64>)>,
    /// Smallest expanding modulus.
    pub rho: Option<f64>,
    /// Real projection matrices (row-major, d×d) onto the three subspaces.
    pub proj_expanding: Vec<f64>,
    pub proj_contracting: Vec<f64>,
    pub proj_neutral: Vec<f64>,
    /// Maximum residual of P_u + P_s + P_c - I.
    pub projection_residual: f64,
}

impl SpectralSplitting {
    pub fn of(m: &DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let es = eigen_system(m)?;
        let winv = invert(&es.vectors)?;
        let mut expanding = Vec::new();
        let mut contracting = Vec::new();
        let mut neutral = Vec::new();
        let mut sel_u = vec![false; d];
        let mut sel_s = vec![false; d];
        let mut sel_c = vec![false; d];
        for (i, lam) in es.values.iter().enumerate() {
            let v: Vec<Complex64> = es.vectors.column(i).iter().cloned().collect();
            let r = lam.norm();
            if r > 1.0 + MODULUS_TOL {
                expanding.push((*lam, v));
                sel_u[i] = true;
            } else if r < 1.0 - MODULUS_TOL {
                contracting.push((*lam, v));
                sel_s[i] = true;
            } else {
                neutral.push((*lam, v));
                sel_c[i] = true;
            }
        }
        let proj = |sel: &[bool]| -> Vec<f64> {
            let mut p = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut s = Complex64::zero();
                    for k in 0..d {
                        if sel[k] {
                            s += es.vectors[(i, k)] * winv[(k, j)];
                        }
                    }
                    p[i * d + j] = s.re;
                }
            }
            p
        };
        let pu = proj(&sel_u);
        let ps = proj(&sel_s);
        let pc = proj(&sel_c);
        let mut resid: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let id = if i == j { 1.0 } else { 0.0 };
                resid = resid.max((pu[i * d + j] + ps[i * d + j] + pc[i * d + j] - id).abs());
            }
        }
        let rho = expanding.iter().map(|(l, _)| l.norm()).fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.min(x)))
        });
        Ok(SpectralSplitting {
            expanding,
            contracting,
            neutral,
            rho,
            proj_expanding: pu,
            proj_contracting: ps,
            proj_neutral: pc,
            projection_residual: resid,
        })
    }

    fn project_norm(p: &[f64], v: &[f64]) -> f64 {
        let d = v.len();
        (0..d)
            .map(|i| (0..d).map(|j| p[i * d + j] * v[j]).sum::<f64>())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn expanding_norm(&self, v: &[f64]) -> f64 {
        Self::project_norm(&self.proj_expanding, v)
    }

    pub fn contracting_norm(&self, v: &[f64]) -> f64 {
        Self::project_norm(&self.proj_contracting, v)
    }

    pub fn neutral_norm(&self, v: &[f64]) -> f64 {
        Self::project_norm(&self.proj_neutral, v)
    }

    /// max of the Euclidean norms of the three projections.
    pub fn eigen_norm(&self, v: &[f64]) -> f64 {
        self.expanding_norm(v).max(self.contracting_norm(v)).max(self.neutral_norm(v))
    }
}

#[derive(Debug, Default)]
struct Caches {
    splitting: OnceLock<std::result::Result<SpectralSplitting, KamError>>,
    dual: OnceLock<IntMatrix>,
    dual_aut: OnceLock<TorusAutomorphism>,
    coords: OnceLock<std::result::Result<EigenCoords, KamError>>,
    katznelson: OnceLock<f64>,
}

/// Eigenvalues with the inverse eigenvector matrix: `w * x` gives the
/// eigen-coordinates of `x`.
#[derive(Debug, Clone)]
pub struct EigenCoords {
    pub values: Vec<Complex64>,
    pub w: DMatrix<Complex64>,
    /// Row l1 norms of `w`.
    pub row_l1: Vec<f64>,
}

impl EigenCoords {
    pub fn coords(&self, x: &[i64]) -> Vec<Complex64> {
        let d = x.len();
        (0..d).map(|i| (0..d).map(|j| self.w[(i, j)] * x[j] as f64).sum()).collect()
    }

    /// True once some expanding (forward) or contracting (backward)
    /// coordinate exceeds what any point of the box can have: the orbit
    /// then stays outside the box for all later (earlier) times.
    pub fn escaped(&self, x: &[i64], b: usize, forward: bool) -> bool {
        let c = self.coords(x);
        self.values.iter().zip(&c).zip(&self.row_l1).any(|((l, ci), r)| {
            let grows = if forward { l.norm() > 1.0 + MODULUS_TOL } else { l.norm() < 1.0 - MODULUS_TOL };
            grows && ci.norm() > b as f64 * r * (1.0 + 1e-9) + 1e-9
        })
    }
}

/// Integer matrix with |det| = 1 acting on Z^d and T^d.
#[derive(Debug, Clone)]
pub struct TorusAutomorphism {
    matrix: IntMatrix,
    det: i64,
    caches: Arc<Caches>,
}

impl Serialize for TorusAutomorphism {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.matrix.dim;
        let rows: Vec<&[i64]> = (0..d).map(|i| &self.matrix.data[i * d..(i + 1) * d]).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusAutomorphism {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<i64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl PartialEq for TorusAutomorphism {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl TorusAutomorphism {
    pub fn new(matrix: IntMatrix) -> Result<Self> {
        let det = matrix.det();
        if det.abs() != 1 {
            return Err(KamError::NotUnimodular(det));
        }
        Ok(TorusAutomorphism { matrix, det, caches: Arc::new(Caches::default()) })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        Self::new(IntMatrix::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(IntMatrix::identity(dim)).expect("identity is unimodular")
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    /// A ⊕ Id on Z^{d+extra}.
    pub fn embed_with_identity(&self, extra: usize) -> Self {
        Self::new(self.matrix.embed_with_identity(extra)).expect("embedding keeps det")
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.matrix.inverse_unimodular().expect("unimodular")).expect("unimodular")
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(self.matrix.mul(&other.matrix)?)
    }

    /// A* = (A^t)^{-1}, the action on the dual lattice.
    pub fn dual_matrix(&self) -> &IntMatrix {
        self.caches
            .dual
            .get_or_init(|| self.matrix.transpose().inverse_unimodular().expect("unimodular"))
    }

    pub fn dual(&self) -> Self {
        self.caches.dual_aut.get_or_init(|| Self::new(self.dual_matrix().clone()).expect("unimodular")).clone()
    }

    /// Eigen-coordinates of this matrix.
    pub fn eigen_coords(&self) -> Result<&EigenCoords> {
        self.caches
            .coords
            .get_or_init(|| {
                let es = eigen_system(&self.matrix.to_f64())?;
                let w = invert(&es.vectors)?;
                let d = self.dim();
                let row_l1 = (0..d).map(|i| (0..d).map(|j| w[(i, j)].norm()).sum()).collect();
                Ok(EigenCoords { values: es.values, w, row_l1 })
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    pub fn splitting(&self) -> Result<&SpectralSplitting> {
        self.caches
            .splitting
            .get_or_init(|| SpectralSplitting::of(&self.matrix.to_f64()))
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Characteristic polynomial (lowest degree first).
    pub fn charpoly(&self) -> poly::Poly {
        poly::charpoly(&self.matrix.to_big(), self.dim())
    }
}

/// True iff AB = BA exactly.
pub fn check_commuting(a: &TorusAutomorphism, b: &TorusAutomorphism) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(KamError::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    let d = a.dim();
    let ab = big_mul(&a.matrix.to_big(), &b.matrix.to_big(), d);
    let ba = big_mul(&b.matrix.to_big(), &a.matrix.to_big(), d);
    Ok(ab == ba)
}

fn charpoly_is_ergodic(cp: &poly::Poly, d: usize) -> bool {
    poly::cyclotomic_indices(d).into_iter().all(|n| {
        let g = poly::gcd(cp, &poly::cyclotomic(n));
        poly::degree(&g) == Some(0)
    })
}

/// True iff no eigenvalue is a root of unity, decided by gcd with cyclotomic
/// polynomials of degree at most d.
pub fn is_ergodic(a: &TorusAutomorphism) -> bool {
    charpoly_is_ergodic(&a.charpoly(), a.dim())
}

/// Outcome of the finite-range higher-rank check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrReport {
    pub range: i64,
    pub passed: bool,
    /// First (k, l) with A^k B^l non-ergodic, if any.
    pub witness: Option<(i64, i64)>,
}

/// Checks ergodicity of A^k B^l for all (k,l) in [-K,K]^2 minus the origin.
pub fn check_hr_report(a: &TorusAutomorphism, b: &TorusAutomorphism, range: i64) -> Result<HrReport> {
    if !check_commuting(a, b)? {
        return Err(KamError::NotCommuting);
    }
    let d = a.dim();
    let pows = |m: &TorusAutomorphism| -> Vec<Vec<BigInt>> {
        // index k + range
        let fwd = m.matrix.to_big();
        let bwd = m.inverse().matrix.to_big();
        let mut out = vec![big_identity(d); (2 * range + 1) as usize];
        for k in 1..=range {
            out[(range + k) as usize] = big_mul(&out[(range + k - 1) as usize], &fwd, d);
            out[(range - k) as usize] = big_mul(&out[(range - k + 1) as usize], &bwd, d);
        }
        out
    };
    let pa = pows(a);
    let pb = pows(b);
    // Order: by max(|k|,|l|) so the reported witness is the smallest one.
    let mut pairs: Vec<(i64, i64)> = Vec::new();
    for k in -range..=range {
        for l in -range..=range {
            if (k, l) != (0, 0) {
                pairs.push((k, l));
            }
        }
    }
    pairs.sort_by_key(|&(k, l)| (k.abs().max(l.abs()), k.abs() + l.abs(), -k, -l));
    for (k, l) in pairs {
        let m = big_mul(&pa[(k + range) as usize], &pb[(l + range) as usize], d);
        let cp = poly::charpoly(&m, d);
        if !charpoly_is_ergodic(&cp, d) {
            return Ok(HrReport { range, passed: false, witness: Some((k, l)) });
        }
    }
    Ok(HrReport { range, passed: true, witness: None })
}

pub fn check_hr(a: &TorusAutomorphism, b: &TorusAutomorphism, range: i64) -> Result<bool> {
    Ok(check_hr_report(a, b, range)?.passed)
}

/// (A*)^k n in exact integer arithmetic.
pub fn dual_orbit(a: &TorusAutomorphism, n: &[i64], k: i64) -> Result<Vec<i64>> {
    let step = if k >= 0 { a.dual_matrix().clone() } else { a.matrix.transpose() };
    let mut v = n.to_vec();
    for _ in 0..k.unsigned_abs() {
        v = step.apply(&v)?;
    }
    Ok(v)
}

fn as_f64(n: &[i64]) -> Vec<f64> {
    n.iter().map(|&x| x as f64).collect()
}

fn l2(n: &[i64]) -> f64 {
    n.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Orbit representative on the dual lattice: contracting projection (for
/// the dual map) at least the expanding one, with the order reversed one
/// step later. Returns (n*, shift) with n* = (A*)^shift n.
pub fn find_pivot(a: &TorusAutomorphism, n: &[i64]) -> Result<(Vec<i64>, i64)> {
    if n.iter().all(|&x| x == 0) {
        return Err(KamError::Precondition("pivot of the zero vector".into()));
    }
    let dual = a.dual();
    let sp = dual.splitting()?;
    let cap = (64.0 * (1.0 + l2(n).ln())).ceil() as i64;
    let is_pivot = |p: &[i64], next: &[i64]| -> bool {
        let pf = as_f64(p);
        let nf = as_f64(next);
        sp.contracting_norm(&pf) >= sp.expanding_norm(&pf) && sp.contracting_norm(&nf) < sp.expanding_norm(&nf)
    };
    let fwd = a.dual_matrix();
    let bwd = a.matrix.transpose();
    // forward[i] = (A*)^i n, backward[i] = (A*)^{-i} n
    let mut forward = vec![n.to_vec()];
    let mut backward = vec![n.to_vec()];
    let grow = |v: &mut Vec<Vec<i64>>, m: &IntMatrix| -> Result<()> {
        let next = m.apply(v.last().unwrap())?;
        v.push(next);
        Ok(())
    };
    let fail = || KamError::SearchBound(n.to_vec());
    grow(&mut forward, fwd).map_err(|_| fail())?;
    if is_pivot(&forward[0], &forward[1]) {
        return Ok((n.to_vec(), 0));
    }
    for s in 1..=cap {
        let s = s as usize;
        grow(&mut forward, fwd).map_err(|_| fail())?;
        if is_pivot(&forward[s], &forward[s + 1]) {
            return Ok((forward[s].clone(), s as i64));
        }
        grow(&mut backward, &bwd).map_err(|_| fail())?;
        let next = if s == 1 { &forward[0] } else { &backward[s - 1] };
        if is_pivot(&backward[s], next) {
            return Ok((backward[s].clone(), -(s as i64)));
        }
    }
    Err(fail())
}

/// Katznelson-type floor for the expanding projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatznelsonBound {
    pub expanding_norm: f64,
    pub floor: f64,
    pub constant: f64,
}

fn calibration_radius(d: usize) -> i64 {
    match d {
        0..=3 => 50,
        4 => 12,
        _ => 4,
    }
}

/// Calibrated constant C: half the minimum of |n_exp| |n|^d over the
/// calibration box.
pub fn katznelson_constant(a: &TorusAutomorphism) -> Result<f64> {
    if let Some(c) = a.caches.katznelson.get() {
        return Ok(*c);
    }
    let sp = a.splitting()?;
    if sp.expanding.is_empty() {
        return Err(KamError::Precondition("no expanding subspace".into()));
    }
    let d = a.dim();
    let r = calibration_radius(d);
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    let mut best = f64::INFINITY;
    let mut n = vec![0i64; d];
    for idx in 0..total {
        let mut rem = idx;
        for slot in n.iter_mut().rev() {
            *slot = (rem % side) as i64 - r;
            rem /= side;
        }
        if n.iter().all(|&x| x == 0) {
            continue;
        }
        let v = sp.expanding_norm(&as_f64(&n)) * l2(&n).powi(d as i32);
        best = best.min(v);
    }
    let c = 0.5 * best;
    let _ = a.caches.katznelson.set(c);
    Ok(c)
}

/// Expanding-projection norm of n and the certified floor C |n|^{-d}.
pub fn katznelson_bound(a: &TorusAutomorphism, n: &[i64]) -> Result<KatznelsonBound> {
    if n.iter().all(|&x| x == 0) {
        return Err(KamError::Precondition("zero vector".into()));
    }
    let c = katznelson_constant(a)?;
    let sp = a.splitting()?;
    let e = sp.expanding_norm(&as_f64(n));
    let floor = c * l2(n).powi(-(a.dim() as i32));
    if e < floor {
        return Err(KamError::Katznelson { n: n.to_vec(), value: e, floor });
    }
    Ok(KatznelsonBound { expanding_norm: e, floor, constant: c })
}

/// Common eigenvector with its eigenvalues for the pair (A, B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: Complex64,
    pub mu: Complex64,
    pub vector: Vec<Complex64>,
}

/// Common eigenbasis: columns of `p` are the pair vectors, `p_inv` its inverse.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub pairs: Vec<EigenPair>,
    pub p: DMatrix<Complex64>,
    pub p_inv: DMatrix<Complex64>,
    pub max_residual: f64,
}

const PAIR_TOL: f64 = 1e-10;

/// Simultaneous diagonalisation of commuting semisimple A and B.
pub fn simultaneous_eigenbasis(a: &TorusAutomorphism, b: &TorusAutomorphism) -> Result<EigenBasis> {
    if !check_commuting(a, b)? {
        return Err(KamError::NotCommuting);
    }
    let am = a.matrix.to_f64();
    let bm = b.matrix.to_f64();
    // A generic combination separates joint eigenspaces.
    let c = &am + &bm * (2f64.sqrt() - 1.0) * 0.731;
    let es = eigen_system(&c).map_err(|e| match e {
        KamError::JordanCase(s) => KamError::JordanCase(s),
        other => other,
    })?;
    let cond = condition_number(&es.vectors);
    if cond > 1e8 {
        return Err(KamError::JordanCase(format!("eigenvector matrix condition {cond:.2e}")));
    }
    let d = a.dim();
    let ac = am.map(|x| Complex64::new(x, 0.0));
    let bc = bm.map(|x| Complex64::new(x, 0.0));
    let mut pairs = Vec::with_capacity(d);
    let mut max_res: f64 = 0.0;
    for i in 0..d {
        let v = es.vectors.column(i).into_owned();
        let vn = v.dot(&v.map(|z| z.conj()));
        let av = &ac * &v;
        let bv = &bc * &v;
        let lambda = v.map(|z| z.conj()).dot(&av) / vn;
        let mu = v.map(|z| z.conj()).dot(&bv) / vn;
        let ra = (&av - &v * lambda).norm();
        let rb = (&bv - &v * mu).norm();
        max_res = max_res.max(ra).max(rb);
        pairs.push(EigenPair { lambda, mu, vector: v.iter().cloned().collect() });
    }
    if max_res > PAIR_TOL * am.abs().max().max(bm.abs().max()).max(1.0) {
        return Err(KamError::JordanCase(format!("pair residual {max_res:.2e}")));
    }
    // Snap numerically real eigenvalues.
    for p in pairs.iter_mut() {
        if p.lambda.im.abs() < 1e-13 {
            p.lambda.im = 0.0;
        }
        if p.mu.im.abs() < 1e-13 {
            p.mu.im = 0.0;
        }
    }
    let p_inv = invert(&es.vectors)?;
    Ok(EigenBasis { pairs, p: es.vectors, p_inv, max_residual: max_res })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> TorusAutomorphism {
        TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn det_and_inverse() {
        let a = cat();
        assert_eq!(a.det(), 1);
        let inv = a.matrix().inverse_unimodular().unwrap();
        assert_eq!(inv.data, vec![1, -1, -1, 2]);
        assert_eq!(a.dual_matrix().data, vec![1, -1, -1, 2]);
        let bad = IntMatrix::from_rows(&[vec![2, 0], vec![0, 1]]).unwrap();
        assert!(matches!(TorusAutomorphism::new(bad), Err(KamError::NotUnimodular(2))));
    }

    #[test]
    fn commuting_examples() {
        let a = cat();
        let a2 = a.compose(&a).unwrap();
        assert!(check_commuting(&a, &a2).unwrap());
        assert!(check_commuting(&a, &TorusAutomorphism::identity(2)).unwrap());
        let u = TorusAutomorphism::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
        let l = TorusAutomorphism::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
        assert!(!check_commuting(&u, &l).unwrap());
    }

    #[test]
    fn ergodicity_examples() {
        assert!(is_ergodic(&cat()));
        assert!(!is_ergodic(&TorusAutomorphism::identity(2)));
        let rot = TorusAutomorphism::from_rows(&[vec![0, -1], vec![1, 0]]).unwrap();
        assert!(!is_ergodic(&rot));
    }

    #[test]
    fn dual_orbit_cat() {
        let a = cat();
        assert_eq!(dual_orbit(&a, &[1, 0], 0).unwrap(), vec![1, 0]);
        assert_eq!(dual_orbit(&a, &[1, 0], 2).unwrap(), vec![2, -3]);
        let n = vec![3, -7];
        let m = dual_orbit(&a, &n, 1).unwrap();
        assert_eq!(dual_orbit(&a, &m, -1).unwrap(), n);
    }
}
