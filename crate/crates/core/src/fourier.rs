//! Finitely supported Fourier fields on T^{d1} x T^{d2}.
//!
//! Coefficients live in a dense cube of side `2*box + 1` indexed by
//! `(n, m)` with max-norm at most `box`, row-major, first index slowest.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::lattice::{SpectralSplitting, TorusAutomorphism};

/// Largest box any operation may grow a field to.
pub const WORKING_BOX_LIMIT: usize = 64;

#[inline]
pub fn cis(x: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * x).sin_cos();
    Complex64::new(c, s)
}

/// Iterates all integer vectors of length `dim` with max-norm at most `b`,
/// in the storage order of a field of that box.
pub fn box_indices(dim: usize, b: usize) -> impl Iterator<Item = Vec<i64>> {
    let side = 2 * b + 1;
    let total = side.pow(dim as u32);
    (0..total).map(move |mut lin| {
        let mut v = vec![0i64; dim];
        for slot in v.iter_mut().rev() {
            *slot = (lin % side) as i64 - b as i64;
            lin /= side;
        }
        v
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    d1: usize,
    d2: usize,
    box_: usize,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn zeros(d1: usize, d2: usize, box_: usize) -> Self {
        let side = 2 * box_ + 1;
        FourierField { d1, d2, box_, coeffs: vec![Complex64::new(0.0, 0.0); side.pow((d1 + d2) as u32)] }
    }

    pub fn constant(d1: usize, d2: usize, box_: usize, c: Complex64) -> Self {
        let mut f = Self::zeros(d1, d2, box_);
        f.set(&vec![0; d1 + d2], c).expect("origin is in every box");
        f
    }

    /// The character `c * chi_{n,m}` in the smallest box containing it.
    pub fn mode(d1: usize, d2: usize, n: &[i64], m: &[i64], c: Complex64) -> Result<Self> {
        let idx: Vec<i64> = n.iter().chain(m).cloned().collect();
        if n.len() != d1 || m.len() != d2 {
            return Err(KamError::Dimension("mode index length".into()));
        }
        let b = idx.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
        let mut f = Self::zeros(d1, d2, b);
        f.set(&idx, c)?;
        Ok(f)
    }

    /// `c chi_{n,m} + conj(c) chi_{-n,-m}`: a real field.
    pub fn real_mode(d1: usize, d2: usize, n: &[i64], m: &[i64], c: Complex64) -> Result<Self> {
        let a = Self::mode(d1, d2, n, m, c)?;
        let nn: Vec<i64> = n.iter().map(|x| -x).collect();
        let mm: Vec<i64> = m.iter().map(|x| -x).collect();
        let b = Self::mode(d1, d2, &nn, &mm, c.conj())?;
        Ok(a.add(&b))
    }

    pub fn from_coeffs(d1: usize, d2: usize, box_: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let side = 2 * box_ + 1;
        if coeffs.len() != side.pow((d1 + d2) as u32) {
            return Err(KamError::Dimension(format!("{} coefficients for box {box_}", coeffs.len())));
        }
        Ok(FourierField { d1, d2, box_, coeffs })
    }

    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.d2
    }
    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }
    pub fn box_size(&self) -> usize {
        self.box_
    }
    pub fn side(&self) -> usize {
        2 * self.box_ + 1
    }
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Linear storage position of an index, if inside the box.
    #[inline]
    pub fn position(&self, idx: &[i64]) -> Option<usize> {
        let b = self.box_ as i64;
        let side = self.side();
        let mut lin = 0usize;
        for &x in idx {
            if x < -b || x > b {
                return None;
            }
            lin = lin * side + (x + b) as usize;
        }
        Some(lin)
    }

    pub fn index_of(&self, mut lin: usize) -> Vec<i64> {
        let side = self.side();
        let mut v = vec![0i64; self.dim()];
        for slot in v.iter_mut().rev() {
            *slot = (lin % side) as i64 - self.box_ as i64;
            lin /= side;
        }
        v
    }

    pub fn get(&self, idx: &[i64]) -> Complex64 {
        self.position(idx).map_or(Complex64::new(0.0, 0.0), |p| self.coeffs[p])
    }

    pub fn get_nm(&self, n: &[i64], m: &[i64]) -> Complex64 {
        let idx: Vec<i64> = n.iter().chain(m).cloned().collect();
        self.get(&idx)
    }

    pub fn set(&mut self, idx: &[i64], c: Complex64) -> Result<()> {
        let p = self.position(idx).ok_or_else(|| KamError::SupportEscape {
            needed: idx.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0),
            limit: self.box_,
        })?;
        self.coeffs[p] = c;
        Ok(())
    }

    /// Nonzero coefficients with their indices, in storage order.
    pub fn support(&self) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(i, c)| (self.index_of(i), *c))
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|c| c.re != 0.0 || c.im != 0.0).count()
    }

    /// Smallest box containing the support.
    pub fn support_box(&self) -> usize {
        self.support().map(|(i, _)| i.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0)).max().unwrap_or(0)
    }

    /// Same field stored in box `b`; fails if the support does not fit.
    pub fn with_box(&self, b: usize) -> Result<Self> {
        if b == self.box_ {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(self.d1, self.d2, b);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let idx = self.index_of(i);
            out.set(&idx, *c)?;
        }
        Ok(out)
    }

    /// Restriction to box `b`, dropping anything outside.
    pub fn clip(&self, b: usize) -> Self {
        let mut out = Self::zeros(self.d1, self.d2, b);
        for (i, c) in self.coeffs.iter().enumerate() {
            let idx = self.index_of(i);
            if let Some(p) = out.position(&idx) {
                out.coeffs[p] = *c;
            }
        }
        out
    }

    fn check_same_dims(&self, other: &Self) {
        assert!(self.d1 == other.d1 && self.d2 == other.d2, "field dimensions differ");
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        self.check_same_dims(other);
        let b = self.box_.max(other.box_);
        let a = self.with_box(b).expect("growing a box never fails");
        let o = other.with_box(b).expect("growing a box never fails");
        let coeffs = a.coeffs.iter().zip(&o.coeffs).map(|(x, y)| f(*x, *y)).collect();
        FourierField { coeffs, ..a }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        FourierField { coeffs: self.coeffs.iter().map(|c| c * s).collect(), ..self.clone() }
    }

    pub fn conj_field(&self) -> Self {
        // g(x) = conj(f(x)) has coefficient conj(c_{-k}) at k.
        let mut out = self.clone();
        let len = self.coeffs.len();
        for i in 0..len {
            out.coeffs[i] = self.coeffs[len - 1 - i].conj();
        }
        out
    }

    /// Largest |c_k - conj(c_{-k})|.
    pub fn hermitian_defect(&self) -> f64 {
        let len = self.coeffs.len();
        (0..len).map(|i| (self.coeffs[i] - self.coeffs[len - 1 - i].conj()).norm()).fold(0.0, f64::max)
    }

    /// Projects onto real fields by averaging with the conjugate.
    pub fn real_part(&self) -> Self {
        self.add(&self.conj_field()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Sum of coefficient moduli: an upper bound for the sup-norm.
    pub fn l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn average(&self) -> Complex64 {
        self.get(&vec![0; self.dim()])
    }

    /// Fourier multiplier for the partial derivative with multi-index `iota`.
    pub fn derivative(&self, iota: &[usize]) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let idx = self.index_of(i);
            let mut mult = Complex64::new(1.0, 0.0);
            for (k, &p) in idx.iter().zip(iota) {
                mult *= Complex64::new(0.0, 2.0 * PI * *k as f64).powu(p as u32);
            }
            *c *= mult;
        }
        out
    }

    /// Composition with (x, theta) -> (A x, theta + shift).
    pub fn compose_affine(&self, a: &TorusAutomorphism, shift: &[f64]) -> Result<Self> {
        if a.dim() != self.d1 || shift.len() != self.d2 {
            return Err(KamError::Dimension("affine map does not match field factors".into()));
        }
        let at = a.matrix().transpose();
        let mut entries = Vec::with_capacity(self.nnz());
        let mut need = 0usize;
        for (idx, c) in self.support() {
            let (n, m) = idx.split_at(self.d1);
            let target = at.apply(n)?;
            let phase: f64 = m.iter().zip(shift).map(|(mi, s)| *mi as f64 * s).sum();
            need = need.max(target.iter().chain(m).map(|x| x.unsigned_abs() as usize).max().unwrap_or(0));
            let full: Vec<i64> = target.into_iter().chain(m.iter().cloned()).collect();
            entries.push((full, c * cis(phase)));
        }
        if need > WORKING_BOX_LIMIT {
            return Err(KamError::SupportEscape { needed: need, limit: WORKING_BOX_LIMIT });
        }
        let mut out = Self::zeros(self.d1, self.d2, self.box_.max(need));
        for (idx, c) in entries {
            out.set(&idx, c)?;
        }
        Ok(out)
    }

    /// Multiplies the coefficient at (n, m) by e^{2 pi i <m, shift>}: the
    /// composition with a pure rotation of the elliptic factor.
    pub fn rotate(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let idx = self.index_of(i);
            let phase: f64 = idx[self.d1..].iter().zip(shift).map(|(m, s)| *m as f64 * s).sum();
            *c *= cis(phase);
        }
        out
    }

    /// Truncation by the mode norm: keeps ||(n, m)|| <= n_trunc.
    pub fn truncate(&self, norm: &ModeNorm, n_trunc: f64) -> Self {
        let mut out = self.clone();
        if n_trunc >= self.box_ as f64 * norm.max_ratio() {
            return out;
        }
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let idx = self.index_of(i);
            if norm.norm(&idx) > n_trunc {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// R_N v = v - T_N v.
    pub fn residue(&self, norm: &ModeNorm, n_trunc: f64) -> Self {
        self.sub(&self.truncate(norm, n_trunc))
    }

    /// Point evaluation by direct summation.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let b = self.box_size() as i64;
        let side = self.side();
        let dim = self.dim();
        // Phase tables per axis; the last axis varies fastest in the layout.
        let tables: Vec<Vec<Complex64>> = x.iter().map(|&xi| (-b..=b).map(|k| cis(k as f64 * xi)).collect()).collect();
        let mut digits = vec![0usize; dim];
        let mut sum = Complex64::new(0.0, 0.0);
        for c in self.coeffs() {
            if c.re != 0.0 || c.im != 0.0 {
                let mut w = *c;
                for (t, &dg) in tables.iter().zip(&digits) {
                    w *= t[dg];
                }
                sum += w;
            }
            for dg in digits.iter_mut().rev() {
                *dg += 1;
                if *dg < side {
                    break;
                }
                *dg = 0;
            }
        }
        sum
    }

    /// Rows `(n..., m..., re, im)` for nonzero coefficients.
    pub fn to_rows(&self) -> Vec<(Vec<i64>, f64, f64)> {
        self.support().map(|(i, c)| (i, c.re, c.im)).collect()
    }

    pub fn from_rows(d1: usize, d2: usize, rows: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let b = rows
            .iter()
            .flat_map(|(i, _, _)| i.iter().map(|x| x.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        let mut f = Self::zeros(d1, d2, b);
        for (idx, re, im) in rows {
            if idx.len() != d1 + d2 {
                return Err(KamError::Dimension(format!("row index {idx:?}")));
            }
            let p = f.position(idx).expect("box covers rows");
            f.coeffs[p] += Complex64::new(*re, *im);
        }
        Ok(f)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    d1: usize,
    d2: usize,
    #[serde(rename = "box")]
    box_: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for FourierField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldRepr {
            d1: self.d1,
            d2: self.d2,
            box_: self.box_,
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = FieldRepr::deserialize(d)?;
        FourierField::from_coeffs(r.d1, r.d2, r.box_, r.coeffs.into_iter().map(|[a, b]| Complex64::new(a, b)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// The mode norm ||(n, m)|| = max(eigenprojection norm of n, |m|_inf), with
/// projections taken along the splitting of the dual action.
#[derive(Debug, Clone)]
pub struct ModeNorm {
    d1: usize,
    splitting: Option<SpectralSplitting>,
    ratio: f64,
}

impl ModeNorm {
    pub fn new(a: &TorusAutomorphism) -> Result<Self> {
        let sp = a.dual().splitting()?.clone();
        let d = a.dim();
        // Upper bound of eigen-norm / max-norm on integer vectors.
        let mut ratio: f64 = 1.0;
        for p in [&sp.proj_expanding, &sp.proj_contracting, &sp.proj_neutral] {
            let fro: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            ratio = ratio.max(fro * (d as f64).sqrt());
        }
        Ok(ModeNorm { d1: d, splitting: Some(sp), ratio })
    }

    /// Plain max-norm on all indices.
    pub fn max_norm(d1: usize) -> Self {
        ModeNorm { d1, splitting: None, ratio: 1.0 }
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratio
    }

    pub fn norm(&self, idx: &[i64]) -> f64 {
        let (n, m) = idx.split_at(self.d1);
        let mm = m.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64;
        let nn = match &self.splitting {
            Some(sp) => sp.eigen_norm(&n.iter().map(|&x| x as f64).collect::<Vec<_>>()),
            None => n.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0) as f64,
        };
        nn.max(mm)
    }
}

/// A vector-valued field: one scalar Fourier field per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub components: Vec<FourierField>,
}

impl VectorField {
    pub fn zeros(d1: usize, d2: usize, box_: usize) -> Self {
        VectorField { components: vec![FourierField::zeros(d1, d2, box_); d1 + d2] }
    }

    pub fn add(&self, o: &Self) -> Self {
        VectorField { components: self.components.iter().zip(&o.components).map(|(a, b)| a.add(b)).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        VectorField { components: self.components.iter().zip(&o.components).map(|(a, b)| a.sub(b)).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        VectorField { components: self.components.iter().map(|a| a.scale(s)).collect() }
    }

    pub fn rotate(&self, shift: &[f64]) -> Self {
        VectorField { components: self.components.iter().map(|a| a.rotate(shift)).collect() }
    }

    pub fn with_box(&self, b: usize) -> Result<Self> {
        Ok(VectorField { components: self.components.iter().map(|c| c.with_box(b)).collect::<Result<_>>()? })
    }

    pub fn clip(&self, b: usize) -> Self {
        VectorField { components: self.components.iter().map(|c| c.clip(b)).collect() }
    }

    pub fn box_size(&self) -> usize {
        self.components.iter().map(|c| c.box_size()).max().unwrap_or(0)
    }

    pub fn l1(&self) -> f64 {
        self.components.iter().map(|c| c.l1()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// Averages of the last `d2` components.
    pub fn elliptic_average(&self, d1: usize) -> Vec<f64> {
        self.components[d1..].iter().map(|c| c.average().re).collect()
    }

    /// Coordinates in the basis with columns `p`: returns `p^{-1} * self`.
    pub fn eigen_decompose(&self, p_inv: &nalgebra::DMatrix<Complex64>) -> Self {
        self.mix(p_inv)
    }

    /// Inverse of `eigen_decompose`: returns `p * coords`.
    pub fn eigen_reassemble(&self, p: &nalgebra::DMatrix<Complex64>) -> Self {
        self.mix(p)
    }

    fn mix(&self, m: &nalgebra::DMatrix<Complex64>) -> Self {
        let d = self.components.len();
        let b = self.box_size();
        let comps: Vec<FourierField> = self.components.iter().map(|c| c.with_box(b).unwrap()).collect();
        let proto = &comps[0];
        let len = proto.coeffs.len();
        let mut out = vec![FourierField::zeros(proto.d1, proto.d2, b); d];
        for i in 0..d {
            for j in 0..d {
                let w = m[(i, j)];
                if w.re == 0.0 && w.im == 0.0 {
                    continue;
                }
                for l in 0..len {
                    out[i].coeffs[l] += w * comps[j].coeffs[l];
                }
            }
        }
        VectorField { components: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> TorusAutomorphism {
        TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn compose_moves_mode_by_transpose() {
        let h = FourierField::mode(2, 1, &[1, 0], &[0], Complex64::new(1.0, 0.0)).unwrap();
        let g = h.compose_affine(&cat(), &[0.3]).unwrap();
        // cos 2 pi x1 composed with A: x1 -> 2 x1 + x2, mode (2, 1)
        assert_eq!(g.get(&[2, 1, 0]), Complex64::new(1.0, 0.0));
        assert_eq!(g.nnz(), 1);
        let e = FourierField::mode(2, 1, &[0, 0], &[1], Complex64::new(1.0, 0.0)).unwrap();
        let r = e.compose_affine(&cat(), &[0.25]).unwrap();
        assert!((r.get(&[0, 0, 1]) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn truncate_plus_residue_is_identity() {
        let norm = ModeNorm::new(&cat()).unwrap();
        let mut f = FourierField::zeros(2, 1, 3);
        for (i, c) in f.coeffs_mut().iter_mut().enumerate() {
            *c = Complex64::new(i as f64, -(i as f64) * 0.5);
        }
        let t = f.truncate(&norm, 1.5);
        let r = f.residue(&norm, 1.5);
        assert_eq!(t.add(&r), f);
        assert_eq!(t.truncate(&norm, 1.5), t);
        assert_eq!(f.truncate(&norm, 100.0), f);
    }

    #[test]
    fn conj_and_hermitian() {
        let f = FourierField::real_mode(1, 1, &[1], &[2], Complex64::new(0.3, 0.7)).unwrap();
        assert!(f.hermitian_defect() < 1e-15);
        assert!(f.eval(&[0.1, 0.2]).im.abs() < 1e-15);
    }
}
