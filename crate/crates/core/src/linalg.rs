//! Small dense eigen-solvers over nalgebra used for spectral splittings and
//! common eigenbases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{KamError, Result};

/// Eigenvalues and a basis of eigenvectors (columns) of a real square matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Right null space of `m` (columns), using singular values below `tol`.
fn null_space(m: &DMatrix<Complex64>, tol: f64) -> Vec<DVector<Complex64>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            let row = v_t.row(i);
            out.push(DVector::from_iterator(n, row.iter().map(|c| c.conj())));
        }
    }
    out
}

/// Groups values that agree within `tol`, returning index lists.
fn cluster(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        if let Some(g) = groups.iter_mut().find(|g| (values[g[0]] - v).norm() <= tol) {
            g.push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Rotates a complex vector so its largest entry is real positive, then, if
/// the vector is real up to `tol`, drops the imaginary part.
fn normalise(v: &DVector<Complex64>, want_real: bool) -> DVector<Complex64> {
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .unwrap();
    let phase = v[imax] / v[imax].norm();
    let mut w = v.map(|c| c / phase);
    if want_real {
        w = w.map(|c| Complex64::new(c.re, 0.0));
    }
    let n = w.norm();
    w / Complex64::new(n, 0.0)
}

/// Eigen-decomposition of a real diagonalisable matrix. Complex eigenvalues
/// come in adjacent conjugate pairs with conjugate eigenvectors; real
/// eigenvalues get real eigenvectors.
pub fn eigen_system(m: &DMatrix<f64>) -> Result<EigenSystem> {
    let d = m.nrows();
    let scale = m.abs().max().max(1.0);
    let raw: Vec<Complex64> = m.clone().complex_eigenvalues().iter().cloned().collect();
    let groups = cluster(&raw, 1e-7 * scale);
    let mc = to_complex(m);
    let mut values = Vec::with_capacity(d);
    let mut cols: Vec<DVector<Complex64>> = Vec::with_capacity(d);
    let mut centers: Vec<(Complex64, usize)> = groups
        .iter()
        .map(|g| {
            let c = g.iter().map(|&i| raw[i]).sum::<Complex64>() / g.len() as f64;
            (c, g.len())
        })
        .collect();
    centers.sort_by(|a, b| {
        b.0.norm()
            .partial_cmp(&a.0.norm())
            .unwrap()
            .then(a.0.re.partial_cmp(&b.0.re).unwrap())
            .then(b.0.im.partial_cmp(&a.0.im).unwrap())
    });
    for (lam, mult) in centers {
        let real = lam.im.abs() <= 1e-9 * scale;
        if !real && lam.im < 0.0 {
            continue;
        }
        let lam = if real { Complex64::new(lam.re, 0.0) } else { lam };
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * lam;
        let mut basis = null_space(&shifted, 1e-6 * scale);
        if basis.len() != mult {
            return Err(KamError::JordanCase(format!(
                "eigenvalue {lam} has algebraic multiplicity {mult} but geometric {}",
                basis.len()
            )));
        }
        if real && mult > 1 {
            // Real basis for a repeated real eigenvalue from the real null space.
            let sr = m - DMatrix::<f64>::identity(d, d) * lam.re;
            let svd = sr.svd(false, true);
            let v_t = svd.v_t.unwrap();
            basis = svd
                .singular_values
                .iter()
                .enumerate()
                .filter(|(_, s)| **s <= 1e-6 * scale)
                .map(|(i, _)| DVector::from_iterator(d, v_t.row(i).iter().map(|x| Complex64::new(*x, 0.0))))
                .collect();
        }
        for b in basis {
            let v = if mult == 1 { normalise(&b, real) } else { b };
            values.push(lam);
            cols.push(v.clone());
            if !real {
                values.push(lam.conj());
                cols.push(v.map(|c| c.conj()));
            }
        }
    }
    if cols.len() != d {
        return Err(KamError::Eigen(format!("found {} of {} eigenvectors", cols.len(), d)));
    }
    let vectors = DMatrix::from_columns(&cols);
    Ok(EigenSystem { values, vectors })
}

/// Spectral condition number of a complex matrix.
pub fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn invert(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| KamError::Eigen("singular eigenvector matrix".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_map_eigen() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let es = eigen_system(&m).unwrap();
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((es.values[0].re - phi2).abs() < 1e-12);
        for (i, lam) in es.values.iter().enumerate() {
            let v = es.vectors.column(i);
            let r = to_complex(&m) * v - v * *lam;
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_gives_conjugate_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let es = eigen_system(&m).unwrap();
        assert!((es.values[0] - es.values[1].conj()).norm() < 1e-12);
        let c0 = es.vectors.column(0).map(|c| c.conj());
        assert!((c0 - es.vectors.column(1)).norm() < 1e-12);
    }

    #[test]
    fn identity_block_is_fine_but_jordan_is_not() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(eigen_system(&id).unwrap().values.len(), 3);
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(eigen_system(&j), Err(KamError::JordanCase(_))));
    }
}
