//! Exact integer polynomials: characteristic polynomials, cyclotomic
//! polynomials and primitive-remainder gcd.
//!
//! Coefficients are stored lowest degree first.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub type Poly = Vec<BigInt>;

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p.last().map_or(false, |c| c.is_zero()) {
        p.pop();
    }
    if p.is_empty() {
        p.push(BigInt::zero());
    }
    p
}

pub fn degree(p: &Poly) -> Option<usize> {
    let p = trim(p.clone());
    if p.len() == 1 && p[0].is_zero() {
        None
    } else {
        Some(p.len() - 1)
    }
}

pub fn is_zero(p: &Poly) -> bool {
    p.iter().all(|c| c.is_zero())
}

fn content(p: &Poly) -> BigInt {
    p.iter().fold(BigInt::zero(), |g, c| g.gcd(c))
}

/// Divides out the content and normalises the leading coefficient to be positive.
pub fn primitive(p: &Poly) -> Poly {
    let p = trim(p.clone());
    let c = content(&p);
    if c.is_zero() {
        return p;
    }
    let sign = if p.last().unwrap().is_negative() { -BigInt::one() } else { BigInt::one() };
    p.into_iter().map(|x| (x / &c) * &sign).collect()
}

/// Pseudo-remainder of `a` by `b` (b nonzero).
pub fn pseudo_rem(a: &Poly, b: &Poly) -> Poly {
    let b = trim(b.clone());
    let db = b.len() - 1;
    let lb = b[db].clone();
    let mut r = trim(a.clone());
    while !is_zero(&r) && r.len() - 1 >= db {
        let dr = r.len() - 1;
        let lr = r[dr].clone();
        let shift = dr - db;
        let mut next: Poly = r.iter().map(|c| c * &lb).collect();
        for (i, c) in b.iter().enumerate() {
            next[i + shift] -= c * &lr;
        }
        r = trim(next);
        if r.len() - 1 == dr && !r[dr].is_zero() {
            break;
        }
    }
    r
}

/// Greatest common divisor over the rationals, returned primitive.
pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    let mut x = primitive(a);
    let mut y = primitive(b);
    if is_zero(&x) {
        return y;
    }
    while !is_zero(&y) {
        let r = pseudo_rem(&x, &y);
        x = y;
        y = primitive(&r);
    }
    primitive(&x)
}

/// Exact division of `a` by monic-or-unit-leading `b`; returns None if not exact.
pub fn exact_div(a: &Poly, b: &Poly) -> Option<Poly> {
    let b = trim(b.clone());
    let db = b.len() - 1;
    let lb = b[db].clone();
    let mut r = trim(a.clone());
    if is_zero(&r) {
        return Some(vec![BigInt::zero()]);
    }
    if r.len() < b.len() {
        return None;
    }
    let mut q = vec![BigInt::zero(); r.len() - db];
    while !is_zero(&r) && r.len() - 1 >= db {
        let dr = r.len() - 1;
        let (qc, rem) = r[dr].div_rem(&lb);
        if !rem.is_zero() {
            return None;
        }
        let shift = dr - db;
        for (i, c) in b.iter().enumerate() {
            r[i + shift] -= c * &qc;
        }
        q[shift] = qc;
        r = trim(r);
        if r.len() - 1 == dr && !r[dr].is_zero() {
            return None;
        }
    }
    if is_zero(&r) {
        Some(trim(q))
    } else {
        None
    }
}

/// Euler's totient.
pub fn totient(mut n: u64) -> u64 {
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

/// The n-th cyclotomic polynomial, built by dividing x^n - 1 by the
/// cyclotomic polynomials of proper divisors.
pub fn cyclotomic(n: u64) -> Poly {
    let mut p: Poly = vec![BigInt::zero(); n as usize + 1];
    p[0] = -BigInt::one();
    p[n as usize] = BigInt::one();
    for d in 1..n {
        if n % d == 0 {
            p = exact_div(&p, &cyclotomic(d)).expect("cyclotomic division is exact");
        }
    }
    p
}

/// All n with totient(n) <= d, ascending.
pub fn cyclotomic_indices(d: usize) -> Vec<u64> {
    // totient(n) >= sqrt(n/2), so n <= 2 d^2 suffices.
    let bound = (2 * d * d).max(2) as u64;
    (1..=bound).filter(|&n| totient(n) as usize <= d).collect()
}

/// Characteristic polynomial det(xI - M) of a square integer matrix given
/// row-major, via Faddeev-LeVerrier with exact division.
pub fn charpoly(m: &[BigInt], d: usize) -> Poly {
    let mut coeffs = vec![BigInt::zero(); d + 1];
    coeffs[d] = BigInt::one();
    let mut mk = vec![BigInt::zero(); d * d];
    for k in 1..=d {
        // M_k = A * M_{k-1} + c_{d-k+1} I
        let mut next = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = BigInt::zero();
                for l in 0..d {
                    s += &m[i * d + l] * &mk[l * d + j];
                }
                next[i * d + j] = s;
            }
        }
        for i in 0..d {
            next[i * d + i] += &coeffs[d - k + 1];
        }
        let mut tr = BigInt::zero();
        for i in 0..d {
            for l in 0..d {
                tr += &m[i * d + l] * &next[l * d + i];
            }
        }
        coeffs[d - k] = -(tr / BigInt::from(k as i64));
        mk = next;
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[i64]) -> Poly {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn cyclotomics_small() {
        assert_eq!(cyclotomic(1), p(&[-1, 1]));
        assert_eq!(cyclotomic(2), p(&[1, 1]));
        assert_eq!(cyclotomic(3), p(&[1, 1, 1]));
        assert_eq!(cyclotomic(4), p(&[1, 0, 1]));
        assert_eq!(cyclotomic(6), p(&[1, -1, 1]));
        assert_eq!(cyclotomic(12), p(&[1, 0, -1, 0, 1]));
    }

    #[test]
    fn totients() {
        assert_eq!(totient(1), 1);
        assert_eq!(totient(12), 4);
        assert_eq!(cyclotomic_indices(2), vec![1, 2, 3, 4, 6]);
    }

    #[test]
    fn charpoly_cat_map() {
        let m = p(&[2, 1, 1, 1]);
        assert_eq!(charpoly(&m, 2), p(&[1, -3, 1]));
    }

    #[test]
    fn charpoly_companion() {
        let m = p(&[0, 0, -1, 1, 0, 3, 0, 1, 0]);
        assert_eq!(charpoly(&m, 3), p(&[1, -3, 0, 1]));
    }

    #[test]
    fn gcd_detects_common_factor() {
        // (x-1)(x+2) and (x-1)(x-3)
        let a = p(&[-2, 1, 1]);
        let b = p(&[3, -4, 1]);
        assert_eq!(gcd(&a, &b), p(&[-1, 1]));
        assert_eq!(degree(&gcd(&p(&[1, -3, 1]), &cyclotomic(1))), Some(0));
    }
}
