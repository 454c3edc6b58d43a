use num_complex::Complex64;
use proptest::prelude::*;

use torus_kam::cohomology::{obstruction, solve_twisted, TwistedEquation};
use torus_kam::exclusion::ParamSet;
use torus_kam::family::{lip_norm, ParamFamily};
use torus_kam::fixtures::cat_map;
use torus_kam::fourier::{box_indices, FourierField, ModeNorm, VectorField};
use torus_kam::grid::Grid;
use torus_kam::lattice::dual_orbit;
use torus_kam::maps::{AffineMap, ConjugatedMap};

fn field(d1: usize, d2: usize, b: usize, raw: &[(f64, f64)]) -> FourierField {
    let len = (2 * b + 1).pow((d1 + d2) as u32);
    let coeffs = (0..len).map(|i| Complex64::new(raw[i % raw.len()].0, raw[i % raw.len()].1)).collect();
    FourierField::from_coeffs(d1, d2, b, coeffs).unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..64)
}

fn family(fs: Vec<FourierField>) -> ParamFamily<FourierField> {
    let n = fs.len();
    let nodes = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    ParamFamily::new((0.0, 1.0), nodes, fs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lip_norm_is_a_norm(a in coeffs(), b in coeffs(), s in -3.0..3.0f64, r in 0usize..2) {
        let fa = family(vec![field(1, 1, 2, &a), field(1, 1, 2, &a[1..]).scale(Complex64::new(0.5, 0.0)), field(1, 1, 2, &b)]);
        let fb = family(vec![field(1, 1, 2, &b), field(1, 1, 2, &a), field(1, 1, 2, &b).scale(Complex64::new(-1.0, 0.0))]);
        let sum = family(fa.values.iter().zip(&fb.values).map(|(x, y)| x.add(y)).collect());
        let scaled = family(fa.values.iter().map(|x| x.scale(Complex64::new(s, 0.0))).collect());
        let (na, nb) = (lip_norm(&fa, r).unwrap(), lip_norm(&fb, r).unwrap());
        prop_assert!(lip_norm(&sum, r).unwrap() <= (na + nb) * (1.0 + 1e-12) + 1e-12);
        prop_assert!((lip_norm(&scaled, r).unwrap() - s.abs() * na).abs() <= 1e-10 * (1.0 + na));
    }

    #[test]
    fn truncation_splits_the_field(a in coeffs(), n in 0.5..8.0f64) {
        let f = field(2, 1, 4, &a);
        let norm = ModeNorm::new(&cat_map()).unwrap();
        let back = f.truncate(&norm, n).add(&f.residue(&norm, n));
        prop_assert!(back.sub(&f).max_abs() == 0.0);
        for (k, _) in f.truncate(&norm, n).support() {
            prop_assert!(norm.norm(&k) <= n);
        }
    }

    #[test]
    fn measure_is_additive(cuts in prop::collection::vec((0.0..1.0f64, 0.0..0.2f64), 0..12), lo in 0.0..0.5f64, hi in 0.5..1.0f64) {
        let removed = ParamSet::from_intervals(cuts.iter().map(|&(a, w)| (a, (a + w).min(1.0))).collect());
        let base = ParamSet::interval(lo, hi);
        let inside = base.intersect(&removed);
        let outside = base.subtract(&removed);
        prop_assert!((inside.measure() + outside.measure() - base.measure()).abs() < 1e-12);
        prop_assert!(outside.intersect(&removed).measure() < 1e-12);
    }

    #[test]
    fn dual_orbit_inverts(n in prop::array::uniform2(-50i64..50), k in -12i64..12) {
        let cat = cat_map();
        let m = dual_orbit(&cat, &n, k).unwrap();
        prop_assert_eq!(dual_orbit(&cat, &m, -k).unwrap(), n.to_vec());
    }

    #[test]
    fn grid_product_is_convolution(a in coeffs(), b in coeffs(), bx in 1usize..4) {
        let f = field(1, 1, bx, &a);
        let g = field(1, 1, bx, &b);
        let grid = Grid::for_box(2, 2 * bx);
        let (fv, gv) = (grid.to_grid_complex(&f).unwrap(), grid.to_grid_complex(&g).unwrap());
        let prod: Vec<Complex64> = fv.iter().zip(&gv).map(|(x, y)| x * y).collect();
        let via_grid = grid.from_grid_complex(&prod, 1, 1, 2 * bx).unwrap();
        let mut direct = FourierField::zeros(1, 1, 2 * bx);
        for (ka, ca) in f.support() {
            for (kb, cb) in g.support() {
                let k: Vec<i64> = ka.iter().zip(&kb).map(|(x, y)| x + y).collect();
                direct.set(&k, direct.get(&k) + ca * cb).unwrap();
            }
        }
        prop_assert!(via_grid.sub(&direct).max_abs() < 1e-12);
    }

    #[test]
    fn conjugacy_inverse(x in prop::array::uniform3(0.0..1.0f64), a in coeffs()) {
        let h = VectorField {
            components: (0..3).map(|i| field(2, 1, 1, &a[i.min(a.len() - 1)..]).real_part().scale(Complex64::new(2e-3, 0.0))).collect(),
        };
        let map = ConjugatedMap::new(AffineMap::new(&cat_map(), vec![0.3], None), &h);
        let y = map.inverse_h(&x);
        for (i, c) in h.components.iter().enumerate() {
            prop_assert!((y[i] + c.eval(&y).re - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn coboundaries_are_solved(a in coeffs(), re in 1.2..3.0f64, im in -1.0..1.0f64, phi in 0.0..1.0f64) {
        let eq = TwistedEquation::new(Complex64::new(re, im), cat_map(), vec![phi], 1e4);
        let mut h0 = field(2, 1, 3, &a);
        h0.set(&[0, 0, 0], Complex64::new(0.0, 0.0)).unwrap();
        let v = eq.apply(&h0).unwrap();
        let (h, _) = solve_twisted(&v, &eq).unwrap();
        prop_assert!(h.sub(&h0).max_abs() < 1e-10);
    }

    #[test]
    fn obstruction_is_equivariant(a in coeffs(), n in prop::array::uniform2(-4i64..4), m in -3i64..3, re in -3.0..3.0f64, im in -3.0..3.0f64) {
        prop_assume!(n != [0, 0] && re.hypot(im) > 0.1);
        let eq = TwistedEquation::new(Complex64::new(re, im), cat_map(), vec![0.41], 8.0);
        let v = field(2, 1, 5, &a);
        let an = dual_orbit(&cat_map(), &n, 1).unwrap();
        let lhs = obstruction(&v, &eq, &an, &[m]).unwrap();
        let rhs = eq.lambda_m(&[m]) * obstruction(&v, &eq, &n, &[m]).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }
}

#[test]
fn box_indices_cover_the_box() {
    assert_eq!(box_indices(3, 2).count(), 125);
}
