//! Values computed independently (exact arithmetic where possible) and
//! frozen here.

use num_bigint::BigInt;
use num_complex::Complex64;
use torus_kam::cohomology::{obstruction, TwistedEquation};
use torus_kam::exclusion::{eigen_set, exclude_interval_to, in_d, sdc_check};
use torus_kam::family::{lip_norm, FrequencyFamily, ParamFamily};
use torus_kam::fixtures::{cat_map, cubic_pair, golden};
use torus_kam::fourier::FourierField;
use torus_kam::lattice::{check_commuting, check_hr, dual_orbit, find_pivot, is_ergodic, TorusAutomorphism};
use torus_kam::poly::totient;

fn sorted_re(v: &[Complex64]) -> Vec<f64> {
    let mut r: Vec<f64> = v.iter().map(|z| z.re).collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r
}

#[test]
fn cat_dual_and_orbit() {
    let cat = cat_map();
    let d = cat.dual_matrix();
    assert_eq!([d.get(0, 0), d.get(0, 1), d.get(1, 0), d.get(1, 1)], [1, -1, -1, 2]);
    assert_eq!(dual_orbit(&cat, &[1, 0], 2).unwrap(), vec![2, -3]);
    assert_eq!(dual_orbit(&cat, &[1, 0], -3).unwrap(), vec![13, 8]);
}

#[test]
fn cat_spectral_data() {
    let cat = cat_map();
    assert!(is_ergodic(&cat));
    let cp: Vec<BigInt> = [1, -3, 1].iter().map(|&x| BigInt::from(x)).collect();
    assert_eq!(cat.charpoly(), cp);
    let sp = cat.splitting().unwrap();
    assert!((sp.expanding_norm(&[1.0, 0.0]) - 0.8506508083520399).abs() < 1e-14);
    // The inverse transpose swaps the two directions.
    let dual = cat.dual();
    let dsp = dual.splitting().unwrap();
    assert!((dsp.contracting_norm(&[1.0, 0.0]) - 0.8506508083520399).abs() < 1e-14);
    assert_eq!(find_pivot(&cat, &[1, 0]).unwrap(), (vec![1, 0], 0));
}

#[test]
fn cubic_pair_data() {
    let (a, b) = cubic_pair();
    assert!(check_commuting(&a, &b).unwrap());
    assert_eq!(b.det(), 1);
    let ea = sorted_re(&a.eigen_coords().unwrap().values);
    let eb = sorted_re(&b.eigen_coords().unwrap().values);
    let want_a = [-1.8793852415718169, 0.3472963553338607, 1.532088886237956];
    let want_b = [-2.879385241571817, -0.6527036446661393, 0.532088886237956];
    for i in 0..3 {
        assert!((ea[i] - want_a[i]).abs() < 1e-12);
        assert!((eb[i] - want_b[i]).abs() < 1e-12);
    }
    assert!(check_hr(&a, &b, 5).unwrap());
    assert!(!check_hr(&cat_map(), &cat_map(), 3).unwrap());
}

#[test]
fn shears_do_not_commute() {
    let p = TorusAutomorphism::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
    let q = TorusAutomorphism::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap();
    assert!(!check_commuting(&p, &q).unwrap());
}

#[test]
fn golden_gaps_at_ten() {
    let eigs = eigen_set(&cat_map()).unwrap();
    let cert = in_d(&[golden()], 10, &eigs, 3.0);
    assert!(cert.pass);
    let mut got: Vec<f64> = cert.gaps.iter().map(|g| g.min_gap).collect();
    got.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let want = [1.7134035735877824, 0.6544619286650012, 0.34836390075862533];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    for alpha in [0.0, 0.5] {
        let c = in_d(&[alpha], 10, &eigs, 3.0);
        assert!(!c.pass);
        assert!(c.min_gap() < 1e-12);
    }
}

#[test]
fn exclusion_measure_matches_farey_count() {
    let farey = 1 + (1..=1000u64).map(totient).sum::<u64>();
    assert_eq!(farey, 304193);
    let eigs = eigen_set(&cat_map()).unwrap();
    let phi = FrequencyFamily::affine((0.0, 1.0), 0.0, 1.0);
    let (_, cert) = exclude_interval_to(0.0, 1.0, &phi, 100.0, 1000, 2.0, &eigs).unwrap();
    // Summing ~3e5 interval lengths costs about 1e-11.
    assert!((cert.kept - 0.998783232).abs() < 1e-10);
    assert!((cert.bound - 0.992).abs() < 1e-15);
}

#[test]
fn golden_pair_sdc_margin() {
    let g = golden();
    let unit = [(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))];
    let rep = sdc_check(&[g], &[g * g], &unit, 2.0, 0.1, 1000).unwrap();
    assert!(rep.pass);
    assert!((rep.min_margin - 0.0028468318636952618).abs() < 1e-12);
    assert_eq!(rep.worst_k[0].abs(), 987);
}

#[test]
fn single_mode_obstruction() {
    let lam = Complex64::new(1.7, -0.4);
    let eq = TwistedEquation::new(lam, cat_map(), vec![0.3], 8.0);
    let v = FourierField::mode(2, 1, &[1, 0], &[1], Complex64::new(1.0, 0.0)).unwrap();
    let o = obstruction(&v, &eq, &[1, 0], &[1]).unwrap();
    // lambda_m^{-1} times the twisted coefficient e(-m.phi) v.
    let twisted = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * 0.3);
    assert!((o - twisted / eq.lambda_m(&[1])).norm() < 1e-15);
}

#[test]
fn lip_norm_of_constant_family() {
    // 2 cos(2 pi x) on T^1 x T^1 at two parameter values.
    let f = FourierField::real_mode(1, 1, &[1], &[0], Complex64::new(1.0, 0.0)).unwrap();
    let fam = ParamFamily::new((0.0, 1.0), vec![0.0, 1.0], vec![f.clone(), f]).unwrap();
    assert!((lip_norm(&fam, 0).unwrap() - 2.0).abs() < 1e-14);
}
