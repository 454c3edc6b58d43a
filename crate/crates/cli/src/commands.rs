use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use torus_kam::cohomology::{obstruction_correction, solve_twisted_ref, OrbitAtlas, SolveReport, TwistedEquation};
use torus_kam::estimates::{
    box_drift, verify_interpolation, verify_inversion, verify_product_and_composition, DriftReport, SampleSet,
};
use torus_kam::exclusion::{eigen_set, exclude_interval_d2, exclude_interval_to, in_d, next_level, pyartli_check, sdc_check};
use torus_kam::fourier::{box_indices, FourierField, ModeNorm};
use torus_kam::grid::Grid;
use torus_kam::kam::{inductive_step, run_scheme, SchemeReport, StepNorms};
use torus_kam::lattice::{check_hr_report, is_ergodic, simultaneous_eigenbasis};
use torus_kam::KamError;

use crate::output::{emit_plotdata, gap_histogram, OutDir};
use crate::scenario::{Scenario, Validated};

/// How a command ended, short of a configuration error.
pub enum Status {
    Certified,
    Failed(String),
}

impl From<KamError> for Status {
    fn from(e: KamError) -> Self {
        Status::Failed(e.to_string())
    }
}

impl From<std::io::Error> for Status {
    fn from(e: std::io::Error) -> Self {
        Status::Failed(format!("i/o: {e}"))
    }
}

type CmdResult = Result<Status, Status>;

fn verdict(pass: bool, what: &str) -> CmdResult {
    Ok(if pass { Status::Certified } else { Status::Failed(what.into()) })
}

#[derive(Serialize)]
struct Condition {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct CheckReport {
    scenario: String,
    seed: u64,
    pass: bool,
    conditions: Vec<Condition>,
}

pub fn check(s: &Scenario, v: &Validated, out: &OutDir) -> CmdResult {
    let ar = &s.arithmetic;
    let mut cond = Vec::new();
    let mut push = |name: &str, pass: bool, detail: String| cond.push(Condition { name: name.into(), pass, detail });
    push("A ergodic", is_ergodic(&v.a), String::new());
    push("B ergodic", is_ergodic(&v.b), String::new());
    let hr = check_hr_report(&v.a, &v.b, ar.hr_range)?;
    let detail = match hr.witness {
        Some((k, l)) => format!("A^{k} B^{l} is not ergodic"),
        None => format!("A^k B^l ergodic for all (k, l) != 0 in [-{0}, {0}]^2", ar.hr_range),
    };
    push("higher rank", hr.passed, detail);

    let n0 = s.scheme.n0.ceil() as usize;
    for (name, fam, m) in [("phi in D(N0, A)", &v.phi, &v.a), ("psi in D(N0, B)", &v.psi, &v.b)] {
        let eigs = eigen_set(m)?;
        let mut worst = (f64::INFINITY, f64::NAN);
        for &t in &v.nodes {
            let g = in_d(&fam.eval(t), n0, &eigs, ar.b).min_gap();
            if g < worst.0 {
                worst = (g, t);
            }
        }
        let threshold = (n0 as f64).powf(-ar.b);
        push(name, worst.0 >= threshold, format!("min gap {:.6e} at t = {:.6} (threshold {threshold:.3e})", worst.0, worst.1));
    }

    let py = pyartli_check(&v.phi, ar.nu, &v.nodes)?;
    push("phi Pyartli", py.pass, format!("min |det| {:.6e} at t = {:.6}, C^d norm {:.6e}", py.min_det, py.witness, py.norm));

    let basis = simultaneous_eigenbasis(&v.a, &v.b)?;
    let mut pairs: Vec<(Complex64, Complex64)> = basis.pairs.iter().map(|p| (p.lambda, p.mu)).collect();
    pairs.push((Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)));
    let mut worst: Option<(f64, f64, Vec<i64>)> = None;
    let mut sdc_pass = true;
    for &t in &v.nodes {
        let r = sdc_check(&v.phi.eval(t), &v.psi.eval(t), &pairs, ar.tau, ar.gamma, ar.sdc_k_max)?;
        sdc_pass &= r.pass;
        if worst.as_ref().is_none_or(|w| r.min_margin < w.0) {
            worst = Some((r.min_margin, t, r.worst_k));
        }
    }
    let (margin, t, k) = worst.unwrap_or((f64::NAN, f64::NAN, vec![]));
    push("simultaneous Diophantine", sdc_pass, format!("min margin {margin:.6e} at t = {t:.6}, k = {k:?}, |k| <= {}", ar.sdc_k_max));

    let pass = cond.iter().all(|c| c.pass);
    for c in &cond {
        eprintln!("{} {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    out.json("check.json", &CheckReport { scenario: s.name.clone(), seed: s.seed, pass, conditions: cond })?;
    verdict(pass, "arithmetic conditions not met")
}

#[derive(Serialize)]
struct SolveOutput {
    scenario: String,
    seed: u64,
    lambda: [f64; 2],
    phi: Vec<f64>,
    box_: usize,
    n_trunc: f64,
    rhs_l1: f64,
    correction_l1: f64,
    relative_obstruction_after: f64,
    solution_l1: f64,
    residual: f64,
    tolerance: f64,
    report: SolveReport,
}

/// Twisted equation for a seeded random right-hand side, after removing its
/// obstructions.
pub fn solve(s: &Scenario, v: &Validated, out: &OutDir) -> CmdResult {
    let sv = &s.solve;
    let (d1, d2) = (v.a.dim(), v.phi.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let coeffs = box_indices(d1 + d2, sv.box_)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut rhs = FourierField::from_coeffs(d1, d2, sv.box_, coeffs)?.real_part();
    let lambda = Complex64::new(sv.lambda[0], sv.lambda[1]);
    if (lambda - 1.0).norm() < 1e-12 {
        rhs.set(&vec![0; d1 + d2], Complex64::new(0.0, 0.0))?;
    }
    let rhs = rhs.truncate(&ModeNorm::new(&v.a)?, sv.n_trunc);
    let phi = v.phi.eval(sv.t);
    let eq = TwistedEquation::new(lambda, v.a.clone(), phi.clone(), sv.n_trunc);
    let atlas = OrbitAtlas::for_support(&v.a, &rhs)?;
    let (corr, after) = obstruction_correction(&rhs, &eq, &atlas)?;
    let target = rhs.sub(&corr);
    let atlas = OrbitAtlas::for_support(&v.a, &target)?;
    let (h, report) = solve_twisted_ref(&target, &eq, &atlas, Some(&rhs))?;
    let resid = eq.apply(&h)?.sub(&target);
    let grid = Grid::new(d1 + d2, 4 * sv.box_.max(4));
    let residual = grid.sample(&resid).iter().map(|z| z.norm()).fold(0.0, f64::max);
    eprintln!("solve: residual {residual:.3e}, |h|_l1 {:.3e}, correction {:.3e}", h.l1(), corr.l1());
    out.json(
        "solve.json",
        &SolveOutput {
            scenario: s.name.clone(),
            seed: s.seed,
            lambda: sv.lambda,
            phi,
            box_: sv.box_,
            n_trunc: sv.n_trunc,
            rhs_l1: rhs.l1(),
            correction_l1: corr.l1(),
            relative_obstruction_after: after,
            solution_l1: h.l1(),
            residual,
            tolerance: sv.tolerance,
            report,
        },
    )?;
    verdict(residual <= sv.tolerance, "twisted-equation residual above tolerance")
}

#[derive(Serialize)]
struct StepOutput {
    scenario: String,
    seed: u64,
    n: f64,
    nodes: Vec<(f64, StepNorms)>,
    max_eps_in: f64,
    max_eps_out: f64,
}

pub fn step(s: &Scenario, v: &Validated, out: &OutDir) -> CmdResult {
    let pair = s.pair(v)?;
    let n = s.scheme.n0;
    let res = inductive_step(&pair, n, s.scheme.box_)?;
    let nodes: Vec<(f64, StepNorms)> = pair.df.nodes.iter().cloned().zip(res.norms).collect();
    let max_in = nodes.iter().map(|(_, r)| r.eps_in).fold(0.0, f64::max);
    let max_out = nodes.iter().map(|(_, r)| r.eps_out).fold(0.0, f64::max);
    eprintln!("step at N = {n}: eps {max_in:.3e} -> {max_out:.3e} over {} nodes", nodes.len());
    out.csv(
        "step_nodes.csv",
        &["t", "eps_in", "eps_out", "h_sup", "h_c1", "freq_shift", "commutation_in", "commutation_out", "elliptic_average_out"],
        nodes.iter().map(|(t, r)| {
            (t, r.eps_in, r.eps_out, r.h_sup, r.h_c1, r.freq_shift, r.commutation_in, r.commutation_out, r.elliptic_average_out)
        }),
    )?;
    out.json("step.json", &StepOutput { scenario: s.name.clone(), seed: s.seed, n, nodes, max_eps_in: max_in, max_eps_out: max_out })?;
    verdict(max_out <= max_in, "step did not reduce the error")
}

#[derive(Serialize)]
struct RunOutput<'a> {
    scenario: &'a str,
    seed: u64,
    max_conjugation_error: f64,
    report: &'a SchemeReport,
}

pub fn run(s: &Scenario, v: &Validated, out: &OutDir) -> CmdResult {
    let pair = s.pair(v)?;
    let report = run_scheme(&pair, &s.scheme)?;
    for r in &report.iterations {
        eprintln!(
            "iteration {} N {:.0} kept {:.4} nodes {} eps0 {:.3e}",
            r.iteration, r.n, r.kept_measure, r.nodes, r.eps0
        );
    }
    let err = report.max_conjugation_error();
    eprintln!("surviving {:.3}, converged {}, max conjugation error {err:.3e}", report.surviving_fraction, report.converged);
    out.json("run.json", &RunOutput { scenario: &s.name, seed: s.seed, max_conjugation_error: err, report: &report })?;
    emit_plotdata(out, &report)?;
    verdict(report.converged, "scheme did not converge at every surviving node")
}

#[derive(Serialize)]
struct ExcludeOutput<T: Serialize> {
    scenario: String,
    seed: u64,
    certificate: T,
    kept: Vec<(f64, f64)>,
    kept_measure: f64,
}

/// Resonance exclusion for phi against the eigenvalues of A. Kept intervals
/// carry the smallest gap over their endpoints; with no resonance inside an
/// interval the gap is smallest at an endpoint.
pub fn exclude(s: &Scenario, v: &Validated, out: &OutDir) -> CmdResult {
    let ex = &s.exclusion;
    let (lo, hi) = v.phi.interval();
    let eigs = eigen_set(&v.a)?;
    let unit: Vec<Complex64> = eigs.iter().cloned().filter(|l| (l.norm() - 1.0).abs() < 1e-9).collect();
    let n_tilde = if ex.n_tilde == 0 { next_level(ex.n) } else { ex.n_tilde };
    let (kept, level, measure) = if v.phi.dim() == 1 {
        let (kept, cert) = exclude_interval_to(lo, hi, &v.phi, ex.n, n_tilde, ex.m, &eigs)?;
        let m = cert.kept;
        eprintln!("kept {:.9} of {:.9} (bound {:.9}), {} roots", cert.kept, cert.interval_measure, cert.bound, cert.roots);
        out.json("exclusion.json", &ExcludeOutput { scenario: s.name.clone(), seed: s.seed, certificate: cert, kept: kept.intervals.clone(), kept_measure: m })?;
        (kept, n_tilde, m)
    } else {
        let (kept, cert) = exclude_interval_d2(lo, hi, &v.phi, ex.n, s.arithmetic.nu, &eigs)?;
        let m = cert.kept;
        eprintln!("kept {:.9} (bound {:.9}), {} roots", cert.kept, cert.bound, cert.roots);
        out.json("exclusion.json", &ExcludeOutput { scenario: s.name.clone(), seed: s.seed, certificate: cert, kept: kept.intervals.clone(), kept_measure: m })?;
        (kept, ex.n.ceil() as usize, m)
    };
    let gap = |t: f64| if unit.is_empty() { f64::INFINITY } else { in_d(&v.phi.eval(t), level, &unit, s.arithmetic.b).min_gap() };
    let rows: Vec<(f64, f64, f64)> = kept.intervals.iter().map(|&(a, b)| (a, b, gap(a).min(gap(b)))).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.2).collect();
    out.csv("kept_intervals.csv", &["lo", "hi", "min_gap"], rows)?;
    out.csv("gap_histogram.csv", &["log10_gap_lo", "log10_gap_hi", "count"], gap_histogram(&gaps))?;
    verdict(measure > 0.0, "nothing kept")
}

#[derive(Serialize)]
struct EstimatesOutput {
    seed: u64,
    samples: usize,
    boxes: Vec<usize>,
    drifts: Vec<DriftReport>,
    round_trip: f64,
    round_trip_tolerance: f64,
    pass: bool,
}

pub fn verify_estimates(s: &Scenario, out: &OutDir) -> CmdResult {
    let es = &s.estimates;
    let set = SampleSet::new(es.boxes[0], es.samples, s.seed);
    let tol = es.drift_tolerance;
    let order = es.order.max(1);
    let round_trip = std::cell::Cell::new(0.0f64);
    let mut drifts = box_drift(&set, &es.boxes, tol, |x| Ok(vec![verify_interpolation(x, 0, 2, 0.5, 0.5, 1.0)?]))?;
    drifts.extend(box_drift(&set, &es.boxes, tol, |x| verify_product_and_composition(x, order - 1, es.displacement, 1.0))?);
    drifts.extend(box_drift(&set, &es.boxes, tol, |x| {
        let (reports, rt) = verify_inversion(x, order, 4.0)?;
        round_trip.set(round_trip.get().max(rt));
        Ok(reports)
    })?);
    let rt = round_trip.get();
    let pass = drifts.iter().all(|d| d.pass) && rt <= es.round_trip_tolerance;
    for d in &drifts {
        eprintln!("{:<28} ratios {:?} drift {:.2}%", d.id, d.max_ratios, 100.0 * d.drift);
    }
    eprintln!("inversion round trip {rt:.3e}");
    let rows: Vec<(String, usize, f64, f64)> = drifts
        .iter()
        .flat_map(|d| d.boxes.iter().zip(&d.max_ratios).map(move |(b, r)| (d.id.clone(), *b, *r, d.drift)))
        .collect();
    out.csv("estimates.csv", &["id", "box", "max_ratio", "drift"], rows)?;
    out.json(
        "estimates.json",
        &EstimatesOutput {
            seed: s.seed,
            samples: es.samples,
            boxes: es.boxes.clone(),
            drifts,
            round_trip: rt,
            round_trip_tolerance: es.round_trip_tolerance,
            pass,
        },
    )?;
    verdict(pass, "estimate ratios drift or round trip above tolerance")
}
