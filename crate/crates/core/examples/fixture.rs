//! Runs the cubic-field fixture and prints the iteration table.
//!
//! Usage: fixture [NODES]

use std::time::Instant;
use torus_kam::fixtures::CubicFixture;
use torus_kam::kam::{run_scheme, NodeStatus, SchemeConfig};

fn main() {
    let nodes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let t0 = Instant::now();
    let pair = CubicFixture { nodes, ..Default::default() }.pair().expect("fixture");
    println!("fixture built in {:?}", t0.elapsed());
    let rep = run_scheme(&pair, &SchemeConfig::default()).expect("scheme");
    for r in &rep.iterations {
        println!(
            "it {} N {} kept {:.4} bound {:.4} nodes {} eps0 {:.3e} h {:.3e} comm {:.3e} -> {:.3e} avg {:.1e}",
            r.iteration, r.n, r.kept_measure, r.measure_bound, r.nodes, r.eps0, r.max_h_norm,
            r.max_commutation_in, r.max_commutation_out, r.max_elliptic_average
        );
    }
    for o in rep.nodes.iter().filter(|o| o.status != NodeStatus::Converged) {
        println!("node {:.4} {:?}", o.t, o.status);
    }
    println!(
        "surviving {:.3} converged {} max conjugation error {:.3e} total {:?}",
        rep.surviving_fraction, rep.converged, rep.max_conjugation_error(), t0.elapsed()
    );
}
