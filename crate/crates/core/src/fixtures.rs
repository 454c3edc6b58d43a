//! Standard matrices and the conjugated cubic-field pair.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::family::FrequencyFamily;
use crate::fourier::VectorField;
use crate::kam::ActionPair;
use crate::lattice::TorusAutomorphism;
use crate::maps::{conjugated_pair, random_displacement};

pub fn golden() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

pub fn cat_map() -> TorusAutomorphism {
    TorusAutomorphism::from_rows(&[vec![2, 1], vec![1, 1]]).expect("unimodular")
}

/// Companion matrix of x^3 - 3x + 1 and `A - I`, two independent units of
/// the same cubic order.
pub fn cubic_pair() -> (TorusAutomorphism, TorusAutomorphism) {
    let a = TorusAutomorphism::from_rows(&[vec![0, 0, -1], vec![1, 0, 3], vec![0, 1, 0]]).expect("unimodular");
    let b = TorusAutomorphism::from_rows(&[vec![-1, 0, -1], vec![1, -1, 3], vec![0, 1, -1]]).expect("unimodular");
    (a, b)
}

/// `(H0 o (A x R_phi) o H0^{-1}, H0 o (B x R_psi) o H0^{-1})` on T^3 x T^1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubicFixture {
    /// C^1 grid norm of h0.
    pub amplitude: f64,
    pub seed: u64,
    pub nodes: usize,
    /// phi(t) = phi[0] + phi[1] t on [0, 1].
    pub phi: [f64; 2],
    pub psi: [f64; 2],
    pub box_: usize,
    /// 0 picks `4 * box_`.
    pub grid: usize,
}

impl Default for CubicFixture {
    fn default() -> Self {
        CubicFixture {
            amplitude: 1e-3,
            seed: 7,
            nodes: 64,
            phi: [0.25, 0.5],
            psi: [1.0 / 3.0, 0.2],
            box_: 3,
            grid: 0,
        }
    }
}

impl CubicFixture {
    /// Modes (n, m) with n in {0, +-e1, +-e3} and |m| <= 1.
    pub fn h0(&self) -> Result<VectorField> {
        let ns = vec![vec![0, 0, 0], vec![1, 0, 0], vec![-1, 0, 0], vec![0, 0, 1], vec![0, 0, -1]];
        random_displacement(3, 1, &ns, 1, self.amplitude, self.seed)
    }

    /// Nodes `(j + golden) / count`, off every rational with small denominator.
    pub fn node_grid(&self) -> Vec<f64> {
        let g = golden();
        (0..self.nodes).map(|j| (j as f64 + g) / self.nodes as f64).collect()
    }

    pub fn pair(&self) -> Result<ActionPair> {
        let (a, b) = cubic_pair();
        let phi = FrequencyFamily::affine((0.0, 1.0), self.phi[0], self.phi[1]);
        let psi = FrequencyFamily::affine((0.0, 1.0), self.psi[0], self.psi[1]);
        conjugated_pair(&a, &b, &self.h0()?, &phi, &psi, &self.node_grid(), self.box_, self.grid)
    }
}
