//! Parameter-dependent fields and frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{KamError, Result};
use crate::fourier::{box_indices, FourierField, VectorField};
use crate::grid::Grid;

/// Frequency curve t -> R^{d2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyFamily {
    /// `coeffs[i][j]` is the t^j coefficient of component i.
    Polynomial { interval: (f64, f64), coeffs: Vec<Vec<f64>> },
    /// Values at increasing nodes; linear in between and beyond.
    Samples { interval: (f64, f64), nodes: Vec<f64>, values: Vec<Vec<f64>> },
}

impl FrequencyFamily {
    pub fn polynomial(interval: (f64, f64), coeffs: Vec<Vec<f64>>) -> Self {
        FrequencyFamily::Polynomial { interval, coeffs }
    }

    /// phi(t) = c0 + c1 t in one dimension.
    pub fn affine(interval: (f64, f64), c0: f64, c1: f64) -> Self {
        Self::polynomial(interval, vec![vec![c0, c1]])
    }

    pub fn samples(interval: (f64, f64), nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.is_empty() {
            return Err(KamError::Dimension("nodes and values differ in length".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KamError::Precondition("sample nodes must increase".into()));
        }
        Ok(FrequencyFamily::Samples { interval, nodes, values })
    }

    pub fn interval(&self) -> (f64, f64) {
        match self {
            FrequencyFamily::Polynomial { interval, .. } | FrequencyFamily::Samples { interval, .. } => *interval,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FrequencyFamily::Polynomial { coeffs, .. } => coeffs.len(),
            FrequencyFamily::Samples { values, .. } => values[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.derivative(t, 0)
    }

    fn segment(nodes: &[f64], t: f64) -> usize {
        if nodes.len() < 2 {
            return 0;
        }
        match nodes.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(nodes.len() - 2),
            Err(i) => i.saturating_sub(1).min(nodes.len() - 2),
        }
    }

    /// The `order`-th derivative at t. For samples, order 0 interpolates
    /// linearly and higher orders use divided differences on the nodes
    /// nearest t.
    pub fn derivative(&self, t: f64, order: usize) -> Vec<f64> {
        match self {
            FrequencyFamily::Polynomial { coeffs, .. } => coeffs
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .skip(order)
                        .map(|(j, cj)| {
                            let mut f = 1.0;
                            for q in 0..order {
                                f *= (j - q) as f64;
                            }
                            cj * f * t.powi((j - order) as i32)
                        })
                        .sum()
                })
                .collect(),
            FrequencyFamily::Samples { nodes, values, .. } => {
                let d = values[0].len();
                if nodes.len() == 1 {
                    return if order == 0 { values[0].clone() } else { vec![0.0; d] };
                }
                if order == 0 {
                    let i = Self::segment(nodes, t);
                    let s = (t - nodes[i]) / (nodes[i + 1] - nodes[i]);
                    return (0..d).map(|c| values[i][c] * (1.0 - s) + values[i + 1][c] * s).collect();
                }
                if order + 1 > nodes.len() {
                    return vec![0.0; d];
                }
                // Window of order+1 nodes centred near t.
                let i = Self::segment(nodes, t);
                let start = (i as i64 - (order as i64 - 1) / 2).clamp(0, (nodes.len() - order - 1) as i64) as usize;
                let xs = &nodes[start..=start + order];
                let mut fact = 1.0;
                for q in 1..=order {
                    fact *= q as f64;
                }
                (0..d)
                    .map(|c| {
                        let mut dd: Vec<f64> = (start..=start + order).map(|j| values[j][c]).collect();
                        for level in 1..=order {
                            for j in 0..=order - level {
                                dd[j] = (dd[j + 1] - dd[j]) / (xs[j + level] - xs[j]);
                            }
                        }
                        dd[0] * fact
                    })
                    .collect()
            }
        }
    }

    /// Largest |phi'| over a sampling of the interval (per component max).
    pub fn lipschitz(&self) -> f64 {
        let (lo, hi) = self.interval();
        (0..=256)
            .map(|i| lo + (hi - lo) * i as f64 / 256.0)
            .map(|t| self.derivative(t, 1).iter().map(|x| x.abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Per-node samples of this family at `nodes`.
    pub fn sampled_at(&self, nodes: &[f64]) -> Result<Self> {
        Self::samples(self.interval(), nodes.to_vec(), nodes.iter().map(|&t| self.eval(t)).collect())
    }
}

/// Anything made of scalar Fourier fields.
pub trait FieldComponents {
    fn field_components(&self) -> Vec<&FourierField>;
}

impl FieldComponents for FourierField {
    fn field_components(&self) -> Vec<&FourierField> {
        vec![self]
    }
}

impl FieldComponents for VectorField {
    fn field_components(&self) -> Vec<&FourierField> {
        self.components.iter().collect()
    }
}

/// Values sampled at increasing parameter nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFamily<T> {
    pub interval: (f64, f64),
    pub nodes: Vec<f64>,
    pub values: Vec<T>,
}

impl<T: Clone> ParamFamily<T> {
    pub fn new(interval: (f64, f64), nodes: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(KamError::Dimension("nodes and values differ in length".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KamError::Precondition("parameter nodes must increase".into()));
        }
        Ok(ParamFamily { interval, nodes, values })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Keeps the nodes for which `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Self {
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for ((t, v), k) in self.nodes.iter().zip(&self.values).zip(keep) {
            if *k {
                nodes.push(*t);
                values.push(v.clone());
            }
        }
        ParamFamily { interval: self.interval, nodes, values }
    }
}

/// Multi-indices of total order at most r.
pub fn orders_up_to(dim: usize, r: usize) -> Vec<Vec<usize>> {
    box_indices(dim, r)
        .filter(|i| i.iter().all(|&x| x >= 0) && i.iter().sum::<i64>() as usize <= r)
        .map(|i| i.into_iter().map(|x| x as usize).collect())
        .collect()
}

/// Sup over the dealiasing grid of all derivatives up to order r.
pub fn sup_norm<T: FieldComponents>(f: &T, r: usize) -> f64 {
    f.field_components()
        .iter()
        .map(|c| {
            let grid = Grid::for_box(c.dim(), c.box_size().max(1));
            let orders = orders_up_to(c.dim(), r);
            orders
                .iter()
                .map(|o| grid.sample_derivative(c, o).iter().map(|z| z.norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// ||f||_{lip, r}: for every derivative order up to r, the larger of the grid
/// sup over nodes and the largest successive-node difference quotient.
pub fn lip_norm<T: FieldComponents + Clone>(family: &ParamFamily<T>, r: usize) -> Result<f64> {
    if family.len() < 2 {
        return Err(KamError::TooFewNodes);
    }
    let comps0 = family.values[0].field_components();
    let ncomp = comps0.len();
    let dim = comps0[0].dim();
    let bmax = family
        .values
        .iter()
        .flat_map(|v| v.field_components().into_iter().map(|c| c.box_size()))
        .max()
        .unwrap_or(0);
    let grid = Grid::for_box(dim, bmax.max(1));
    let orders = orders_up_to(dim, r);
    let mut best: f64 = 0.0;
    for c in 0..ncomp {
        let mut prev: Option<(f64, Vec<Vec<num_complex::Complex64>>)> = None;
        for (t, v) in family.nodes.iter().zip(&family.values) {
            let f = v.field_components()[c];
            let grids: Vec<Vec<num_complex::Complex64>> = orders.iter().map(|o| grid.sample_derivative(f, o)).collect();
            for g in &grids {
                best = best.max(g.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
            if let Some((tp, gp)) = &prev {
                let dt = t - tp;
                for (a, b) in grids.iter().zip(gp) {
                    let q = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / dt;
                    best = best.max(q);
                }
            }
            prev = Some((*t, grids));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn polynomial_derivatives() {
        let f = FrequencyFamily::polynomial((0.0, 1.0), vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.5]]);
        assert_eq!(f.eval(2.0), vec![17.0, 2.0]);
        assert_eq!(f.derivative(2.0, 1), vec![14.0, 2.0]);
        assert_eq!(f.derivative(2.0, 2), vec![6.0, 1.0]);
        assert_eq!(f.derivative(2.0, 3), vec![0.0, 0.0]);
    }

    #[test]
    fn samples_interpolate_and_difference() {
        let nodes: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let f = FrequencyFamily::polynomial((0.0, 1.0), vec![vec![0.0, 1.0, 0.5]]).sampled_at(&nodes).unwrap();
        assert!((f.eval(0.25)[0] - (0.25 + 0.5 * 0.0625)).abs() < 2e-3);
        assert!((f.derivative(0.5, 2)[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lip_norm_of_linear_family() {
        let chi = FourierField::real_mode(1, 1, &[0], &[1], Complex64::new(1.0, 0.0)).unwrap();
        let nodes: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        let values = nodes.iter().map(|&t| chi.scale(Complex64::new(t, 0.0))).collect();
        let fam = ParamFamily::new((0.0, 1.0), nodes, values).unwrap();
        assert!((lip_norm(&fam, 0).unwrap() - 2.0).abs() < 1e-12);
        assert!(lip_norm(&fam, 1).unwrap() >= lip_norm(&fam, 0).unwrap());
    }
}
