//! Scenario files: parsing, validation and construction of library inputs.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use torus_kam::family::{FrequencyFamily, ParamFamily};
use torus_kam::fixtures::golden;
use torus_kam::fourier::{FourierField, VectorField};
use torus_kam::kam::{ActionPair, SchemeConfig};
use torus_kam::lattice::{check_commuting, TorusAutomorphism};
use torus_kam::maps::{conjugated_pair, random_displacement};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub action: ActionSpec,
    pub parameters: ParameterSpec,
    pub perturbation: Perturbation,
    pub scheme: SchemeConfig,
    pub arithmetic: ArithmeticSpec,
    pub solve: SolveSpec,
    pub exclusion: ExclusionSpec,
    pub estimates: EstimatesSpec,
}

/// Linear parts `A x Id`, `B x Id` and the rotation frequencies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionSpec {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<Vec<i64>>,
    /// `phi[i][j]`: coefficient of t^j in the i-th elliptic frequency.
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSpec {
    pub interval: [f64; 2],
    pub nodes: usize,
    /// Node j sits at `lo + (j + offset) (hi - lo) / nodes`.
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// `(Id + h0) o (affine model) o (Id + h0)^{-1}` with a random `h0`.
    ConjugatedLinear {
        amplitude: f64,
        /// Hyperbolic indices n of the generator's modes.
        modes: Vec<Vec<i64>>,
        m_max: usize,
        /// Generator seed; the scenario seed when absent.
        seed: Option<u64>,
    },
    /// Error fields given coefficient by coefficient; each entry also sets
    /// the conjugate mode so the fields are real.
    Explicit { f: Vec<Coefficient>, g: Vec<Coefficient> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub component: usize,
    pub n: Vec<i64>,
    pub m: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArithmeticSpec {
    /// K in the higher-rank check over [-K, K]^2.
    pub hr_range: i64,
    /// Exponent b in the threshold N^{-b}.
    pub b: f64,
    pub nu: f64,
    pub tau: f64,
    pub gamma: f64,
    pub sdc_k_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    pub lambda: [f64; 2],
    /// Parameter at which phi is frozen.
    pub t: f64,
    pub box_: usize,
    pub n_trunc: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExclusionSpec {
    pub n: f64,
    /// Target level; 0 picks N^{3/2}.
    pub n_tilde: usize,
    pub m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatesSpec {
    pub samples: usize,
    pub boxes: Vec<usize>,
    pub drift_tolerance: f64,
    pub order: usize,
    pub displacement: f64,
    pub round_trip_tolerance: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "cubic-field".into(),
            seed: 7,
            action: ActionSpec::default(),
            parameters: ParameterSpec::default(),
            perturbation: Perturbation::ConjugatedLinear {
                amplitude: 1e-3,
                modes: vec![vec![0, 0, 0], vec![1, 0, 0], vec![-1, 0, 0], vec![0, 0, 1], vec![0, 0, -1]],
                m_max: 1,
                seed: None,
            },
            scheme: SchemeConfig::default(),
            arithmetic: ArithmeticSpec::default(),
            solve: SolveSpec::default(),
            exclusion: ExclusionSpec::default(),
            estimates: EstimatesSpec::default(),
        }
    }
}

impl Default for ActionSpec {
    fn default() -> Self {
        ActionSpec {
            a: vec![vec![0, 0, -1], vec![1, 0, 3], vec![0, 1, 0]],
            b: vec![vec![-1, 0, -1], vec![1, -1, 3], vec![0, 1, -1]],
            phi: vec![vec![0.25, 0.5]],
            psi: vec![vec![1.0 / 3.0, 0.2]],
        }
    }
}

impl Default for ParameterSpec {
    fn default() -> Self {
        ParameterSpec { interval: [0.0, 1.0], nodes: 64, offset: golden() }
    }
}

impl Default for ArithmeticSpec {
    fn default() -> Self {
        ArithmeticSpec { hr_range: 5, b: 3.0, nu: 0.1, tau: 2.0, gamma: 0.1, sdc_k_max: 100 }
    }
}

impl Default for SolveSpec {
    fn default() -> Self {
        SolveSpec { lambda: [(3.0 + 5f64.sqrt()) / 2.0, 0.0], t: 0.5, box_: 4, n_trunc: 4.0, tolerance: 1e-9 }
    }
}

impl Default for ExclusionSpec {
    fn default() -> Self {
        ExclusionSpec { n: 100.0, n_tilde: 1000, m: 2.0 }
    }
}

impl Default for EstimatesSpec {
    fn default() -> Self {
        EstimatesSpec {
            samples: 20,
            boxes: vec![8, 16, 32],
            drift_tolerance: 0.1,
            order: 2,
            displacement: 0.1,
            round_trip_tolerance: 1e-11,
        }
    }
}

/// Inputs checked and converted once, before any computation.
pub struct Validated {
    pub a: TorusAutomorphism,
    pub b: TorusAutomorphism,
    pub phi: FrequencyFamily,
    pub psi: FrequencyFamily,
    pub nodes: Vec<f64>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn reference_toml() -> String {
        toml::to_string_pretty(&Scenario::default()).expect("default scenario serializes")
    }

    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let a = automorphism("action.a", &self.action.a)?;
        let b = automorphism("action.b", &self.action.b)?;
        if a.dim() != b.dim() {
            return Err(bad("action.a and action.b differ in size"));
        }
        if !check_commuting(&a, &b).map_err(|e| bad(e.to_string()))? {
            return Err(bad("action.a and action.b do not commute"));
        }
        let d2 = self.action.phi.len();
        if d2 == 0 || self.action.psi.len() != d2 {
            return Err(bad("action.phi and action.psi need the same positive number of components"));
        }
        if self.action.phi.iter().chain(&self.action.psi).any(|c| c.is_empty() || c.iter().any(|x| !x.is_finite())) {
            return Err(bad("frequency coefficients must be non-empty and finite"));
        }
        let [lo, hi] = self.parameters.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(bad("parameters.interval must satisfy lo < hi"));
        }
        if self.parameters.nodes < 2 {
            return Err(bad("parameters.nodes must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.parameters.offset) {
            return Err(bad("parameters.offset must lie in [0, 1)"));
        }
        let s = &self.scheme;
        if s.n0 < 1.0 || s.max_iterations == 0 || s.box_ == 0 || s.m <= 1.0 || s.target <= 0.0 {
            return Err(bad("scheme: need n0 >= 1, max_iterations >= 1, box_ >= 1, m > 1, target > 0"));
        }
        if s.grid != 0 && s.grid < 4 * s.box_ {
            return Err(bad(format!("scheme.grid must be 0 or at least {}", 4 * s.box_)));
        }
        let ar = &self.arithmetic;
        if ar.hr_range < 1 || ar.b <= 0.0 || ar.nu <= 0.0 || ar.gamma <= 0.0 || ar.tau <= 0.0 {
            return Err(bad("arithmetic: hr_range >= 1 and positive b, nu, tau, gamma required"));
        }
        let sv = &self.solve;
        if sv.box_ == 0 || sv.n_trunc <= 0.0 || sv.tolerance <= 0.0 || !(lo..=hi).contains(&sv.t) {
            return Err(bad("solve: box_ >= 1, n_trunc > 0, tolerance > 0 and t inside the interval required"));
        }
        let ex = &self.exclusion;
        if ex.n < 1.0 || ex.m <= 1.0 || (ex.n_tilde != 0 && (ex.n_tilde as f64) < ex.n) {
            return Err(bad("exclusion: need n >= 1, m > 1 and n_tilde = 0 or n_tilde >= n"));
        }
        let es = &self.estimates;
        if es.samples == 0 || es.boxes.len() < 2 || es.boxes.iter().any(|&x| x == 0) || es.drift_tolerance <= 0.0 {
            return Err(bad("estimates: samples >= 1, at least two positive boxes and drift_tolerance > 0 required"));
        }
        let d1 = a.dim();
        match &self.perturbation {
            Perturbation::None => {}
            Perturbation::ConjugatedLinear { amplitude, modes, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(bad("perturbation.amplitude must be finite and non-negative"));
                }
                if modes.is_empty() || modes.iter().any(|n| n.len() != d1) {
                    return Err(bad(format!("perturbation.modes must be non-empty vectors of length {d1}")));
                }
            }
            Perturbation::Explicit { f, g } => {
                for c in f.iter().chain(g) {
                    if c.component >= d1 + d2 || c.n.len() != d1 || c.m.len() != d2 {
                        return Err(bad(format!("explicit coefficient {:?}/{:?} has the wrong shape", c.n, c.m)));
                    }
                }
            }
        }
        let interval = (lo, hi);
        let nodes = (0..self.parameters.nodes)
            .map(|j| lo + (j as f64 + self.parameters.offset) * (hi - lo) / self.parameters.nodes as f64)
            .collect();
        Ok(Validated {
            a,
            b,
            phi: FrequencyFamily::polynomial(interval, self.action.phi.clone()),
            psi: FrequencyFamily::polynomial(interval, self.action.psi.clone()),
            nodes,
        })
    }

    pub fn pair(&self, v: &Validated) -> torus_kam::Result<ActionPair> {
        let (d1, d2) = (v.a.dim(), v.phi.dim());
        let box_ = self.scheme.box_;
        match &self.perturbation {
            Perturbation::None => {
                ActionPair::unperturbed(v.a.clone(), v.b.clone(), v.phi.clone(), v.psi.clone(), v.nodes.clone(), box_)
            }
            Perturbation::ConjugatedLinear { amplitude, modes, m_max, seed } => {
                let h0 = if *amplitude == 0.0 {
                    VectorField::zeros(d1, d2, box_)
                } else {
                    random_displacement(d1, d2, modes, *m_max, *amplitude, seed.unwrap_or(self.seed))?
                };
                conjugated_pair(&v.a, &v.b, &h0, &v.phi, &v.psi, &v.nodes, box_, self.scheme.grid)
            }
            Perturbation::Explicit { f, g } => {
                let interval = v.phi.interval();
                let df = explicit_field(d1, d2, box_, f)?;
                let dg = explicit_field(d1, d2, box_, g)?;
                ActionPair::new(
                    v.a.clone(),
                    v.b.clone(),
                    v.phi.clone(),
                    v.psi.clone(),
                    ParamFamily::new(interval, v.nodes.clone(), vec![df; v.nodes.len()])?,
                    ParamFamily::new(interval, v.nodes.clone(), vec![dg; v.nodes.len()])?,
                )
            }
        }
    }
}

fn automorphism(key: &str, rows: &[Vec<i64>]) -> Result<TorusAutomorphism, ConfigError> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(bad(format!("{key} must be a non-empty square matrix")));
    }
    TorusAutomorphism::from_rows(rows).map_err(|e| bad(format!("{key}: {e}")))
}

fn explicit_field(d1: usize, d2: usize, box_: usize, coeffs: &[Coefficient]) -> torus_kam::Result<VectorField> {
    let mut comps = vec![FourierField::zeros(d1, d2, box_); d1 + d2];
    for c in coeffs {
        let mode = FourierField::real_mode(d1, d2, &c.n, &c.m, Complex64::new(c.re, c.im))?;
        comps[c.component] = comps[c.component].add(&mode);
    }
    Ok(VectorField { components: comps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_round_trips() {
        let text = Scenario::reference_toml();
        let back: Scenario = toml::from_str(&text).unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), text);
        assert!(back.validate().is_ok());
    }

    #[test]
    fn non_unimodular_matrix_is_rejected() {
        let mut s = Scenario::default();
        s.action.a = vec![vec![2, 0], vec![0, 1]];
        s.action.b = vec![vec![1, 0], vec![0, 1]];
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Scenario>("seed = 1\nbogus = 2\n").is_err());
    }
}
