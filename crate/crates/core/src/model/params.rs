use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Physical constants of the reactor train and its feed.
///
/// Flows are L/min, volumes L, energies cal, temperatures K, concentrations
/// mol/L. The same values apply to every reactor unless a
/// [`ReactorParams`] override is supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub f0: f64,
    pub fi: f64,
    pub fj: f64,
    pub v: f64,
    pub vj: f64,
    pub k0: f64,
    pub e: f64,
    pub rg: f64,
    pub dh: f64,
    pub rho: f64,
    pub rho_j: f64,
    pub cp: f64,
    pub cpj: f64,
    pub ua: f64,
    pub t_in: f64,
    pub tj_in: f64,
    pub ca0: f64,
    pub cb0: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            f0: 6.0,
            fi: 12.0,
            fj: 30.0,
            v: 100.0,
            vj: 50.0,
            k0: 5.0e5,
            e: 1.0e4,
            rg: 1.987,
            dh: -4.0e4,
            rho: 1.0e3,
            rho_j: 1.0e3,
            cp: 4.18,
            cpj: 4.18,
            ua: 1.0e5,
            t_in: 300.0,
            tj_in: 370.0,
            // Unequal feeds: with CA0 = CB0 species A and B are exchangeable
            // and cannot be told apart from any output.
            ca0: 1.0,
            cb0: 0.8,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("v", self.v),
            ("vj", self.vj),
            ("rho", self.rho),
            ("rho_j", self.rho_j),
            ("cp", self.cp),
            ("cpj", self.cpj),
            ("rg", self.rg),
        ];
        let nonneg = [("f0", self.f0), ("fi", self.fi), ("fj", self.fj)];
        let mut bad: Vec<String> = Vec::new();
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                bad.push(format!("{name} must be > 0 (got {value})"));
            }
        }
        for (name, value) in nonneg {
            if !(value >= 0.0 && value.is_finite()) {
                bad.push(format!("{name} must be >= 0 (got {value})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(bad.join("; ")))
        }
    }

    /// Kinetic and thermal constants for one reactor, taken from the shared set.
    pub fn reactor(&self) -> ReactorParams {
        ReactorParams { k0: self.k0, e: self.e, ua: self.ua, dh: self.dh }
    }

    /// Nominal input vector for `case`.
    pub fn input(&self, case: CaseId) -> DVector<f64> {
        match case {
            CaseId::SpecialCase => DVector::from_vec(vec![self.f0, self.ca0, self.cb0]),
            _ => DVector::from_vec(vec![self.f0, self.ca0, self.cb0, self.t_in, self.tj_in]),
        }
    }
}

/// The per-reactor subset of parameters that the robustness study perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactorParams {
    pub k0: f64,
    pub e: f64,
    pub ua: f64,
    pub dh: f64,
}

/// Which reactor configuration is simulated and observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    /// Linearized single reactor, concentrations only.
    #[serde(rename = "sc")]
    SpecialCase,
    #[serde(rename = "1")]
    Case1,
    #[serde(rename = "2")]
    Case2,
    #[serde(rename = "3")]
    Case3,
}

const REACTOR_FIELDS: [&str; 5] = ["CA", "CB", "CC", "T", "Tj"];

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::SpecialCase, CaseId::Case1, CaseId::Case2, CaseId::Case3];

    pub fn parse(s: &str) -> Option<CaseId> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sc" | "special" | "0" => Some(CaseId::SpecialCase),
            "1" => Some(CaseId::Case1),
            "2" => Some(CaseId::Case2),
            "3" => Some(CaseId::Case3),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::SpecialCase => "sc",
            CaseId::Case1 => "1",
            CaseId::Case2 => "2",
            CaseId::Case3 => "3",
        }
    }

    pub fn reactors(self) -> usize {
        match self {
            CaseId::SpecialCase | CaseId::Case1 => 1,
            CaseId::Case2 => 2,
            CaseId::Case3 => 3,
        }
    }

    pub fn is_linear(self) -> bool {
        self == CaseId::SpecialCase
    }

    pub fn state_dim(self) -> usize {
        match self {
            CaseId::SpecialCase => 3,
            other => 5 * other.reactors(),
        }
    }

    pub fn input_dim(self) -> usize {
        if self.is_linear() {
            3
        } else {
            5
        }
    }

    pub fn output_dim(self) -> usize {
        self.output_indices().len()
    }

    /// State indices selected by the measurement map, in output order.
    pub fn output_indices(self) -> &'static [usize] {
        match self {
            CaseId::SpecialCase => &[2],
            CaseId::Case1 => &[2, 3, 4],
            CaseId::Case2 => &[3, 4, 5, 6, 7, 8, 9],
            CaseId::Case3 => &[3, 4, 8, 9, 10, 11, 12, 13, 14],
        }
    }

    /// State names such as `CA1`, `Tj2`.
    pub fn state_names(self) -> Vec<String> {
        let fields: &[&str] = if self.is_linear() { &REACTOR_FIELDS[..3] } else { &REACTOR_FIELDS };
        (1..=self.reactors())
            .flat_map(|r| fields.iter().map(move |f| format!("{f}{r}")))
            .collect()
    }

    pub fn output_names(self) -> Vec<String> {
        let names = self.state_names();
        self.output_indices().iter().map(|&i| names[i].clone()).collect()
    }

    /// True when state index `i` is a concentration (clamped in the plant).
    pub fn is_concentration(self, i: usize) -> bool {
        if self.is_linear() {
            i < 3
        } else {
            i % 5 < 3
        }
    }

    /// Unmeasured concentrations the observers exist to reconstruct.
    pub fn estimated_indices(self) -> Vec<usize> {
        match self {
            CaseId::SpecialCase | CaseId::Case1 => vec![0, 1],
            CaseId::Case2 => vec![0, 1, 2],
            CaseId::Case3 => vec![0, 1, 2, 5, 6, 7],
        }
    }

    /// Measured concentration channels, as positions in the output vector.
    pub fn measured_concentration_outputs(self) -> Vec<usize> {
        self.output_indices()
            .iter()
            .enumerate()
            .filter(|(_, &i)| self.is_concentration(i))
            .map(|(k, _)| k)
            .collect()
    }

    /// Initial plant state: reactor 1 charged with reactants, downstream empty.
    pub fn default_initial_state(self) -> DVector<f64> {
        const TEMPS: [f64; 3] = [300.0, 325.0, 350.0];
        if self.is_linear() {
            return DVector::from_vec(vec![1.0, 1.0, 0.0]);
        }
        let mut x = Vec::with_capacity(self.state_dim());
        for r in 0..self.reactors() {
            let c = if r == 0 { 1.0 } else { 0.0 };
            x.extend_from_slice(&[c, c, 0.0, TEMPS[r], 370.0]);
        }
        DVector::from_vec(x)
    }

    /// Diagonal process / measurement noise variances used by default.
    pub fn default_noise(self) -> (f64, f64) {
        match self {
            CaseId::SpecialCase | CaseId::Case1 => (4.2e-8, 3.5e-8),
            CaseId::Case2 | CaseId::Case3 => (4.2e-6, 3.5e-6),
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseId::SpecialCase => write!(f, "special case"),
            CaseId::Case1 => write!(f, "case 1"),
            CaseId::Case2 => write!(f, "case 2"),
            CaseId::Case3 => write!(f, "case 3"),
        }
    }
}
