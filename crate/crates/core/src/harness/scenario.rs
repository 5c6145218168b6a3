use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{linearize, CaseId, Dynamics, PlantParams};
use crate::observers::{ObserverConfig, ObserverKind, ObserverParams};
use crate::switching::SwitchMode;

/// Reactor temperature at which the special case is linearized (the initial
/// reactor-1 temperature of the nonlinear cases).
pub const SPECIAL_CASE_T_OP: f64 = 300.0;

fn default_case() -> CaseId {
    CaseId::Case1
}
fn default_dt() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    40.0
}
fn default_seed() -> u64 {
    42
}
fn default_init_std() -> f64 {
    0.01
}

/// Everything that defines one simulation run. Absent fields take the
/// standard defaults; per-case quantities (`x0`, `q`, `r`) resolve lazily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_case")]
    pub case: CaseId,
    /// Sample time in minutes.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizon in minutes.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub params: PlantParams,
    /// Initial plant state; the case default when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Bank members in any order; run order is the fixed observer order.
    #[serde(default = "ObserverParams::default_bank")]
    pub observers: Vec<ObserverParams>,
    /// Members excluded from the run.
    #[serde(default)]
    pub mask: Vec<ObserverKind>,
    /// Diagonal process noise variances (one value broadcasts).
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// Diagonal measurement noise variances (one value broadcasts).
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub mode: SwitchMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Standard deviation of the observers' initial-estimate draw.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Step the bank members concurrently within each sample.
    #[serde(default)]
    pub parallel_bank: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::for_case(CaseId::Case1)
    }
}

impl Scenario {
    pub fn for_case(case: CaseId) -> Self {
        Self {
            case,
            dt: default_dt(),
            horizon: default_horizon(),
            params: PlantParams::default(),
            x0: None,
            observers: ObserverParams::default_bank(),
            mask: Vec::new(),
            q: None,
            r: None,
            mode: SwitchMode::default(),
            seed: default_seed(),
            init_std: default_init_std(),
            parallel_bank: false,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt must be finite and > 0 (got {})", self.dt));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            bad.push(format!("horizon must be >= dt (got {})", self.horizon));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            bad.push(format!("init_std must be >= 0 (got {})", self.init_std));
        }
        if let Err(e) = self.params.validate() {
            bad.push(format!("params: {e}"));
        }
        let n = self.case.state_dim();
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                bad.push(format!("x0 must have {n} entries (got {})", x0.len()));
            }
        }
        for (name, v, len) in [("q", &self.q, n), ("r", &self.r, self.case.output_dim())] {
            if let Some(v) = v {
                if v.len() != 1 && v.len() != len {
                    bad.push(format!("{name} must have 1 or {len} entries (got {})", v.len()));
                }
                if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    bad.push(format!("{name} entries must be finite and >= 0"));
                }
            }
        }
        let mut kinds: Vec<ObserverKind> = self.observers.iter().map(|o| o.kind()).collect();
        kinds.sort();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            bad.push("observers: each kind may appear once".into());
        }
        if self.bank().is_empty() {
            bad.push("observers: no bank member left after masking".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(bad))
        }
    }

    /// Number of Euler steps; the run has `steps + 1` samples.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn initial_state(&self) -> DVector<f64> {
        match &self.x0 {
            Some(v) => DVector::from_column_slice(v),
            None => self.case.default_initial_state(),
        }
    }

    pub fn input(&self) -> DVector<f64> {
        self.params.input(self.case)
    }

    fn diag(values: &Option<Vec<f64>>, default: f64, len: usize) -> DMatrix<f64> {
        let d = match values {
            Some(v) if v.len() == 1 => DVector::from_element(len, v[0]),
            Some(v) => DVector::from_column_slice(v),
            None => DVector::from_element(len, default),
        };
        DMatrix::from_diagonal(&d)
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        Self::diag(&self.q, self.case.default_noise().0, self.case.state_dim())
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        Self::diag(&self.r, self.case.default_noise().1, self.case.output_dim())
    }

    /// Nominal dynamics shared by the plant and every observer. The special
    /// case is linearized at the initial state and nominal input.
    pub fn dynamics(&self) -> Result<Dynamics, HarnessError> {
        if self.case.is_linear() {
            let x_op = CaseId::SpecialCase.default_initial_state();
            let u_op = self.params.input(CaseId::SpecialCase);
            Ok(Dynamics::Linear(linearize(&x_op, &u_op, SPECIAL_CASE_T_OP, &self.params)?))
        } else {
            Ok(Dynamics::nonlinear(self.case, self.params.clone())?)
        }
    }

    /// Active bank members in tie-break order.
    pub fn bank(&self) -> Vec<ObserverParams> {
        let mut bank: Vec<ObserverParams> =
            self.observers.iter().filter(|o| !self.mask.contains(&o.kind())).cloned().collect();
        bank.sort_by_key(|o| o.kind());
        bank
    }

    pub fn observer_config(&self, params: &ObserverParams) -> ObserverConfig {
        ObserverConfig { params: params.clone(), q: self.q_matrix(), r: self.r_matrix(), init_std: self.init_std }
    }
}

/// Parse a scenario from JSON text. Blank text yields the defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, HarnessError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_scenario(&text)
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(scenario).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
