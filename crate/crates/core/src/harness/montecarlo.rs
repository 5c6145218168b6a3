use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_with_plant, RunResult, SWO_LABEL};
use super::{HarnessError, Scenario};
use crate::metrics::MetricTable;
use crate::model::{Dynamics, ReactorParams};
use crate::seeds;

/// Perturbed reactor constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    K0,
    E,
    Ua,
    Dh,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::K0, Target::E, Target::Ua, Target::Dh];
}

const PERTURBATION_STREAM: u64 = 2;
const MAX_REDRAWS: usize = 10_000;

fn default_targets() -> Vec<Target> {
    Target::ALL.to_vec()
}
fn default_low() -> f64 {
    -1000.0
}
fn default_high() -> f64 {
    1000.0
}
fn default_trials() -> usize {
    100
}
fn default_reactors() -> Vec<usize> {
    vec![0, 1]
}

/// Additive uniform perturbation of the plant's reactor constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default = "default_targets")]
    pub targets: Vec<Target>,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Zero-based reactors that receive a perturbation (absent ones are skipped).
    #[serde(default = "default_reactors")]
    pub reactors: Vec<usize>,
    /// Use one draw for every perturbed reactor instead of independent draws.
    #[serde(default)]
    pub shared_draw: bool,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            targets: default_targets(),
            low: default_low(),
            high: default_high(),
            trials: default_trials(),
            reactors: default_reactors(),
            shared_draw: false,
        }
    }
}

impl PerturbationSpec {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.high > self.low {
            rng.random_range(self.low..self.high)
        } else {
            self.low
        }
    }

    /// Perturbed copy of `nominal`, redrawn until `k0` and `E` stay positive.
    pub fn perturb(&self, nominal: &ReactorParams, rng: &mut impl Rng) -> Result<ReactorParams, HarnessError> {
        for _ in 0..MAX_REDRAWS {
            let mut p = *nominal;
            for t in &self.targets {
                let d = self.draw(rng);
                match t {
                    Target::K0 => p.k0 += d,
                    Target::E => p.e += d,
                    Target::Ua => p.ua += d,
                    Target::Dh => p.dh += d,
                }
            }
            if p.k0 > 0.0 && p.e > 0.0 {
                return Ok(p);
            }
        }
        Err(HarnessError::Perturbation(format!("no admissible draw in {MAX_REDRAWS} attempts")))
    }

    /// Per-reactor constants of the perturbed plant for one trial.
    pub fn plant_reactors(&self, nominal: &ReactorParams, count: usize, rng: &mut impl Rng) -> Result<Vec<ReactorParams>, HarnessError> {
        let mut out = vec![*nominal; count];
        let shared = if self.shared_draw { Some(self.perturb(nominal, rng)?) } else { None };
        for r in 0..count {
            if self.reactors.contains(&r) {
                out[r] = match shared {
                    Some(p) => p,
                    None => self.perturb(nominal, rng)?,
                };
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut bad = Vec::new();
        if self.trials == 0 {
            bad.push("trials must be >= 1".to_string());
        }
        if !(self.low.is_finite() && self.high.is_finite() && self.low <= self.high) {
            bad.push(format!("need finite low <= high (got {} .. {})", self.low, self.high));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(bad))
        }
    }
}

/// Per-sample percentiles of one estimated variable across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub estimator: String,
    pub variable: String,
    pub p5: Vec<f64>,
    pub p50: Vec<f64>,
    pub p95: Vec<f64>,
}

impl Band {
    pub fn width_at(&self, k: usize) -> f64 {
        self.p95[k] - self.p5[k]
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    pub reactors: Vec<ReactorParams>,
    pub metrics: Option<MetricTable>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub t: Vec<f64>,
    pub bands: Vec<Band>,
    pub trials: Vec<TrialOutcome>,
}

impl MonteCarloSummary {
    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.error.is_some()).count()
    }

    pub fn band(&self, estimator: &str, variable: &str) -> Option<&Band> {
        self.bands.iter().find(|b| b.estimator == estimator && b.variable == variable)
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Series kept from each trial: (estimator label, variable, values per sample).
type Kept = Vec<(String, String, Vec<f64>)>;

fn keep(run: &RunResult) -> Kept {
    let names = run.scenario.case.state_names();
    let mut out = Vec::new();
    for i in run.scenario.case.estimated_indices() {
        for t in &run.tracks {
            if let Some(series) = t.records.iter().map(|r| r.as_ref().map(|r| r.x_hat[i])).collect::<Option<Vec<f64>>>() {
                out.push((t.kind.to_string(), names[i].clone(), series));
            }
        }
        out.push((SWO_LABEL.to_string(), names[i].clone(), run.decisions.iter().map(|d| d.x_hat[i]).collect()));
    }
    out
}

/// Run `spec.trials` perturbed-plant trials and summarize the estimates.
///
/// Trial `i` uses the seed `trial_seed(master, i)` for both its perturbation
/// and its run, so results do not depend on scheduling. A trial fails when the
/// run errors, aborts early, or loses a bank member.
pub fn monte_carlo(scenario: &Scenario, spec: &PerturbationSpec) -> Result<MonteCarloSummary, HarnessError> {
    scenario.validate()?;
    spec.validate()?;
    let nominal = scenario.params.reactor();
    let case = scenario.case;
    if case.is_linear() {
        return Err(HarnessError::Validation(vec!["Monte Carlo needs a nonlinear case".into()]));
    }
    let samples = scenario.steps() + 1;

    let results: Vec<(TrialOutcome, Option<Kept>)> = (0..spec.trials)
        .into_par_iter()
        .map(|index| {
            let seed = seeds::trial_seed(scenario.seed, index);
            let mut rng = seeds::stream(seed, PERTURBATION_STREAM);
            let mut outcome = TrialOutcome { index, seed, reactors: Vec::new(), metrics: None, error: None };
            let reactors = match spec.plant_reactors(&nominal, case.reactors(), &mut rng) {
                Ok(r) => r,
                Err(e) => {
                    outcome.error = Some(e.to_string());
                    return (outcome, None);
                }
            };
            outcome.reactors = reactors.clone();
            let trial = Scenario { seed, ..scenario.clone() };
            let run = Dynamics::nonlinear_with(case, scenario.params.clone(), reactors)
                .map_err(HarnessError::from)
                .and_then(|plant| run_with_plant(&trial, &plant));
            match run {
                Err(e) => {
                    outcome.error = Some(e.to_string());
                    (outcome, None)
                }
                Ok(run) => {
                    if let Some(why) = &run.aborted {
                        outcome.error = Some(why.clone());
                    } else if let Some(t) = run.tracks.iter().find(|t| !t.is_complete() && t.records.iter().any(Option::is_some)) {
                        let f = t.failure.as_ref().map(|f| f.message.clone()).unwrap_or_default();
                        outcome.error = Some(format!("{} failed: {f}", t.kind));
                    }
                    let kept = outcome.error.is_none().then(|| keep(&run));
                    outcome.metrics = Some(run.metrics);
                    (outcome, kept)
                }
            }
        })
        .collect();

    let mut trials = Vec::with_capacity(results.len());
    let mut kept: Vec<Kept> = Vec::new();
    for (o, k) in results {
        trials.push(o);
        if let Some(k) = k {
            kept.push(k);
        }
    }

    let mut bands = Vec::new();
    if let Some(first) = kept.first() {
        for (slot, (est, var, _)) in first.iter().enumerate() {
            let mut p5 = Vec::with_capacity(samples);
            let mut p50 = Vec::with_capacity(samples);
            let mut p95 = Vec::with_capacity(samples);
            let mut col = Vec::with_capacity(kept.len());
            for k in 0..samples {
                col.clear();
                col.extend(kept.iter().map(|t| t[slot].2[k]));
                col.sort_by(f64::total_cmp);
                p5.push(percentile(&col, 0.05));
                p50.push(percentile(&col, 0.50));
                p95.push(percentile(&col, 0.95));
            }
            bands.push(Band { estimator: est.clone(), variable: var.clone(), p5, p50, p95 });
        }
    }
    let t = (0..samples).map(|k| k as f64 * scenario.dt).collect();
    Ok(MonteCarloSummary { t, bands, trials })
}
