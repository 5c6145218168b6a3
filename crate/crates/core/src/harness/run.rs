use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::{HarnessError, Scenario};
use crate::metrics::{metric_table, MetricTable, SeriesView};
use crate::model::{simulate_plant_partial, DiscreteModel, Dynamics, PlantSetup, PlantTrajectory};
use crate::observers::{build_estimator, Estimator, EstimatorRecord, ObserverKind};
use crate::seeds;
use crate::switching::{swo_step, SwitchDecision};

/// Label of the switched estimate in tables and files.
pub const SWO_LABEL: &str = "SWO";

#[derive(Debug, Clone, PartialEq)]
pub struct TrackFailure {
    /// First sample without an estimate.
    pub step: usize,
    pub message: String,
}

/// One bank member's history, one entry per sample (`None` once masked).
#[derive(Debug, Clone)]
pub struct ObserverTrack {
    pub kind: ObserverKind,
    pub records: Vec<Option<EstimatorRecord>>,
    pub failure: Option<TrackFailure>,
    pub wall_seconds: f64,
}

impl ObserverTrack {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub plant: PlantTrajectory,
    pub tracks: Vec<ObserverTrack>,
    pub decisions: Vec<SwitchDecision>,
    pub switching_seconds: f64,
    pub metrics: MetricTable,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl RunResult {
    pub fn bank(&self) -> Vec<ObserverKind> {
        self.tracks.iter().map(|t| t.kind).collect()
    }

    pub fn track(&self, kind: ObserverKind) -> Option<&ObserverTrack> {
        self.tracks.iter().find(|t| t.kind == kind)
    }

    pub fn samples(&self) -> usize {
        self.decisions.len()
    }

    /// Cumulative step time per member, then the SWO as the sum of all
    /// members plus the switching overhead.
    pub fn time_observers(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.tracks.iter().map(|t| (t.kind.to_string(), t.wall_seconds)).collect();
        let total: f64 = self.tracks.iter().map(|t| t.wall_seconds).sum::<f64>() + self.switching_seconds;
        out.push((SWO_LABEL.to_string(), total));
        out
    }

    /// Samples at which each member was selected, in bank order.
    pub fn selection_counts(&self) -> Vec<(ObserverKind, usize)> {
        self.tracks
            .iter()
            .map(|t| (t.kind, self.decisions.iter().filter(|d| d.selected == t.kind).count()))
            .collect()
    }
}

struct Slot {
    estimator: Option<Box<dyn Estimator>>,
    track: ObserverTrack,
}

impl Slot {
    fn fail(&mut self, step: usize, message: String) {
        self.estimator = None;
        self.track.failure = Some(TrackFailure { step, message });
    }

    fn advance(
        &mut self,
        model: &DiscreteModel,
        step: usize,
        u_prev: &DVector<f64>,
        y_prev: &DVector<f64>,
        y: &DVector<f64>,
    ) {
        let Some(est) = self.estimator.as_mut() else {
            self.track.records.push(None);
            return;
        };
        let start = Instant::now();
        let out = est.step(model, u_prev, y_prev, y);
        let elapsed = start.elapsed().as_secs_f64();
        self.track.wall_seconds += elapsed;
        match out {
            Ok(diag) => {
                let rec = EstimatorRecord::new(est.kind(), est.state(), model, y, elapsed, diag);
                self.track.records.push(Some(rec));
            }
            Err(e) => {
                self.fail(step, e.to_string());
                self.track.records.push(None);
            }
        }
    }
}

/// Simulate the plant with the scenario's nominal dynamics and run the bank.
pub fn run_case(scenario: &Scenario) -> Result<RunResult, HarnessError> {
    let plant = scenario.dynamics()?;
    run_with_plant(scenario, &plant)
}

/// Run the bank against a plant whose dynamics may differ from the nominal
/// model the observers use.
pub fn run_with_plant(scenario: &Scenario, plant_dynamics: &Dynamics) -> Result<RunResult, HarnessError> {
    scenario.validate()?;
    let setup = PlantSetup {
        dynamics: plant_dynamics.clone(),
        dt: scenario.dt,
        steps: scenario.steps(),
        x0: scenario.initial_state(),
        u: scenario.input(),
        q: scenario.q_matrix(),
        r: scenario.r_matrix(),
        seed: scenario.seed,
    };
    let (mut plant, plant_err) = simulate_plant_partial(&setup)?;
    let mut aborted = plant_err.map(|e| e.to_string());

    let model = DiscreteModel::new(scenario.dynamics()?, scenario.dt)?;
    let x0 = scenario.initial_state();
    let u0 = scenario.input();
    let samples = plant.len();

    let mut slots: Vec<Slot> = scenario
        .bank()
        .iter()
        .map(|params| {
            let kind = params.kind();
            let config = scenario.observer_config(params);
            let rng = seeds::observer_stream(scenario.seed, kind.index());
            let mut slot = Slot {
                estimator: None,
                track: ObserverTrack { kind, records: Vec::with_capacity(samples), failure: None, wall_seconds: 0.0 },
            };
            match build_estimator(&config, &model, &x0, &u0, rng) {
                Ok(est) => slot.estimator = Some(est),
                Err(e) => slot.fail(0, e.to_string()),
            }
            slot
        })
        .collect();
    let bank: Vec<ObserverKind> = slots.iter().map(|s| s.track.kind).collect();

    for slot in &mut slots {
        let rec = slot.estimator.as_ref().map(|est| {
            EstimatorRecord::new(est.kind(), est.state(), &model, &plant.y_noisy[0], 0.0, Default::default())
        });
        slot.track.records.push(rec);
    }

    let mut decisions = Vec::with_capacity(samples);
    let mut switching_seconds = 0.0;
    for k in 0..samples {
        if k > 0 {
            let (u_prev, y_prev, y) = (&plant.u[k - 1], &plant.y_noisy[k - 1], &plant.y_noisy[k]);
            if scenario.parallel_bank {
                slots.par_iter_mut().for_each(|s| s.advance(&model, k, u_prev, y_prev, y));
            } else {
                slots.iter_mut().for_each(|s| s.advance(&model, k, u_prev, y_prev, y));
            }
        }
        let start = Instant::now();
        let records: Vec<Option<&EstimatorRecord>> = slots.iter().map(|s| s.track.records[k].as_ref()).collect();
        let decision = swo_step(&bank, &records, &plant.y_noisy[k], Some(&plant.x[k]), scenario.mode);
        switching_seconds += start.elapsed().as_secs_f64();
        match decision {
            Ok(d) => decisions.push(d),
            Err(e) => {
                aborted = Some(format!("sample {k}: {e}"));
                break;
            }
        }
    }

    // keep every series at the same length after an early stop
    let kept = decisions.len();
    for slot in &mut slots {
        slot.track.records.truncate(kept);
    }
    truncate_plant(&mut plant, kept);
    let tracks: Vec<ObserverTrack> = slots.into_iter().map(|s| s.track).collect();
    let metrics = score(scenario, &plant, &tracks, &decisions, switching_seconds);
    Ok(RunResult {
        scenario: scenario.clone(),
        plant,
        tracks,
        decisions,
        switching_seconds,
        metrics,
        aborted,
    })
}

fn truncate_plant(plant: &mut PlantTrajectory, len: usize) {
    plant.t.truncate(len);
    plant.x.truncate(len);
    plant.y_clean.truncate(len);
    plant.y_noisy.truncate(len);
    plant.u.truncate(len);
}

fn score(
    scenario: &Scenario,
    plant: &PlantTrajectory,
    tracks: &[ObserverTrack],
    decisions: &[SwitchDecision],
    switching_seconds: f64,
) -> MetricTable {
    let mut views: Vec<SeriesView<'_>> = tracks
        .iter()
        .map(|t| SeriesView {
            label: t.kind.to_string(),
            x_hat: t.records.iter().map(|r| r.as_ref().map(|r| &r.x_hat)).collect(),
            e: t.records.iter().map(|r| r.as_ref().map(|r| &r.e)).collect(),
            wall_seconds: t.wall_seconds,
        })
        .collect();
    let bank_seconds: f64 = tracks.iter().map(|t| t.wall_seconds).sum();
    views.push(SeriesView {
        label: SWO_LABEL.to_string(),
        x_hat: decisions.iter().map(|d| Some(&d.x_hat)).collect(),
        e: decisions.iter().map(|d| Some(&d.e)).collect(),
        wall_seconds: bank_seconds + switching_seconds,
    });
    metric_table(scenario.case, scenario.seed, scenario.dt, scenario.horizon, &plant.x, &views)
}
