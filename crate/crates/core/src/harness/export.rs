use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::montecarlo::MonteCarloSummary;
use super::run::{RunResult, SWO_LABEL};
use super::HarnessError;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Header of `trajectory.csv` for a run.
pub fn trajectory_header(run: &RunResult) -> Vec<String> {
    let case = run.scenario.case;
    let names = case.state_names();
    let mut h = vec!["t".to_string()];
    h.extend(names.iter().map(|n| format!("x.{n}")));
    h.extend(case.output_names().iter().map(|n| format!("y.{n}")));
    for t in &run.tracks {
        h.extend(names.iter().map(|n| format!("{}.{n}", t.kind)));
    }
    h.extend(names.iter().map(|n| format!("{}.{n}", SWO_LABEL.to_lowercase())));
    h.push(format!("{}.selected", SWO_LABEL.to_lowercase()));
    h
}

pub fn write_trajectory(run: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(trajectory_header(run)).map_err(|e| csv_err(path, e))?;
    let n = run.scenario.case.state_dim();
    let mut row: Vec<String> = Vec::new();
    for (k, d) in run.decisions.iter().enumerate() {
        row.clear();
        row.push(fmt_f64(run.plant.t[k]));
        row.extend(run.plant.x[k].iter().map(|v| fmt_f64(*v)));
        row.extend(run.plant.y_noisy[k].iter().map(|v| fmt_f64(*v)));
        for t in &run.tracks {
            match &t.records[k] {
                Some(r) => row.extend(r.x_hat.iter().map(|v| fmt_f64(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
        }
        row.extend(d.x_hat.iter().map(|v| fmt_f64(*v)));
        row.push(d.selected.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_switchlog(run: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let mut header = vec!["step".to_string()];
    header.extend(run.tracks.iter().map(|t| format!("J.{}", t.kind)));
    header.push("selected".into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, d) in run.decisions.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(d.cost.iter().map(|c| c.map(fmt_f64).unwrap_or_default()));
        row.push(d.selected.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_metrics(run: &RunResult, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(&run.metrics).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn write_bands(summary: &MonteCarloSummary, path: &Path) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    for b in &summary.bands {
        for p in ["p5", "p50", "p95"] {
            header.push(format!("{}.{}.{p}", b.estimator, b.variable));
        }
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (k, t) in summary.t.iter().enumerate() {
        let mut row = vec![fmt_f64(*t)];
        for b in &summary.bands {
            row.extend([b.p5[k], b.p50[k], b.p95[k]].map(fmt_f64));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Per-trial outcomes of a Monte Carlo study as JSON lines of metrics.
pub fn write_trials(summary: &MonteCarloSummary, path: &Path) -> Result<(), HarnessError> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?);
    for t in &summary.trials {
        let value = serde_json::json!({
            "trial": t.index,
            "seed": t.seed,
            "reactors": t.reactors,
            "error": t.error,
            "metrics": t.metrics,
        });
        writeln!(f, "{value}").map_err(|e| HarnessError::io(path, e))?;
    }
    f.flush().map_err(|e| HarnessError::io(path, e))
}

/// Write `trajectory.csv`, `metrics.json` and `switchlog.csv` into `dir`,
/// plus `montecarlo_bands.csv` and `montecarlo_trials.jsonl` when a summary
/// is given. Returns the written paths.
pub fn export_results(
    run: Option<&RunResult>,
    summary: Option<&MonteCarloSummary>,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut out = Vec::new();
    if let Some(run) = run {
        let p = dir.join("trajectory.csv");
        write_trajectory(run, &p)?;
        out.push(p);
        let p = dir.join("metrics.json");
        write_metrics(run, &p)?;
        out.push(p);
        let p = dir.join("switchlog.csv");
        write_switchlog(run, &p)?;
        out.push(p);
    }
    if let Some(s) = summary {
        let p = dir.join("montecarlo_bands.csv");
        write_bands(s, &p)?;
        out.push(p);
        let p = dir.join("montecarlo_trials.jsonl");
        write_trials(s, &p)?;
        out.push(p);
    }
    Ok(out)
}
