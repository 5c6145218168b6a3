use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cstr_swo::harness::{
    export_results, load_scenario, monte_carlo, run_case, HarnessError, PerturbationSpec, Scenario, SWO_LABEL,
};
use cstr_swo::model::CaseId;
use cstr_swo::observability::{linear_observability, nonlinear_observability, LieSystem, DEFAULT_TOL};
use cstr_swo::observers::ObserverKind;
use cstr_swo::switching::SwitchMode;

#[derive(Parser)]
#[command(name = "cstr-swo", version, about = "Switched multi-observer estimation for cascaded CSTRs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Measurement,
    Truestate,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one case and write trajectory, metrics and switch log.
    Run {
        #[arg(long, value_parser = parse_case)]
        case: CaseId,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Comma-separated observers to leave out, e.g. QKF,PF.
        #[arg(long, value_delimiter = ',', value_parser = parse_observer)]
        mask: Vec<ObserverKind>,
        /// Step the bank members concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Perturbed-plant robustness study with percentile bands.
    Montecarlo {
        #[arg(long, value_parser = parse_case)]
        case: CaseId,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep the quadrature filter in the bank (slow for case 2).
        #[arg(long)]
        with_qkf: bool,
        /// Apply the same draw to every perturbed reactor.
        #[arg(long)]
        shared_draw: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Observability rank of a case.
    Observability {
        #[arg(long, value_parser = parse_case)]
        case: CaseId,
        /// Number of Lie-derivative orders (defaults to the state dimension).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Per-observer wall time of one run.
    Bench {
        #[arg(long, value_parser = parse_case)]
        case: CaseId,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    CaseId::parse(s).ok_or_else(|| format!("unknown case `{s}` (expected sc, 1, 2 or 3)"))
}

fn parse_observer(s: &str) -> Result<ObserverKind, String> {
    ObserverKind::parse(s).ok_or_else(|| format!("unknown observer `{s}` (expected ELO, EKF, UKF, QKF or PF)"))
}

fn base_scenario(case: CaseId, config: Option<&PathBuf>) -> Result<Scenario, HarnessError> {
    let mut s = match config {
        Some(p) => load_scenario(p)?,
        None => Scenario::for_case(case),
    };
    s.case = case;
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Run { case, dt, horizon, seed, mode, mask, parallel, out, config } => {
            let mut s = base_scenario(case, config.as_ref())?;
            if let Some(dt) = dt {
                s.dt = dt;
            }
            if let Some(h) = horizon {
                s.horizon = h;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(m) = mode {
                s.mode = match m {
                    ModeArg::Measurement => SwitchMode::MeasurementBased,
                    ModeArg::Truestate => SwitchMode::TrueStateBased,
                };
            }
            s.mask.extend(mask);
            s.parallel_bank |= parallel;
            s.validate()?;
            let run = run_case(&s)?;
            for t in &run.tracks {
                if let Some(f) = &t.failure {
                    eprintln!("{} masked from sample {}: {}", t.kind, f.step, f.message);
                }
            }
            if let Some(why) = &run.aborted {
                eprintln!("run stopped early: {why}");
            }
            let files = export_results(Some(&run), None, &out)?;
            for (kind, n) in run.selection_counts() {
                println!("{kind:>4} selected {:6.2}%", 100.0 * n as f64 / run.samples() as f64);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Montecarlo { case, trials, seed, with_qkf, shared_draw, out, config } => {
            let mut s = base_scenario(case, config.as_ref())?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if !with_qkf && !s.mask.contains(&ObserverKind::Qkf) {
                s.mask.push(ObserverKind::Qkf);
            }
            let spec = PerturbationSpec { trials, shared_draw, ..PerturbationSpec::default() };
            let summary = monte_carlo(&s, &spec)?;
            println!("{} of {} trials succeeded", trials - summary.failures(), trials);
            for t in summary.trials.iter().filter(|t| t.error.is_some()) {
                eprintln!("trial {}: {}", t.index, t.error.as_deref().unwrap_or(""));
            }
            for f in export_results(None, Some(&summary), &out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::Observability { case, order, tol } => {
            let s = Scenario::for_case(case);
            let dynamics = s.dynamics()?;
            let order = order.unwrap_or(case.state_dim());
            if let cstr_swo::model::Dynamics::Linear(m) = &dynamics {
                let r = linear_observability(&m.a, &m.c, tol)?;
                println!("linear: rank {} of {} ({:?})", r.rank, r.state_dim, r.classification);
            }
            let sys = LieSystem::new(dynamics);
            let r = nonlinear_observability(&sys, &s.initial_state(), &s.input(), order, tol)?;
            println!(
                "nonlinear: rank {} of {} ({:?}), tol {:e}, order {}, ranks per point {:?}",
                r.rank, r.state_dim, r.classification, r.tolerance, order, r.point_ranks
            );
            let sv: Vec<String> = r.singular_values.iter().map(|v| format!("{v:.3e}")).collect();
            println!("singular values: {}", sv.join(" "));
        }
        Command::Bench { case, seed, horizon } => {
            let mut s = Scenario::for_case(case);
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(h) = horizon {
                s.horizon = h;
            }
            let run = run_case(&s)?;
            let mut header = Vec::new();
            let mut row = Vec::new();
            for (label, secs) in run.time_observers() {
                let masked = run
                    .tracks
                    .iter()
                    .any(|t| t.kind.to_string() == label && t.records.iter().all(Option::is_none));
                header.push(format!("{label:>10}"));
                row.push(if masked && label != SWO_LABEL { format!("{:>10}", "-") } else { format!("{secs:>10.3}") });
            }
            println!("{}", header.join(""));
            println!("{}", row.join(""));
        }
    }
    Ok(())
}
