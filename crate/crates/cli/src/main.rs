//! Batch command-line front end: wires run configurations to the library
//! and emits all result files.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on configuration
//! errors. Numerical error names from the library propagate verbatim into
//! `report.json`.

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::FileConfig;
use griffith_core::analysis::{self, StudyConfig};
use griffith_core::continuation::{run_path, ContinuationConfig, StartPolicy};
use griffith_core::lattice::Domain;
use griffith_core::model::CrackModel;
use griffith_core::solvers::{NewtonOptions, Solver};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "griffith", version, about = "Atomistic anti-plane crack continuation toolkit")]
struct Cli {
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Newton equilibration at fixed radius and SIF; writes the field and a
    /// solve report.
    Solve(SolveArgs),
    /// Pseudo-arclength trace of the bifurcation path; writes `path.csv`
    /// and `folds.json`.
    Trace(TraceArgs),
    /// Far-field decay envelopes of the equilibrium correction and of the
    /// first fold's kernel eigenvector.
    Decay(DecayArgs),
    /// Trace plus a table of the certified folds.
    Folds(TraceArgs),
    /// Finite-cell convergence study across a radii schedule.
    Converge(ConvergeArgs),
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    lambda: Option<i32>,
    /// Start from a previously dumped field instead of zero.
    #[arg(long)]
    u_start: Option<PathBuf>,
    /// Use the globalized (damped) scheme instead of plain Newton.
    #[arg(long)]
    damped: bool,
    #[arg(long)]
    newton_tol: Option<f64>,
}

#[derive(Args, Clone)]
struct TraceArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    k_start: Option<f64>,
    /// SIF window `lo:hi`; the trace stops on leaving it.
    #[arg(long, value_parser = parse_window)]
    k_window: Option<(f64, f64)>,
    #[arg(long)]
    ds_init: Option<f64>,
    #[arg(long)]
    ds_min: Option<f64>,
    #[arg(long)]
    ds_max: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Stop after this many fold brackets.
    #[arg(long)]
    max_folds: Option<usize>,
    /// Stop after this many bond-breaking events.
    #[arg(long)]
    max_events: Option<usize>,
    #[arg(long)]
    eigen_every: Option<usize>,
    #[arg(long)]
    lambda: Option<i32>,
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Start the initial solve from a dumped field.
    #[arg(long)]
    u_start: Option<PathBuf>,
    /// Dump the final point's correction as site-value CSV.
    #[arg(long)]
    dump_final_field: bool,
}

#[derive(Args, Clone)]
struct DecayArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Envelope fit window `lo:hi` (default `4:R/2`).
    #[arg(long, value_parser = parse_window)]
    fit_range: Option<(f64, f64)>,
    #[arg(long)]
    lambda: Option<i32>,
}

#[derive(Args, Clone)]
struct ConvergeArgs {
    /// Radii schedule `n_lo:n_hi` meaning `R = 2^(n/4)`.
    #[arg(long, value_parser = parse_sched)]
    radii_sched: Option<(u32, u32)>,
    /// Explicit comma-separated radii overriding the schedule.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Reference radius (largest of the set when omitted).
    #[arg(long)]
    reference: Option<f64>,
    #[arg(long)]
    k_start: Option<f64>,
    #[arg(long, value_parser = parse_window)]
    k_window: Option<(f64, f64)>,
    /// Bond-breaking events traced per radius.
    #[arg(long)]
    max_events: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Add the SIF gap to the Hausdorff metric.
    #[arg(long)]
    hausdorff_with_k: bool,
    /// Concurrent per-radius traces.
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    Ok((lo, hi))
}

fn parse_sched(s: &str) -> Result<(u32, u32), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected n_lo:n_hi, got {s}"))?;
    let lo: u32 = lo.trim().parse().map_err(|e| format!("bad exponent: {e}"))?;
    let hi: u32 = hi.trim().parse().map_err(|e| format!("bad exponent: {e}"))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    // Deterministic factorizations; concurrency lives at the radius level.
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = Cli::parse();

    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(file) => file.unwrap_or_default(),
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(2);
        }
    };

    let result = match &cli.command {
        Command::Solve(args) => run_solve(&cli, &file, args),
        Command::Trace(args) => run_trace(&cli, &file, args, false),
        Command::Folds(args) => run_trace(&cli, &file, args, true),
        Command::Decay(args) => run_decay(&cli, &file, args),
        Command::Converge(args) => run_converge(&cli, &file, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(name, msg)) => {
            eprintln!("numerical failure: {msg}");
            let _ = output::write_error_report(&cli.out_dir, &name, &msg);
            ExitCode::from(1)
        }
        Err(CliError::Io(err)) => {
            eprintln!("io error: {err}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Config(String),
    Numerical(String, String),
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

fn continuation_config(file: &FileConfig, args: &TraceArgs) -> ContinuationConfig {
    let defaults = ContinuationConfig::default();
    ContinuationConfig {
        radius: args.radius.or(file.radius).unwrap_or(defaults.radius),
        k_start: args.k_start.or(file.k_start).unwrap_or(defaults.k_start),
        u_start: match &args.u_start {
            Some(path) => StartPolicy::File(path.display().to_string()),
            None => file
                .u_start
                .clone()
                .map(StartPolicy::File)
                .unwrap_or(StartPolicy::Zero),
        },
        ds_init: args.ds_init.or(file.ds_init).unwrap_or(defaults.ds_init),
        ds_min: args.ds_min.or(file.ds_min).unwrap_or(defaults.ds_min),
        ds_max: args.ds_max.or(file.ds_max).unwrap_or(defaults.ds_max),
        max_steps: args.max_steps.or(file.max_steps).unwrap_or(defaults.max_steps),
        k_window: args.k_window.or(file.k_window).unwrap_or(defaults.k_window),
        target_corrector_iters: file
            .target_corrector_iters
            .unwrap_or(defaults.target_corrector_iters),
        eigen_every: args
            .eigen_every
            .or(file.eigen_every)
            .unwrap_or(defaults.eigen_every),
        max_folds: args.max_folds.or(file.max_folds),
        max_bond_events: args.max_events.or(file.max_events),
        newton_tol: args
            .newton_tol
            .or(file.newton_tol)
            .unwrap_or(defaults.newton_tol),
        potential: file.potential(),
        lambda: args.lambda.or(file.lambda).unwrap_or(defaults.lambda),
    }
}

fn run_solve(cli: &Cli, file: &FileConfig, args: &SolveArgs) -> Result<(), CliError> {
    let radius = args.radius.or(file.radius).unwrap_or(32.0);
    let k = args.k.or(file.k).unwrap_or(0.46);
    let lambda = args.lambda.or(file.lambda).unwrap_or(0);
    let tol = args.newton_tol.or(file.newton_tol).unwrap_or(1e-8);

    let domain = Arc::new(
        Domain::build(radius).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let model = Arc::new(CrackModel::new(Arc::clone(&domain), file.potential(), lambda));
    let mut solver = Solver::new(Arc::clone(&model));

    let u0 = match &args.u_start {
        Some(path) => griffith_core::report::read_field_csv(path, &domain)?,
        None => domain.zero_field(),
    };
    let opts = NewtonOptions {
        tolerance: tol,
        ..NewtonOptions::default()
    };
    let outcome = if args.damped {
        solver.damped_newton(k, &u0, opts)
    } else {
        solver.newton(k, &u0, opts)
    };
    let report = outcome.map_err(|e| CliError::Numerical(e.name().into(), e.to_string()))?;

    output::prepare_dir(&cli.out_dir)?;
    output::write_config_copy(&cli.out_dir, &output::SolveProvenance {
        command: "solve",
        radius,
        k,
        lambda,
        newton_tol: tol,
        damped: args.damped,
        potential: file.potential(),
    })?;
    output::write_solve_outputs(&cli.out_dir, &model, &report, k)?;
    println!(
        "solve: R={radius} k={k} converged in {} iterations (residual {:.3e})",
        report.iterations,
        report.residual_history.last().unwrap()
    );
    Ok(())
}

fn run_trace(cli: &Cli, file: &FileConfig, args: &TraceArgs, table: bool) -> Result<(), CliError> {
    let config = continuation_config(file, args);
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let trace =
        run_path(&config).map_err(|e| CliError::Numerical(e.name().into(), e.to_string()))?;
    output::prepare_dir(&cli.out_dir)?;
    output::write_config_copy(&cli.out_dir, &config)?;
    output::write_trace_outputs(&cli.out_dir, &trace, args.dump_final_field)?;
    if table {
        output::write_fold_table(&cli.out_dir, &trace)?;
        println!("{}", output::fold_table_text(&trace));
    }
    println!(
        "trace: R={} {} points, {} certified folds, k in [{:.4}, {:.4}]",
        config.radius,
        trace.points.len(),
        trace.folds.len(),
        trace.points.iter().map(|p| p.k).fold(f64::MAX, f64::min),
        trace.points.iter().map(|p| p.k).fold(f64::MIN, f64::max),
    );
    Ok(())
}

fn run_decay(cli: &Cli, file: &FileConfig, args: &DecayArgs) -> Result<(), CliError> {
    let radius = args.radius.or(file.radius).unwrap_or(64.0);
    let k = args.k.or(file.k).unwrap_or(0.46);
    let lambda = args.lambda.or(file.lambda).unwrap_or(0);
    let fit_range = args
        .fit_range
        .or(file.fit_range)
        .unwrap_or_else(|| analysis::default_fit_range(radius));

    // Equilibrium correction, then the kernel eigenvector at the first fold
    // reached above k.
    let config = ContinuationConfig {
        radius,
        k_start: k,
        k_window: (0.05, 0.95),
        max_folds: Some(1),
        max_steps: 4000,
        potential: file.potential(),
        lambda,
        ..ContinuationConfig::default()
    };
    let trace =
        run_path(&config).map_err(|e| CliError::Numerical(e.name().into(), e.to_string()))?;
    let domain = trace.domain().map_err(|e| CliError::Config(e.to_string()))?;
    let u_profile = analysis::decay_profile(&domain, &trace.points[0].u, fit_range)
        .map_err(|e| CliError::Numerical("DecayProfileFailed".into(), e.to_string()))?;
    let fold = trace
        .folds
        .first()
        .ok_or_else(|| CliError::Numerical("NoFoldFound".into(), "no fold in window".into()))?;
    let gamma_profile = analysis::decay_profile(&domain, &fold.gamma, fit_range)
        .map_err(|e| CliError::Numerical("DecayProfileFailed".into(), e.to_string()))?;

    output::prepare_dir(&cli.out_dir)?;
    output::write_config_copy(&cli.out_dir, &config)?;
    output::write_decay_outputs(&cli.out_dir, &u_profile, &gamma_profile, fold.k)?;
    println!(
        "decay: R={radius} slope(u) {:.3}, slope(gamma) {:.3} over [{}, {}]",
        u_profile.fitted_slope, gamma_profile.fitted_slope, fit_range.0, fit_range.1
    );
    Ok(())
}

fn run_converge(cli: &Cli, file: &FileConfig, args: &ConvergeArgs) -> Result<(), CliError> {
    let mut radii = match (&args.radii, file.radii.clone()) {
        (Some(explicit), _) => explicit.clone(),
        (None, Some(explicit)) => explicit,
        (None, None) => {
            let (lo, hi) = args
                .radii_sched
                .or(file.radii_sched)
                .unwrap_or((18, 24));
            analysis::radius_schedule(lo, hi)
        }
    };
    if let Some(reference) = args.reference.or(file.reference) {
        radii.push(reference);
    }
    let trace_args = TraceArgs {
        radius: None,
        k_start: args.k_start,
        k_window: args.k_window,
        ds_init: None,
        ds_min: None,
        ds_max: None,
        max_steps: args.max_steps,
        max_folds: None,
        max_events: args.max_events,
        eigen_every: None,
        lambda: None,
        newton_tol: None,
        u_start: None,
        dump_final_field: false,
    };
    let mut base = continuation_config(file, &trace_args);
    // Study defaults differ from single-trace defaults: start on the
    // tip-at-origin branch inside the trapping range and stop after a fixed
    // number of bond events so fold ordinals match across radii.
    if args.k_start.or(file.k_start).is_none() {
        base.k_start = 0.46;
    }
    if args.k_window.or(file.k_window).is_none() {
        base.k_window = (0.15, 0.9);
    }
    if base.max_bond_events.is_none() {
        base.max_bond_events = Some(3);
    }
    if args.max_steps.or(file.max_steps).is_none() {
        base.max_steps = 4000;
    }

    let study = StudyConfig {
        radii,
        base,
        include_k_in_hausdorff: args.hausdorff_with_k || file.hausdorff_with_k.unwrap_or(false),
        jobs: args.jobs.or(file.jobs).unwrap_or(1),
    };
    let outcome = analysis::convergence_study(&study)
        .map_err(|e| CliError::Numerical(e.name().into(), e.to_string()))?;

    output::prepare_dir(&cli.out_dir)?;
    output::write_study_provenance(&cli.out_dir, &study)?;
    output::write_study_outputs(&cli.out_dir, &outcome)?;
    let report = &outcome.report;
    println!(
        "converge: {} surviving radii (reference R={}), fold-k order {:?}, path order {:?}",
        report.radii.len(),
        report.reference_radius,
        report.fold_k_order_median,
        report.path_order.map(|f| f.exponent),
    );
    for (family, name) in [
        (&report.family_stable_to_unstable, "stable-to-unstable"),
        (&report.family_unstable_to_stable, "unstable-to-stable"),
    ] {
        println!(
            "  {name} fold family limits: {:?} (spread {:.2e})",
            family.limits, family.spread
        );
    }
    Ok(())
}
