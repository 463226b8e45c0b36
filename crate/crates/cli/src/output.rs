//! Result-file emission: CSV tables with header rows, JSON reports with
//! stable key ordering, and a provenance copy of each run's configuration.

use griffith_core::analysis::{ConvergenceReport, DecayProfile, StudyConfig, StudyOutcome};
use griffith_core::continuation::Trace;
use griffith_core::model::CrackModel;
use griffith_core::report::{self, radius_label};
use griffith_core::solvers::NewtonReport;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn prepare_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)
}

pub fn write_config_copy<T: Serialize>(dir: &Path, config: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    std::fs::write(dir.join("config.json"), text + "\n")
}

pub fn write_error_report(dir: &Path, name: &str, message: &str) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct ErrorReport<'a> {
        error: &'a str,
        message: &'a str,
    }
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(&ErrorReport {
        error: name,
        message,
    })
    .expect("error report serializes");
    std::fs::write(dir.join("report.json"), text + "\n")
}

#[derive(Serialize)]
pub struct SolveProvenance {
    pub command: &'static str,
    pub radius: f64,
    pub k: f64,
    pub lambda: i32,
    pub newton_tol: f64,
    pub damped: bool,
    pub potential: griffith_core::model::PairPotential,
}

pub fn write_solve_outputs(
    dir: &Path,
    model: &CrackModel,
    newton: &NewtonReport,
    k: f64,
) -> std::io::Result<()> {
    let domain = model.domain();
    let mut field = BufWriter::new(File::create(dir.join("field.csv"))?);
    report::write_field_csv(domain, &newton.field, &mut field)?;

    #[derive(Serialize)]
    struct SolveReport<'a> {
        converged: bool,
        iterations: usize,
        residual: f64,
        residual_history: &'a [f64],
        k: f64,
        energy: f64,
        domain: griffith_core::lattice::DomainSummary,
    }
    let report = SolveReport {
        converged: newton.converged,
        iterations: newton.iterations,
        residual: *newton.residual_history.last().unwrap(),
        residual_history: &newton.residual_history,
        k,
        energy: model.energy(&newton.field, k),
        domain: domain.summary(),
    };
    let text = serde_json::to_string_pretty(&report).expect("solve report serializes");
    std::fs::write(dir.join("report.json"), text + "\n")
}

pub fn write_trace_outputs(dir: &Path, trace: &Trace, dump_final: bool) -> std::io::Result<()> {
    let domain = trace.domain().expect("trace domain");
    let mut path = BufWriter::new(File::create(dir.join("path.csv"))?);
    report::write_path_csv(trace, &domain, &mut path)?;
    std::fs::write(dir.join("folds.json"), report::folds_json(&trace.folds) + "\n")?;
    if dump_final {
        if let Some(point) = trace.points.last() {
            let mut w = BufWriter::new(File::create(dir.join("final_field.csv"))?);
            report::write_field_csv(&domain, &point.u, &mut w)?;
        }
    }
    Ok(())
}

pub fn fold_table_text(trace: &Trace) -> String {
    let mut out = String::from("ordinal   s          k          family  mu_left     mu_right    b_dot_gamma  third\n");
    for (i, fold) in trace.folds.iter().enumerate() {
        out.push_str(&format!(
            "{:<9} {:<10.4} {:<10.6} {:<7} {:<+11.3e} {:<+11.3e} {:<+12.3e} {:<+.3e}\n",
            i,
            fold.s,
            fold.k,
            if fold.is_stable_to_unstable() { "s->u" } else { "u->s" },
            fold.mu_left,
            fold.mu_right,
            fold.b_dot_gamma,
            fold.third,
        ));
    }
    out
}

pub fn write_fold_table(dir: &Path, trace: &Trace) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("folds.csv"))?);
    writeln!(w, "ordinal,s,k,family,mu_left,mu_right,b_dot_gamma,third")?;
    for (i, fold) in trace.folds.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            i,
            fold.s,
            fold.k,
            if fold.is_stable_to_unstable() { "s->u" } else { "u->s" },
            fold.mu_left,
            fold.mu_right,
            fold.b_dot_gamma,
            fold.third,
        )?;
    }
    Ok(())
}

pub fn write_decay_outputs(
    dir: &Path,
    u_profile: &DecayProfile,
    gamma_profile: &DecayProfile,
    fold_k: f64,
) -> std::io::Result<()> {
    for (name, profile) in [("decay_u.csv", u_profile), ("decay_gamma.csv", gamma_profile)] {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        writeln!(w, "r_mid,envelope,count")?;
        for bin in &profile.bins {
            writeln!(w, "{},{},{}", bin.r_mid, bin.envelope, bin.count)?;
        }
    }
    #[derive(Serialize)]
    struct DecayReport<'a> {
        u: &'a DecayProfile,
        gamma: &'a DecayProfile,
        fold_k: f64,
    }
    let text = serde_json::to_string_pretty(&DecayReport {
        u: u_profile,
        gamma: gamma_profile,
        fold_k,
    })
    .expect("decay report serializes");
    std::fs::write(dir.join("report.json"), text + "\n")
}

pub fn write_study_provenance(dir: &Path, study: &StudyConfig) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Provenance<'a> {
        radii: &'a [f64],
        base: &'a griffith_core::continuation::ContinuationConfig,
        include_k_in_hausdorff: bool,
        jobs: usize,
    }
    write_config_copy(
        dir,
        &Provenance {
            radii: &study.radii,
            base: &study.base,
            include_k_in_hausdorff: study.include_k_in_hausdorff,
            jobs: study.jobs,
        },
    )
}

pub fn write_study_outputs(dir: &Path, outcome: &StudyOutcome) -> std::io::Result<()> {
    for trace in &outcome.traces {
        let sub = dir.join(radius_label(trace.config.radius));
        std::fs::create_dir_all(&sub)?;
        write_trace_outputs(&sub, trace, false)?;
    }
    write_report_tables(dir, &outcome.report)?;
    let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    std::fs::write(dir.join("report.json"), text + "\n")
}

fn write_report_tables(dir: &Path, report: &ConvergenceReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("hausdorff_vs_R.csv"))?);
    writeln!(w, "R,hausdorff")?;
    for (radius, distance) in &report.hausdorff_to_reference {
        writeln!(w, "{radius},{distance}")?;
    }

    let mut w = BufWriter::new(File::create(dir.join("foldk_vs_R.csv"))?);
    writeln!(w, "R,ordinal,k,family")?;
    for table in &report.fold_tables {
        for fold in &table.folds {
            writeln!(
                w,
                "{},{},{},{}",
                table.radius,
                fold.ordinal,
                fold.k,
                if fold.stable_to_unstable { "s->u" } else { "u->s" },
            )?;
        }
    }
    for fold in &report.reference_folds {
        writeln!(
            w,
            "{},{},{},{}",
            report.reference_radius,
            fold.ordinal,
            fold.k,
            if fold.stable_to_unstable { "s->u" } else { "u->s" },
        )?;
    }

    let mut w = BufWriter::new(File::create(dir.join("richardson.csv"))?);
    writeln!(w, "ordinal,family,limit")?;
    for (family, name) in [
        (&report.family_stable_to_unstable, "s->u"),
        (&report.family_unstable_to_stable, "u->s"),
    ] {
        for (ordinal, limit) in family.ordinals.iter().zip(&family.limits) {
            writeln!(w, "{ordinal},{name},{limit}")?;
        }
    }
    Ok(())
}
