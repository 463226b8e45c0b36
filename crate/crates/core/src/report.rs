//! On-disk result formats: path tables, fold records, field dumps.
//!
//! All CSV output carries a header row; JSON reports keep stable key
//! ordering (struct declaration order). Numbers are written in shortest
//! round-trip form, so re-running a command on identical inputs reproduces
//! identical bytes.

use crate::continuation::{FoldRecord, Trace};
use crate::lattice::{Domain, Field, SiteIndex};
use serde::Serialize;
use std::io::{self, BufRead, Write};
use std::path::Path;

pub fn write_path_csv(trace: &Trace, domain: &Domain, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "step,s,k,h1_norm_u,tau_k,mu,class")?;
    for p in &trace.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.step,
            p.s,
            p.k,
            domain.h1_norm(&p.u),
            p.tangent.k,
            p.mu,
            p.class.as_str()
        )?;
    }
    Ok(())
}

/// The scalar payload of a refined fold, as serialized into `folds.json`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FoldSummary {
    pub s: f64,
    pub k: f64,
    pub mu_left: f64,
    pub mu_right: f64,
    pub b_dot_gamma: f64,
    pub third: f64,
}

impl From<&FoldRecord> for FoldSummary {
    fn from(fold: &FoldRecord) -> FoldSummary {
        FoldSummary {
            s: fold.s,
            k: fold.k,
            mu_left: fold.mu_left,
            mu_right: fold.mu_right,
            b_dot_gamma: fold.b_dot_gamma,
            third: fold.third,
        }
    }
}

pub fn folds_json(folds: &[FoldRecord]) -> String {
    let summaries: Vec<FoldSummary> = folds.iter().map(FoldSummary::from).collect();
    serde_json::to_string_pretty(&summaries).expect("fold summaries serialize")
}

/// Site-value dump, one `l1,l2,u` row per free site.
pub fn write_field_csv(domain: &Domain, field: &Field, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "l1,l2,u")?;
    for (site, value) in domain.free_sites().iter().zip(field.values()) {
        writeln!(w, "{},{},{}", site.l1, site.l2, value)?;
    }
    Ok(())
}

/// Reads a site-value dump back onto `domain`; sites missing from the file
/// stay zero, sites outside the domain are ignored.
pub fn read_field_csv(path: impl AsRef<Path>, domain: &Domain) -> io::Result<Field> {
    let file = std::fs::File::open(path)?;
    let reader = io::BufReader::new(file);
    let mut field = domain.zero_field();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (line_no == 0 && trimmed.starts_with("l1")) {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').collect();
        if parts.len() < 3 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: expected l1,l2,u", line_no + 1),
            ));
        }
        let bad = |e: &dyn std::fmt::Display| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", line_no + 1))
        };
        let l1: i32 = parts[0].trim().parse().map_err(|e| bad(&e))?;
        let l2: i32 = parts[1].trim().parse().map_err(|e| bad(&e))?;
        let u: f64 = parts[2].trim().parse().map_err(|e| bad(&e))?;
        if let Some(i) = domain.site_index(SiteIndex::new(l1, l2)) {
            field.values_mut()[i] = u;
        }
    }
    Ok(field)
}

/// Directory-name form of a radius: up to four decimals, trailing zeros
/// trimmed (`16`, `19.0273`, ...).
pub fn radius_label(radius: f64) -> String {
    let mut s = format!("{radius:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}
