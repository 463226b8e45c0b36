//! Quantitative experiments on traced paths: far-field decay envelopes,
//! Hausdorff distances between paths, power-law order fits, Richardson
//! extrapolation of fold SIFs, and the finite-cell convergence study.

use crate::continuation::{ContinuationConfig, ContinuationError, Trace};
use crate::lattice::{Domain, Field};
use crate::model::CrackModel;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("EmptyBin: no sites in bin at radius {r_mid:.3} (fit range too wide for this domain)")]
    EmptyBin { r_mid: f64 },
    #[error("DegenerateFit: abscissas are collinear")]
    DegenerateFit,
    #[error("TooFewPoints: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("NonPositiveData: log fit requires positive values")]
    NonPositiveData,
    #[error("InconsistentOrder: triple estimates {0:?} spread by more than 50%")]
    InconsistentOrder(Vec<f64>),
}

/// Ordinary least squares on `(log x, log y)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power(points: &[(f64, f64)]) -> Result<PowerFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(AnalysisError::NonPositiveData);
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::DegenerateFit);
    }
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(PowerFit {
        exponent,
        prefactor: intercept.exp(),
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayBin {
    pub r_mid: f64,
    pub envelope: f64,
    pub count: usize,
}

/// Log-binned envelope of the crack-aware gradient magnitude, with the
/// fitted log-log slope over `fit_range`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayProfile {
    pub bins: Vec<DecayBin>,
    pub fitted_slope: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
}

/// Quarter-octave bin growth, matching the radii schedule.
const BIN_RATIO: f64 = 1.189207115002721;

pub fn decay_profile(
    domain: &Domain,
    field: &Field,
    fit_range: (f64, f64),
) -> Result<DecayProfile, AnalysisError> {
    let r_max = domain.radius();
    let mut edges = vec![1.0];
    while *edges.last().unwrap() < r_max {
        edges.push(edges.last().unwrap() * BIN_RATIO);
    }
    let nbins = edges.len() - 1;
    let mut envelope = vec![0.0f64; nbins];
    let mut count = vec![0usize; nbins];
    for &site in domain.free_sites() {
        let r = site.radius();
        if r < edges[0] {
            continue;
        }
        let bin = ((r.ln() - edges[0].ln()) / BIN_RATIO.ln()).floor() as usize;
        if bin >= nbins {
            continue;
        }
        let grad = domain.discrete_gradient(field, site, true);
        let mag = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        envelope[bin] = envelope[bin].max(mag);
        count[bin] += 1;
    }
    let bins: Vec<DecayBin> = (0..nbins)
        .map(|i| DecayBin {
            r_mid: (edges[i] * edges[i + 1]).sqrt(),
            envelope: envelope[i],
            count: count[i],
        })
        .collect();

    let mut fit_points = Vec::new();
    for bin in &bins {
        if bin.r_mid < fit_range.0 || bin.r_mid > fit_range.1 {
            continue;
        }
        if bin.count == 0 {
            return Err(AnalysisError::EmptyBin { r_mid: bin.r_mid });
        }
        if bin.envelope > 0.0 {
            fit_points.push((bin.r_mid, bin.envelope));
        }
    }
    let fit = fit_power(&fit_points)?;
    Ok(DecayProfile {
        bins,
        fitted_slope: fit.exponent,
        prefactor: fit.prefactor,
        r_squared: fit.r_squared,
        fit_range,
    })
}

/// Default envelope fit window `[4, R/2]`, clear of the core and of the
/// boundary layer.
pub fn default_fit_range(radius: f64) -> (f64, f64) {
    (4.0, radius / 2.0)
}

/// Symmetrized Hausdorff distance between two sets of path points, measured
/// in the energy norm on `reference` after zero-extension (optionally adding
/// the SIF gap).
pub fn hausdorff(
    a: &[(Field, f64)],
    domain_a: &Domain,
    b: &[(Field, f64)],
    domain_b: &Domain,
    reference: &Domain,
    include_k: bool,
) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let embed = |points: &[(Field, f64)], from: &Domain| -> (Vec<Field>, Vec<Field>, Vec<f64>) {
        let mut fields = Vec::with_capacity(points.len());
        let mut grams = Vec::with_capacity(points.len());
        let mut norms = Vec::with_capacity(points.len());
        for (field, _) in points {
            let embedded = field.embedded(from, reference);
            let gram = reference.gram_apply(&embedded);
            norms.push(gram.dot(&embedded));
            fields.push(embedded);
            grams.push(gram);
        }
        (fields, grams, norms)
    };
    let (_, grams_a, norms_a) = embed(a, domain_a);
    let (fields_b, _, norms_b) = embed(b, domain_b);

    let distance = |i: usize, j: usize| -> f64 {
        let cross = grams_a[i].dot(&fields_b[j]);
        let d2 = (norms_a[i] + norms_b[j] - 2.0 * cross).max(0.0);
        let mut d = d2.sqrt();
        if include_k {
            d += (a[i].1 - b[j].1).abs();
        }
        d
    };

    let mut worst = 0.0f64;
    for i in 0..a.len() {
        let mut nearest = f64::INFINITY;
        for j in 0..b.len() {
            nearest = nearest.min(distance(i, j));
        }
        worst = worst.max(nearest);
    }
    for j in 0..b.len() {
        let mut nearest = f64::INFINITY;
        for i in 0..a.len() {
            nearest = nearest.min(distance(i, j));
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Extrapolated limit of `k(R) = k_inf + c R^{-p}`.
///
/// With a fixed order this is a two-parameter least-squares fit usable from
/// two points; `order = None` estimates `p` from consecutive triples first
/// and rejects the data when the estimates spread by more than 50%.
pub fn richardson(values: &[(f64, f64)], order: Option<f64>) -> Result<f64, AnalysisError> {
    match order {
        Some(p) => {
            if values.len() < 2 {
                return Err(AnalysisError::TooFewPoints {
                    needed: 2,
                    got: values.len(),
                });
            }
            richardson_fixed(values, p)
        }
        None => {
            if values.len() < 3 {
                return Err(AnalysisError::TooFewPoints {
                    needed: 3,
                    got: values.len(),
                });
            }
            let mut estimates = Vec::new();
            for w in values.windows(3) {
                if let Some(p) = triple_order(w[0], w[1], w[2]) {
                    estimates.push(p);
                }
            }
            if estimates.is_empty() {
                return Err(AnalysisError::InconsistentOrder(estimates));
            }
            let mut sorted = estimates.clone();
            sorted.sort_by(|x, y| x.total_cmp(y));
            let median = sorted[sorted.len() / 2];
            let spread = sorted.last().unwrap() - sorted.first().unwrap();
            if spread > 0.5 * median.abs() {
                return Err(AnalysisError::InconsistentOrder(estimates));
            }
            richardson_fixed(values, median)
        }
    }
}

fn richardson_fixed(values: &[(f64, f64)], p: f64) -> Result<f64, AnalysisError> {
    // Least squares for k(R) = k_inf + c R^{-p}.
    let n = values.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(r, k) in values {
        let x = r.powf(-p);
        sx += x;
        sy += k;
        sxx += x * x;
        sxy += x * k;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(AnalysisError::DegenerateFit);
    }
    let c = (n * sxy - sx * sy) / det;
    Ok((sy - c * sx) / n)
}

/// Solves `(k1-k2)/(k2-k3) = (R1^-p - R2^-p)/(R2^-p - R3^-p)` for `p`.
fn triple_order(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<f64> {
    let target = (a.1 - b.1) / (b.1 - c.1);
    if !target.is_finite() || target <= 0.0 {
        return None;
    }
    let ratio = |p: f64| {
        (a.0.powf(-p) - b.0.powf(-p)) / (b.0.powf(-p) - c.0.powf(-p))
    };
    let f = |p: f64| ratio(p) - target;
    let (mut lo, mut hi) = (0.05, 8.0);
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if !fm.is_finite() {
            return None;
        }
        if fm * flo <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The radii schedule `R = 2^(n/4)`.
pub fn radius_schedule(n_lo: u32, n_hi: u32) -> Vec<f64> {
    (n_lo..=n_hi).map(|n| 2f64.powf(n as f64 / 4.0)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldEntry {
    pub ordinal: usize,
    pub s: f64,
    pub k: f64,
    pub stable_to_unstable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldTable {
    pub radius: f64,
    pub folds: Vec<FoldEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyLimit {
    /// Fold ordinals (along the path) belonging to this family.
    pub ordinals: Vec<usize>,
    /// Richardson limit per ordinal, aligned with `ordinals`.
    pub limits: Vec<f64>,
    /// Largest disagreement between the per-ordinal limits.
    pub spread: f64,
}

/// Everything the convergence experiments measure, serializable as the
/// study's `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// Surviving study radii, ascending, reference excluded.
    pub radii: Vec<f64>,
    pub reference_radius: f64,
    pub fold_tables: Vec<FoldTable>,
    pub reference_folds: Vec<FoldEntry>,
    pub fold_count_consistent: bool,
    /// Radii whose traces contained no folds (below the snaking onset).
    pub foldless_radii: Vec<f64>,
    /// `(R, Hausdorff distance of stable-segment point sets to the
    /// reference path)`.
    pub hausdorff_to_reference: Vec<(f64, f64)>,
    /// Fitted order of the Hausdorff distances.
    pub path_order: Option<PowerFit>,
    /// Per-ordinal fitted order of `|k_fold(R) - k_limit|`.
    pub fold_k_orders: Vec<f64>,
    pub fold_k_order_median: Option<f64>,
    /// Richardson limits (p = 1) per fold ordinal.
    pub richardson_limits: Vec<f64>,
    /// Alternate-fold families: stable-to-unstable and unstable-to-stable.
    pub family_stable_to_unstable: FamilyLimit,
    pub family_unstable_to_stable: FamilyLimit,
    /// Radii whose trace failed, with the error name.
    pub failures: Vec<(f64, String)>,
}

pub struct StudyOutcome {
    pub report: ConvergenceReport,
    /// Surviving traces, ascending radius; the last one is the reference.
    pub traces: Vec<Trace>,
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    /// Ascending radii; the largest acts as the reference path.
    pub radii: Vec<f64>,
    pub base: ContinuationConfig,
    pub include_k_in_hausdorff: bool,
    pub jobs: usize,
}

/// Traces every radius (concurrently), matches folds across radii by their
/// ordinal along the path, measures Hausdorff distances to the reference,
/// fits convergence orders, and extrapolates the fold families.
pub fn convergence_study(study: &StudyConfig) -> Result<StudyOutcome, ContinuationError> {
    let mut radii = study.radii.clone();
    radii.sort_by(|a, b| a.total_cmp(b));
    radii.dedup();
    if radii.len() < 2 {
        return Err(ContinuationError::InvalidConfig(
            "a convergence study needs at least two radii".into(),
        ));
    }

    let run = |radius: f64| -> (f64, Result<Trace, ContinuationError>) {
        let config = ContinuationConfig {
            radius,
            ..study.base.clone()
        };
        (radius, crate::continuation::run_path(&config))
    };
    let results: Vec<(f64, Result<Trace, ContinuationError>)> = if study.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(study.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            radii.par_iter().map(|&r| run(r)).collect()
        })
    } else {
        radii.iter().map(|&r| run(r)).collect()
    };

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (radius, result) in results {
        match result {
            Ok(trace) => traces.push(trace),
            Err(err) => failures.push((radius, err.name().to_string())),
        }
    }
    if traces.len() < 2 {
        let (_, name) = failures
            .last()
            .cloned()
            .unwrap_or((0.0, "no surviving radii".into()));
        return Err(ContinuationError::InvalidConfig(format!(
            "study collapsed: {name}"
        )));
    }

    let reference = traces.last().unwrap();
    let reference_radius = reference.config.radius;
    let reference_domain = reference.domain().expect("reference domain");

    let fold_table = |trace: &Trace| -> FoldTable {
        FoldTable {
            radius: trace.config.radius,
            folds: trace
                .folds
                .iter()
                .enumerate()
                .map(|(ordinal, fold)| FoldEntry {
                    ordinal,
                    s: fold.s,
                    k: fold.k,
                    stable_to_unstable: fold.is_stable_to_unstable(),
                })
                .collect(),
        }
    };
    let fold_tables: Vec<FoldTable> = traces[..traces.len() - 1].iter().map(fold_table).collect();
    let reference_folds = fold_table(reference).folds;

    // Radii below the snaking onset trace smooth fold-free paths; they
    // stay in the study for the path-distance experiment but drop out of
    // the fold analyses.
    let foldless_radii: Vec<f64> = fold_tables
        .iter()
        .filter(|t| t.folds.is_empty())
        .map(|t| t.radius)
        .collect();
    let common_folds = fold_tables
        .iter()
        .filter(|t| !t.folds.is_empty())
        .map(|t| t.folds.len())
        .chain(std::iter::once(reference_folds.len()))
        .min()
        .unwrap_or(0);
    let fold_count_consistent = fold_tables
        .iter()
        .filter(|t| !t.folds.is_empty())
        .all(|t| t.folds.len() == reference_folds.len());

    // Hausdorff distance of stable-segment point sets against the
    // reference. All traces start from the same physical entry state and
    // stop after the same number of bond events, so the compared sets cover
    // matched path segments; at equal SIF different radii sit at different
    // snaking phases, which is why the sets are matched by extent rather
    // than clipped to a common SIF window.
    let clip = |trace: &Trace| -> Vec<(Field, f64)> {
        trace
            .stable_points()
            .map(|p| (p.u.clone(), p.k))
            .collect()
    };
    let reference_points = clip(reference);
    let mut hausdorff_to_reference = Vec::new();
    for trace in &traces[..traces.len() - 1] {
        let domain = trace.domain().expect("survivor domain");
        let points = clip(trace);
        let d = hausdorff(
            &points,
            &domain,
            &reference_points,
            &reference_domain,
            &reference_domain,
            study.include_k_in_hausdorff,
        );
        hausdorff_to_reference.push((trace.config.radius, d));
    }
    let path_order = fit_power(&hausdorff_to_reference).ok();

    // Richardson limits per fold ordinal (p = 1, superconvergence order),
    // taking every surviving radius including the reference.
    let mut richardson_limits = Vec::new();
    let mut fold_k_orders = Vec::new();
    for ordinal in 0..common_folds {
        let mut pairs: Vec<(f64, f64)> = fold_tables
            .iter()
            .filter(|t| t.folds.len() > ordinal)
            .map(|t| (t.radius, t.folds[ordinal].k))
            .collect();
        pairs.push((reference_radius, reference_folds[ordinal].k));
        let limit = match richardson(&pairs, Some(1.0)) {
            Ok(l) => l,
            Err(_) => continue,
        };
        richardson_limits.push(limit);
        // Order fit over the non-reference radii; the reference pins the
        // limit, keeping the fit and the extrapolation decoupled.
        let errs: Vec<(f64, f64)> = pairs[..pairs.len() - 1]
            .iter()
            .filter(|(_, k)| (k - limit).abs() > 0.0)
            .map(|&(r, k)| (r, (k - limit).abs()))
            .collect();
        if let Ok(fit) = fit_power(&errs) {
            fold_k_orders.push(fit.exponent);
        }
    }
    let fold_k_order_median = median(&fold_k_orders);

    let family = |want_s2u: bool| -> FamilyLimit {
        let mut ordinals = Vec::new();
        let mut limits = Vec::new();
        for ordinal in 0..common_folds.min(richardson_limits.len()) {
            if reference_folds[ordinal].stable_to_unstable == want_s2u {
                ordinals.push(ordinal);
                limits.push(richardson_limits[ordinal]);
            }
        }
        let spread = match (
            limits.iter().cloned().reduce(f64::min),
            limits.iter().cloned().reduce(f64::max),
        ) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        };
        FamilyLimit {
            ordinals,
            limits,
            spread,
        }
    };
    let family_stable_to_unstable = family(true);
    let family_unstable_to_stable = family(false);

    let report = ConvergenceReport {
        radii: traces[..traces.len() - 1]
            .iter()
            .map(|t| t.config.radius)
            .collect(),
        reference_radius,
        fold_tables,
        reference_folds,
        fold_count_consistent,
        foldless_radii,
        hausdorff_to_reference,
        path_order,
        fold_k_orders,
        fold_k_order_median,
        richardson_limits,
        family_stable_to_unstable,
        family_unstable_to_stable,
        failures,
    };
    Ok(StudyOutcome { report, traces })
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(sorted[sorted.len() / 2])
}

/// Residual of the recentred model at a shared equilibrium: equilibrate at
/// `(radius, k)`, rewrite the correction for the predictor centred one cell
/// ahead, and report the `l-inf` gradient of the recentred model there.
///
/// As the domain grows this residual vanishes (the infinite-lattice
/// configuration is an equilibrium of every recentring).
pub fn recentred_residual(
    model: &Arc<CrackModel>,
    k: f64,
    lambda_new: i32,
) -> Result<f64, crate::solvers::SolverError> {
    let mut solver = crate::solvers::Solver::new(Arc::clone(model));
    let report = solver.damped_newton(
        k,
        &model.domain().zero_field(),
        crate::solvers::NewtonOptions::default(),
    )?;
    let w = model.recenter_correction(&report.field, k, lambda_new);
    let recentred = Arc::new(model.with_lambda(lambda_new));
    Ok(recentred.residual(&w, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_power_exact_quadratic() {
        let points: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
        let fit = fit_power(&points).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!((fit.prefactor - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_power_noisy_inverse_three_halves() {
        let points: Vec<(f64, f64)> = (2..20)
            .map(|i| {
                let x = i as f64;
                let wiggle = 1.0 + 0.01 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
                (x, 3.0 * x.powf(-1.5) * wiggle)
            })
            .collect();
        let fit = fit_power(&points).unwrap();
        assert!((fit.exponent + 1.5).abs() < 0.05, "exponent {}", fit.exponent);
    }

    #[test]
    fn fit_power_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_power(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_power(&[(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)]),
            Err(AnalysisError::DegenerateFit)
        ));
        assert!(matches!(
            fit_power(&[(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)]),
            Err(AnalysisError::NonPositiveData)
        ));
    }

    #[test]
    fn richardson_recovers_exact_affine_sequences() {
        let values: Vec<(f64, f64)> = [32.0, 45.0, 64.0, 91.0]
            .iter()
            .map(|&r| (r, 0.46 + 0.1 / r))
            .collect();
        let limit = richardson(&values, Some(1.0)).unwrap();
        assert!((limit - 0.46).abs() < 1e-12);
    }

    #[test]
    fn richardson_with_higher_order_contamination() {
        let values: Vec<(f64, f64)> = [32.0, 45.0, 64.0]
            .iter()
            .map(|&r| (r, 0.46 + 0.1 / r + 0.01 / (r * r)))
            .collect();
        let limit = richardson(&values, Some(1.0)).unwrap();
        assert!((limit - 0.46).abs() < 2e-4, "limit {limit}");
    }

    #[test]
    fn richardson_auto_order() {
        let values: Vec<(f64, f64)> = [16.0f64, 32.0, 64.0, 128.0]
            .iter()
            .map(|&r| (r, 1.25 + 2.0 * r.powf(-1.5)))
            .collect();
        let limit = richardson(&values, None).unwrap();
        assert!((limit - 1.25).abs() < 1e-6, "limit {limit}");
        // A sequence with no consistent order is rejected.
        let junk = vec![(16.0, 1.0), (32.0, 0.5), (64.0, 0.9), (128.0, 0.2)];
        assert!(richardson(&junk, None).is_err());
    }

    #[test]
    fn richardson_needs_enough_points() {
        assert!(matches!(
            richardson(&[(32.0, 0.5)], Some(1.0)),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(matches!(
            richardson(&[(32.0, 0.5), (64.0, 0.4)], None),
            Err(AnalysisError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn radius_schedule_matches_closed_form() {
        let radii = radius_schedule(20, 32);
        assert_eq!(radii.len(), 13);
        assert!((radii[0] - 32.0).abs() < 1e-12);
        assert!((radii[12] - 256.0).abs() < 1e-12);
        assert!((radii[2] - 2f64.powf(5.5)).abs() < 1e-12);
    }
}
