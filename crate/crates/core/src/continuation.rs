//! Pseudo-arclength continuation of the bifurcation diagram in the stress
//! intensity factor, with fold detection and certified fold refinement.
//!
//! A path point carries an equilibrium `(u, k)`, the unit tangent in the
//! product metric `||.||_H1^2 + |.|^2`, and the latest smallest pencil
//! eigenvalue for stability classification. Folds are flagged by sign
//! changes of the tangent SIF component between consecutive points and
//! refined by re-stepping with controlled arclength until the component
//! vanishes; each refined fold is certified against the two quadratic
//! nondegeneracy conditions before it is reported.

use crate::lattice::{Domain, Field};
use crate::model::{CrackModel, PairPotential};
use crate::solvers::{NewtonOptions, Solver, SolverError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Classification threshold on the smallest pencil eigenvalue.
pub const MU_TOL: f64 = 1e-6;

/// Tangent-SIF magnitude below which a refined point counts as a fold.
pub const FOLD_TAU_TOL: f64 = 1e-8;

/// Certification floor for both nondegeneracy scalars.
pub const NONDEGENERACY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    NearFold,
}

impl Stability {
    pub fn classify(mu: f64) -> Stability {
        if mu > MU_TOL {
            Stability::Stable
        } else if mu < -MU_TOL {
            Stability::Unstable
        } else {
            Stability::NearFold
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::NearFold => "near-fold",
        }
    }
}

/// Unit tangent of the path in the product metric.
#[derive(Clone, Debug)]
pub struct Tangent {
    pub u: Field,
    pub k: f64,
}

/// One equilibrium along the traced path.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub step: usize,
    /// Accumulated arclength (product-metric chord sums).
    pub s: f64,
    pub k: f64,
    pub u: Field,
    pub tangent: Tangent,
    /// Smallest pencil eigenvalue, refreshed lazily.
    pub mu: f64,
    pub class: Stability,
}

/// A refined simple quadratic fold with its certification data.
#[derive(Clone, Debug)]
pub struct FoldRecord {
    pub s: f64,
    pub k: f64,
    pub u: Field,
    /// Kernel eigenvector, normalized in the energy inner product.
    pub gamma: Field,
    /// Mixed second variation paired with the kernel vector.
    pub b_dot_gamma: f64,
    /// Third variation contracted three times with the kernel vector.
    pub third: f64,
    pub mu_left: f64,
    pub mu_right: f64,
}

impl FoldRecord {
    /// Stable-to-unstable folds sit at local maxima of `k`.
    pub fn is_stable_to_unstable(&self) -> bool {
        self.mu_left > self.mu_right
    }
}

/// Starting correction for the initial equilibrium solve.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    #[default]
    Zero,
    /// Site-value CSV (`l1,l2,u`) produced by the field dump.
    File(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    pub radius: f64,
    pub k_start: f64,
    pub u_start: StartPolicy,
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    pub k_window: (f64, f64),
    /// Grow the step when the corrector finishes within this many iterations.
    pub target_corrector_iters: usize,
    /// Refresh the eigenpair every this many accepted steps (always near
    /// suspected folds).
    pub eigen_every: usize,
    /// Stop once this many fold brackets have been found.
    pub max_folds: Option<usize>,
    /// Stop once this many bond-breaking events have occurred (one event
    /// advances the crack by one cell, i.e. one snaking period).
    pub max_bond_events: Option<usize>,
    pub newton_tol: f64,
    pub potential: PairPotential,
    /// Predictor centre offset.
    pub lambda: i32,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            radius: 32.0,
            k_start: 0.2,
            u_start: StartPolicy::Zero,
            ds_init: 0.05,
            ds_min: 1e-6,
            ds_max: 0.1,
            max_steps: 2000,
            k_window: (0.15, 0.55),
            target_corrector_iters: 4,
            eigen_every: 5,
            max_folds: None,
            max_bond_events: None,
            newton_tol: 1e-8,
            potential: PairPotential::default(),
            lambda: 0,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds_init && self.ds_init <= self.ds_max) {
            return Err(ContinuationError::InvalidConfig(format!(
                "step sizes must satisfy 0 < ds_min <= ds_init <= ds_max, got {} / {} / {}",
                self.ds_min, self.ds_init, self.ds_max
            )));
        }
        if self.k_window.0 >= self.k_window.1 {
            return Err(ContinuationError::InvalidConfig(format!(
                "empty k window [{}, {}]",
                self.k_window.0, self.k_window.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("InitialSolveFailed: {0}")]
    InitialSolveFailed(#[source] SolverError),
    #[error("StepFailed: corrector diverged at step {step} with ds {ds:.3e}")]
    StepFailed { step: usize, ds: f64 },
    #[error("FoldRefinementStalled: |tau_k| = {tau_k:.3e} after {iterations} bisection steps")]
    FoldRefinementStalled { tau_k: f64, iterations: usize },
    #[error("NondegeneracyFailed: {0}")]
    NondegeneracyFailed(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl ContinuationError {
    pub fn name(&self) -> &'static str {
        match self {
            ContinuationError::InvalidConfig(_) => "InvalidConfig",
            ContinuationError::InitialSolveFailed(_) => "InitialSolveFailed",
            ContinuationError::StepFailed { .. } => "StepFailed",
            ContinuationError::FoldRefinementStalled { .. } => "FoldRefinementStalled",
            ContinuationError::NondegeneracyFailed(_) => "NondegeneracyFailed",
            ContinuationError::Solver(e) => e.name(),
        }
    }
}

/// A traced bifurcation path with its refined folds.
pub struct Trace {
    pub config: ContinuationConfig,
    pub points: Vec<PathPoint>,
    /// Pairs of consecutive point indices whose tangent SIF components have
    /// opposite signs.
    pub brackets: Vec<(usize, usize)>,
    pub folds: Vec<FoldRecord>,
}

impl Trace {
    pub fn domain(&self) -> Result<Arc<Domain>, crate::lattice::LatticeError> {
        Domain::build(self.config.radius).map(Arc::new)
    }

    /// Points on stable segments, the sets compared across radii.
    pub fn stable_points(&self) -> impl Iterator<Item = &PathPoint> {
        self.points.iter().filter(|p| p.class == Stability::Stable)
    }
}

/// Pseudo-arclength stepper bound to one model.
pub struct Tracer {
    model: Arc<CrackModel>,
    solver: Solver,
    newton_tol: f64,
    corrector_cap: usize,
}

struct CorrectorOutcome {
    u: Field,
    k: f64,
    iterations: usize,
}

impl Tracer {
    pub fn new(model: Arc<CrackModel>, newton_tol: f64) -> Tracer {
        Tracer {
            solver: Solver::new(Arc::clone(&model)),
            model,
            newton_tol,
            corrector_cap: 8,
        }
    }

    pub fn model(&self) -> &Arc<CrackModel> {
        &self.model
    }

    pub fn solver_mut(&mut self) -> &mut Solver {
        &mut self.solver
    }

    fn product_inner(&self, a: &Tangent, b: &Tangent) -> f64 {
        self.model.domain().h1_inner(&a.u, &b.u) + a.k * b.k
    }

    fn chord(&self, u0: &Field, k0: f64, u1: &Field, k1: f64) -> f64 {
        let mut diff = u1.clone();
        diff.axpy(-1.0, u0);
        (self.model.domain().h1_inner(&diff, &diff) + (k1 - k0).powi(2)).sqrt()
    }

    /// Unit null tangent of `[H | b]` at an equilibrium, oriented along
    /// `prev` in the product metric.
    pub fn tangent_at(
        &mut self,
        u: &Field,
        k: f64,
        prev: &Tangent,
    ) -> Result<Tangent, SolverError> {
        let hessian = self.model.hessian(u, k);
        let b = self.model.mixed_uk(u, k);
        let zero = self.model.domain().zero_field();
        let (tu, tk) = self
            .solver
            .bordered_solve(&hessian, &b, &prev.u, prev.k, &zero, 1.0)?;
        let mut tangent = Tangent { u: tu, k: tk };
        let norm = self.product_inner(&tangent, &tangent).sqrt();
        tangent.u.scale(1.0 / norm);
        tangent.k /= norm;
        if self.product_inner(&tangent, prev) < 0.0 {
            tangent.u.scale(-1.0);
            tangent.k = -tangent.k;
        }
        Ok(tangent)
    }

    /// One predictor-corrector step of length `ds` from `from`.
    ///
    /// The corrector is Newton on the extended system `{gradient = 0,
    /// (tau_u, u - u0)_H1 + tau_k (k - k0) = ds}` with the tangent frozen at
    /// `from`; the accepted point carries a refreshed tangent.
    pub fn arclength_step(
        &mut self,
        from: &PathPoint,
        ds: f64,
    ) -> Result<(PathPoint, usize), ContinuationError> {
        let outcome = self.correct(from, ds).ok_or(ContinuationError::StepFailed {
            step: from.step,
            ds,
        })?;
        let tangent = self
            .tangent_at(&outcome.u, outcome.k, &from.tangent)
            .map_err(|_| ContinuationError::StepFailed {
                step: from.step,
                ds,
            })?;
        let s = from.s + self.chord(&from.u, from.k, &outcome.u, outcome.k);
        Ok((
            PathPoint {
                step: from.step + 1,
                s,
                k: outcome.k,
                u: outcome.u,
                tangent,
                mu: from.mu,
                class: from.class,
            },
            outcome.iterations,
        ))
    }

    fn correct(&mut self, from: &PathPoint, ds: f64) -> Option<CorrectorOutcome> {
        let domain = Arc::clone(self.model.domain());
        let tau = &from.tangent;
        let mut u = from.u.clone();
        u.axpy(ds, &tau.u);
        let mut k = from.k + ds * tau.k;

        for iteration in 0..=self.corrector_cap {
            let gradient = self.model.gradient(&u, k);
            let residual = gradient.linf_norm();
            let mut diff = u.clone();
            diff.axpy(-1.0, &from.u);
            let constraint = domain.h1_inner(&tau.u, &diff) + tau.k * (k - from.k) - ds;
            if residual <= self.newton_tol && constraint.abs() <= 1e-10 * ds.abs().max(1.0) {
                return Some(CorrectorOutcome {
                    u,
                    k,
                    iterations: iteration,
                });
            }
            if iteration == self.corrector_cap {
                break;
            }
            let hessian = self.model.hessian(&u, k);
            let b = self.model.mixed_uk(&u, k);
            let mut rhs = gradient;
            rhs.scale(-1.0);
            let (du, dk) = self
                .solver
                .bordered_solve(&hessian, &b, &tau.u, tau.k, &rhs, -constraint)
                .ok()?;
            u.axpy(1.0, &du);
            k += dk;
            if !k.is_finite() {
                return None;
            }
        }
        None
    }

    /// Eigenpair refresh with warm start.
    fn refresh_eigen(
        &mut self,
        u: &Field,
        k: f64,
        guess: f64,
        start: Option<&Field>,
    ) -> Result<(f64, Field), SolverError> {
        let hessian = self.model.hessian(u, k);
        let pair = self.solver.smallest_eigenpair(&hessian, guess, start)?;
        Ok((pair.mu, pair.gamma))
    }

    /// Bisects a tangent-sign bracket down to `|tau_k| <= FOLD_TAU_TOL` and
    /// certifies the quadratic nondegeneracy conditions.
    pub fn refine_fold(
        &mut self,
        left: &PathPoint,
        right: &PathPoint,
        gamma_hint: Option<&Field>,
    ) -> Result<FoldRecord, ContinuationError> {
        let f_left = left.tangent.k;
        let f_right = right.tangent.k;
        assert!(
            f_left * f_right < 0.0,
            "refine_fold requires a tangent sign change"
        );
        let span = self.chord(&left.u, left.k, &right.u, right.k);

        // Regula falsi (Illinois) on tau_k as a function of the step length
        // from the left bracket point.
        let mut lo = 0.0f64;
        let mut hi = span;
        let mut f_lo = f_left;
        let mut f_hi = f_right;
        let mut best: Option<PathPoint> = None;
        let mut best_abs = f64::INFINITY;
        let mut side = 0i8;

        for iteration in 0..80 {
            let mut t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            let margin = 0.01 * (hi - lo);
            t = t.clamp(lo + margin, hi - margin);
            let (point, _) = self.arclength_step(left, t)?;
            let f_mid = point.tangent.k;
            if f_mid.abs() < best_abs {
                best_abs = f_mid.abs();
                best = Some(point);
            }
            if best_abs <= FOLD_TAU_TOL {
                break;
            }
            if f_mid * f_lo > 0.0 {
                lo = t;
                f_lo = f_mid;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = t;
                f_hi = f_mid;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
            if iteration == 79 || !(hi - lo).is_finite() {
                return Err(ContinuationError::FoldRefinementStalled {
                    tau_k: best_abs,
                    iterations: iteration + 1,
                });
            }
        }
        let fold_point = best.expect("at least one refinement step");
        if fold_point.tangent.k.abs() > FOLD_TAU_TOL {
            return Err(ContinuationError::FoldRefinementStalled {
                tau_k: fold_point.tangent.k.abs(),
                iterations: 80,
            });
        }

        // At the fold the tangent is the kernel direction; use it to warm
        // start the eigensolve.
        let mut start = fold_point.tangent.u.clone();
        let norm = self.model.domain().h1_norm(&start);
        start.scale(1.0 / norm);
        let (_, gamma) = self.refresh_eigen(&fold_point.u, fold_point.k, 0.0, Some(&start))?;

        let b = self.model.mixed_uk(&fold_point.u, fold_point.k);
        let b_dot_gamma = b.dot(&gamma);
        let third = self
            .model
            .third_contract(&fold_point.u, fold_point.k, &gamma);

        let (mu_left, _) = self.refresh_eigen(&left.u, left.k, 0.0, Some(gamma_hint.unwrap_or(&gamma)))?;
        let (mu_right, _) = self.refresh_eigen(&right.u, right.k, 0.0, Some(gamma_hint.unwrap_or(&gamma)))?;

        if b_dot_gamma.abs() <= NONDEGENERACY_TOL {
            return Err(ContinuationError::NondegeneracyFailed(format!(
                "mixed-variation pairing {b_dot_gamma:.3e} below {NONDEGENERACY_TOL:.0e}"
            )));
        }
        if third.abs() <= NONDEGENERACY_TOL {
            return Err(ContinuationError::NondegeneracyFailed(format!(
                "cubic contraction {third:.3e} below {NONDEGENERACY_TOL:.0e}"
            )));
        }
        if mu_left.signum() == mu_right.signum() {
            return Err(ContinuationError::NondegeneracyFailed(format!(
                "no stability change across the fold (mu {mu_left:.3e} -> {mu_right:.3e})"
            )));
        }

        Ok(FoldRecord {
            s: fold_point.s,
            k: fold_point.k,
            u: fold_point.u,
            gamma,
            b_dot_gamma,
            third,
            mu_left,
            mu_right,
        })
    }
}

/// Traces the bifurcation path described by `config`.
///
/// The path starts from a Newton solve at `k_start`, runs until the SIF
/// leaves the window, the step budget is exhausted, or enough folds have
/// been bracketed; every bracket is then refined and certified.
pub fn run_path(config: &ContinuationConfig) -> Result<Trace, ContinuationError> {
    let domain = Arc::new(
        Domain::build(config.radius)
            .map_err(|e| ContinuationError::InvalidConfig(e.to_string()))?,
    );
    let model = Arc::new(CrackModel::new(domain, config.potential, config.lambda));
    run_path_on(model, config)
}

/// As [`run_path`], reusing an existing model (and its cached predictor
/// table and sparsity plan).
pub fn run_path_on(
    model: Arc<CrackModel>,
    config: &ContinuationConfig,
) -> Result<Trace, ContinuationError> {
    config.validate()?;
    let mut tracer = Tracer::new(Arc::clone(&model), config.newton_tol);

    let u0 = match &config.u_start {
        StartPolicy::Zero => model.domain().zero_field(),
        StartPolicy::File(path) => crate::report::read_field_csv(path, model.domain())
            .map_err(|e| ContinuationError::InvalidConfig(format!("u_start file: {e}")))?,
    };
    let opts = NewtonOptions {
        tolerance: config.newton_tol,
        ..NewtonOptions::default()
    };
    // Plain Newton first; its basin from a bare predictor state can be
    // tiny (bonds astride the potential inflection), so fall back to the
    // damped scheme before giving up on the path.
    let newton = match tracer.solver.newton(config.k_start, &u0, opts) {
        Ok(report) => report,
        Err(_) => tracer
            .solver
            .damped_newton(config.k_start, &u0, opts)
            .map_err(ContinuationError::InitialSolveFailed)?,
    };

    let (mu0, mut gamma) = tracer.refresh_eigen(&newton.field, config.k_start, 0.0, None)?;

    // Initial tangent from a pure-SIF probe border; orientation is then
    // towards increasing k.
    let probe = Tangent {
        u: model.domain().zero_field(),
        k: 1.0,
    };
    let tangent0 = tracer
        .tangent_at(&newton.field, config.k_start, &probe)
        .map_err(ContinuationError::Solver)?;

    let mut points = vec![PathPoint {
        step: 0,
        s: 0.0,
        k: config.k_start,
        u: newton.field,
        tangent: tangent0,
        mu: mu0,
        class: Stability::classify(mu0),
    }];
    let mut brackets = Vec::new();
    let mut ds = config.ds_init;
    let mut mu = mu0;
    let open_start = model.open_cut_bonds(&points[0].u, points[0].k);
    let mut open_bonds = open_start;
    let mut events = 0usize;
    // Fold pairs delimit "dip" phases (odd bracket count). Exactly one bond
    // event belongs inside each dip; a step that would violate that has
    // jumped over path structure and is re-taken shorter.
    let mut dip_ticked = false;
    // Step size to restore once an event-resolution spiral completes.
    let mut ds_resume: Option<f64> = None;

    while points.len() <= config.max_steps {
        let prev = points.last().unwrap();
        if prev.step > 0 && (prev.k < config.k_window.0 || prev.k > config.k_window.1) {
            break;
        }
        if let Some(max_folds) = config.max_folds {
            if brackets.len() >= max_folds {
                break;
            }
        }
        if let Some(max_events) = config.max_bond_events {
            if events >= max_events {
                break;
            }
        }

        // Tangent-SIF throttle: when |tau_k| is shrinking, do not step far
        // beyond its projected zero, so no fold can be strode over. The
        // dips of small domains are extremely shallow in k and this is the
        // mechanism that resolves them.
        let mut ds_try = ds;
        if points.len() >= 2 {
            let before = &points[points.len() - 2];
            let tau_now = prev.tangent.k.abs();
            let rate = (before.tangent.k.abs() - tau_now) / (prev.s - before.s);
            if rate > 0.0 {
                let cap = 2.0 * tau_now / rate;
                ds_try = ds_try.min(cap.max(4.0 * config.ds_min));
            }
        }

        match tracer.arclength_step(prev, ds_try) {
            Ok((mut point, iterations)) => {
                let flipped = point.tangent.k * prev.tangent.k < 0.0;
                let open_now = model.open_cut_bonds(&point.u, point.k);
                if (point.step % config.eigen_every == 0) || flipped || open_now != open_bonds {
                    match tracer.refresh_eigen(&point.u, point.k, mu, Some(&gamma)) {
                        Ok((new_mu, new_gamma)) => {
                            mu = new_mu;
                            gamma = new_gamma;
                        }
                        Err(_) => { /* keep the carried eigenpair */ }
                    }
                }
                point.mu = mu;
                point.class = Stability::classify(mu);
                let count_changed = open_now != open_bonds;
                let in_dip = brackets.len() % 2 == 1;
                // A bond event may only appear once per dip and never on the
                // same step as a tangent reversal; anything else means the
                // step may have silently jumped over folds.
                if count_changed
                    && (flipped || !in_dip || dip_ticked)
                    && ds_try > 2.0 * config.ds_min
                {
                    ds_resume.get_or_insert(ds);
                    ds = (0.25 * ds_try).max(config.ds_min);
                    continue;
                }
                if flipped {
                    brackets.push((prev.step, point.step));
                    dip_ticked = false;
                }
                if count_changed {
                    dip_ticked = true;
                    events += 1;
                    open_bonds = open_now;
                    if let Some(restore) = ds_resume.take() {
                        ds = restore;
                    }
                }
                points.push(point);
                if iterations <= config.target_corrector_iters {
                    ds = (ds * 1.3).min(config.ds_max);
                }
            }
            Err(ContinuationError::StepFailed { step, .. }) => {
                ds *= 0.5;
                if ds < config.ds_min {
                    return Err(ContinuationError::StepFailed { step, ds });
                }
            }
            Err(other) => return Err(other),
        }
    }

    let mut folds = Vec::new();
    for &(left, right) in &brackets {
        let record = tracer.refine_fold(&points[left], &points[right], None)?;
        folds.push(record);
    }

    Ok(Trace {
        config: config.clone(),
        points,
        brackets,
        folds,
    })
}
