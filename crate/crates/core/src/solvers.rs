//! Newton equilibration at fixed SIF, bordered linear solves, and the
//! smallest generalized eigenpair of the Hessian pencil.
//!
//! All factorizations are sparse direct (LU with partial pivoting); the
//! Hessian is indefinite on unstable segments, and the bordered systems stay
//! nonsingular through folds where the plain Hessian does not. Symbolic
//! factorizations are computed once per domain and reused, since every
//! operator along a path shares the same sparsity pattern.

use crate::lattice::Field;
use crate::model::CrackModel;
use crate::sparse::{BorderedMatrix, CscMatrix, OperatorPlan};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::MatMut;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    /// Hessian factorization or solve broke down; the state is at or near a
    /// fold and path-following must use the bordered system instead.
    #[error("SingularHessian: Hessian solve broke down (at or near a fold)")]
    SingularHessian,
    /// Newton hit the iteration cap before reaching the residual tolerance.
    #[error("NoConvergence: Newton stalled after {iterations} iterations at residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("SingularBorderedSystem: bordered solve broke down")]
    SingularBorderedSystem,
    #[error("NoEigenConvergence: eigen residual {residual:.3e} after {iterations} iterations")]
    NoEigenConvergence { iterations: usize, residual: f64 },
}

impl SolverError {
    /// The bare error name, used verbatim in machine-readable reports.
    pub fn name(&self) -> &'static str {
        match self {
            SolverError::SingularHessian => "SingularHessian",
            SolverError::NoConvergence { .. } => "NoConvergence",
            SolverError::SingularBorderedSystem => "SingularBorderedSystem",
            SolverError::NoEigenConvergence { .. } => "NoEigenConvergence",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// `l-inf` residual at which the iteration terminates.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tolerance: 1e-8,
            max_iter: 25,
        }
    }
}

/// Outcome of a Newton equilibration.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    /// `l-inf` gradient norms, one entry per evaluation including the last.
    pub residual_history: Vec<f64>,
    pub field: Field,
}

/// Smallest generalized eigenpair `H gamma = mu G gamma`, with `gamma`
/// normalized in the energy inner product.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub mu: f64,
    pub gamma: Field,
}

const EIGEN_MAX_ITER: usize = 200;
const EIGEN_FIXED_SHIFT_ITERS: usize = 12;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factorization workspaces for one model. Not shareable across threads;
/// clone one solver per worker.
pub struct Solver {
    model: Arc<CrackModel>,
    sym_plain: SymbolicLu<usize>,
    sym_bordered: SymbolicLu<usize>,
    hessian_buf: CscMatrix,
    pencil_buf: CscMatrix,
    bordered_buf: BorderedMatrix,
}

impl Solver {
    pub fn new(model: Arc<CrackModel>) -> Solver {
        let plan: &Arc<OperatorPlan> = model.plan();
        let hessian_buf = plan.empty_matrix();
        let pencil_buf = plan.empty_matrix();
        let bordered_buf = BorderedMatrix::new(plan);
        let sym_plain =
            SymbolicLu::try_new(hessian_buf.as_faer().symbolic()).expect("symbolic LU");
        let sym_bordered =
            SymbolicLu::try_new(bordered_buf.as_faer().symbolic()).expect("symbolic LU");
        Solver {
            model,
            sym_plain,
            sym_bordered,
            hessian_buf,
            pencil_buf,
            bordered_buf,
        }
    }

    pub fn model(&self) -> &Arc<CrackModel> {
        &self.model
    }

    fn factor_plain(&self, matrix: &CscMatrix) -> Result<Lu<usize, f64>, SolverError> {
        Lu::try_new_with_symbolic(self.sym_plain.clone(), matrix.as_faer())
            .map_err(|_| SolverError::SingularHessian)
    }

    /// Solves `matrix * x = rhs` with a residual check that surfaces
    /// numerically singular factorizations (partial pivoting does not fail
    /// on them by itself).
    pub fn solve_linear(&self, matrix: &CscMatrix, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let lu = self.factor_plain(matrix)?;
        let mut x = rhs.to_vec();
        let n = x.len();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::SingularHessian);
        }
        let mut check = vec![0.0; n];
        matrix.matvec(&x, &mut check);
        let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = check
            .iter()
            .zip(rhs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // Partial pivoting happily "solves" numerically singular systems;
        // a sloppy but usable step passes, garbage does not. The size gate
        // catches condition-limited solutions whose residual still looks
        // small.
        let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err > 1e-3 * rhs_norm.max(1e-300) || x_norm > 1e10 * rhs_norm.max(1.0) {
            return Err(SolverError::SingularHessian);
        }
        Ok(x)
    }

    /// Plain undamped Newton at fixed `k`, terminating at an `l-inf`
    /// gradient residual of `tolerance`.
    pub fn newton(
        &mut self,
        k: f64,
        u0: &Field,
        opts: NewtonOptions,
    ) -> Result<NewtonReport, SolverError> {
        let model = Arc::clone(&self.model);
        let mut u = u0.clone();
        let mut history = Vec::new();
        for iteration in 0..=opts.max_iter {
            let gradient = model.gradient(&u, k);
            let residual = gradient.linf_norm();
            history.push(residual);
            if residual <= opts.tolerance {
                return Ok(NewtonReport {
                    converged: true,
                    iterations: iteration,
                    residual_history: history,
                    field: u,
                });
            }
            if iteration == opts.max_iter {
                break;
            }
            model.hessian_into(&u, k, &mut self.hessian_buf);
            let mut rhs = gradient.into_values();
            for v in &mut rhs {
                *v = -*v;
            }
            let step = self.solve_linear(&self.hessian_buf, &rhs)?;
            for (ui, si) in u.values_mut().iter_mut().zip(&step) {
                *ui += si;
            }
        }
        Err(SolverError::NoConvergence {
            iterations: opts.max_iter,
            residual: *history.last().unwrap(),
        })
    }

    /// Globalized equilibration for path initialization: Levenberg-damped
    /// Newton steps `(H + tau G) delta = -g` with `tau` adapted so the
    /// gradient norm decreases. Slower than the plain scheme but with a far
    /// larger basin; path tracing proper never uses it.
    pub fn damped_newton(
        &mut self,
        k: f64,
        u0: &Field,
        opts: NewtonOptions,
    ) -> Result<NewtonReport, SolverError> {
        let model = Arc::clone(&self.model);
        let gram = model.gram().clone();
        let mut u = u0.clone();
        let mut tau = 0.0f64;
        let mut history = Vec::new();
        let max_iter = opts.max_iter.max(120);
        for iteration in 0..=max_iter {
            let gradient = model.gradient(&u, k);
            let residual = gradient.linf_norm();
            history.push(residual);
            if residual <= opts.tolerance {
                return Ok(NewtonReport {
                    converged: true,
                    iterations: iteration,
                    residual_history: history,
                    field: u,
                });
            }
            if iteration == max_iter {
                break;
            }
            let res_l2 = gradient.dot(&gradient).sqrt();
            let energy = model.energy(&u, k);
            model.hessian_into(&u, k, &mut self.hessian_buf);
            let mut rhs = gradient.into_values();
            for v in &mut rhs {
                *v = -*v;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let trial_matrix = if tau == 0.0 {
                    self.hessian_buf.clone()
                } else {
                    let mut m = self.hessian_buf.clone();
                    for (v, g) in m.values_mut().iter_mut().zip(gram.values()) {
                        *v += tau * g;
                    }
                    m
                };
                let step = match self.solve_linear(&trial_matrix, &rhs) {
                    Ok(s) => s,
                    Err(_) => {
                        tau = (tau * 4.0).max(1e-4);
                        continue;
                    }
                };
                // Keep iterates physical: a long step tears atoms off into
                // the flat tail of the potential, where spurious equilibria
                // live.
                let step_inf = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if step_inf > 0.25 {
                    tau = (tau * 4.0).max(1e-4);
                    continue;
                }
                let mut trial = u.clone();
                for (ti, si) in trial.values_mut().iter_mut().zip(&step) {
                    *ti += si;
                }
                let trial_grad = model.gradient(&trial, k);
                let trial_l2 = trial_grad.dot(&trial_grad).sqrt();
                // Either the residual or the energy has to improve; large
                // tau makes the step a preconditioned gradient descent, so
                // the energy test eventually accepts.
                if trial_l2 < res_l2 * (1.0 - 1e-6)
                    || trial_l2 <= opts.tolerance
                    || model.energy(&trial, k) < energy - 1e-14 * energy.abs().max(1.0)
                {
                    u = trial;
                    tau *= 0.25;
                    if tau < 1e-8 {
                        tau = 0.0;
                    }
                    accepted = true;
                    break;
                }
                tau = (tau * 4.0).max(1e-4);
                if tau > 1e8 {
                    break;
                }
            }
            if !accepted {
                return Err(SolverError::NoConvergence {
                    iterations: iteration,
                    residual,
                });
            }
        }
        Err(SolverError::NoConvergence {
            iterations: max_iter,
            residual: *history.last().unwrap(),
        })
    }

    /// Solves the bordered block system
    /// `[A b; (c,.)_H1 d] (x, t) = (rhs_top, rhs_bot)`.
    /// The border row is the energy inner product against `c`, i.e. the
    /// plain dot pairing against `G c`.
    ///
    /// The system is solved by block elimination on a factorization of `A`
    /// with iterative refinement against the bordered residual, which stays
    /// accurate up to very large `||A^-1||` (the bordered matrix itself is
    /// well-conditioned through folds). If refinement cannot reach the
    /// residual gate, the assembled `(N+1)` matrix is factorized outright
    /// as a fallback; the dense border makes that an order of magnitude
    /// slower, so it is reserved for the nearly singular cases.
    pub fn bordered_solve(
        &mut self,
        matrix: &CscMatrix,
        b: &Field,
        c: &Field,
        d: f64,
        rhs_top: &Field,
        rhs_bot: f64,
    ) -> Result<(Field, f64), SolverError> {
        let row = self.model.domain().gram_apply(c);
        let n = matrix.n();
        let rhs_norm = rhs_top
            .values()
            .iter()
            .fold(rhs_bot.abs(), |m, v| m.max(v.abs()))
            .max(1e-300);
        let gate = 1e-9 * rhs_norm.max(1.0);

        if let Ok(lu) = Lu::try_new_with_symbolic(self.sym_plain.clone(), matrix.as_faer()) {
            let solve = |rhs: &[f64]| -> Vec<f64> {
                let mut out = rhs.to_vec();
                lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut out, n, 1));
                out
            };
            let v = solve(b.values());
            let delta = d - dot(row.values(), &v);
            if delta != 0.0 && delta.is_finite() && v.iter().all(|x| x.is_finite()) {
                let mut x = solve(rhs_top.values());
                let mut t = (rhs_bot - dot(row.values(), &x)) / delta;
                for xi in x.iter_mut().zip(&v) {
                    *xi.0 -= t * xi.1;
                }
                let mut scratch = vec![0.0; n];
                for _ in 0..3 {
                    let err = self.bordered_residual(
                        matrix, b, &row, d, rhs_top, rhs_bot, &x, t, &mut scratch,
                    );
                    if !err.is_finite() {
                        break;
                    }
                    if err <= gate {
                        return Ok((Field::from_values(x), t));
                    }
                    // scratch holds the top residual after the call.
                    let dx0 = solve(&scratch);
                    let r2 = rhs_bot - dot(row.values(), &x) - d * t;
                    let dt = (r2 - dot(row.values(), &dx0)) / delta;
                    for ((xi, di), vi) in x.iter_mut().zip(&dx0).zip(&v) {
                        *xi += di - dt * vi;
                    }
                    t += dt;
                }
            }
        }
        self.bordered_solve_assembled(matrix, b, &row, d, rhs_top, rhs_bot, gate)
    }

    fn bordered_residual(
        &self,
        matrix: &CscMatrix,
        b: &Field,
        row: &Field,
        d: f64,
        rhs_top: &Field,
        rhs_bot: f64,
        x: &[f64],
        t: f64,
        top_residual: &mut [f64],
    ) -> f64 {
        matrix.matvec(x, top_residual);
        let mut err = 0.0f64;
        for i in 0..x.len() {
            top_residual[i] = rhs_top.values()[i] - top_residual[i] - b.values()[i] * t;
            err = err.max(top_residual[i].abs());
        }
        let bottom = rhs_bot - dot(row.values(), x) - d * t;
        err.max(bottom.abs())
    }

    fn bordered_solve_assembled(
        &mut self,
        matrix: &CscMatrix,
        b: &Field,
        row: &Field,
        d: f64,
        rhs_top: &Field,
        rhs_bot: f64,
        gate: f64,
    ) -> Result<(Field, f64), SolverError> {
        self.bordered_buf.fill(matrix, b.values(), row.values(), d);
        let lu = Lu::try_new_with_symbolic(self.sym_bordered.clone(), self.bordered_buf.as_faer())
            .map_err(|_| SolverError::SingularBorderedSystem)?;
        let n = matrix.n();
        let mut x = Vec::with_capacity(n + 1);
        x.extend_from_slice(rhs_top.values());
        x.push(rhs_bot);
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n + 1, 1));
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::SingularBorderedSystem);
        }
        let mut check = vec![0.0; n + 1];
        self.bordered_buf.matvec(&x, &mut check);
        let mut err = (check[n] - rhs_bot).abs();
        for i in 0..n {
            err = err.max((check[i] - rhs_top.values()[i]).abs());
        }
        // One refinement round before judging.
        if err > gate {
            let mut rhs2 = Vec::with_capacity(n + 1);
            for i in 0..n {
                rhs2.push(rhs_top.values()[i] - check[i]);
            }
            rhs2.push(rhs_bot - check[n]);
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut rhs2, n + 1, 1));
            for (xi, di) in x.iter_mut().zip(&rhs2) {
                *xi += di;
            }
            self.bordered_buf.matvec(&x, &mut check);
            err = (check[n] - rhs_bot).abs();
            for i in 0..n {
                err = err.max((check[i] - rhs_top.values()[i]).abs());
            }
        }
        if !err.is_finite() || err > 1e-6 * rhs_top.values().iter().fold(rhs_bot.abs(), |m, v| m.max(v.abs())).max(1e-300) {
            return Err(SolverError::SingularBorderedSystem);
        }
        let t = x.pop().unwrap();
        Ok((Field::from_values(x), t))
    }

    /// Algebraically smallest eigenpair of the pencil `(H, G)` by
    /// shift-invert iteration.
    ///
    /// Starts from `mu_guess - 0.1`; when convergence is slow the shift is
    /// retargeted at the current Rayleigh quotient. The start vector is the
    /// previous eigenvector when supplied, else the normalized indicator of
    /// the site nearest the tip.
    pub fn smallest_eigenpair(
        &mut self,
        hessian: &CscMatrix,
        mu_guess: f64,
        start: Option<&Field>,
    ) -> Result<EigenPair, SolverError> {
        let model = Arc::clone(&self.model);
        let n = hessian.n();

        let mut x = match start {
            Some(f) => f.clone(),
            None => self.tip_indicator(),
        };
        let gx0 = model.domain().gram_apply(&x);
        let norm0 = x.dot(&gx0).sqrt();
        assert!(norm0 > 0.0, "start vector must be nonzero");
        x.scale(1.0 / norm0);

        let mut sigma = mu_guess - 0.1;
        let mut lu = self.factor_pencil(hessian, &mut sigma)?;
        let mut mu;
        let mut residual = f64::INFINITY;
        let mut gx = model.domain().gram_apply(&x);
        let mut hx = vec![0.0; n];

        for iteration in 0..EIGEN_MAX_ITER {
            // y = (H - sigma G)^{-1} G x, renormalized in the G-norm.
            let mut y = gx.values().to_vec();
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut y, n, 1));
            if !y.iter().all(|v| v.is_finite()) {
                sigma += 1e-8 * sigma.abs().max(1.0);
                lu = self.factor_pencil(hessian, &mut sigma)?;
                continue;
            }
            let mut y = Field::from_values(y);
            let gy = model.domain().gram_apply(&y);
            let norm = y.dot(&gy).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(SolverError::NoEigenConvergence {
                    iterations: iteration,
                    residual,
                });
            }
            let orient = if y.dot(&gx) < 0.0 { -1.0 } else { 1.0 };
            y.scale(orient / norm);

            hessian.matvec(y.values(), &mut hx);
            gx = model.domain().gram_apply(&y);
            mu = y.values().iter().zip(&hx).map(|(a, b)| a * b).sum();
            let mut resid_sq = 0.0f64;
            let mut hnorm_sq = 0.0f64;
            for i in 0..n {
                let r = hx[i] - mu * gx.values()[i];
                resid_sq += r * r;
                hnorm_sq += hx[i] * hx[i];
            }
            residual = resid_sq.sqrt();
            x = y;
            if residual <= 1e-8 * hnorm_sq.sqrt().max(1.0) {
                return Ok(EigenPair { mu, gamma: x });
            }
            // Slow convergence: retarget the shift at the Rayleigh quotient.
            if (iteration + 1) % EIGEN_FIXED_SHIFT_ITERS == 0 {
                sigma = mu;
                lu = self.factor_pencil(hessian, &mut sigma)?;
            }
        }
        Err(SolverError::NoEigenConvergence {
            iterations: EIGEN_MAX_ITER,
            residual,
        })
    }

    fn factor_pencil(
        &mut self,
        hessian: &CscMatrix,
        sigma: &mut f64,
    ) -> Result<Lu<usize, f64>, SolverError> {
        let gram = self.model.gram();
        // A shift landing exactly on an eigenvalue makes the pencil matrix
        // singular; nudge and refactor.
        for _ in 0..3 {
            let s = *sigma;
            for ((out, h), g) in self
                .pencil_buf
                .values_mut()
                .iter_mut()
                .zip(hessian.values())
                .zip(gram.values())
            {
                *out = h - s * g;
            }
            match Lu::try_new_with_symbolic(self.sym_plain.clone(), self.pencil_buf.as_faer()) {
                Ok(lu) => return Ok(lu),
                Err(_) => *sigma += 1e-10 * sigma.abs().max(1.0),
            }
        }
        Err(SolverError::NoEigenConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })
    }

    /// G-normalized indicator of the free site nearest the predictor centre.
    fn tip_indicator(&self) -> Field {
        let domain = self.model.domain();
        let tip = [self.model.lambda() as f64, 0.0];
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, site) in domain.free_sites().iter().enumerate() {
            let [x1, x2] = site.pos();
            let d = (x1 - tip[0]).powi(2) + (x2 - tip[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let mut x = domain.zero_field();
        x.values_mut()[best] = 1.0;
        let gx = domain.gram_apply(&x);
        let norm = x.dot(&gx).sqrt();
        x.scale(1.0 / norm);
        x
    }
}
