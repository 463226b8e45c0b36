//! The anti-plane crack model: pair potential, far-field predictor, and the
//! energy-difference functional with its first three variations.
//!
//! The total displacement is `predictor + u` where the predictor is the
//! continuum crack field `k sqrt(r) sin(theta/2)` and `u` is a finite-energy
//! core correction clamped to zero outside the domain. Energies always sum
//! the *homogeneous* finite differences, crack bonds included: bond breaking
//! is encoded in the decay of the potential, not in the bond graph.

use crate::lattice::{Domain, Field, SiteIndex};
use crate::sparse::{CscMatrix, OperatorPlan};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Even pair potential `phi(r) = A (1 - exp(-a r^2))`.
///
/// With the default parameters `A = 1/6`, `a = 3` the normalisation
/// `phi(0) = phi'(0) = phi'''(0) = 0`, `phi''(0) = 1` holds, and `phi'`
/// decays exponentially, which plays the role of bond breaking at large
/// strain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    pub amplitude: f64,
    pub decay: f64,
}

impl Default for PairPotential {
    fn default() -> Self {
        PairPotential {
            amplitude: 1.0 / 6.0,
            decay: 3.0,
        }
    }
}

impl PairPotential {
    pub fn new(amplitude: f64, decay: f64) -> Self {
        PairPotential { amplitude, decay }
    }

    /// `phi` or one of its first three derivatives.
    pub fn phi(&self, r: f64, order: u8) -> f64 {
        match order {
            0 => self.phi0(r),
            1 => self.phi1(r),
            2 => self.phi2(r),
            3 => self.phi3(r),
            _ => panic!("derivative order {order} not available"),
        }
    }

    #[inline]
    pub fn phi0(&self, r: f64) -> f64 {
        self.amplitude * (1.0 - (-self.decay * r * r).exp())
    }

    #[inline]
    pub fn phi1(&self, r: f64) -> f64 {
        let a = self.decay;
        2.0 * self.amplitude * a * r * (-a * r * r).exp()
    }

    #[inline]
    pub fn phi2(&self, r: f64) -> f64 {
        let a = self.decay;
        2.0 * self.amplitude * a * (1.0 - 2.0 * a * r * r) * (-a * r * r).exp()
    }

    #[inline]
    pub fn phi3(&self, r: f64) -> f64 {
        let a = self.decay;
        4.0 * self.amplitude * a * a * r * (2.0 * a * r * r - 3.0) * (-a * r * r).exp()
    }
}

/// Continuum crack field `u(x) = k sqrt(r) sin(theta/2)` centred at
/// `(lambda, 0)`, with the branch cut along `{x1 <= lambda, x2 = 0}`.
///
/// The predictor is exactly linear in the stress intensity factor `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub k: f64,
    pub lambda: i32,
}

impl Predictor {
    pub fn new(k: f64, lambda: i32) -> Self {
        Predictor { k, lambda }
    }

    /// The unit-SIF predictor at the same centre.
    pub fn unit(self) -> Self {
        Predictor {
            k: 1.0,
            ..self
        }
    }

    /// Value at an arbitrary point off the crack line.
    pub fn eval_pos(&self, x1: f64, x2: f64) -> f64 {
        let x1 = x1 - self.lambda as f64;
        let r = x1.hypot(x2);
        // theta in (-pi, pi); lattice sites never land on the cut.
        let theta = x2.atan2(x1);
        self.k * r.sqrt() * (0.5 * theta).sin()
    }

    pub fn eval(&self, site: SiteIndex) -> f64 {
        let [x1, x2] = site.pos();
        self.eval_pos(x1, x2)
    }

    /// Homogeneous finite differences of the predictor at `site`, crack
    /// bonds included. Across the cut the jump makes the `-/+e2` component
    /// equal to `-2 * eval(site)`.
    pub fn dgrad(&self, site: SiteIndex) -> [f64; 4] {
        let here = self.eval(site);
        let mut out = [0.0; 4];
        for dir in crate::lattice::Direction::ALL {
            out[dir.index()] = self.eval(site.shifted(dir)) - here;
        }
        out
    }
}

/// Evaluation context for the energy-difference functional on one domain
/// with one predictor centre.
///
/// Construction precomputes the unit-SIF predictor difference along every
/// assembly bond, so evaluating at a different `k` is free of trigonometry.
pub struct CrackModel {
    domain: Arc<Domain>,
    potential: PairPotential,
    lambda: i32,
    duhat1: Vec<f64>,
    plan: Arc<OperatorPlan>,
    gram: Arc<CscMatrix>,
}

impl CrackModel {
    pub fn new(domain: Arc<Domain>, potential: PairPotential, lambda: i32) -> CrackModel {
        let plan = Arc::new(OperatorPlan::new(&domain));
        let mut gram = plan.empty_matrix();
        plan.assemble(
            domain.bonds(),
            |_, bond| if bond.crack { 0.0 } else { 1.0 },
            &mut gram,
        );
        let duhat1 = Self::predictor_differences(&domain, lambda);
        CrackModel {
            domain,
            potential,
            lambda,
            duhat1,
            plan,
            gram: Arc::new(gram),
        }
    }

    fn predictor_differences(domain: &Domain, lambda: i32) -> Vec<f64> {
        let unit = Predictor::new(1.0, lambda);
        domain
            .bonds()
            .iter()
            .map(|bond| unit.eval(bond.site.shifted(bond.dir)) - unit.eval(bond.site))
            .collect()
    }

    /// Same domain and potential, predictor recentred at `(lambda, 0)`.
    pub fn with_lambda(&self, lambda: i32) -> CrackModel {
        CrackModel {
            domain: Arc::clone(&self.domain),
            potential: self.potential,
            lambda,
            duhat1: Self::predictor_differences(&self.domain, lambda),
            plan: Arc::clone(&self.plan),
            gram: Arc::clone(&self.gram),
        }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn potential(&self) -> PairPotential {
        self.potential
    }

    pub fn lambda(&self) -> i32 {
        self.lambda
    }

    pub fn plan(&self) -> &Arc<OperatorPlan> {
        &self.plan
    }

    /// Gram operator of the energy-space inner product, `2x` the graph
    /// Laplacian of the crack-aware bond graph with Dirichlet exterior.
    pub fn gram(&self) -> &CscMatrix {
        &self.gram
    }

    pub fn predictor(&self, k: f64) -> Predictor {
        Predictor::new(k, self.lambda)
    }

    /// `E(u, k)`: energy difference between `predictor + u` and the
    /// predictor alone. Bonds with zero correction difference contribute
    /// exactly nothing and are skipped.
    pub fn energy(&self, u: &Field, k: f64) -> f64 {
        assert_eq!(u.len(), self.domain.len());
        let mut acc = 0.0;
        for (b, bond) in self.domain.bonds().iter().enumerate() {
            let du = bond.difference(u);
            if du == 0.0 {
                continue;
            }
            let base = k * self.duhat1[b];
            acc += self.potential.phi0(base + du) - self.potential.phi0(base);
        }
        acc
    }

    /// First variation in `u`, assembled against the plain dot pairing:
    /// `gradient(u,k) . v = sum_bonds phi'(D(predictor + u)) Dv`.
    pub fn gradient(&self, u: &Field, k: f64) -> Field {
        assert_eq!(u.len(), self.domain.len());
        let mut out = vec![0.0; self.domain.len()];
        for (b, bond) in self.domain.bonds().iter().enumerate() {
            let gap = k * self.duhat1[b] + bond.difference(u);
            let w = self.potential.phi1(gap);
            if let Some(t) = bond.tail {
                out[t as usize] -= w;
            }
            if let Some(h) = bond.head {
                out[h as usize] += w;
            }
        }
        Field::from_values(out)
    }

    /// `l-inf` norm of the gradient; the equilibrium residual.
    pub fn residual(&self, u: &Field, k: f64) -> f64 {
        self.gradient(u, k).linf_norm()
    }

    /// Second variation `H(u,k)` as a sparse symmetric operator over the
    /// full bond graph (crack bonds keep their exponentially small weights).
    pub fn hessian(&self, u: &Field, k: f64) -> CscMatrix {
        let mut out = self.plan.empty_matrix();
        self.hessian_into(u, k, &mut out);
        out
    }

    pub fn hessian_into(&self, u: &Field, k: f64, out: &mut CscMatrix) {
        assert_eq!(u.len(), self.domain.len());
        let pot = self.potential;
        let duhat1 = &self.duhat1;
        self.plan.assemble(
            self.domain.bonds(),
            |b, bond| pot.phi2(k * duhat1[b] + bond.difference(u)),
            out,
        );
    }

    /// `H(u,k) - sigma G`, the shift-invert pencil matrix.
    pub fn shifted_hessian_into(&self, u: &Field, k: f64, sigma: f64, out: &mut CscMatrix) {
        assert_eq!(u.len(), self.domain.len());
        let pot = self.potential;
        let duhat1 = &self.duhat1;
        self.plan.assemble(
            self.domain.bonds(),
            |b, bond| {
                let h = pot.phi2(k * duhat1[b] + bond.difference(u));
                if bond.crack {
                    h
                } else {
                    h - 2.0 * sigma
                }
            },
            out,
        );
    }

    /// Mixed second variation `d^2 E / du dk` as a dual vector:
    /// `mixed_uk(u,k) . v = sum_bonds phi''(gap) D(unit predictor) Dv`.
    pub fn mixed_uk(&self, u: &Field, k: f64) -> Field {
        assert_eq!(u.len(), self.domain.len());
        let mut out = vec![0.0; self.domain.len()];
        for (b, bond) in self.domain.bonds().iter().enumerate() {
            let gap = k * self.duhat1[b] + bond.difference(u);
            let w = self.potential.phi2(gap) * self.duhat1[b];
            if let Some(t) = bond.tail {
                out[t as usize] -= w;
            }
            if let Some(h) = bond.head {
                out[h as usize] += w;
            }
        }
        Field::from_values(out)
    }

    /// Third variation contracted three times with the same direction:
    /// `sum_bonds phi'''(gap) (D gamma)^3`.
    pub fn third_contract(&self, u: &Field, k: f64, gamma: &Field) -> f64 {
        assert_eq!(u.len(), self.domain.len());
        assert_eq!(gamma.len(), self.domain.len());
        let mut acc = 0.0;
        for (b, bond) in self.domain.bonds().iter().enumerate() {
            let dg = bond.difference(gamma);
            if dg == 0.0 {
                continue;
            }
            let gap = k * self.duhat1[b] + bond.difference(u);
            acc += self.potential.phi3(gap) * dg * dg * dg;
        }
        acc
    }

    /// Number of cut bonds whose total displacement jump exceeds the
    /// breaking scale. This integer advances by one per snaking period, so
    /// it flags bond-breaking events that a too-long arclength step would
    /// silently jump across.
    pub fn open_cut_bonds(&self, u: &Field, k: f64) -> usize {
        let domain = &self.domain;
        let predictor = self.predictor(k);
        let bound = domain.radius().ceil() as i32 + 1;
        let mut count = 0;
        // Scan the whole row straddling the crack line: an advancing crack
        // opens bonds ahead of the geometric cut as well.
        for l1 in -bound..=bound {
            let upper = SiteIndex::new(l1, 1);
            let lower = SiteIndex::new(l1, 0);
            if domain.site_index(upper).is_none() && domain.site_index(lower).is_none() {
                continue;
            }
            let jump = predictor.eval(upper) + u.at(domain, upper)
                - predictor.eval(lower)
                - u.at(domain, lower);
            if jump.abs() > 1.0 {
                count += 1;
            }
        }
        count
    }

    /// Correction field for the predictor recentred at `(lambda_new, 0)`:
    /// the total displacement `recentred predictor + w` equals
    /// `predictor + u` at every free site.
    pub fn recenter_correction(&self, u: &Field, k: f64, lambda_new: i32) -> Field {
        assert_eq!(u.len(), self.domain.len());
        if lambda_new == self.lambda {
            return u.clone();
        }
        let old = Predictor::new(k, self.lambda);
        let new = Predictor::new(k, lambda_new);
        let values = self
            .domain
            .free_sites()
            .iter()
            .zip(u.values())
            .map(|(&site, &ui)| (old.eval(site) - new.eval(site)) + ui)
            .collect();
        Field::from_values(values)
    }
}

/// A point of the model's configuration space: correction field plus SIF.
#[derive(Clone)]
pub struct ModelState {
    pub model: Arc<CrackModel>,
    pub u: Field,
    pub k: f64,
}

impl ModelState {
    pub fn new(model: Arc<CrackModel>, u: Field, k: f64) -> ModelState {
        assert_eq!(u.len(), model.domain().len(), "correction lives on the domain");
        ModelState { model, u, k }
    }

    pub fn energy(&self) -> f64 {
        self.model.energy(&self.u, self.k)
    }

    pub fn gradient(&self) -> Field {
        self.model.gradient(&self.u, self.k)
    }

    pub fn hessian(&self) -> CscMatrix {
        self.model.hessian(&self.u, self.k)
    }

    /// Total displacement `predictor + u` at a site.
    pub fn total_displacement(&self, site: SiteIndex) -> f64 {
        self.model.predictor(self.k).eval(site) + self.u.at(self.model.domain(), site)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Direction;

    const TOL: f64 = 1e-12;

    #[test]
    fn potential_normalisation() {
        let pot = PairPotential::default();
        assert_eq!(pot.phi(0.0, 0), 0.0);
        assert_eq!(pot.phi(0.0, 1), 0.0);
        assert!((pot.phi(0.0, 2) - 1.0).abs() < TOL);
        assert_eq!(pot.phi(0.0, 3), 0.0);
        // phi is even, phi' odd.
        assert!((pot.phi(0.7, 0) - pot.phi(-0.7, 0)).abs() < TOL);
        assert!((pot.phi(0.7, 1) + pot.phi(-0.7, 1)).abs() < TOL);
        // phi'(1) = 2 A a e^{-a} = e^{-3} for the standard parameters.
        assert!((pot.phi(1.0, 1) - (-3.0f64).exp()).abs() < TOL);
    }

    #[test]
    fn potential_derivatives_match_finite_differences() {
        let pot = PairPotential::new(0.21, 2.4);
        let h = 1e-6;
        for &r in &[-1.3, -0.2, 0.0, 0.4, 1.9] {
            for order in 0..3u8 {
                let fd = (pot.phi(r + h, order) - pot.phi(r - h, order)) / (2.0 * h);
                let exact = pot.phi(r, order + 1);
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                    "order {order} at {r}: fd {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn predictor_reference_values() {
        let pred = Predictor::new(1.0, 0);
        // x = (1/2, 1/2): r = sqrt(1/2), theta = pi/4.
        let v = pred.eval(SiteIndex::new(1, 1));
        assert!((v - 0.321797126452791).abs() < 1e-12);
        // x = (-1/2, +-1/2): theta = +-3pi/4; antisymmetric in x2.
        let up = pred.eval(SiteIndex::new(0, 1));
        let down = pred.eval(SiteIndex::new(0, 0));
        assert!((up - 0.776886987015019).abs() < 1e-12);
        assert!((up + down).abs() < 1e-15);
    }

    #[test]
    fn predictor_linear_in_k() {
        let site = SiteIndex::new(-3, 2);
        let base = Predictor::new(1.0, 0).dgrad(site);
        for &k in &[0.0, 0.3, -1.7] {
            let scaled = Predictor::new(k, 0).dgrad(site);
            for i in 0..4 {
                assert!((scaled[i] - k * base[i]).abs() < 1e-15 * k.abs().max(1.0));
            }
        }
    }

    #[test]
    fn predictor_jump_across_cut() {
        let pred = Predictor::new(1.0, 0);
        let site = SiteIndex::new(0, 1); // x = (-1/2, 1/2)
        let d = pred.dgrad(site)[Direction::South.index()];
        assert!((d - (-2.0 * pred.eval(site))).abs() < 1e-12);
        assert!((d + 1.553773974030037).abs() < 1e-12);
    }

    #[test]
    fn predictor_growth_along_crack() {
        // |D u_hat| across the cut grows like |m|^(1/2) behind the tip.
        let pred = Predictor::new(1.0, 0);
        let mut prev = 0.0;
        for j in 2..9 {
            let site = SiteIndex::new(-(1 << j), 1);
            let d = pred.dgrad(site)[Direction::South.index()].abs();
            if prev > 0.0 {
                let ratio = d / prev;
                assert!(
                    (ratio - std::f64::consts::SQRT_2).abs() < 0.05,
                    "doubling |m| should scale the jump by sqrt(2), got {ratio}"
                );
            }
            prev = d;
        }
    }

    #[test]
    fn energy_of_single_site_bump() {
        let domain = Arc::new(Domain::build(4.0).unwrap());
        let model = CrackModel::new(Arc::clone(&domain), PairPotential::default(), 0);
        assert_eq!(model.energy(&domain.zero_field(), 0.0), 0.0);
        assert_eq!(model.energy(&domain.zero_field(), 0.37), 0.0);

        let mut u = domain.zero_field();
        u.values_mut()[domain.site_index(SiteIndex::new(2, 2)).unwrap()] = 0.1;
        let expected = 8.0 * PairPotential::default().phi0(0.1);
        assert!((model.energy(&u, 0.0) - expected).abs() < 1e-15);
        assert!((expected - 0.039405955268722).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_reference_state() {
        let domain = Arc::new(Domain::build(4.0).unwrap());
        let model = CrackModel::new(domain, PairPotential::default(), 0);
        let g = model.gradient(&model.domain().zero_field(), 0.0);
        assert_eq!(g.linf_norm(), 0.0);
    }

    #[test]
    fn hessian_is_symmetric() {
        let domain = Arc::new(Domain::build(5.0).unwrap());
        let model = CrackModel::new(Arc::clone(&domain), PairPotential::default(), 0);
        let mut u = domain.zero_field();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = 0.2 * ((i * 37) % 11) as f64 / 11.0;
        }
        let h = model.hessian(&u, 0.31);
        assert!(h.max_asymmetry() <= 1e-14);
    }

    #[test]
    fn third_contract_vanishes_at_reference_state() {
        let domain = Arc::new(Domain::build(4.0).unwrap());
        let model = CrackModel::new(Arc::clone(&domain), PairPotential::default(), 0);
        let mut gamma = domain.zero_field();
        for (i, v) in gamma.values_mut().iter_mut().enumerate() {
            *v = (1.0 + i as f64).recip();
        }
        assert_eq!(model.third_contract(&domain.zero_field(), 0.0, &gamma), 0.0);
    }

    #[test]
    fn model_state_carries_the_total_displacement() {
        let domain = Arc::new(Domain::build(4.0).unwrap());
        let model = Arc::new(CrackModel::new(
            Arc::clone(&domain),
            PairPotential::default(),
            0,
        ));
        let mut u = domain.zero_field();
        let site = SiteIndex::new(1, 1);
        u.values_mut()[domain.site_index(site).unwrap()] = 0.25;
        let state = ModelState::new(Arc::clone(&model), u.clone(), 0.4);
        let expected = Predictor::new(0.4, 0).eval(site) + 0.25;
        assert!((state.total_displacement(site) - expected).abs() < 1e-15);
        assert_eq!(state.energy(), model.energy(&u, 0.4));
        assert_eq!(state.gradient().values(), model.gradient(&u, 0.4).values());
    }

    #[test]
    fn recentring_preserves_total_displacement() {
        let domain = Arc::new(Domain::build(6.0).unwrap());
        let model = CrackModel::new(Arc::clone(&domain), PairPotential::default(), 0);
        let mut u = domain.zero_field();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = 0.05 * ((i % 7) as f64 - 3.0);
        }
        let k = 0.4;
        assert_eq!(model.recenter_correction(&u, k, 0), u);

        let w = model.recenter_correction(&u, k, 1);
        let old = Predictor::new(k, 0);
        let new = Predictor::new(k, 1);
        for (i, &site) in domain.free_sites().iter().enumerate() {
            let before = old.eval(site) + u.values()[i];
            let after = new.eval(site) + w.values()[i];
            assert!((before - after).abs() < 1e-14);
        }
    }
}
