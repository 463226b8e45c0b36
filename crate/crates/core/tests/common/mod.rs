//! Shared test support: deterministic rng and brute-force reference
//! implementations built straight from the defining sums, independent of
//! the production assembly paths.

#![allow(dead_code)]

use griffith_core::lattice::{Domain, Field, SiteIndex};
use griffith_core::model::PairPotential;
use std::collections::HashMap;

/// splitmix64; deterministic and dependency-free.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in (-0.5, 0.5).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }

    pub fn field(&mut self, domain: &Domain, amplitude: f64) -> Field {
        let mut f = domain.zero_field();
        for v in f.values_mut() {
            *v = amplitude * self.next_f64();
        }
        f
    }
}

/// Direct site-value lookup detached from the domain's raster and bonds.
pub struct SiteMap {
    values: HashMap<(i32, i32), f64>,
}

impl SiteMap {
    pub fn new(domain: &Domain, field: &Field) -> SiteMap {
        let values = domain
            .free_sites()
            .iter()
            .zip(field.values())
            .map(|(s, &v)| ((s.l1, s.l2), v))
            .collect();
        SiteMap { values }
    }

    pub fn at(&self, l1: i32, l2: i32) -> f64 {
        self.values.get(&(l1, l2)).copied().unwrap_or(0.0)
    }
}

pub const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn in_gamma_plus(l1: i32, l2: i32) -> bool {
    l1 <= 0 && l2 == 1
}

fn in_gamma_minus(l1: i32, l2: i32) -> bool {
    l1 <= 0 && l2 == 0
}

pub fn crack_direction(l1: i32, l2: i32, d: (i32, i32)) -> bool {
    (in_gamma_plus(l1, l2) && d == (0, -1)) || (in_gamma_minus(l1, l2) && d == (0, 1))
}

/// Predictor value straight from the closed form.
pub fn predictor_value(k: f64, lambda: i32, l1: i32, l2: i32) -> f64 {
    let x1 = l1 as f64 - 0.5 - lambda as f64;
    let x2 = l2 as f64 - 0.5;
    let r = x1.hypot(x2);
    let theta = x2.atan2(x1);
    k * r.sqrt() * (0.5 * theta).sin()
}

/// Brute-force energy difference: sum over every site of the enlarged box
/// and all four directions.
pub fn brute_energy(
    domain: &Domain,
    field: &Field,
    k: f64,
    lambda: i32,
    pot: PairPotential,
) -> f64 {
    let map = SiteMap::new(domain, field);
    let bound = domain.radius().ceil() as i32 + 3;
    let mut acc = 0.0;
    for l1 in -bound..=bound {
        for l2 in -bound..=bound {
            for d in DIRS {
                let du = map.at(l1 + d.0, l2 + d.1) - map.at(l1, l2);
                let dhat = predictor_value(k, lambda, l1 + d.0, l2 + d.1)
                    - predictor_value(k, lambda, l1, l2);
                acc += pot.phi(dhat + du, 0) - pot.phi(dhat, 0);
            }
        }
    }
    acc
}

/// Dense crack-aware Gram matrix from the defining sum.
pub fn dense_gram(domain: &Domain) -> faer::Mat<f64> {
    let n = domain.len();
    let mut basis: Vec<SiteMap> = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = domain.zero_field();
        f.values_mut()[i] = 1.0;
        basis.push(SiteMap::new(domain, &f));
    }
    let bound = domain.radius().ceil() as i32 + 3;
    let mut out = faer::Mat::zeros(n, n);
    for l1 in -bound..=bound {
        for l2 in -bound..=bound {
            for d in DIRS {
                if crack_direction(l1, l2, d) {
                    continue;
                }
                let diffs: Vec<f64> = basis
                    .iter()
                    .map(|b| b.at(l1 + d.0, l2 + d.1) - b.at(l1, l2))
                    .collect();
                for i in 0..n {
                    if diffs[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[(i, j)] += diffs[i] * diffs[j];
                    }
                }
            }
        }
    }
    out
}

/// Dense Hessian of the energy at `(field, k)` from the defining sum, full
/// bond graph.
pub fn dense_hessian(
    domain: &Domain,
    field: &Field,
    k: f64,
    lambda: i32,
    pot: PairPotential,
) -> faer::Mat<f64> {
    let n = domain.len();
    let map = SiteMap::new(domain, field);
    let mut basis: Vec<SiteMap> = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = domain.zero_field();
        f.values_mut()[i] = 1.0;
        basis.push(SiteMap::new(domain, &f));
    }
    let bound = domain.radius().ceil() as i32 + 3;
    let mut out = faer::Mat::zeros(n, n);
    for l1 in -bound..=bound {
        for l2 in -bound..=bound {
            for d in DIRS {
                let gap = predictor_value(k, lambda, l1 + d.0, l2 + d.1)
                    - predictor_value(k, lambda, l1, l2)
                    + map.at(l1 + d.0, l2 + d.1)
                    - map.at(l1, l2);
                let weight = pot.phi(gap, 2);
                let diffs: Vec<f64> = basis
                    .iter()
                    .map(|b| b.at(l1 + d.0, l2 + d.1) - b.at(l1, l2))
                    .collect();
                for i in 0..n {
                    if diffs[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        out[(i, j)] += weight * diffs[i] * diffs[j];
                    }
                }
            }
        }
    }
    out
}

/// Smallest eigenvalue of the symmetric pencil `(H, G)` by the dense
/// Cholesky transform `L^-1 H L^-T` with `G = L L^T`.
pub fn dense_smallest_eigenvalue(h: &faer::Mat<f64>, g: &faer::Mat<f64>) -> f64 {
    use faer::linalg::solvers::Llt;
    let n = h.nrows();
    let llt = Llt::new(g.as_ref(), faer::Side::Lower).expect("Gram is positive definite");
    let ell = llt.L().to_owned();
    // W = L^-1 H, then M = (L^-1 W^T)^T = L^-1 H L^-T.
    let mut w = h.clone();
    ell.as_ref().solve_lower_triangular_in_place(w.as_mut());
    let mut v = w.transpose().to_owned();
    ell.as_ref().solve_lower_triangular_in_place(v.as_mut());
    let mut sym = faer::Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (v[(i, j)] + v[(j, i)]);
        }
    }
    let evd = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("dense eigendecomposition");
    let mut smallest = f64::INFINITY;
    for i in 0..n {
        smallest = smallest.min(evd.S()[i]);
    }
    smallest
}

/// `l1,l2 -> site` helper.
pub fn site(l1: i32, l2: i32) -> SiteIndex {
    SiteIndex::new(l1, l2)
}
