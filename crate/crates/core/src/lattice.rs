//! Cracked square-lattice geometry.
//!
//! Sites live on the shifted square lattice `{ l - (1/2, 1/2) | l in Z^2 }`,
//! so no site ever sits on the crack line `{ x2 = 0 }`. The crack occupies the
//! negative `x1`-axis; the rows of sites directly above and below it are the
//! crack lips. Bonds joining the two lips behind the tip are the "crack
//! bonds": the crack-aware gradient and the energy-space inner product treat
//! them as absent, while the homogeneous gradient keeps them.

use serde::Serialize;
use thiserror::Error;

/// Nearest-neighbour bond directions of the square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `+e1`
    East,
    /// `-e1`
    West,
    /// `+e2`
    North,
    /// `-e2`
    South,
}

impl Direction {
    /// All four directions, in the component order used by gradient 4-vectors.
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::West,
        Direction::North,
        Direction::South,
    ];

    #[inline]
    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }

    #[inline]
    pub fn reverse(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::West => Direction::East,
            Direction::North => Direction::South,
            Direction::South => Direction::North,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Direction::East => 0,
            Direction::West => 1,
            Direction::North => 2,
            Direction::South => 3,
        }
    }
}

/// Integer label of a lattice site; the physical position is `l - (1/2, 1/2)`.
///
/// The derived ordering is lexicographic on `(l1, l2)`, which fixes the
/// deterministic site numbering of [`Domain`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteIndex {
    pub l1: i32,
    pub l2: i32,
}

impl SiteIndex {
    #[inline]
    pub fn new(l1: i32, l2: i32) -> SiteIndex {
        SiteIndex { l1, l2 }
    }

    /// Physical position `x = l - (1/2, 1/2)`.
    #[inline]
    pub fn pos(self) -> [f64; 2] {
        [self.l1 as f64 - 0.5, self.l2 as f64 - 0.5]
    }

    /// Distance from the origin (the reference crack tip).
    #[inline]
    pub fn radius(self) -> f64 {
        let [x1, x2] = self.pos();
        x1.hypot(x2)
    }

    /// Upper crack lip: `x1 < 0`, `x2 = +1/2`.
    #[inline]
    pub fn on_upper_lip(self) -> bool {
        self.l1 <= 0 && self.l2 == 1
    }

    /// Lower crack lip: `x1 < 0`, `x2 = -1/2`.
    #[inline]
    pub fn on_lower_lip(self) -> bool {
        self.l1 <= 0 && self.l2 == 0
    }

    #[inline]
    pub fn shifted(self, dir: Direction) -> SiteIndex {
        let (d1, d2) = dir.offset();
        SiteIndex::new(self.l1 + d1, self.l2 + d2)
    }

    /// Mirror image across the crack line, `(x1, x2) -> (x1, -x2)`.
    #[inline]
    pub fn mirrored(self) -> SiteIndex {
        SiteIndex::new(self.l1, 1 - self.l2)
    }
}

/// True when the bond `(site, dir)` joins the two crack lips through the cut.
///
/// These are exactly the bonds excluded from the crack-aware gradient: the
/// `-e2` bond of an upper-lip site and the `+e2` bond of a lower-lip site.
#[inline]
pub fn is_crack_bond(site: SiteIndex, dir: Direction) -> bool {
    match dir {
        Direction::South => site.on_upper_lip(),
        Direction::North => site.on_lower_lip(),
        _ => false,
    }
}

/// All sites with `|x| < radius`, in lexicographic `(l1, l2)` order.
pub fn sites_in_ball(radius: f64) -> Vec<SiteIndex> {
    let mut sites = Vec::new();
    let bound = radius.ceil() as i32 + 1;
    let r2 = radius * radius;
    for l1 in -bound..=bound {
        for l2 in -bound..=bound {
            let site = SiteIndex::new(l1, l2);
            let [x1, x2] = site.pos();
            if x1 * x1 + x2 * x2 < r2 {
                sites.push(site);
            }
        }
    }
    sites
}

#[derive(Debug, Error)]
pub enum LatticeError {
    /// The domain would not contain the crack-tip neighbourhood.
    #[error("domain radius {0} is below the minimum of 2")]
    DomainTooSmall(f64),
    #[error("field length {found} does not match domain site count {expected}")]
    FieldSizeMismatch { expected: usize, found: usize },
}

/// A directed bond with at least one endpoint inside the domain.
///
/// `tail`/`head` are the free-site indices of `site` and `site + dir`, or
/// `None` for clamped exterior sites. Bonds whose tail lies outside the
/// domain are still listed (once, from their interior head) because sums over
/// the whole lattice pick up their contribution.
#[derive(Clone, Copy, Debug)]
pub struct Bond {
    pub site: SiteIndex,
    pub dir: Direction,
    pub tail: Option<u32>,
    pub head: Option<u32>,
    pub crack: bool,
}

/// Summary of a computational domain, exportable as JSON.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DomainSummary {
    #[serde(rename = "R")]
    pub radius: f64,
    pub n_sites: usize,
    pub n_bonds_full: usize,
    pub n_bonds_tilde: usize,
}

/// Finite computational domain `B_R`: the free sites, their numbering, and
/// every directed bond touching them.
///
/// The domain is exactly the open lattice ball (the minimal admissible
/// choice), sites are numbered lexicographically, and displacements are
/// clamped to zero outside.
pub struct Domain {
    radius: f64,
    free_sites: Vec<SiteIndex>,
    bonds: Vec<Bond>,
    n_bonds_full: usize,
    n_bonds_tilde: usize,
    raster: Raster,
}

/// Dense `(l1, l2) -> free index` lookup table.
struct Raster {
    min: i32,
    width: i32,
    cells: Vec<u32>,
}

const NO_SITE: u32 = u32::MAX;

impl Raster {
    fn build(radius: f64, sites: &[SiteIndex]) -> Raster {
        let bound = radius.ceil() as i32 + 2;
        let min = -bound;
        let width = 2 * bound + 1;
        let mut cells = vec![NO_SITE; (width * width) as usize];
        for (i, site) in sites.iter().enumerate() {
            let cell = (site.l1 - min) + width * (site.l2 - min);
            cells[cell as usize] = i as u32;
        }
        Raster { min, width, cells }
    }

    #[inline]
    fn get(&self, site: SiteIndex) -> Option<u32> {
        let c1 = site.l1 - self.min;
        let c2 = site.l2 - self.min;
        if c1 < 0 || c2 < 0 || c1 >= self.width || c2 >= self.width {
            return None;
        }
        match self.cells[(c1 + self.width * c2) as usize] {
            NO_SITE => None,
            i => Some(i),
        }
    }
}

impl Domain {
    /// Builds the domain of all sites with `|x| < radius`.
    ///
    /// Radii below 2 are rejected: the domain would not contain the
    /// crack-tip neighbourhood.
    pub fn build(radius: f64) -> Result<Domain, LatticeError> {
        if !(radius >= 2.0) {
            return Err(LatticeError::DomainTooSmall(radius));
        }
        let free_sites = sites_in_ball(radius);
        let raster = Raster::build(radius, &free_sites);

        let mut bonds = Vec::with_capacity(free_sites.len() * 4);
        let mut n_bonds_tilde = 0usize;
        // Out-bonds of every free site, then in-bonds from the exterior halo.
        // Each directed bond with a free endpoint appears exactly once.
        for (i, &site) in free_sites.iter().enumerate() {
            for dir in Direction::ALL {
                let crack = is_crack_bond(site, dir);
                if !crack {
                    n_bonds_tilde += 1;
                }
                bonds.push(Bond {
                    site,
                    dir,
                    tail: Some(i as u32),
                    head: raster.get(site.shifted(dir)),
                    crack,
                });
            }
        }
        let n_bonds_full = bonds.len();
        for (i, &site) in free_sites.iter().enumerate() {
            for dir in Direction::ALL {
                let neighbour = site.shifted(dir);
                if raster.get(neighbour).is_none() {
                    let back = dir.reverse();
                    bonds.push(Bond {
                        site: neighbour,
                        dir: back,
                        tail: None,
                        head: Some(i as u32),
                        crack: is_crack_bond(neighbour, back),
                    });
                }
            }
        }

        Ok(Domain {
            radius,
            free_sites,
            bonds,
            n_bonds_full,
            n_bonds_tilde,
            raster,
        })
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of free sites.
    #[inline]
    pub fn len(&self) -> usize {
        self.free_sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.free_sites.is_empty()
    }

    #[inline]
    pub fn free_sites(&self) -> &[SiteIndex] {
        &self.free_sites
    }

    #[inline]
    pub fn site(&self, index: usize) -> SiteIndex {
        self.free_sites[index]
    }

    /// Free index of `site`, or `None` if it lies outside the domain.
    #[inline]
    pub fn site_index(&self, site: SiteIndex) -> Option<usize> {
        self.raster.get(site).map(|i| i as usize)
    }

    /// Every directed bond with at least one free endpoint. The first
    /// `4 * len()` entries are the out-bonds of the free sites in order.
    #[inline]
    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn summary(&self) -> DomainSummary {
        DomainSummary {
            radius: self.radius,
            n_sites: self.free_sites.len(),
            n_bonds_full: self.n_bonds_full,
            n_bonds_tilde: self.n_bonds_tilde,
        }
    }

    pub fn zero_field(&self) -> Field {
        Field {
            values: vec![0.0; self.free_sites.len()],
        }
    }

    pub fn field_from(&self, values: Vec<f64>) -> Result<Field, LatticeError> {
        if values.len() != self.free_sites.len() {
            return Err(LatticeError::FieldSizeMismatch {
                expected: self.free_sites.len(),
                found: values.len(),
            });
        }
        Ok(Field { values })
    }

    /// Discrete gradient 4-vector of `u` at `site`, homogeneous or
    /// crack-aware. Components follow [`Direction::ALL`]; crack-aware mode
    /// zeroes the components of bonds crossing the cut.
    pub fn discrete_gradient(&self, u: &Field, site: SiteIndex, crack_aware: bool) -> [f64; 4] {
        let here = u.at(self, site);
        let mut grad = [0.0; 4];
        for dir in Direction::ALL {
            if crack_aware && is_crack_bond(site, dir) {
                continue;
            }
            grad[dir.index()] = u.at(self, site.shifted(dir)) - here;
        }
        grad
    }

    /// Energy-space inner product `sum_m D~u(m) . D~v(m)`.
    ///
    /// Each undirected crack-aware bond contributes twice, once per endpoint,
    /// so e.g. the indicator of an interior site has squared norm 8.
    pub fn h1_inner(&self, u: &Field, v: &Field) -> f64 {
        assert_eq!(u.len(), self.len(), "field does not match domain");
        assert_eq!(v.len(), self.len(), "field does not match domain");
        let mut acc = 0.0;
        for bond in &self.bonds {
            if bond.crack {
                continue;
            }
            let du = bond.difference(u);
            let dv = bond.difference(v);
            acc += du * dv;
        }
        acc
    }

    #[inline]
    pub fn h1_norm(&self, u: &Field) -> f64 {
        self.h1_inner(u, u).sqrt()
    }

    /// Riesz (Gram) operator of the energy-space inner product:
    /// `<gram_apply(u), v> = h1_inner(u, v)` with the plain dot pairing.
    pub fn gram_apply(&self, u: &Field) -> Field {
        assert_eq!(u.len(), self.len(), "field does not match domain");
        let mut out = vec![0.0; self.len()];
        for bond in &self.bonds {
            if bond.crack {
                continue;
            }
            let du = bond.difference(u);
            if let Some(t) = bond.tail {
                out[t as usize] -= du;
            }
            if let Some(h) = bond.head {
                out[h as usize] += du;
            }
        }
        Field { values: out }
    }
}

impl Bond {
    /// `u(site + dir) - u(site)` with the clamped-exterior convention.
    #[inline]
    pub fn difference(&self, u: &Field) -> f64 {
        let head = match self.head {
            Some(h) => u.values[h as usize],
            None => 0.0,
        };
        let tail = match self.tail {
            Some(t) => u.values[t as usize],
            None => 0.0,
        };
        head - tail
    }
}

/// Real-valued displacement on the free sites of a [`Domain`], implicitly
/// zero everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Wraps raw values; the caller guarantees alignment with the intended
    /// domain's site numbering.
    #[inline]
    pub fn from_values(values: Vec<f64>) -> Field {
        Field { values }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at any lattice site; exactly 0 outside the domain.
    #[inline]
    pub fn at(&self, domain: &Domain, site: SiteIndex) -> f64 {
        match domain.site_index(site) {
            Some(i) => self.values[i],
            None => 0.0,
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn axpy(&mut self, alpha: f64, x: &Field) {
        assert_eq!(self.len(), x.len());
        for (v, xv) in self.values.iter_mut().zip(&x.values) {
            *v += alpha * xv;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Anti-plane mirror image `(Mu)(x1, x2) = -u(x1, -x2)`.
    pub fn mirrored(&self, domain: &Domain) -> Field {
        let mut out = vec![0.0; self.len()];
        for (i, &site) in domain.free_sites().iter().enumerate() {
            let j = domain
                .site_index(site.mirrored())
                .expect("domain is mirror symmetric");
            out[i] = -self.values[j];
        }
        Field { values: out }
    }

    /// Zero-extension onto a larger domain.
    pub fn embedded(&self, from: &Domain, into: &Domain) -> Field {
        let mut out = into.zero_field();
        for (i, &site) in from.free_sites().iter().enumerate() {
            if let Some(j) = into.site_index(site) {
                out.values[j] = self.values[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_enumeration_matches_hand_counts() {
        // |x| < 1.5 picks out the four sites around the tip.
        let four = sites_in_ball(1.5);
        assert_eq!(four.len(), 4);
        for l in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!(four.contains(&SiteIndex::new(l.0, l.1)));
        }
        // |x| < 2 adds the eight sites at distance sqrt(2.5).
        let twelve = sites_in_ball(2.0);
        assert_eq!(twelve.len(), 12);
        for site in &four {
            assert!(twelve.contains(site));
        }
    }

    #[test]
    fn domains_are_nested() {
        let small = Domain::build(4.0).unwrap();
        let large = Domain::build(5.3).unwrap();
        for &site in small.free_sites() {
            assert!(large.site_index(site).is_some());
        }
    }

    #[test]
    fn tiny_radius_rejected() {
        assert!(matches!(
            Domain::build(1.5),
            Err(LatticeError::DomainTooSmall(_))
        ));
    }

    #[test]
    fn crack_bond_classification() {
        // x = (-1/2, 1/2) looking down across the cut.
        assert!(is_crack_bond(SiteIndex::new(0, 1), Direction::South));
        // x = (1/2, 1/2) is ahead of the tip.
        assert!(!is_crack_bond(SiteIndex::new(1, 1), Direction::South));
        // Horizontal bonds never cross the cut.
        assert!(!is_crack_bond(SiteIndex::new(0, 1), Direction::East));
        // Mirror case below the cut.
        assert!(is_crack_bond(SiteIndex::new(0, 0), Direction::North));
        assert!(!is_crack_bond(SiteIndex::new(1, 0), Direction::North));
    }

    #[test]
    fn removed_bonds_are_symmetric() {
        let domain = Domain::build(6.0).unwrap();
        for &site in domain.free_sites() {
            for dir in Direction::ALL {
                let there = site.shifted(dir);
                assert_eq!(
                    is_crack_bond(site, dir),
                    is_crack_bond(there, dir.reverse()),
                    "bond removal must not depend on the endpoint"
                );
            }
            // Lip sites lose exactly one of their four bonds.
            let removed = Direction::ALL
                .iter()
                .filter(|&&d| is_crack_bond(site, d))
                .count();
            if site.on_upper_lip() || site.on_lower_lip() {
                assert_eq!(removed, 1);
            } else {
                assert_eq!(removed, 0);
            }
        }
    }

    #[test]
    fn gradient_of_indicator() {
        let domain = Domain::build(4.0).unwrap();
        let m0 = SiteIndex::new(2, 2);
        let i0 = domain.site_index(m0).unwrap();
        let mut u = domain.zero_field();
        u.values_mut()[i0] = 0.7;

        let full = domain.discrete_gradient(&u, m0, false);
        assert_eq!(full, [-0.7; 4]);
        // Interior site: crack-aware agrees.
        assert_eq!(domain.discrete_gradient(&u, m0, true), full);

        let zero = domain.zero_field();
        assert_eq!(domain.discrete_gradient(&zero, m0, false), [0.0; 4]);
        assert_eq!(domain.discrete_gradient(&zero, m0, true), [0.0; 4]);
    }

    #[test]
    fn crack_aware_gradient_zeroes_cut_components() {
        let domain = Domain::build(4.0).unwrap();
        let upper = SiteIndex::new(-1, 1);
        let lower = upper.shifted(Direction::South);
        let mut u = domain.zero_field();
        u.values_mut()[domain.site_index(upper).unwrap()] = 2.0;
        u.values_mut()[domain.site_index(lower).unwrap()] = -3.0;

        let full = domain.discrete_gradient(&u, upper, false);
        assert_eq!(full[Direction::South.index()], -5.0);
        let aware = domain.discrete_gradient(&u, upper, true);
        assert_eq!(aware[Direction::South.index()], 0.0);
        // Other components untouched.
        for dir in [Direction::East, Direction::West, Direction::North] {
            assert_eq!(aware[dir.index()], full[dir.index()]);
        }
    }

    #[test]
    fn crack_aware_differs_only_on_crack_bonds() {
        let domain = Domain::build(6.0).unwrap();
        let mut u = domain.zero_field();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = ((i * 2654435761) % 97) as f64 / 97.0 - 0.5;
        }
        for &site in domain.free_sites() {
            let full = domain.discrete_gradient(&u, site, false);
            let aware = domain.discrete_gradient(&u, site, true);
            for dir in Direction::ALL {
                if is_crack_bond(site, dir) {
                    assert_eq!(aware[dir.index()], 0.0);
                } else {
                    assert_eq!(aware[dir.index()], full[dir.index()]);
                }
            }
        }
    }

    #[test]
    fn indicator_h1_norm_is_eight() {
        let domain = Domain::build(4.0).unwrap();
        let mut u = domain.zero_field();
        u.values_mut()[domain.site_index(SiteIndex::new(2, 2)).unwrap()] = 1.0;
        assert_eq!(domain.h1_inner(&u, &u), 8.0);
    }

    #[test]
    fn gram_reproduces_inner_product() {
        let domain = Domain::build(4.0).unwrap();
        let n = domain.len();
        let mut u = domain.zero_field();
        let mut v = domain.zero_field();
        for i in 0..n {
            u.values_mut()[i] = ((i * 7919) % 101) as f64 / 101.0 - 0.5;
            v.values_mut()[i] = ((i * 104729) % 103) as f64 / 103.0 - 0.5;
        }
        let gu = domain.gram_apply(&u);
        let lhs = gu.dot(&v);
        let rhs = domain.h1_inner(&u, &v);
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        // Symmetry of the bilinear form.
        let vu = domain.h1_inner(&v, &u);
        assert!((rhs - vu).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn summary_counts() {
        let domain = Domain::build(2.0).unwrap();
        let s = domain.summary();
        assert_eq!(s.n_sites, 12);
        assert_eq!(s.n_bonds_full, 48);
        // Two lip sites inside |x| < 2 on each side: (0,1), (0,0) only
        // (l1 = -1 gives |x| = sqrt(2.25 + 0.25) < 2, so (-1,1), (-1,0) too).
        let lips = domain
            .free_sites()
            .iter()
            .filter(|s| s.on_upper_lip() || s.on_lower_lip())
            .count();
        assert_eq!(s.n_bonds_tilde, s.n_bonds_full - lips);
    }

    #[test]
    fn mirror_is_an_involution() {
        let domain = Domain::build(5.0).unwrap();
        let mut u = domain.zero_field();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        let back = u.mirrored(&domain).mirrored(&domain);
        assert_eq!(back, u);
    }
}
