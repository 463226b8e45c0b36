//! CSC storage shared by the operators reassembled along a continuation path.
//!
//! The sparsity pattern of the Hessian, the Gram operator and the shifted
//! eigen-pencil is fixed by the domain, so each domain builds one
//! [`OperatorPlan`] up front (pattern plus per-bond value slots) and numeric
//! assembly is a flat scatter over the bond list. The bordered `(N+1)` system
//! reuses the same pattern with a dense last row and column appended.

use crate::lattice::{Bond, Domain};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

/// Square sparse matrix in compressed-sparse-column form.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// faer view over this matrix.
    pub fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        SparseColMatRef::new(symbolic, &self.values)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }

    /// `x^T A y`.
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let mut acc = 0.0;
        for j in 0..self.n {
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += x[self.row_idx[p]] * self.values[p] * yj;
            }
        }
        acc
    }

    /// Largest absolute asymmetry `max |A - A^T|`; the assembled operators
    /// are symmetric by construction and this is the cheap way to assert it.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let mirror = self.get(j, i).unwrap_or(0.0);
                worst = worst.max((self.values[p] - mirror).abs());
            }
        }
        worst
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        let slice = &self.row_idx[range.clone()];
        slice
            .binary_search(&row)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut out = faer::Mat::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[(self.row_idx[p], j)] = self.values[p];
            }
        }
        out
    }
}

/// Value slots of one directed bond in the CSC pattern: contributions at
/// `(tail,tail)`, `(head,head)`, `(tail,head)`, `(head,tail)`.
const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct BondSlots {
    tt: u32,
    hh: u32,
    th: u32,
    ht: u32,
}

/// Precomputed assembly plan for all free-site operators of one domain.
pub struct OperatorPlan {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    slots: Vec<BondSlots>,
}

impl OperatorPlan {
    pub fn new(domain: &Domain) -> OperatorPlan {
        let n = domain.len();
        // Pattern: diagonal plus every free-free adjacency, built per column
        // with sorted row indices.
        let mut cols: Vec<Vec<usize>> = vec![Vec::with_capacity(5); n];
        for (j, &site) in domain.free_sites().iter().enumerate() {
            cols[j].push(j);
            for dir in crate::lattice::Direction::ALL {
                if let Some(i) = domain.site_index(site.shifted(dir)) {
                    cols[j].push(i);
                }
            }
            cols[j].sort_unstable();
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &cols {
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }

        let slot_of = |row: usize, col: usize| -> u32 {
            let range = col_ptr[col]..col_ptr[col + 1];
            let k = row_idx[range.clone()]
                .binary_search(&row)
                .expect("adjacency present in pattern");
            (range.start + k) as u32
        };

        let slots = domain
            .bonds()
            .iter()
            .map(|bond| {
                let t = bond.tail.map(|t| t as usize);
                let h = bond.head.map(|h| h as usize);
                BondSlots {
                    tt: t.map_or(NO_SLOT, |t| slot_of(t, t)),
                    hh: h.map_or(NO_SLOT, |h| slot_of(h, h)),
                    th: match (t, h) {
                        (Some(t), Some(h)) => slot_of(t, h),
                        _ => NO_SLOT,
                    },
                    ht: match (t, h) {
                        (Some(t), Some(h)) => slot_of(h, t),
                        _ => NO_SLOT,
                    },
                }
            })
            .collect();

        OperatorPlan {
            n,
            col_ptr,
            row_idx,
            slots,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn empty_matrix(&self) -> CscMatrix {
        CscMatrix {
            n: self.n,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values: vec![0.0; self.row_idx.len()],
        }
    }

    /// Assembles `sum_b w_b (v(head) - v(tail)) (w(head) - w(tail))` for the
    /// per-bond weights produced by `weight`.
    pub fn assemble(
        &self,
        bonds: &[Bond],
        mut weight: impl FnMut(usize, &Bond) -> f64,
        out: &mut CscMatrix,
    ) {
        assert_eq!(bonds.len(), self.slots.len());
        assert_eq!(out.values.len(), self.row_idx.len());
        out.values.fill(0.0);
        for (b, bond) in bonds.iter().enumerate() {
            let w = weight(b, bond);
            if w == 0.0 {
                continue;
            }
            let s = self.slots[b];
            if s.tt != NO_SLOT {
                out.values[s.tt as usize] += w;
            }
            if s.hh != NO_SLOT {
                out.values[s.hh as usize] += w;
            }
            if s.th != NO_SLOT {
                out.values[s.th as usize] -= w;
            }
            if s.ht != NO_SLOT {
                out.values[s.ht as usize] -= w;
            }
        }
    }
}

/// Assembly buffer for the bordered system `[A b; c^T d]`.
///
/// The pattern is the operator pattern with a dense final row and column, so
/// one symbolic factorization serves every tangent and corrector solve.
pub struct BorderedMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl BorderedMatrix {
    pub fn new(plan: &OperatorPlan) -> BorderedMatrix {
        let n = plan.n;
        let mut col_ptr = Vec::with_capacity(n + 2);
        let mut row_idx = Vec::with_capacity(plan.row_idx.len() + 2 * n + 1);
        col_ptr.push(0);
        for j in 0..n {
            row_idx.extend_from_slice(&plan.row_idx[plan.col_ptr[j]..plan.col_ptr[j + 1]]);
            row_idx.push(n);
            col_ptr.push(row_idx.len());
        }
        row_idx.extend(0..=n);
        col_ptr.push(row_idx.len());
        let values = vec![0.0; row_idx.len()];
        BorderedMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Fills the numeric values from the `n x n` block `a`, border column
    /// `b`, border row `c`, and corner `d`.
    pub fn fill(&mut self, a: &CscMatrix, b: &[f64], c: &[f64], d: f64) {
        let n = self.n;
        assert_eq!(a.n, n);
        assert_eq!(b.len(), n);
        assert_eq!(c.len(), n);
        let mut p = 0;
        for j in 0..n {
            let width = a.col_ptr[j + 1] - a.col_ptr[j];
            self.values[p..p + width].copy_from_slice(&a.values[a.col_ptr[j]..a.col_ptr[j + 1]]);
            self.values[p + width] = c[j];
            p += width + 1;
        }
        self.values[p..p + n].copy_from_slice(b);
        self.values[p + n] = d;
    }

    pub fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(
            self.n + 1,
            self.n + 1,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        SparseColMatRef::new(symbolic, &self.values)
    }

    /// `y = M x` for the currently filled values.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n + 1);
        assert_eq!(y.len(), self.n + 1);
        y.fill(0.0);
        for j in 0..=self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Domain;

    #[test]
    fn gram_assembly_matches_direct_application() {
        let domain = Domain::build(4.0).unwrap();
        let plan = OperatorPlan::new(&domain);
        let mut gram = plan.empty_matrix();
        plan.assemble(
            domain.bonds(),
            |_, bond| if bond.crack { 0.0 } else { 1.0 },
            &mut gram,
        );

        let mut u = domain.zero_field();
        for (i, v) in u.values_mut().iter_mut().enumerate() {
            *v = ((i * 31) % 17) as f64 / 17.0 - 0.4;
        }
        let direct = domain.gram_apply(&u);
        let mut via_matrix = vec![0.0; domain.len()];
        gram.matvec(u.values(), &mut via_matrix);
        for (a, b) in direct.values().iter().zip(&via_matrix) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(gram.max_asymmetry(), 0.0);
    }

    #[test]
    fn bordered_fill_layout() {
        let domain = Domain::build(2.0).unwrap();
        let plan = OperatorPlan::new(&domain);
        let mut a = plan.empty_matrix();
        plan.assemble(domain.bonds(), |_, _| 1.0, &mut a);
        let n = a.n();
        let b = vec![2.0; n];
        let c: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut bordered = BorderedMatrix::new(&plan);
        bordered.fill(&a, &b, &c, -7.0);

        let dense = {
            let view = bordered.as_faer();
            let mut out = faer::Mat::<f64>::zeros(n + 1, n + 1);
            for j in 0..n + 1 {
                for (i, v) in view.row_idx_of_col(j).zip(view.val_of_col(j)) {
                    out[(i, j)] = *v;
                }
            }
            out
        };
        let a_dense = a.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(dense[(i, j)], a_dense[(i, j)]);
            }
            assert_eq!(dense[(i, n)], 2.0);
            assert_eq!(dense[(n, i)], i as f64);
        }
        assert_eq!(dense[(n, n)], -7.0);
    }
}
