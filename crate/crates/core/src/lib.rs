//! Atomistic anti-plane crack equilibration on the 2D square lattice, with
//! pseudo-arclength continuation of the snaking bifurcation diagram in the
//! stress intensity factor.
//!
//! The crate is organised around five layers:
//!
//! * [`lattice`] — cracked-lattice geometry, finite domains, discrete
//!   gradients and the crack-aware inner product;
//! * [`model`] — the pair potential, the continuum crack predictor, and the
//!   energy-difference functional with its variations;
//! * [`solvers`] — Newton equilibration, bordered linear solves, and the
//!   smallest generalized eigenpair for stability classification;
//! * [`continuation`] — pseudo-arclength path tracing, fold detection and
//!   fold refinement with nondegeneracy certification;
//! * [`analysis`] — decay envelopes, Hausdorff path distances, power-law
//!   fits, Richardson extrapolation and the finite-cell convergence study.

pub mod analysis;
pub mod continuation;
pub mod lattice;
pub mod model;
pub mod report;
pub mod solvers;
pub mod sparse;

pub use continuation::{ContinuationConfig, FoldRecord, PathPoint, Stability, Trace};
pub use lattice::{Bond, Direction, Domain, DomainSummary, Field, LatticeError, SiteIndex};
pub use model::{CrackModel, ModelState, PairPotential, Predictor};
pub use solvers::{EigenPair, NewtonReport, Solver, SolverError};
pub use sparse::CscMatrix;
