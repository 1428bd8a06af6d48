//! Numerical toolkit for the one-phase Bernoulli (Alt-Caffarelli) free boundary
//! problem on regular grids.
//!
//! The crate is organized around one pipeline:
//!
//! * [`field`]: grid-sampled scalar fields, discrete calculus, ball and sphere
//!   quadrature, graph-dilation rescaling, free boundary extraction.
//! * [`solver`]: minimization of the discrete energy
//!   `J(u) = ∫ |Du|² + Q² 1_{u>0}` by nodal coordinate descent, plus solution
//!   quality audits (harmonicity, nondegeneracy, Lipschitz bound).
//! * [`weiss`]: Weiss density profiles, monotonicity defect audits, and the
//!   density based regular/singular point classification.
//! * [`strata`]: quantitative symmetry testing and effective stratum
//!   membership for free boundary points.
//! * [`jones`]: discrete measures, beta numbers by second-moment
//!   eigendecomposition with a brute-force oracle, Dini sums, and the discrete
//!   Reifenberg packing check.
//! * [`corona`]: the good/bad ball stopping-time trees, tree alternation, the
//!   key packing cover, and the refinement iteration, each with verifiable
//!   covering, packing, and energy-drop certificates.
//! * [`io`]: CSV/JSON serialization for fields, measures, and reports.

pub mod corona;
pub mod error;
pub mod field;
pub mod geom;
pub mod io;
pub mod jones;
pub mod solver;
pub mod strata;
pub mod weiss;

pub use error::{Error, Result};
