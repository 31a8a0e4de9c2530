//! Normal forms of second-order ordinary differential equations
//! `y_xx = J(x, y, y_x)` under fibre-preserving point transformations
//! `(x, y) -> (phi(x), psi(x, y))`, computed on truncated formal power
//! series with exact rational arithmetic.
//!
//! The crate provides:
//!
//! * [`series`]: sparse truncated power series in `x`, `y`, `p = y_x` over
//!   exact rationals, graded by the weight `w(x^i y^j p^k) = i + 2j + k`,
//!   with sound order bookkeeping for every operation;
//! * [`jet`]: fibre-preserving maps, their second prolongation, the action
//!   on equations, infinitesimal symmetries and their flows;
//! * [`invariants`]: the normal-form conditions, the three relative
//!   invariants whose vanishing characterizes trivializable equations, and
//!   the flatness test;
//! * [`homology`]: the graded stage-by-stage normalization that realizes
//!   the normal form degree by degree, together with the kernel of the
//!   linearized action;
//! * [`ck`]: an alternative normalization pipeline built from four
//!   initial-value problems, used to cross-check the staged one;
//! * [`gen`]: seeded random generators for series, equations, and maps,
//!   shared by the test suites and the command-line tool.

pub mod ck;
pub mod error;
pub mod gen;
pub mod homology;
pub mod invariants;
pub mod jet;
pub mod rat;
pub mod series;

pub use error::{Error, Result};
pub use rat::Rat;
pub use series::{Series, Validity, Var, VarSet};
