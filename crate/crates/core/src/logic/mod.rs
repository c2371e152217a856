//! Formulas over linear comparison atoms and a sound, incomplete validity
//! checker for universally quantified implications.

mod formula;
mod grid;
mod prover;

pub use formula::{param_var, prime, Assignment, Atom, Formula, LinExpr, Term, Universe};
pub use grid::{grid_counterexample, grid_validity_oracle};
pub use prover::{is_valid, Verdict, DNF_LIMIT};
