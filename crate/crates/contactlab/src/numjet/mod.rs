//! Expression parsing, second-order forward differentiation, and the small
//! dense metric linear algebra shared by the geometry modules.
//!
//! Everything here is immutable after construction and evaluation is pure,
//! so concurrent use needs no synchronization.

mod expr;
mod jet;
mod linalg;

pub use expr::{parse_expr, parse_expr_named, ExprNode, ParseError, UnaryFn};
pub use jet::{eval_jet2, eval_value, eval_with, EvalError, Jet2};
pub use linalg::{
    complete_basis, g_dot, g_norm, invert_jet_matrix, max_abs, max_abs_vec, metric_project,
    orthonormalize, spd_cholesky, ORTHO_TOL, RANK_TOL,
};
