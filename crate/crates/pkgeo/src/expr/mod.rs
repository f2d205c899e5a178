//! Expression DSL: parsing, symbolic differentiation, evaluation.
//!
//! Every smooth quantity in the library (conformal factors, potentials,
//! curve components, Hamiltonians) flows through [`ScalarField`], so all
//! derivatives used by the geometry are exact symbolic partials rather
//! than finite differences.

pub mod ast;
mod field;
mod parser;

pub use ast::{
    add, call, cst, diff, div, eval, eval_memo, free_identifiers, mul, neg, pow, simplify,
    sub, substitute, var, Env, EvalError, Expr, Func,
};
pub use field::{FieldError, Jet, ScalarField, MAX_JET_ORDER};
pub use parser::{parse, ParseError};
