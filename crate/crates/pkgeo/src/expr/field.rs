//! Scalar fields: a parsed expression over an ordered variable list, with
//! cached symbolic partial derivatives up to total order four.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::ast::{self, Env, EvalError, Expr};
use super::parser::{self, ParseError};

/// Cached partials stop at this total order; everything the curvature
/// pipeline needs (Hamiltonian-stationarity of gradient graphs) is order 4.
pub const MAX_JET_ORDER: u8 = 4;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown identifier `{0}` (not a variable or bound parameter)")]
    UnknownIdentifier(String),
    #[error("derivative order {requested} exceeds the cached maximum {max}")]
    Order { requested: u8, max: u8 },
    #[error("field over {vars} variable(s) evaluated with {given} value(s)")]
    Arity { vars: usize, given: usize },
}

/// A smooth map of one or two real variables backed by an expression AST.
///
/// Parameters are bound at construction; re-binding means building a new
/// field. The derivative cache is populated lazily behind a mutex, so a
/// field can be shared across threads.
pub struct ScalarField {
    ast: Arc<Expr>,
    vars: Vec<Arc<str>>,
    cache: Mutex<HashMap<(u8, u8), Arc<Expr>>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({} ; vars {:?})", self.ast, self.vars)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ast)
    }
}

impl Clone for ScalarField {
    fn clone(&self) -> Self {
        let snapshot = self.cache.lock().unwrap().clone();
        ScalarField {
            ast: self.ast.clone(),
            vars: self.vars.clone(),
            cache: Mutex::new(snapshot),
        }
    }
}

impl ScalarField {
    /// Parse `text` over the ordered variable list, binding every named
    /// parameter to its value. Any leftover identifier is rejected.
    pub fn new(
        text: &str,
        vars: &[&str],
        params: &[(&str, f64)],
    ) -> Result<Self, FieldError> {
        let ast = parser::parse(text)?;
        Self::from_ast(ast, vars, params)
    }

    /// Wrap an already-built AST. Same identifier validation as `new`.
    pub fn from_ast(
        ast: Arc<Expr>,
        vars: &[&str],
        params: &[(&str, f64)],
    ) -> Result<Self, FieldError> {
        let mut bound = ast;
        for (name, value) in params {
            bound = ast::substitute(&bound, name, &ast::cst(*value));
        }
        let mut free = BTreeSet::new();
        ast::free_identifiers(&bound, &mut free);
        for name in &free {
            if !vars.iter().any(|v| v == name) {
                return Err(FieldError::UnknownIdentifier(name.clone()));
            }
        }
        Ok(ScalarField {
            ast: bound,
            vars: vars.iter().map(|v| Arc::from(*v)).collect(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Constant field (no variables read).
    pub fn constant(value: f64, vars: &[&str]) -> Self {
        ScalarField {
            ast: ast::cst(value),
            vars: vars.iter().map(|v| Arc::from(*v)).collect(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn ast(&self) -> &Arc<Expr> {
        &self.ast
    }

    pub fn vars(&self) -> &[Arc<str>] {
        &self.vars
    }

    /// Cached AST of ∂^{i+j} / ∂v₀^i ∂v₁^j, built by differentiating in the
    /// first variable first. Total order is capped at `MAX_JET_ORDER`.
    pub fn derivative_ast(&self, i: u8, j: u8) -> Result<Arc<Expr>, FieldError> {
        let order = i + j;
        if order > MAX_JET_ORDER {
            return Err(FieldError::Order {
                requested: order,
                max: MAX_JET_ORDER,
            });
        }
        if j > 0 && self.vars.len() < 2 {
            return Err(FieldError::Arity {
                vars: self.vars.len(),
                given: 2,
            });
        }
        if order == 0 {
            return Ok(self.ast.clone());
        }
        let mut cache = self.cache.lock().unwrap();
        Ok(self.derivative_locked(&mut cache, i, j))
    }

    fn derivative_locked(
        &self,
        cache: &mut HashMap<(u8, u8), Arc<Expr>>,
        i: u8,
        j: u8,
    ) -> Arc<Expr> {
        if i == 0 && j == 0 {
            return self.ast.clone();
        }
        if let Some(hit) = cache.get(&(i, j)) {
            return hit.clone();
        }
        let built = if i > 0 {
            let lower = self.derivative_locked(cache, i - 1, j);
            ast::diff(&lower, &self.vars[0])
        } else {
            let lower = self.derivative_locked(cache, i, j - 1);
            ast::diff(&lower, &self.vars[1])
        };
        cache.insert((i, j), built.clone());
        built
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, FieldError> {
        self.eval_derivative(0, 0, point)
    }

    /// Evaluate ∂^{i+j} at `point`.
    pub fn eval_derivative(&self, i: u8, j: u8, point: &[f64]) -> Result<f64, FieldError> {
        if point.len() != self.vars.len() {
            return Err(FieldError::Arity {
                vars: self.vars.len(),
                given: point.len(),
            });
        }
        let d = self.derivative_ast(i, j)?;
        let env = Env {
            names: &self.vars,
            values: point,
        };
        Ok(ast::eval_memo(&d, &env, &mut HashMap::new())?)
    }

    /// All partials of total order ≤ `order` at `point`. Mixed partials are
    /// symmetric because the cache differentiates in a fixed variable order.
    pub fn jet(&self, point: &[f64], order: u8) -> Result<Jet, FieldError> {
        if order > MAX_JET_ORDER {
            return Err(FieldError::Order {
                requested: order,
                max: MAX_JET_ORDER,
            });
        }
        let mut jet = Jet {
            order,
            partials: [[f64::NAN; 5]; 5],
        };
        let two_vars = self.vars.len() >= 2;
        for i in 0..=order {
            for j in 0..=(order - i) {
                if j > 0 && !two_vars {
                    continue;
                }
                jet.partials[i as usize][j as usize] =
                    self.eval_derivative(i, j, point)?;
            }
        }
        Ok(jet)
    }

    /// New field with each variable replaced by an expression over
    /// `new_vars`. Used for coordinate changes and curve composition.
    pub fn substituted(
        &self,
        subs: &[(&str, Arc<Expr>)],
        new_vars: &[&str],
    ) -> Result<ScalarField, FieldError> {
        // Two-phase rename so a swap like (s -> t, t -> s) cannot capture.
        let mut tmp = self.ast.clone();
        for (k, (name, _)) in subs.iter().enumerate() {
            let placeholder = format!("__subst_{}", k);
            tmp = ast::substitute(&tmp, name, &ast::var(&placeholder));
        }
        for (k, (_, replacement)) in subs.iter().enumerate() {
            let placeholder = format!("__subst_{}", k);
            tmp = ast::substitute(&tmp, &placeholder, replacement);
        }
        ScalarField::from_ast(tmp, new_vars, &[])
    }
}

/// Table of partial derivative values at a point.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    order: u8,
    partials: [[f64; 5]; 5],
}

impl Jet {
    /// ∂^{i+j}u / ∂v₀^i ∂v₁^j. Panics when (i, j) was not requested.
    pub fn partial(&self, i: u8, j: u8) -> f64 {
        assert!(
            i + j <= self.order,
            "jet of order {} queried at ({}, {})",
            self.order,
            i,
            j
        );
        self.partials[i as usize][j as usize]
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    /// Zero jet of the given order, for accumulating linear combinations.
    pub fn zero(order: u8) -> Jet {
        assert!(order <= MAX_JET_ORDER);
        Jet {
            order,
            partials: [[0.0; 5]; 5],
        }
    }

    /// self += scale·other on the common order range (jets are linear in
    /// the underlying field, so this is the jet of the combined field).
    pub fn add_scaled(&mut self, scale: f64, other: &Jet) {
        self.order = self.order.min(other.order);
        for i in 0..=self.order as usize {
            for j in 0..=(self.order as usize - i) {
                self.partials[i][j] += scale * other.partials[i][j];
            }
        }
    }
}
