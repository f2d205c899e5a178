//! Expression trees: construction, simplification, differentiation,
//! substitution and evaluation.
//!
//! Trees are immutable and shared through `Arc`; repeated differentiation
//! produces heavily shared DAGs, so evaluation memoizes on node identity.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Built-in unary functions of the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Atan => x.atan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Abs => x.abs(),
        }
    }
}

/// A node of the expression DSL.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Arc<str>),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

/// Evaluation failure; carries the offending subexpression in printed form.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("domain error: {what} in `{subexpr}`")]
    Domain { what: &'static str, subexpr: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) => Some(*v),
        _ => None,
    }
}

pub fn cst(v: f64) -> Arc<Expr> {
    Arc::new(Expr::Const(v))
}

pub fn var(name: &str) -> Arc<Expr> {
    Arc::new(Expr::Var(Arc::from(name)))
}

/// Smart constructors fold constants and drop identity operands so that
/// derivative trees stay compact. They deliberately do not attempt a
/// canonical form: correctness downstream is by evaluation, not by shape.
pub fn add(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        return cst(x + y);
    }
    if as_const(&a) == Some(0.0) {
        return b;
    }
    if as_const(&b) == Some(0.0) {
        return a;
    }
    Arc::new(Expr::Add(a, b))
}

pub fn sub(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        return cst(x - y);
    }
    if as_const(&b) == Some(0.0) {
        return a;
    }
    if as_const(&a) == Some(0.0) {
        return neg(b);
    }
    if Arc::ptr_eq(&a, &b) {
        return cst(0.0);
    }
    Arc::new(Expr::Sub(a, b))
}

pub fn mul(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        let v = x * y;
        if v.is_finite() {
            return cst(v);
        }
    }
    match as_const(&a) {
        Some(v) if v == 0.0 => return cst(0.0),
        Some(v) if v == 1.0 => return b,
        Some(v) if v == -1.0 => return neg(b),
        _ => {}
    }
    match as_const(&b) {
        Some(v) if v == 0.0 => return cst(0.0),
        Some(v) if v == 1.0 => return a,
        Some(v) if v == -1.0 => return neg(a),
        _ => {}
    }
    Arc::new(Expr::Mul(a, b))
}

pub fn div(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if y != 0.0 {
            return cst(x / y);
        }
    }
    if as_const(&b) == Some(1.0) {
        return a;
    }
    if as_const(&b) == Some(-1.0) {
        return neg(a);
    }
    if as_const(&a) == Some(0.0) {
        return cst(0.0);
    }
    Arc::new(Expr::Div(a, b))
}

pub fn pow(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        let v = x.powf(y);
        if v.is_finite() {
            return cst(v);
        }
    }
    match as_const(&b) {
        Some(v) if v == 1.0 => return a,
        Some(v) if v == 0.0 => return cst(1.0),
        _ => {}
    }
    if as_const(&a) == Some(1.0) {
        return cst(1.0);
    }
    Arc::new(Expr::Pow(a, b))
}

pub fn neg(a: Arc<Expr>) -> Arc<Expr> {
    if let Some(x) = as_const(&a) {
        return cst(-x);
    }
    if let Expr::Neg(inner) = &*a {
        return inner.clone();
    }
    Arc::new(Expr::Neg(a))
}

pub fn call(f: Func, a: Arc<Expr>) -> Arc<Expr> {
    if let Some(x) = as_const(&a) {
        let v = f.apply(x);
        // Out-of-domain constants are kept symbolic so that evaluation
        // reports them as domain errors instead of silently folding NaN.
        if v.is_finite() {
            return cst(v);
        }
    }
    Arc::new(Expr::Call(f, a))
}

/// Symbolic partial derivative with respect to the named variable.
/// Memoized over node identity, so shared subexpressions are
/// differentiated once and the result keeps the input's DAG sharing.
pub fn diff(e: &Arc<Expr>, v: &str) -> Arc<Expr> {
    diff_memo(e, v, &mut HashMap::new())
}

fn diff_memo(e: &Arc<Expr>, v: &str, memo: &mut HashMap<usize, Arc<Expr>>) -> Arc<Expr> {
    let key = Arc::as_ptr(e) as usize;
    if let Some(d) = memo.get(&key) {
        return d.clone();
    }
    let out = match &**e {
        Expr::Const(_) => cst(0.0),
        Expr::Var(name) => cst(if &**name == v { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff_memo(a, v, memo)),
        Expr::Add(a, b) => add(diff_memo(a, v, memo), diff_memo(b, v, memo)),
        Expr::Sub(a, b) => sub(diff_memo(a, v, memo), diff_memo(b, v, memo)),
        Expr::Mul(a, b) => add(
            mul(diff_memo(a, v, memo), b.clone()),
            mul(a.clone(), diff_memo(b, v, memo)),
        ),
        Expr::Div(a, b) => div(
            sub(
                mul(diff_memo(a, v, memo), b.clone()),
                mul(a.clone(), diff_memo(b, v, memo)),
            ),
            mul(b.clone(), b.clone()),
        ),
        Expr::Pow(base, exp) => {
            if let Some(c) = as_const(exp) {
                // d/dv base^c = c * base^(c-1) * base'; avoids introducing
                // log(base) for negative bases with integer exponents.
                mul(
                    mul(cst(c), pow(base.clone(), cst(c - 1.0))),
                    diff_memo(base, v, memo),
                )
            } else {
                mul(
                    e.clone(),
                    add(
                        mul(diff_memo(exp, v, memo), call(Func::Log, base.clone())),
                        mul(exp.clone(), div(diff_memo(base, v, memo), base.clone())),
                    ),
                )
            }
        }
        Expr::Call(f, a) => {
            let outer = match f {
                Func::Sin => call(Func::Cos, a.clone()),
                Func::Cos => neg(call(Func::Sin, a.clone())),
                Func::Tan => add(
                    cst(1.0),
                    mul(call(Func::Tan, a.clone()), call(Func::Tan, a.clone())),
                ),
                Func::Atan => div(cst(1.0), add(cst(1.0), mul(a.clone(), a.clone()))),
                Func::Exp => call(Func::Exp, a.clone()),
                Func::Log => div(cst(1.0), a.clone()),
                Func::Sqrt => div(cst(0.5), call(Func::Sqrt, a.clone())),
                Func::Sinh => call(Func::Cosh, a.clone()),
                Func::Cosh => call(Func::Sinh, a.clone()),
                // sign(x) written as x/|x|; differentiating |x| at 0 then
                // surfaces as a division-by-zero domain error.
                Func::Abs => div(a.clone(), call(Func::Abs, a.clone())),
            };
            mul(outer, diff_memo(a, v, memo))
        }
    };
    memo.insert(key, out.clone());
    out
}

/// Variable binding for evaluation: parallel name/value slices.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub names: &'a [Arc<str>],
    pub values: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn lookup(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| &**n == name)
            .map(|i| self.values[i])
    }
}

/// Evaluate with memoization over shared nodes. `memo` is keyed by node
/// identity and must be fresh for each (expression, point) pair.
pub fn eval_memo(
    e: &Arc<Expr>,
    env: &Env,
    memo: &mut HashMap<usize, f64>,
) -> Result<f64, EvalError> {
    let key = Arc::as_ptr(e) as usize;
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    let value = match &**e {
        Expr::Const(v) => *v,
        Expr::Var(name) => env
            .lookup(name)
            .ok_or_else(|| EvalError::UnknownIdentifier(name.to_string()))?,
        Expr::Neg(a) => -eval_memo(a, env, memo)?,
        Expr::Add(a, b) => eval_memo(a, env, memo)? + eval_memo(b, env, memo)?,
        Expr::Sub(a, b) => eval_memo(a, env, memo)? - eval_memo(b, env, memo)?,
        Expr::Mul(a, b) => eval_memo(a, env, memo)? * eval_memo(b, env, memo)?,
        Expr::Div(a, b) => {
            let num = eval_memo(a, env, memo)?;
            let den = eval_memo(b, env, memo)?;
            if den == 0.0 {
                return Err(EvalError::Domain {
                    what: "division by zero",
                    subexpr: e.to_string(),
                });
            }
            num / den
        }
        Expr::Pow(a, b) => {
            let base = eval_memo(a, env, memo)?;
            let exp = eval_memo(b, env, memo)?;
            if base == 0.0 && exp < 0.0 {
                return Err(EvalError::Domain {
                    what: "zero raised to a negative power",
                    subexpr: e.to_string(),
                });
            }
            if base < 0.0 && exp.fract() != 0.0 {
                return Err(EvalError::Domain {
                    what: "negative base with non-integer exponent",
                    subexpr: e.to_string(),
                });
            }
            base.powf(exp)
        }
        Expr::Call(f, a) => {
            let x = eval_memo(a, env, memo)?;
            match f {
                Func::Log if x <= 0.0 => {
                    return Err(EvalError::Domain {
                        what: "logarithm of a non-positive value",
                        subexpr: e.to_string(),
                    });
                }
                Func::Sqrt if x < 0.0 => {
                    return Err(EvalError::Domain {
                        what: "square root of a negative value",
                        subexpr: e.to_string(),
                    });
                }
                _ => {}
            }
            f.apply(x)
        }
    };
    if !value.is_finite() {
        return Err(EvalError::Domain {
            what: "non-finite value",
            subexpr: e.to_string(),
        });
    }
    memo.insert(key, value);
    Ok(value)
}

/// One-shot evaluation of a small expression.
pub fn eval(e: &Arc<Expr>, env: &Env) -> Result<f64, EvalError> {
    eval_memo(e, env, &mut HashMap::new())
}

/// Replace every occurrence of a variable by an expression, preserving
/// node sharing of the host tree.
pub fn substitute(e: &Arc<Expr>, name: &str, replacement: &Arc<Expr>) -> Arc<Expr> {
    let mut memo: HashMap<usize, Arc<Expr>> = HashMap::new();
    substitute_memo(e, name, replacement, &mut memo)
}

fn substitute_memo(
    e: &Arc<Expr>,
    name: &str,
    replacement: &Arc<Expr>,
    memo: &mut HashMap<usize, Arc<Expr>>,
) -> Arc<Expr> {
    let key = Arc::as_ptr(e) as usize;
    if let Some(done) = memo.get(&key) {
        return done.clone();
    }
    let out = match &**e {
        Expr::Const(_) => e.clone(),
        Expr::Var(n) => {
            if &**n == name {
                replacement.clone()
            } else {
                e.clone()
            }
        }
        Expr::Neg(a) => neg(substitute_memo(a, name, replacement, memo)),
        Expr::Add(a, b) => add(
            substitute_memo(a, name, replacement, memo),
            substitute_memo(b, name, replacement, memo),
        ),
        Expr::Sub(a, b) => sub(
            substitute_memo(a, name, replacement, memo),
            substitute_memo(b, name, replacement, memo),
        ),
        Expr::Mul(a, b) => mul(
            substitute_memo(a, name, replacement, memo),
            substitute_memo(b, name, replacement, memo),
        ),
        Expr::Div(a, b) => div(
            substitute_memo(a, name, replacement, memo),
            substitute_memo(b, name, replacement, memo),
        ),
        Expr::Pow(a, b) => pow(
            substitute_memo(a, name, replacement, memo),
            substitute_memo(b, name, replacement, memo),
        ),
        Expr::Call(f, a) => call(*f, substitute_memo(a, name, replacement, memo)),
    };
    memo.insert(key, out.clone());
    out
}

/// Bottom-up rebuild through the smart constructors (constant folding,
/// identity elimination). Best-effort only; no canonical form.
pub fn simplify(e: &Arc<Expr>) -> Arc<Expr> {
    let mut memo: HashMap<usize, Arc<Expr>> = HashMap::new();
    simplify_memo(e, &mut memo)
}

fn simplify_memo(e: &Arc<Expr>, memo: &mut HashMap<usize, Arc<Expr>>) -> Arc<Expr> {
    let key = Arc::as_ptr(e) as usize;
    if let Some(done) = memo.get(&key) {
        return done.clone();
    }
    let out = match &**e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => neg(simplify_memo(a, memo)),
        Expr::Add(a, b) => add(simplify_memo(a, memo), simplify_memo(b, memo)),
        Expr::Sub(a, b) => sub(simplify_memo(a, memo), simplify_memo(b, memo)),
        Expr::Mul(a, b) => mul(simplify_memo(a, memo), simplify_memo(b, memo)),
        Expr::Div(a, b) => div(simplify_memo(a, memo), simplify_memo(b, memo)),
        Expr::Pow(a, b) => pow(simplify_memo(a, memo), simplify_memo(b, memo)),
        Expr::Call(f, a) => call(*f, simplify_memo(a, memo)),
    };
    memo.insert(key, out.clone());
    out
}

/// Collect free identifiers (variables and unbound parameters).
pub fn free_identifiers(e: &Expr, out: &mut std::collections::BTreeSet<String>) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(n) => {
            out.insert(n.to_string());
        }
        Expr::Neg(a) | Expr::Call(_, a) => free_identifiers(a, out),
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Div(a, b)
        | Expr::Pow(a, b) => {
            free_identifiers(a, out);
            free_identifiers(b, out);
        }
    }
}

// Printing precedence levels; `write_prec` parenthesizes a child whenever
// its level is below the context the parent demands.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(v) if *v < 0.0 => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn write_prec(e: &Expr, ctx: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(e);
    if p < ctx {
        write!(f, "(")?;
    }
    match e {
        Expr::Const(v) => write!(f, "{}", v)?,
        Expr::Var(n) => write!(f, "{}", n)?,
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_prec(a, 4, f)?;
        }
        Expr::Add(a, b) => {
            write_prec(a, 1, f)?;
            write!(f, " + ")?;
            write_prec(b, 2, f)?;
        }
        Expr::Sub(a, b) => {
            write_prec(a, 1, f)?;
            write!(f, " - ")?;
            write_prec(b, 2, f)?;
        }
        Expr::Mul(a, b) => {
            write_prec(a, 2, f)?;
            write!(f, " * ")?;
            write_prec(b, 3, f)?;
        }
        Expr::Div(a, b) => {
            write_prec(a, 2, f)?;
            write!(f, " / ")?;
            write_prec(b, 3, f)?;
        }
        Expr::Pow(a, b) => {
            write_prec(a, 5, f)?;
            write!(f, "^")?;
            write_prec(b, 4, f)?;
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_prec(a, 1, f)?;
            write!(f, ")")?;
        }
    }
    if p < ctx {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, 0, f)
    }
}
