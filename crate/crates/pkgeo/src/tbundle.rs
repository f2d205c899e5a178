//! The pseudo-Kähler structure on the tangent bundle TΣ.
//!
//! A tangent vector of TΣ at (p, V) is stored in its connection splitting
//! as a pair (horizontal, vertical) of vectors at p. In that splitting:
//!
//! * the complex structure acts diagonally, 𝕁(A, B) = (jA, jB);
//! * the symplectic form is Ω((A,B),(C,D)) = g(B,C) − g(A,D);
//! * the neutral metric is the composite 𝔾 = Ω(𝕁·,·), which has
//!   signature (2, 2) everywhere.
//!
//! The Levi-Civita connection of 𝔾 mixes the splitting through the base
//! curvature; `levi_civita` evaluates it on projectable fields (fields
//! whose horizontal and vertical parts come from vector fields on Σ).
//! The residual functions at the bottom exist so that torsion-freeness,
//! metric compatibility, D𝕁 = 0, dΩ = 0, and the vanishing Nijenhuis
//! tensor can each be checked numerically at arbitrary points.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{Matrix4, Vector2};

use crate::basegeo::{jrot, ConformalChart, GeomError};
use crate::expr::{self, Expr, ScalarField};

type V2 = Vector2<f64>;

/// A point of TΣ: base position plus the fiber vector, chart components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TBPoint {
    pub pos: V2,
    pub fiber: V2,
}

impl TBPoint {
    pub fn new(pos: V2, fiber: V2) -> TBPoint {
        TBPoint { pos, fiber }
    }
}

/// Tangent vector of TΣ in the connection splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitTangent {
    /// Horizontal part: the pushforward to the base.
    pub h: V2,
    /// Vertical part: the covariant fiber derivative.
    pub v: V2,
}

impl SplitTangent {
    pub fn new(h: V2, v: V2) -> SplitTangent {
        SplitTangent { h, v }
    }

    pub fn zero() -> SplitTangent {
        SplitTangent {
            h: V2::zeros(),
            v: V2::zeros(),
        }
    }
}

impl Add for SplitTangent {
    type Output = SplitTangent;
    fn add(self, o: SplitTangent) -> SplitTangent {
        SplitTangent::new(self.h + o.h, self.v + o.v)
    }
}

impl Sub for SplitTangent {
    type Output = SplitTangent;
    fn sub(self, o: SplitTangent) -> SplitTangent {
        SplitTangent::new(self.h - o.h, self.v - o.v)
    }
}

impl Neg for SplitTangent {
    type Output = SplitTangent;
    fn neg(self) -> SplitTangent {
        SplitTangent::new(-self.h, -self.v)
    }
}

impl Mul<f64> for SplitTangent {
    type Output = SplitTangent;
    fn mul(self, c: f64) -> SplitTangent {
        SplitTangent::new(self.h * c, self.v * c)
    }
}

/// 𝕁(A, B) = (jA, jB); exact (integer rotation of components).
pub fn jmap(x: SplitTangent) -> SplitTangent {
    SplitTangent::new(jrot(x.h), jrot(x.v))
}

/// Ω((A,B),(C,D)) = g(B,C) − g(A,D).
pub fn omega(
    chart: &ConformalChart,
    at: TBPoint,
    x: SplitTangent,
    y: SplitTangent,
) -> Result<f64, GeomError> {
    let f = chart.conformal_factor(at.pos)?;
    Ok(f * (x.v.dot(&y.h) - x.h.dot(&y.v)))
}

/// 𝔾(X, Y) = Ω(𝕁X, Y), a symmetric metric of signature (2, 2).
pub fn gmetric(
    chart: &ConformalChart,
    at: TBPoint,
    x: SplitTangent,
    y: SplitTangent,
) -> Result<f64, GeomError> {
    omega(chart, at, jmap(x), y)
}

/// 𝔾-norm-like scale: √(g(A,A) + g(B,B)); positive definite, used to
/// normalize residuals (𝔾 itself is indefinite).
pub fn split_gnorm(
    chart: &ConformalChart,
    at: TBPoint,
    x: SplitTangent,
) -> Result<f64, GeomError> {
    let f = chart.conformal_factor(at.pos)?;
    Ok((f * (x.h.dot(&x.h) + x.v.dot(&x.v))).sqrt())
}

/// Gram matrix of 𝔾 in the frame (H_s, H_t, V_s, V_t).
pub fn gram_matrix(chart: &ConformalChart, at: TBPoint) -> Result<Matrix4<f64>, GeomError> {
    let e = [
        SplitTangent::new(V2::new(1.0, 0.0), V2::zeros()),
        SplitTangent::new(V2::new(0.0, 1.0), V2::zeros()),
        SplitTangent::new(V2::zeros(), V2::new(1.0, 0.0)),
        SplitTangent::new(V2::zeros(), V2::new(0.0, 1.0)),
    ];
    let mut m = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = gmetric(chart, at, e[i], e[j])?;
        }
    }
    Ok(m)
}

/// (positive, negative) inertia of 𝔾 at a point, by symmetric
/// eigendecomposition of the Gram matrix.
pub fn signature(chart: &ConformalChart, at: TBPoint) -> Result<(usize, usize), GeomError> {
    let m = gram_matrix(chart, at)?;
    let eig = m.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let mut pos = 0;
    let mut negv = 0;
    for l in eig.eigenvalues.iter() {
        if *l > 1e-12 * scale {
            pos += 1;
        } else if *l < -1e-12 * scale {
            negv += 1;
        }
    }
    Ok((pos, negv))
}

/// Vector field on TΣ whose splitting parts are vector fields on Σ:
/// X_{(p,V)} = (A(p), B(p)). Constant-coefficient frames, lifts of base
/// fields, and everything the structure checks need are of this form.
#[derive(Debug, Clone)]
pub struct ProjectableField {
    a: [ScalarField; 2],
    b: [ScalarField; 2],
}

impl ProjectableField {
    pub fn new(
        a: (&str, &str),
        b: (&str, &str),
        params: &[(&str, f64)],
    ) -> Result<ProjectableField, GeomError> {
        let mk = |t: &str| ScalarField::new(t, &["s", "t"], params);
        Ok(ProjectableField {
            a: [mk(a.0)?, mk(a.1)?],
            b: [mk(b.0)?, mk(b.1)?],
        })
    }

    pub fn from_fields(a: [ScalarField; 2], b: [ScalarField; 2]) -> ProjectableField {
        ProjectableField { a, b }
    }

    pub fn constant(a: V2, b: V2) -> ProjectableField {
        let c = |v: f64| ScalarField::constant(v, &["s", "t"]);
        ProjectableField {
            a: [c(a.x), c(a.y)],
            b: [c(b.x), c(b.y)],
        }
    }

    pub fn value(&self, p: V2) -> Result<SplitTangent, GeomError> {
        Ok(SplitTangent::new(
            V2::new(self.a[0].eval(&[p.x, p.y])?, self.a[1].eval(&[p.x, p.y])?),
            V2::new(self.b[0].eval(&[p.x, p.y])?, self.b[1].eval(&[p.x, p.y])?),
        ))
    }

    /// 𝕁 applied pointwise; projectable again since j is chart-constant.
    pub fn jmapped(&self) -> ProjectableField {
        let rot = |pair: &[ScalarField; 2]| -> [ScalarField; 2] {
            [
                ScalarField::from_ast(expr::neg(pair[1].ast().clone()), &["s", "t"], &[])
                    .expect("rotation preserves identifiers"),
                pair[0].clone(),
            ]
        };
        ProjectableField {
            a: rot(&self.a),
            b: rot(&self.b),
        }
    }

    fn horizontal(&self, p: V2) -> Result<V2, GeomError> {
        Ok(V2::new(
            self.a[0].eval(&[p.x, p.y])?,
            self.a[1].eval(&[p.x, p.y])?,
        ))
    }

    /// (U·∂) applied to the component pair `w` at p, plus Γ(U)(w(p)):
    /// the base Levi-Civita derivative ∇_U w.
    fn nabla(
        chart: &ConformalChart,
        p: V2,
        u: V2,
        w: &[ScalarField; 2],
    ) -> Result<V2, GeomError> {
        let pt = [p.x, p.y];
        let dir = V2::new(
            u.x * w[0].eval_derivative(1, 0, &pt)? + u.y * w[0].eval_derivative(0, 1, &pt)?,
            u.x * w[1].eval_derivative(1, 0, &pt)? + u.y * w[1].eval_derivative(0, 1, &pt)?,
        );
        let wv = V2::new(w[0].eval(&pt)?, w[1].eval(&pt)?);
        Ok(dir + chart.christoffels(p)?.apply(u, wv))
    }
}

/// Levi-Civita connection of 𝔾 on projectable fields:
/// D_X Y = (∇_{A_X}A_Y,
///          ∇_{A_X}B_Y − ½[R(A_X,A_Y)V − jR(V,jA_X)A_Y − jR(V,jA_Y)A_X]).
pub fn levi_civita(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
) -> Result<SplitTangent, GeomError> {
    let p = at.pos;
    let vf = at.fiber;
    let ax = x.horizontal(p)?;
    let ay = y.horizontal(p)?;
    let hor = ProjectableField::nabla(chart, p, ax, &y.a)?;
    let nabla_b = ProjectableField::nabla(chart, p, ax, &y.b)?;
    let r1 = chart.curvature_operator(p, ax, ay, vf)?;
    let r2 = jrot(chart.curvature_operator(p, vf, jrot(ax), ay)?);
    let r3 = jrot(chart.curvature_operator(p, vf, jrot(ay), ax)?);
    Ok(SplitTangent::new(hor, nabla_b - 0.5 * (r1 - r2 - r3)))
}

/// Lie bracket of projectable fields (private oracle for the torsion and
/// Nijenhuis checks): ([A_X,A_Y], ∇_{A_X}B_Y − ∇_{A_Y}B_X − R(A_X,A_Y)V).
fn bracket(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
) -> Result<SplitTangent, GeomError> {
    let p = at.pos;
    let pt = [p.x, p.y];
    let ax = x.horizontal(p)?;
    let ay = y.horizontal(p)?;
    let dir = |u: V2, w: &[ScalarField; 2]| -> Result<V2, GeomError> {
        Ok(V2::new(
            u.x * w[0].eval_derivative(1, 0, &pt)? + u.y * w[0].eval_derivative(0, 1, &pt)?,
            u.x * w[1].eval_derivative(1, 0, &pt)? + u.y * w[1].eval_derivative(0, 1, &pt)?,
        ))
    };
    let hor = dir(ax, &y.a)? - dir(ay, &x.a)?;
    let ver = ProjectableField::nabla(chart, p, ax, &y.b)?
        - ProjectableField::nabla(chart, p, ay, &x.b)?
        - chart.curvature_operator(p, ax, ay, at.fiber)?;
    Ok(SplitTangent::new(hor, ver))
}

/// ‖D_X Y − D_Y X − [X,Y]‖ at a point (split norm).
pub fn torsion_residual(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
) -> Result<f64, GeomError> {
    let t = levi_civita(chart, at, x, y)? - levi_civita(chart, at, y, x)?
        - bracket(chart, at, x, y)?;
    split_gnorm(chart, at, t)
}

/// 𝔾(Y, Z) along projectable fields as a symbolic function of the base
/// point; the fiber does not enter because 𝔾 pairs horizontal with
/// vertical parts only.
fn gmetric_expr(
    chart: &ConformalChart,
    y: &ProjectableField,
    z: &ProjectableField,
) -> Arc<Expr> {
    let factor = expr::call(
        expr::Func::Exp,
        expr::mul(expr::cst(2.0), chart.r().ast().clone()),
    );
    // e^{2r} (B_Y¹A_Z² − B_Y²A_Z¹ + A_Y²B_Z¹ − A_Y¹B_Z²).
    let term = expr::add(
        expr::sub(
            expr::mul(y.b[0].ast().clone(), z.a[1].ast().clone()),
            expr::mul(y.b[1].ast().clone(), z.a[0].ast().clone()),
        ),
        expr::sub(
            expr::mul(y.a[1].ast().clone(), z.b[0].ast().clone()),
            expr::mul(y.a[0].ast().clone(), z.b[1].ast().clone()),
        ),
    );
    expr::mul(factor, term)
}

/// |X(𝔾(Y,Z)) − 𝔾(D_X Y, Z) − 𝔾(Y, D_X Z)|, the metric-compatibility
/// defect; the left side is an exact symbolic directional derivative.
pub fn metric_compat_residual(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
    z: &ProjectableField,
) -> Result<f64, GeomError> {
    let f = gmetric_expr(chart, y, z);
    let lhs = derive_along(at.pos, x, &f)?;
    let dxy = levi_civita(chart, at, x, y)?;
    let dxz = levi_civita(chart, at, x, z)?;
    let rhs = gmetric(chart, at, dxy, z.value(at.pos)?)?
        + gmetric(chart, at, y.value(at.pos)?, dxz)?;
    Ok((lhs - rhs).abs())
}

/// ‖D_X(𝕁Y) − 𝕁(D_X Y)‖: the parallelism defect of 𝕁.
pub fn parallel_j_residual(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
) -> Result<f64, GeomError> {
    let lhs = levi_civita(chart, at, x, &y.jmapped())?;
    let rhs = jmap(levi_civita(chart, at, x, y)?);
    split_gnorm(chart, at, lhs - rhs)
}

/// ‖[𝕁X,𝕁Y] − 𝕁[𝕁X,Y] − 𝕁[X,𝕁Y] − [X,Y]‖: the Nijenhuis tensor of 𝕁,
/// which vanishes because 𝕁 is integrable.
pub fn nijenhuis(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
) -> Result<f64, GeomError> {
    let jx = x.jmapped();
    let jy = y.jmapped();
    let n = bracket(chart, at, &jx, &jy)?
        - jmap(bracket(chart, at, &jx, y)?)
        - jmap(bracket(chart, at, x, &jy)?)
        - bracket(chart, at, x, y)?;
    split_gnorm(chart, at, n)
}

/// Ω(Y, Z) along projectable fields as a symbolic base function.
fn omega_expr(chart: &ConformalChart, y: &ProjectableField, z: &ProjectableField) -> Arc<Expr> {
    let factor = expr::call(
        expr::Func::Exp,
        expr::mul(expr::cst(2.0), chart.r().ast().clone()),
    );
    // e^{2r} (B_Y·A_Z − A_Y·B_Z).
    let term = expr::sub(
        expr::add(
            expr::mul(y.b[0].ast().clone(), z.a[0].ast().clone()),
            expr::mul(y.b[1].ast().clone(), z.a[1].ast().clone()),
        ),
        expr::add(
            expr::mul(y.a[0].ast().clone(), z.b[0].ast().clone()),
            expr::mul(y.a[1].ast().clone(), z.b[1].ast().clone()),
        ),
    );
    expr::mul(factor, term)
}

fn derive_along(
    p: V2,
    x: &ProjectableField,
    f: &Arc<Expr>,
) -> Result<f64, GeomError> {
    let fs = expr::diff(f, "s");
    let ft = expr::diff(f, "t");
    let ax = x.horizontal(p)?;
    Ok(ax.x * crate::basegeo::eval_at(&fs, p)? + ax.y * crate::basegeo::eval_at(&ft, p)?)
}

/// |2𝔾(D_X Y, Z) − Koszul(X,Y,Z)| where Koszul is the six-term formula
/// X𝔾(Y,Z) + Y𝔾(X,Z) − Z𝔾(X,Y) + 𝔾([X,Y],Z) − 𝔾([X,Z],Y) − 𝔾([Y,Z],X).
/// This pins the connection values themselves, independent of the
/// splitting formula used by `levi_civita`.
pub fn koszul_residual(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
    z: &ProjectableField,
) -> Result<f64, GeomError> {
    let p = at.pos;
    let lhs = 2.0 * gmetric(chart, at, levi_civita(chart, at, x, y)?, z.value(p)?)?;
    let rhs = derive_along(p, x, &gmetric_expr(chart, y, z))?
        + derive_along(p, y, &gmetric_expr(chart, x, z))?
        - derive_along(p, z, &gmetric_expr(chart, x, y))?
        + gmetric(chart, at, bracket(chart, at, x, y)?, z.value(p)?)?
        - gmetric(chart, at, bracket(chart, at, x, z)?, y.value(p)?)?
        - gmetric(chart, at, bracket(chart, at, y, z)?, x.value(p)?)?;
    Ok((lhs - rhs).abs())
}

/// |dΩ(X,Y,Z)| by the invariant formula
/// XΩ(Y,Z) − YΩ(X,Z) + ZΩ(X,Y) − Ω([X,Y],Z) + Ω([X,Z],Y) − Ω([Y,Z],X);
/// Ω is closed, so this is a pure roundoff measurement.
pub fn domega_residual(
    chart: &ConformalChart,
    at: TBPoint,
    x: &ProjectableField,
    y: &ProjectableField,
    z: &ProjectableField,
) -> Result<f64, GeomError> {
    let p = at.pos;
    let total = derive_along(p, x, &omega_expr(chart, y, z))?
        - derive_along(p, y, &omega_expr(chart, x, z))?
        + derive_along(p, z, &omega_expr(chart, x, y))?
        - omega(chart, at, bracket(chart, at, x, y)?, z.value(p)?)?
        + omega(chart, at, bracket(chart, at, x, z)?, y.value(p)?)?
        - omega(chart, at, bracket(chart, at, y, z)?, x.value(p)?)?;
    Ok(total.abs())
}
