//! Intrinsic geometry of the base surface (Σ, g) in conformal coordinates:
//! g = e^{2r}(ds² + dt²) on a rectangular chart, plus curves with Frénet
//! data and a geodesic integrator.
//!
//! The complex structure j is rotation by +90° in the conformal frame:
//! j∂s = ∂t, j∂t = −∂s, so j has constant components in every chart.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector2;
use thiserror::Error;

use crate::expr::{self, Env, Expr, FieldError, ScalarField};
use crate::numerics::{self, GaussLegendre, Rect};

pub type V2 = Vector2<f64>;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("zero-speed point on curve at s = {0}")]
    ZeroSpeed(f64),
    #[error("curve flagged arclength but |γ'|_g deviates by {0:.3e}")]
    NotArclength(f64),
    #[error("null point: |EG-F²| = {det:.3e} is below the threshold {tol:.3e}")]
    NullPoint { det: f64, tol: f64 },
    #[error("not Lagrangian here: defect {0:.3e}")]
    NotLagrangian(f64),
    #[error("non-immersion point (differential rank {0})")]
    NotImmersed(usize),
    #[error("{0}")]
    Numerical(String),
}

/// Apply j (rotation by +90° in the conformal frame) to chart components.
pub fn jrot(v: V2) -> V2 {
    V2::new(-v.y, v.x)
}

/// Catalog identity of a chart; `Custom` charts carry a user expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Flat,
    Sphere,
    Hyperbolic,
    Custom,
}

/// Conformal chart: rectangle plus the log-conformal factor r(s, t).
#[derive(Debug, Clone)]
pub struct ConformalChart {
    kind: ChartKind,
    name: String,
    r: ScalarField,
    domain: Rect,
}

/// The six Christoffel symbols of g = e^{2r}(ds² + dt²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffels {
    pub sss: f64,
    pub tss: f64,
    pub sst: f64,
    pub tst: f64,
    pub stt: f64,
    pub ttt: f64,
}

impl Christoffels {
    /// Bilinear action (Γ(u)(w))^m = Γ^m_{ik} u^i w^k.
    pub fn apply(&self, u: V2, w: V2) -> V2 {
        V2::new(
            self.sss * u.x * w.x + self.sst * (u.x * w.y + u.y * w.x) + self.stt * u.y * w.y,
            self.tss * u.x * w.x + self.tst * (u.x * w.y + u.y * w.x) + self.ttt * u.y * w.y,
        )
    }
}

impl ConformalChart {
    pub fn flat() -> Arc<ConformalChart> {
        Arc::new(ConformalChart {
            kind: ChartKind::Flat,
            name: "flat".into(),
            r: ScalarField::constant(0.0, &["s", "t"]),
            domain: Rect::new(-4.0, 4.0, -4.0, 4.0),
        })
    }

    /// Stereographic chart of the unit sphere: e^{2r} = 4/(1+s²+t²)², K = 1.
    pub fn sphere() -> Arc<ConformalChart> {
        let r = ScalarField::new("log(2/(1+s^2+t^2))", &["s", "t"], &[]).unwrap();
        Arc::new(ConformalChart {
            kind: ChartKind::Sphere,
            name: "sphere".into(),
            r,
            domain: Rect::new(-3.0, 3.0, -3.0, 3.0),
        })
    }

    /// Poincaré disk: e^{2r} = 4/(1−s²−t²)², K = −1, on a rectangle inside
    /// the unit disk.
    pub fn hyperbolic() -> Arc<ConformalChart> {
        let r = ScalarField::new("-log((1-s^2-t^2)/2)", &["s", "t"], &[]).unwrap();
        Arc::new(ConformalChart {
            kind: ChartKind::Hyperbolic,
            name: "hyperbolic".into(),
            r,
            domain: Rect::new(-0.65, 0.65, -0.65, 0.65),
        })
    }

    /// User-supplied log-conformal factor over variables (s, t).
    pub fn custom(
        name: &str,
        r_text: &str,
        domain: Rect,
        params: &[(&str, f64)],
    ) -> Result<Arc<ConformalChart>, GeomError> {
        let r = ScalarField::new(r_text, &["s", "t"], params)?;
        Ok(Arc::new(ConformalChart {
            kind: ChartKind::Custom,
            name: name.to_string(),
            r,
            domain,
        }))
    }

    pub fn by_name(name: &str) -> Option<Arc<ConformalChart>> {
        match name {
            "flat" => Some(Self::flat()),
            "sphere" => Some(Self::sphere()),
            "hyperbolic" => Some(Self::hyperbolic()),
            _ => None,
        }
    }

    pub fn catalog() -> [Arc<ConformalChart>; 3] {
        [Self::flat(), Self::sphere(), Self::hyperbolic()]
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn r(&self) -> &ScalarField {
        &self.r
    }

    /// e^{2r} at a point.
    pub fn conformal_factor(&self, p: V2) -> Result<f64, GeomError> {
        Ok((2.0 * self.r.eval(&[p.x, p.y])?).exp())
    }

    /// g(x, y) = e^{2r} (x·y) in chart components.
    pub fn metric_dot(&self, p: V2, x: V2, y: V2) -> Result<f64, GeomError> {
        Ok(self.conformal_factor(p)? * x.dot(&y))
    }

    pub fn gnorm(&self, p: V2, x: V2) -> Result<f64, GeomError> {
        Ok(self.metric_dot(p, x, x)?.sqrt())
    }

    /// Γ^s_{ss}=r_s, Γ^t_{ss}=−r_t, Γ^s_{st}=r_t, Γ^t_{st}=r_s,
    /// Γ^s_{tt}=−r_s, Γ^t_{tt}=r_t.
    pub fn christoffels(&self, p: V2) -> Result<Christoffels, GeomError> {
        let rs = self.r.eval_derivative(1, 0, &[p.x, p.y])?;
        let rt = self.r.eval_derivative(0, 1, &[p.x, p.y])?;
        Ok(Christoffels {
            sss: rs,
            tss: -rt,
            sst: rt,
            tst: rs,
            stt: -rs,
            ttt: rt,
        })
    }

    /// Symbolic Christoffel symbols in the chart variables, same order as
    /// the `Christoffels` fields.
    pub fn christoffel_exprs(&self) -> Result<[Arc<Expr>; 6], GeomError> {
        let rs = self.r.derivative_ast(1, 0)?;
        let rt = self.r.derivative_ast(0, 1)?;
        Ok([
            rs.clone(),
            expr::neg(rt.clone()),
            rt.clone(),
            rs.clone(),
            expr::neg(rs),
            rt,
        ])
    }

    /// K = −e^{−2r}(r_ss + r_tt).
    pub fn gauss_curvature(&self, p: V2) -> Result<f64, GeomError> {
        let lap = self.r.eval_derivative(2, 0, &[p.x, p.y])?
            + self.r.eval_derivative(0, 2, &[p.x, p.y])?;
        Ok(-(-2.0 * self.r.eval(&[p.x, p.y])?).exp() * lap)
    }

    /// Symbolic Gauss curvature in the chart variables.
    pub fn gauss_curvature_expr(&self) -> Result<Arc<Expr>, GeomError> {
        let lap = expr::add(self.r.derivative_ast(2, 0)?, self.r.derivative_ast(0, 2)?);
        let inv_factor = expr::call(
            expr::Func::Exp,
            expr::mul(expr::cst(-2.0), self.r.ast().clone()),
        );
        Ok(expr::neg(expr::mul(inv_factor, lap)))
    }

    /// R(X,Y)Z = K(g(Y,Z)X − g(X,Z)Y): the curvature operator of an
    /// oriented surface, bilinear and antisymmetric in (X, Y), and
    /// j-invariant: R(jX, jY) = R(X, Y).
    pub fn curvature_operator(&self, p: V2, x: V2, y: V2, z: V2) -> Result<V2, GeomError> {
        let k = self.gauss_curvature(p)?;
        let gyz = self.metric_dot(p, y, z)?;
        let gxz = self.metric_dot(p, x, z)?;
        Ok(k * (gyz * x - gxz * y))
    }
}

/// Frénet data of a curve at a parameter value.
#[derive(Debug, Clone, Copy)]
pub struct Frenet {
    /// Unit tangent, chart components.
    pub tangent: V2,
    /// j(tangent).
    pub normal: V2,
    /// Geodesic curvature: g(∇_{γ'}γ', jγ')/|γ'|³.
    pub k: f64,
}

/// Curve on the base surface given by expression components.
#[derive(Debug, Clone)]
pub struct CurveOnSurface {
    chart: Arc<ConformalChart>,
    x: ScalarField,
    y: ScalarField,
    span: (f64, f64),
    arclength: bool,
}

/// Sample count used to spot-check a claimed arclength parametrization.
const ARCLENGTH_CHECK_SAMPLES: usize = 17;
const ARCLENGTH_CHECK_TOL: f64 = 1e-9;

impl CurveOnSurface {
    pub fn new(
        chart: Arc<ConformalChart>,
        x_text: &str,
        y_text: &str,
        span: (f64, f64),
        arclength: bool,
        params: &[(&str, f64)],
    ) -> Result<CurveOnSurface, GeomError> {
        let x = ScalarField::new(x_text, &["s"], params)?;
        let y = ScalarField::new(y_text, &["s"], params)?;
        Self::from_fields(chart, x, y, span, arclength)
    }

    pub fn from_fields(
        chart: Arc<ConformalChart>,
        x: ScalarField,
        y: ScalarField,
        span: (f64, f64),
        arclength: bool,
    ) -> Result<CurveOnSurface, GeomError> {
        let curve = CurveOnSurface {
            chart,
            x,
            y,
            span,
            arclength,
        };
        if arclength {
            let mut worst: f64 = 0.0;
            for i in 0..ARCLENGTH_CHECK_SAMPLES {
                let s = span.0
                    + (span.1 - span.0) * (i as f64 + 0.5) / ARCLENGTH_CHECK_SAMPLES as f64;
                let speed = curve.chart.gnorm(curve.point(s)?, curve.velocity(s)?)?;
                worst = worst.max((speed - 1.0).abs());
            }
            if worst > ARCLENGTH_CHECK_TOL {
                return Err(GeomError::NotArclength(worst));
            }
        }
        Ok(curve)
    }

    pub fn chart(&self) -> &Arc<ConformalChart> {
        &self.chart
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    pub fn is_arclength(&self) -> bool {
        self.arclength
    }

    pub fn x(&self) -> &ScalarField {
        &self.x
    }

    pub fn y(&self) -> &ScalarField {
        &self.y
    }

    pub fn point(&self, s: f64) -> Result<V2, GeomError> {
        Ok(V2::new(self.x.eval(&[s])?, self.y.eval(&[s])?))
    }

    pub fn velocity(&self, s: f64) -> Result<V2, GeomError> {
        Ok(V2::new(
            self.x.eval_derivative(1, 0, &[s])?,
            self.y.eval_derivative(1, 0, &[s])?,
        ))
    }

    pub fn acceleration(&self, s: f64) -> Result<V2, GeomError> {
        Ok(V2::new(
            self.x.eval_derivative(2, 0, &[s])?,
            self.y.eval_derivative(2, 0, &[s])?,
        ))
    }

    /// General-parameter Frénet data; under arclength parametrization the
    /// relation ∇_{γ'}γ' = k jγ' holds with this k.
    pub fn frenet(&self, s: f64) -> Result<Frenet, GeomError> {
        let p = self.point(s)?;
        let v = self.velocity(s)?;
        let speed = self.chart.gnorm(p, v)?;
        if speed < 1e-12 {
            return Err(GeomError::ZeroSpeed(s));
        }
        let gamma = self.chart.christoffels(p)?;
        let accel = self.acceleration(s)? + gamma.apply(v, v);
        let k = self.chart.metric_dot(p, accel, jrot(v))? / speed.powi(3);
        let factor = self.chart.conformal_factor(p)?.sqrt();
        let tangent = v / (factor * v.norm());
        Ok(Frenet {
            tangent,
            normal: jrot(tangent),
            k,
        })
    }

    /// Total g-length by Gauss–Legendre quadrature.
    pub fn length(&self, order: usize) -> Result<f64, GeomError> {
        let rule = GaussLegendre::new(order);
        rule.integrate(self.span.0, self.span.1, |s| {
            self.chart.gnorm(self.point(s)?, self.velocity(s)?)
        })
    }
}

/// Output of the geodesic integrator: a polynomial (Chebyshev-fitted)
/// arclength curve plus the raw samples and a truncation flag.
#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub curve: CurveOnSurface,
    /// (s, [x, y, vx, vy]) at the integrator steps actually taken.
    pub samples: Vec<(f64, [f64; 4])>,
    /// Set when the trajectory left the chart rectangle early.
    pub truncated: bool,
    /// Arclength actually covered by `curve`.
    pub length: f64,
    /// max | |γ'|_g − 1 | over the integrator samples.
    pub arclength_drift: f64,
}

/// Number of Chebyshev nodes for the polynomial fit of a geodesic.
/// Trajectories are analytic with complex singularities no closer than
/// the chart-exit distance, which bounds the Bernstein-ellipse parameter
/// below by ~2.2; degree 39 then leaves the fitted velocity accurate to
/// well under the 1e-9 arclength validation, while the Chebyshev-to-
/// monomial conversion stays conditioned (coefficient ratio 2/ρ < 1).
const GEODESIC_CHEB_NODES: usize = 40;

/// Integrate γ'' + Γ(γ')(γ') = 0 by fixed-step RK4 from p₀ with unit
/// initial velocity v₀ (normalized here), for the given arclength.
pub fn geodesic(
    chart: &Arc<ConformalChart>,
    p0: V2,
    v0: V2,
    length: f64,
    steps: usize,
) -> Result<GeodesicResult, GeomError> {
    assert!(steps >= 2, "geodesic integration needs at least two steps");
    let v0 = v0 / chart.gnorm(p0, v0)?;
    let rhs = |_: f64, y: &[f64; 4]| -> [f64; 4] {
        let p = V2::new(y[0], y[1]);
        let v = V2::new(y[2], y[3]);
        let acc = match chart.christoffels(p) {
            Ok(g) => -g.apply(v, v),
            // Out-of-domain evaluation inside a trial step: freeze; the
            // step is discarded by the domain check below.
            Err(_) => V2::zeros(),
        };
        [y[2], y[3], acc.x, acc.y]
    };

    let h = length / steps as f64;
    let mut state = [p0.x, p0.y, v0.x, v0.y];
    let mut samples = vec![(0.0, state)];
    let mut truncated = false;
    let mut reached = 0.0;
    for i in 0..steps {
        let next = numerics::rk4_step(&rhs, i as f64 * h, &state, h);
        if !chart.domain().contains(next[0], next[1]) {
            truncated = true;
            break;
        }
        state = next;
        reached = (i + 1) as f64 * h;
        samples.push((reached, state));
    }
    if samples.len() < 4 {
        return Err(GeomError::Numerical(
            "geodesic left the chart domain almost immediately".into(),
        ));
    }

    let mut drift: f64 = 0.0;
    for (_, y) in &samples {
        let speed = chart.gnorm(V2::new(y[0], y[1]), V2::new(y[2], y[3]))?;
        drift = drift.max((speed - 1.0).abs());
    }

    // Re-integrate to the Chebyshev nodes (sorted, so each node is reached
    // by continuing from the previous one) and fit both components.
    let nodes = numerics::chebyshev_nodes(GEODESIC_CHEB_NODES, 0.0, reached);
    let mut xs = Vec::with_capacity(nodes.len());
    let mut ys = Vec::with_capacity(nodes.len());
    let mut cursor = 0.0;
    let mut y = [p0.x, p0.y, v0.x, v0.y];
    for node in &nodes {
        let span = node - cursor;
        let sub = (span / h).ceil().max(1.0) as usize;
        let hh = span / sub as f64;
        for k in 0..sub {
            y = numerics::rk4_step(&rhs, cursor + k as f64 * hh, &y, hh);
        }
        cursor = *node;
        xs.push(y[0]);
        ys.push(y[1]);
    }
    let fx = numerics::ChebFit::from_values(&xs, 0.0, reached);
    let fy = numerics::ChebFit::from_values(&ys, 0.0, reached);
    let xf = ScalarField::from_ast(fx.to_expr("s"), &["s"], &[])?;
    let yf = ScalarField::from_ast(fy.to_expr("s"), &["s"], &[])?;
    let curve = CurveOnSurface::from_fields(chart.clone(), xf, yf, (0.0, reached), true)?;

    Ok(GeodesicResult {
        curve,
        samples,
        truncated,
        length: reached,
        arclength_drift: drift,
    })
}

/// Exact arclength circle of chart radius ρ centered at the chart origin,
/// together with its constant geodesic curvature. Positive ρ required;
/// on the hyperbolic chart ρ < 1.
pub fn centered_circle(
    chart: &Arc<ConformalChart>,
    rho: f64,
    phase: f64,
) -> Result<(CurveOnSurface, f64), GeomError> {
    assert!(rho > 0.0);
    let (omega, k) = match chart.kind() {
        ChartKind::Flat => (1.0 / rho, 1.0 / rho),
        ChartKind::Sphere => (
            (1.0 + rho * rho) / (2.0 * rho),
            (1.0 - rho * rho) / (2.0 * rho),
        ),
        ChartKind::Hyperbolic => {
            assert!(rho < 1.0, "hyperbolic chart circles need ρ < 1");
            (
                (1.0 - rho * rho) / (2.0 * rho),
                (1.0 + rho * rho) / (2.0 * rho),
            )
        }
        ChartKind::Custom => {
            return Err(GeomError::Numerical(
                "closed-form circles exist only on catalog charts".into(),
            ));
        }
    };
    let params: &[(&str, f64)] = &[("rho", rho), ("omega", omega), ("phi", phase)];
    let span = (0.0, std::f64::consts::TAU / omega);
    let curve = CurveOnSurface::new(
        chart.clone(),
        "rho*cos(omega*s+phi)",
        "rho*sin(omega*s+phi)",
        span,
        true,
        params,
    )?;
    Ok((curve, k))
}

/// Exact unit-speed geodesic through the chart origin in direction φ.
/// Flat: straight line; sphere: ρ(s) = tan(s/2); hyperbolic: tanh(s/2).
pub fn centered_geodesic(
    chart: &Arc<ConformalChart>,
    phi: f64,
    span: (f64, f64),
) -> Result<CurveOnSurface, GeomError> {
    let params: &[(&str, f64)] = &[("phi", phi)];
    let (x, y) = match chart.kind() {
        ChartKind::Flat => ("s*cos(phi)", "s*sin(phi)"),
        ChartKind::Sphere => ("tan(s/2)*cos(phi)", "tan(s/2)*sin(phi)"),
        ChartKind::Hyperbolic => (
            "sinh(s/2)/cosh(s/2)*cos(phi)",
            "sinh(s/2)/cosh(s/2)*sin(phi)",
        ),
        ChartKind::Custom => {
            return Err(GeomError::Numerical(
                "closed-form geodesics exist only on catalog charts".into(),
            ));
        }
    };
    CurveOnSurface::new(chart.clone(), x, y, span, true, params)
}

/// Chart realization of an isometry, as expressions over variables (u, v),
/// ready to compose with curves or fields.
pub type IsometryExprs = (Arc<Expr>, Arc<Expr>);

/// Euclidean motion of the flat chart: rotation by `angle` then translation.
pub fn isometry_flat(angle: f64, dx: f64, dy: f64) -> IsometryExprs {
    let (c, s) = (angle.cos(), angle.sin());
    let u = expr::var("u");
    let v = expr::var("v");
    let x = expr::add(
        expr::sub(
            expr::mul(expr::cst(c), u.clone()),
            expr::mul(expr::cst(s), v.clone()),
        ),
        expr::cst(dx),
    );
    let y = expr::add(
        expr::add(expr::mul(expr::cst(s), u), expr::mul(expr::cst(c), v)),
        expr::cst(dy),
    );
    (x, y)
}

fn complex_ratio(
    num_re: Arc<Expr>,
    num_im: Arc<Expr>,
    den_re: Arc<Expr>,
    den_im: Arc<Expr>,
) -> IsometryExprs {
    let norm = expr::add(
        expr::mul(den_re.clone(), den_re.clone()),
        expr::mul(den_im.clone(), den_im.clone()),
    );
    let re = expr::div(
        expr::add(
            expr::mul(num_re.clone(), den_re.clone()),
            expr::mul(num_im.clone(), den_im.clone()),
        ),
        norm.clone(),
    );
    let im = expr::div(
        expr::sub(expr::mul(num_im, den_re), expr::mul(num_re, den_im)),
        norm,
    );
    (re, im)
}

/// Rotation of the round sphere in the stereographic chart:
/// z ↦ (αz + β)/(−β̄z + ᾱ) with |α|² + |β|² = 1 (normalized here).
pub fn isometry_sphere(alpha: (f64, f64), beta: (f64, f64)) -> IsometryExprs {
    let norm = (alpha.0 * alpha.0 + alpha.1 * alpha.1 + beta.0 * beta.0 + beta.1 * beta.1)
        .sqrt();
    let (a1, a2) = (alpha.0 / norm, alpha.1 / norm);
    let (b1, b2) = (beta.0 / norm, beta.1 / norm);
    let u = expr::var("u");
    let v = expr::var("v");
    let lin = |p: f64, q: f64, c: f64| -> Arc<Expr> {
        expr::add(
            expr::add(
                expr::mul(expr::cst(p), u.clone()),
                expr::mul(expr::cst(q), v.clone()),
            ),
            expr::cst(c),
        )
    };
    // (αz + β) and (−β̄z + ᾱ) for z = u + iv.
    let num_re = lin(a1, -a2, b1);
    let num_im = lin(a2, a1, b2);
    let den_re = lin(-b1, -b2, a1);
    let den_im = lin(b2, -b1, -a2);
    complex_ratio(num_re, num_im, den_re, den_im)
}

/// Isometry of the Poincaré disk: z ↦ e^{iφ}(z − c)/(1 − c̄z), |c| < 1.
pub fn isometry_hyperbolic(c: (f64, f64), angle: f64) -> IsometryExprs {
    assert!(c.0 * c.0 + c.1 * c.1 < 1.0, "center must lie inside the disk");
    let u = expr::var("u");
    let v = expr::var("v");
    let lin = |p: f64, q: f64, k: f64| -> Arc<Expr> {
        expr::add(
            expr::add(
                expr::mul(expr::cst(p), u.clone()),
                expr::mul(expr::cst(q), v.clone()),
            ),
            expr::cst(k),
        )
    };
    let num_re = lin(1.0, 0.0, -c.0);
    let num_im = lin(0.0, 1.0, -c.1);
    let den_re = lin(-c.0, -c.1, 1.0);
    let den_im = lin(c.1, -c.0, 0.0);
    let (re, im) = complex_ratio(num_re, num_im, den_re, den_im);
    let (cosf, sinf) = (angle.cos(), angle.sin());
    (
        expr::sub(
            expr::mul(expr::cst(cosf), re.clone()),
            expr::mul(expr::cst(sinf), im.clone()),
        ),
        expr::add(expr::mul(expr::cst(sinf), re), expr::mul(expr::cst(cosf), im)),
    )
}

/// The isometry matching a chart's catalog geometry, from seeded raw
/// parameters; used to scatter closed-form curves over the chart.
pub fn chart_isometry(kind: ChartKind, raw: [f64; 3]) -> IsometryExprs {
    match kind {
        ChartKind::Flat | ChartKind::Custom => isometry_flat(raw[0], 0.5 * raw[1], 0.5 * raw[2]),
        ChartKind::Sphere => isometry_sphere((1.0, 0.3 * raw[0]), (0.3 * raw[1], 0.3 * raw[2])),
        ChartKind::Hyperbolic => {
            isometry_hyperbolic((0.25 * raw[1], 0.25 * raw[2]), raw[0])
        }
    }
}

/// Compose a curve with a chart isometry given as expressions in (u, v).
pub fn map_curve(
    curve: &CurveOnSurface,
    iso: &IsometryExprs,
) -> Result<CurveOnSurface, GeomError> {
    let subs: Vec<(&str, Arc<Expr>)> = vec![
        ("u", curve.x().ast().clone()),
        ("v", curve.y().ast().clone()),
    ];
    let xf = ScalarField::from_ast(iso.0.clone(), &["u", "v"], &[])?
        .substituted(&subs, &["s"])?;
    let yf = ScalarField::from_ast(iso.1.clone(), &["u", "v"], &[])?
        .substituted(&subs, &["s"])?;
    CurveOnSurface::from_fields(
        curve.chart().clone(),
        xf,
        yf,
        curve.span(),
        curve.is_arclength(),
    )
}

/// Reparametrize a regular curve by arclength: integrate ds/dℓ = 1/|γ'|_g
/// by RK4 to Chebyshev nodes of the length interval, then refit both
/// components as polynomials in arclength.
pub fn arclength_reparametrize(
    curve: &CurveOnSurface,
    nodes: usize,
) -> Result<CurveOnSurface, GeomError> {
    let rule = GaussLegendre::new(24);
    let speed = |s: f64| -> Result<f64, GeomError> {
        let v = curve.velocity(s)?;
        let sp = curve.chart().gnorm(curve.point(s)?, v)?;
        if sp < 1e-12 {
            return Err(GeomError::ZeroSpeed(s));
        }
        Ok(sp)
    };
    let (s0, s1) = curve.span();
    let total = rule.integrate(s0, s1, speed)?;
    let targets = numerics::chebyshev_nodes(nodes, 0.0, total);
    let h0 = total / 400.0;
    let rhs = |_: f64, y: &[f64; 1]| -> [f64; 1] {
        [speed(y[0].clamp(s0, s1)).map(|sp| 1.0 / sp).unwrap_or(0.0)]
    };
    let mut xs = Vec::with_capacity(nodes);
    let mut ys = Vec::with_capacity(nodes);
    let mut cursor = 0.0;
    let mut y = [s0];
    for ell in &targets {
        let span = ell - cursor;
        let sub = (span / h0).ceil().max(1.0) as usize;
        let hh = span / sub as f64;
        for k in 0..sub {
            y = numerics::rk4_step(&rhs, cursor + k as f64 * hh, &y, hh);
        }
        cursor = *ell;
        let p = curve.point(y[0].clamp(s0, s1))?;
        xs.push(p.x);
        ys.push(p.y);
    }
    let fx = numerics::ChebFit::from_values(&xs, 0.0, total);
    let fy = numerics::ChebFit::from_values(&ys, 0.0, total);
    CurveOnSurface::from_fields(
        curve.chart().clone(),
        ScalarField::from_ast(fx.to_expr("s"), &["s"], &[])?,
        ScalarField::from_ast(fy.to_expr("s"), &["s"], &[])?,
        (0.0, total),
        true,
    )
}

/// Evaluate an expression at a point of the chart (variables s, t).
pub fn eval_at(e: &Arc<Expr>, p: V2) -> Result<f64, GeomError> {
    let names: [Arc<str>; 2] = [Arc::from("s"), Arc::from("t")];
    let env = Env {
        names: &names,
        values: &[p.x, p.y],
    };
    Ok(expr::eval_memo(e, &env, &mut HashMap::new()).map_err(FieldError::from)?)
}
