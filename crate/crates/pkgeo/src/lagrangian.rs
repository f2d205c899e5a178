//! Parametric surfaces in TΣ and their Lagrangian geometry.
//!
//! An immersion X(s,t) = (p(s,t), ξ(s,t)) is stored as four scalar fields;
//! everything else is derived symbolically at construction time by
//! composing the chart data with the base map: the split tangent frame
//! X_s, X_t, the induced 𝔾-metric (E, F, G), the symplectic defect
//! Ω(X_s, X_t), the second fundamental form h_cab = Ω(X_c, D_{X_a}X_b),
//! and the mean curvature through the normal-frame expansion
//! 2H = α𝕁X_s + β𝕁X_t. Evaluation shares one memo table per point, so a
//! full set of invariants at a point costs one pass over the shared DAG.
//!
//! Degenerate (null) points, where the induced metric ceases to be
//! nondegenerate, are reported as errors against the scale-invariant
//! threshold |EG − F²| < tol · (‖X_s‖² + ‖X_t‖²)²/4 in the split norm.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use nalgebra::{Matrix2, Matrix4x2, Vector2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basegeo::{ConformalChart, CurveOnSurface, GeomError};
use crate::expr::{self, Env, Expr, Func, Jet, ScalarField};
use crate::numerics::{nelder_mead, solve2, Rect};
use crate::tbundle::{jmap, SplitTangent, TBPoint};
use crate::tol;

type V2 = Vector2<f64>;

/// Pair of expressions holding the chart components of a base vector.
#[derive(Debug, Clone)]
struct Pair {
    x: Arc<Expr>,
    y: Arc<Expr>,
}

impl Pair {
    fn d(&self, v: &str) -> Pair {
        Pair {
            x: expr::diff(&self.x, v),
            y: expr::diff(&self.y, v),
        }
    }

    /// j rotation: (x, y) ↦ (−y, x).
    fn j(&self) -> Pair {
        Pair {
            x: expr::neg(self.y.clone()),
            y: self.x.clone(),
        }
    }

    fn add(&self, o: &Pair) -> Pair {
        Pair {
            x: expr::add(self.x.clone(), o.x.clone()),
            y: expr::add(self.y.clone(), o.y.clone()),
        }
    }

    fn sub(&self, o: &Pair) -> Pair {
        Pair {
            x: expr::sub(self.x.clone(), o.x.clone()),
            y: expr::sub(self.y.clone(), o.y.clone()),
        }
    }

    fn scale(&self, c: &Arc<Expr>) -> Pair {
        Pair {
            x: expr::mul(c.clone(), self.x.clone()),
            y: expr::mul(c.clone(), self.y.clone()),
        }
    }

    /// Euclidean component dot product (metric factors applied separately).
    fn dot(&self, o: &Pair) -> Arc<Expr> {
        expr::add(
            expr::mul(self.x.clone(), o.x.clone()),
            expr::mul(self.y.clone(), o.y.clone()),
        )
    }
}

/// Split tangent vector of TΣ with expression components.
#[derive(Debug, Clone)]
struct SplitPair {
    h: Pair,
    v: Pair,
}

/// Composed Christoffel symbols Γ∘p, in immersion parameters.
#[derive(Debug, Clone)]
struct GammaExprs {
    sss: Arc<Expr>,
    tss: Arc<Expr>,
    sst: Arc<Expr>,
    tst: Arc<Expr>,
    stt: Arc<Expr>,
    ttt: Arc<Expr>,
}

impl GammaExprs {
    /// (Γ(u)(w))^m = Γ^m_{ik} u^i w^k on expression pairs.
    fn apply(&self, u: &Pair, w: &Pair) -> Pair {
        let ss = expr::mul(u.x.clone(), w.x.clone());
        let st = expr::add(
            expr::mul(u.x.clone(), w.y.clone()),
            expr::mul(u.y.clone(), w.x.clone()),
        );
        let tt = expr::mul(u.y.clone(), w.y.clone());
        let comb = |a: &Arc<Expr>, b: &Arc<Expr>, c: &Arc<Expr>| {
            expr::add(
                expr::add(expr::mul(a.clone(), ss.clone()), expr::mul(b.clone(), st.clone())),
                expr::mul(c.clone(), tt.clone()),
            )
        };
        Pair {
            x: comb(&self.sss, &self.sst, &self.stt),
            y: comb(&self.tss, &self.tst, &self.ttt),
        }
    }
}

/// Substitute the chart coordinates of `e` by the base-map components,
/// capture-safe (the immersion parameters reuse the names s, t).
fn compose(e: &Arc<Expr>, p1: &Arc<Expr>, p2: &Arc<Expr>) -> Arc<Expr> {
    let tmp = expr::substitute(e, "s", &expr::var("__c1"));
    let tmp = expr::substitute(&tmp, "t", &expr::var("__c2"));
    let tmp = expr::substitute(&tmp, "__c1", p1);
    expr::substitute(&tmp, "__c2", p2)
}

/// All symbolic data derived from an immersion at construction time.
#[derive(Debug, Clone)]
struct Symbols {
    xs: SplitPair,
    xt: SplitPair,
    e: Arc<Expr>,
    f: Arc<Expr>,
    g: Arc<Expr>,
    det: Arc<Expr>,
    /// Null threshold scale (‖X_s‖² + ‖X_t‖²)²/4 in the split norm.
    scale: Arc<Expr>,
    /// Ω(X_s, X_t).
    defect: Arc<Expr>,
    /// h[c][k]: c ∈ {s,t}, k ∈ {(s,s),(s,t),(t,t)}.
    h: [[Arc<Expr>; 3]; 2],
    /// 𝔾(2H, 𝕁X_c) = −g^{ab} h_cab.
    w: [Arc<Expr>; 2],
    /// 2H = α 𝕁X_s + β 𝕁X_t.
    alpha: Arc<Expr>,
    beta: Arc<Expr>,
    /// Induced-metric divergence of 𝕁H (built on first use).
    div_jh: OnceLock<Arc<Expr>>,
    /// Brioschi curvature of (E, F, G) (built on first use).
    brioschi: OnceLock<Arc<Expr>>,
}

/// 𝔾 on split expression pairs: conf · (jB·C − jA·D).
fn gpair(conf: &Arc<Expr>, x: &SplitPair, y: &SplitPair) -> Arc<Expr> {
    expr::mul(
        conf.clone(),
        expr::sub(x.v.j().dot(&y.h), x.h.j().dot(&y.v)),
    )
}

/// Ω on split expression pairs: conf · (B·C − A·D).
fn opair(conf: &Arc<Expr>, x: &SplitPair, y: &SplitPair) -> Arc<Expr> {
    expr::mul(conf.clone(), expr::sub(x.v.dot(&y.h), x.h.dot(&y.v)))
}

fn build_symbols(
    chart: &ConformalChart,
    p: &[ScalarField; 2],
    xi: &[ScalarField; 2],
) -> Result<Symbols, GeomError> {
    let p1 = p[0].ast().clone();
    let p2 = p[1].ast().clone();
    let rcomp = compose(chart.r().ast(), &p1, &p2);
    let conf = expr::call(Func::Exp, expr::mul(expr::cst(2.0), rcomp));
    let gecs = chart.christoffel_exprs()?;
    let gamma = GammaExprs {
        sss: compose(&gecs[0], &p1, &p2),
        tss: compose(&gecs[1], &p1, &p2),
        sst: compose(&gecs[2], &p1, &p2),
        tst: compose(&gecs[3], &p1, &p2),
        stt: compose(&gecs[4], &p1, &p2),
        ttt: compose(&gecs[5], &p1, &p2),
    };
    let kgauss = compose(&chart.gauss_curvature_expr()?, &p1, &p2);

    let pmap = Pair { x: p1, y: p2 };
    let xiv = Pair {
        x: xi[0].ast().clone(),
        y: xi[1].ast().clone(),
    };
    let ps = pmap.d("s");
    let pt = pmap.d("t");
    // K_a = ∂_a ξ + Γ(P_a)(ξ): covariant fiber derivative along X_a.
    let ks = xiv.d("s").add(&gamma.apply(&ps, &xiv));
    let kt = xiv.d("t").add(&gamma.apply(&pt, &xiv));
    let xs = SplitPair {
        h: ps.clone(),
        v: ks.clone(),
    };
    let xt = SplitPair {
        h: pt.clone(),
        v: kt.clone(),
    };

    // g(y, z) with the conformal factor, for the curvature operator.
    let gdot = |y: &Pair, z: &Pair| expr::mul(conf.clone(), y.dot(z));
    let curv = |x: &Pair, y: &Pair, z: &Pair| -> Pair {
        let first = x.scale(&gdot(y, z));
        let second = y.scale(&gdot(x, z));
        first.sub(&second).scale(&kgauss)
    };

    // D_{X_a} X_b, sharing the three distinct (a,b) slots.
    let half = expr::cst(0.5);
    let dcov = |a: &str, pa: &Pair, pb: &Pair, kb: &Pair| -> SplitPair {
        let hor = pb.d(a).add(&gamma.apply(pa, pb));
        let r1 = curv(pa, pb, &xiv);
        let r2 = curv(&xiv, &pa.j(), pb).j();
        let r3 = curv(&xiv, &pb.j(), pa).j();
        let correction = r1.sub(&r2).sub(&r3).scale(&half);
        let ver = kb.d(a).add(&gamma.apply(pa, kb)).sub(&correction);
        SplitPair { h: hor, v: ver }
    };
    let dss = dcov("s", &ps, &ps, &ks);
    let dst = dcov("s", &ps, &pt, &kt);
    let dtt = dcov("t", &pt, &pt, &kt);

    let e = gpair(&conf, &xs, &xs);
    let f = gpair(&conf, &xs, &xt);
    let g = gpair(&conf, &xt, &xt);
    let det = expr::sub(
        expr::mul(e.clone(), g.clone()),
        expr::mul(f.clone(), f.clone()),
    );
    let norm2 = |x: &SplitPair| {
        expr::mul(
            conf.clone(),
            expr::add(x.h.dot(&x.h), x.v.dot(&x.v)),
        )
    };
    let scale = expr::mul(
        expr::cst(0.25),
        expr::pow(expr::add(norm2(&xs), norm2(&xt)), expr::cst(2.0)),
    );
    let defect = opair(&conf, &xs, &xt);

    let h = [
        [
            opair(&conf, &xs, &dss),
            opair(&conf, &xs, &dst),
            opair(&conf, &xs, &dtt),
        ],
        [
            opair(&conf, &xt, &dss),
            opair(&conf, &xt, &dst),
            opair(&conf, &xt, &dtt),
        ],
    ];

    // 𝔾(2H, 𝕁X_c) = −(G h_c11 − 2F h_c12 + E h_c22)/(EG − F²).
    let wc = |c: usize| {
        expr::neg(expr::div(
            expr::add(
                expr::sub(
                    expr::mul(g.clone(), h[c][0].clone()),
                    expr::mul(expr::mul(expr::cst(2.0), f.clone()), h[c][1].clone()),
                ),
                expr::mul(e.clone(), h[c][2].clone()),
            ),
            det.clone(),
        ))
    };
    let w = [wc(0), wc(1)];
    // Solve [[E,F],[F,G]] (α,β)ᵀ = (w₁,w₂)ᵀ symbolically.
    let alpha = expr::div(
        expr::sub(
            expr::mul(w[0].clone(), g.clone()),
            expr::mul(w[1].clone(), f.clone()),
        ),
        det.clone(),
    );
    let beta = expr::div(
        expr::sub(
            expr::mul(e.clone(), w[1].clone()),
            expr::mul(f.clone(), w[0].clone()),
        ),
        det.clone(),
    );

    Ok(Symbols {
        xs,
        xt,
        e,
        f,
        g,
        det,
        scale,
        defect,
        h,
        w,
        alpha,
        beta,
        div_jh: OnceLock::new(),
        brioschi: OnceLock::new(),
    })
}

/// Induced 𝔾-metric data at a point.
#[derive(Debug, Clone, Copy)]
pub struct InducedMetric {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    /// EG − F²; negative on spacelike-free Lagrangian examples here.
    pub det: f64,
    /// Null threshold scale at this point.
    pub scale: f64,
}

impl InducedMetric {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.e, self.f, self.f, self.g)
    }
}

/// Second fundamental form values h_cab at a point.
#[derive(Debug, Clone, Copy)]
pub struct SecondFundamental {
    /// h[c][k], c ∈ {s,t}, k ∈ {ss, st, tt}.
    pub h: [[f64; 3]; 2],
    /// max |h_cab − h_acb| over the mixed index pairs; vanishes on
    /// Lagrangian surfaces where h is fully symmetric.
    pub tri_symmetry_defect: f64,
}

/// Mean curvature data: H = ½(α𝕁X_s + β𝕁X_t).
#[derive(Debug, Clone, Copy)]
pub struct MeanCurvature {
    pub vector: SplitTangent,
    pub alpha: f64,
    pub beta: f64,
}

/// Parametric surface in TΣ with cached symbolic geometry.
#[derive(Debug, Clone)]
pub struct TBImmersion {
    chart: Arc<ConformalChart>,
    p: [ScalarField; 2],
    xi: [ScalarField; 2],
    domain: Rect,
    tol_null: f64,
    sym: Symbols,
}

impl TBImmersion {
    pub fn new(
        chart: Arc<ConformalChart>,
        p1: &str,
        p2: &str,
        v1: &str,
        v2: &str,
        domain: Rect,
        params: &[(&str, f64)],
    ) -> Result<TBImmersion, GeomError> {
        let mk = |t: &str| ScalarField::new(t, &["s", "t"], params);
        Self::from_fields(chart, [mk(p1)?, mk(p2)?], [mk(v1)?, mk(v2)?], domain)
    }

    pub fn from_fields(
        chart: Arc<ConformalChart>,
        p: [ScalarField; 2],
        xi: [ScalarField; 2],
        domain: Rect,
    ) -> Result<TBImmersion, GeomError> {
        let sym = build_symbols(&chart, &p, &xi)?;
        Ok(TBImmersion {
            chart,
            p,
            xi,
            domain,
            tol_null: tol::TOL_NULL_REL,
            sym,
        })
    }

    pub fn with_tol_null(mut self, tol: f64) -> TBImmersion {
        self.tol_null = tol;
        self
    }

    pub fn chart(&self) -> &Arc<ConformalChart> {
        &self.chart
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn base_components(&self) -> &[ScalarField; 2] {
        &self.p
    }

    pub fn fiber_components(&self) -> &[ScalarField; 2] {
        &self.xi
    }

    pub fn tol_null(&self) -> f64 {
        self.tol_null
    }

    fn eval_batch(&self, exprs: &[&Arc<Expr>], at: V2) -> Result<Vec<f64>, GeomError> {
        let names: [Arc<str>; 2] = [Arc::from("s"), Arc::from("t")];
        let env = Env {
            names: &names,
            values: &[at.x, at.y],
        };
        let mut memo = HashMap::new();
        exprs
            .iter()
            .map(|e| {
                expr::eval_memo(e, &env, &mut memo)
                    .map_err(|er| GeomError::Field(er.into()))
            })
            .collect()
    }

    /// The image point (p(s,t), ξ(s,t)).
    pub fn point(&self, at: V2) -> Result<TBPoint, GeomError> {
        let q = [at.x, at.y];
        Ok(TBPoint::new(
            V2::new(self.p[0].eval(&q)?, self.p[1].eval(&q)?),
            V2::new(self.xi[0].eval(&q)?, self.xi[1].eval(&q)?),
        ))
    }

    /// The split tangent frame (X_s, X_t) at a parameter point.
    pub fn frame(&self, at: V2) -> Result<[SplitTangent; 2], GeomError> {
        let s = &self.sym;
        let vals = self.eval_batch(
            &[
                &s.xs.h.x, &s.xs.h.y, &s.xs.v.x, &s.xs.v.y, &s.xt.h.x, &s.xt.h.y, &s.xt.v.x,
                &s.xt.v.y,
            ],
            at,
        )?;
        Ok([
            SplitTangent::new(V2::new(vals[0], vals[1]), V2::new(vals[2], vals[3])),
            SplitTangent::new(V2::new(vals[4], vals[5]), V2::new(vals[6], vals[7])),
        ])
    }

    /// Rank of the projection dπ∘dX at a parameter point (0, 1, or 2).
    pub fn projection_rank(&self, at: V2) -> Result<usize, GeomError> {
        let s = &self.sym;
        let vals = self.eval_batch(&[&s.xs.h.x, &s.xs.h.y, &s.xt.h.x, &s.xt.h.y], at)?;
        let m = Matrix2::new(vals[0], vals[2], vals[1], vals[3]);
        Ok(rank_of(m.svd(false, false).singular_values.as_slice()))
    }

    /// Rank of the full differential (immersion check).
    pub fn differential_rank(&self, at: V2) -> Result<usize, GeomError> {
        let fr = self.frame(at)?;
        let m = Matrix4x2::from_columns(&[
            nalgebra::Vector4::new(fr[0].h.x, fr[0].h.y, fr[0].v.x, fr[0].v.y),
            nalgebra::Vector4::new(fr[1].h.x, fr[1].h.y, fr[1].v.x, fr[1].v.y),
        ]);
        Ok(rank_of(m.svd(false, false).singular_values.as_slice()))
    }

    /// Ω(X_s, X_t): identically zero exactly when the surface is
    /// Lagrangian.
    pub fn lagrangian_defect(&self, at: V2) -> Result<f64, GeomError> {
        Ok(self.eval_batch(&[&self.sym.defect], at)?[0])
    }

    /// E, F, G and friends without the nondegeneracy check.
    pub fn metric_data(&self, at: V2) -> Result<InducedMetric, GeomError> {
        let s = &self.sym;
        let vals = self.eval_batch(&[&s.e, &s.f, &s.g, &s.det, &s.scale], at)?;
        Ok(InducedMetric {
            e: vals[0],
            f: vals[1],
            g: vals[2],
            det: vals[3],
            scale: vals[4],
        })
    }

    /// Induced metric with the null-point policy applied.
    pub fn induced_metric(&self, at: V2) -> Result<InducedMetric, GeomError> {
        let m = self.metric_data(at)?;
        if m.det.abs() < self.tol_null * m.scale {
            return Err(GeomError::NullPoint {
                det: m.det,
                tol: self.tol_null * m.scale,
            });
        }
        Ok(m)
    }

    /// Second fundamental form h_cab = Ω(X_c, D_{X_a}X_b).
    pub fn second_fundamental(&self, at: V2) -> Result<SecondFundamental, GeomError> {
        let s = &self.sym;
        let vals = self.eval_batch(
            &[
                &s.h[0][0], &s.h[0][1], &s.h[0][2], &s.h[1][0], &s.h[1][1], &s.h[1][2],
            ],
            at,
        )?;
        let h = [[vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]]];
        let tri = (h[1][0] - h[0][1]).abs().max((h[0][2] - h[1][1]).abs());
        Ok(SecondFundamental {
            h,
            tri_symmetry_defect: tri,
        })
    }

    /// Mean curvature vector via the tangential system
    /// [[E,F],[F,G]](α,β)ᵀ = −(g^{ab}h_cab)_c, H = ½(α𝕁X_s + β𝕁X_t).
    pub fn mean_curvature(&self, at: V2) -> Result<MeanCurvature, GeomError> {
        self.induced_metric(at)?;
        let s = &self.sym;
        let vals = self.eval_batch(&[&s.alpha, &s.beta], at)?;
        let (alpha, beta) = (vals[0], vals[1]);
        let fr = self.frame(at)?;
        let vector = (jmap(fr[0]) * alpha + jmap(fr[1]) * beta) * 0.5;
        Ok(MeanCurvature {
            vector,
            alpha,
            beta,
        })
    }

    /// 𝔾(2H, 𝕁X_c) at a point, straight from the h-form (the route used
    /// by `mean_curvature` before solving).
    pub fn mean_curvature_pairings(&self, at: V2) -> Result<[f64; 2], GeomError> {
        self.induced_metric(at)?;
        let vals = self.eval_batch(&[&self.sym.w[0], &self.sym.w[1]], at)?;
        Ok([vals[0], vals[1]])
    }

    /// 𝔾(2H, 𝕁X_c) via the angle-gradient route: with the fiber derivative
    /// entries ∇_sξ = (a, b), ∇_tξ = (·, c) and w = (2b, c − a),
    ///   𝔾(2H,𝕁X_s) = ∂_s arg w − 2 r_t,
    ///   𝔾(2H,𝕁X_t) = ∂_t arg w + 2 r_s,
    /// where arg-derivatives are computed branch-free as (w × ∂w)/|w|².
    /// Defined for graphs over the chart (p = id).
    pub fn mean_curvature_arg_form(&self, at: V2) -> Result<[f64; 2], GeomError> {
        if self.p[0].ast().as_ref() != expr::var("s").as_ref()
            || self.p[1].ast().as_ref() != expr::var("t").as_ref()
        {
            return Err(GeomError::Numerical(
                "the angle-gradient route needs a graph over the chart (p = id)".into(),
            ));
        }
        let s = &self.sym;
        let a = &s.xs.v.x;
        let b = &s.xs.v.y;
        let c = &s.xt.v.y;
        let w1 = expr::mul(expr::cst(2.0), b.clone());
        let w2 = expr::sub(c.clone(), a.clone());
        let wnorm = expr::add(
            expr::mul(w1.clone(), w1.clone()),
            expr::mul(w2.clone(), w2.clone()),
        );
        let arg_d = |v: &str| {
            expr::div(
                expr::sub(
                    expr::mul(w1.clone(), expr::diff(&w2, v)),
                    expr::mul(w2.clone(), expr::diff(&w1, v)),
                ),
                wnorm.clone(),
            )
        };
        let rs = self.chart.r().derivative_ast(1, 0)?;
        let rt = self.chart.r().derivative_ast(0, 1)?;
        let out1 = expr::sub(arg_d("s"), expr::mul(expr::cst(2.0), rt));
        let out2 = expr::add(arg_d("t"), expr::mul(expr::cst(2.0), rs));
        let vals = self.eval_batch(&[&out1, &out2], at)?;
        Ok([vals[0], vals[1]])
    }

    /// Hamiltonian-stationarity residual |div 𝕁H| by central differences
    /// of the flux √|EG−F²| (𝕁H)^a at the given step. On a Lagrangian
    /// surface 𝕁H is tangent with components (−α/2, −β/2).
    pub fn hstationary_residual(&self, at: V2, step: f64) -> Result<f64, GeomError> {
        self.induced_metric(at)?;
        let s = &self.sym;
        let flux = |q: V2| -> Result<[f64; 2], GeomError> {
            let vals = self.eval_batch(&[&s.alpha, &s.beta, &s.det], q)?;
            let sq = vals[2].abs().sqrt();
            Ok([-0.5 * vals[0] * sq, -0.5 * vals[1] * sq])
        };
        let fe = flux(V2::new(at.x + step, at.y))?;
        let fw = flux(V2::new(at.x - step, at.y))?;
        let fn_ = flux(V2::new(at.x, at.y + step))?;
        let fs = flux(V2::new(at.x, at.y - step))?;
        let num = (fe[0] - fw[0]) / (2.0 * step) + (fn_[1] - fs[1]) / (2.0 * step);
        let sq0 = self.eval_batch(&[&s.det], at)?[0].abs().sqrt();
        Ok((num / sq0).abs())
    }

    /// div 𝕁H by exact symbolic differentiation of the same flux; the
    /// independent route for the finite-difference residual above.
    pub fn hstationary_divergence(&self, at: V2) -> Result<f64, GeomError> {
        self.induced_metric(at)?;
        let s = &self.sym;
        let div = s.div_jh.get_or_init(|| {
            let sq = expr::call(Func::Sqrt, expr::call(Func::Abs, s.det.clone()));
            let za = expr::mul(expr::cst(-0.5), s.alpha.clone());
            let zb = expr::mul(expr::cst(-0.5), s.beta.clone());
            let num = expr::add(
                expr::diff(&expr::mul(sq.clone(), za), "s"),
                expr::diff(&expr::mul(sq.clone(), zb), "t"),
            );
            expr::div(num, sq)
        });
        Ok(self.eval_batch(&[div], at)?[0])
    }

    /// Gauss curvature of the induced (possibly indefinite) metric by the
    /// Brioschi formula on symbolic E, F, G.
    pub fn induced_curvature(&self, at: V2) -> Result<f64, GeomError> {
        self.induced_metric(at)?;
        let s = &self.sym;
        let k = s.brioschi.get_or_init(|| brioschi_expr(&s.e, &s.f, &s.g, &s.det));
        Ok(self.eval_batch(&[k], at)?[0])
    }
}

fn rank_of(singular: &[f64]) -> usize {
    let top = singular.iter().fold(0.0_f64, |a, s| a.max(*s));
    if top < 1e-12 {
        return 0;
    }
    singular.iter().filter(|s| **s > tol::TOL_RANK_REL * top).count()
}

/// Brioschi curvature of a metric [[E,F],[F,G]] as one expression:
/// (det M₁ − det M₂)/(EG−F²)², valid for indefinite metrics as well.
fn brioschi_expr(e: &Arc<Expr>, f: &Arc<Expr>, g: &Arc<Expr>, det: &Arc<Expr>) -> Arc<Expr> {
    let half = |x: Arc<Expr>| expr::mul(expr::cst(0.5), x);
    let es = expr::diff(e, "s");
    let et = expr::diff(e, "t");
    let gs = expr::diff(g, "s");
    let gt = expr::diff(g, "t");
    let fs = expr::diff(f, "s");
    let ft = expr::diff(f, "t");
    let ett = expr::diff(&et, "t");
    let fst = expr::diff(&fs, "t");
    let gss = expr::diff(&gs, "s");

    // det of a 3×3 expression matrix.
    let det3 = |m: [[Arc<Expr>; 3]; 3]| -> Arc<Expr> {
        let minor = |a: &Arc<Expr>, b: &Arc<Expr>, c: &Arc<Expr>, d: &Arc<Expr>| {
            expr::sub(expr::mul(a.clone(), d.clone()), expr::mul(b.clone(), c.clone()))
        };
        expr::add(
            expr::sub(
                expr::mul(m[0][0].clone(), minor(&m[1][1], &m[1][2], &m[2][1], &m[2][2])),
                expr::mul(m[0][1].clone(), minor(&m[1][0], &m[1][2], &m[2][0], &m[2][2])),
            ),
            expr::mul(m[0][2].clone(), minor(&m[1][0], &m[1][1], &m[2][0], &m[2][1])),
        )
    };

    let m1 = [
        [
            expr::add(
                expr::sub(fst, half(ett)),
                expr::neg(half(gss)),
            ),
            half(es.clone()),
            expr::sub(fs, half(et.clone())),
        ],
        [
            expr::sub(ft, half(gs.clone())),
            e.clone(),
            f.clone(),
        ],
        [half(gt), f.clone(), g.clone()],
    ];
    let m2 = [
        [expr::cst(0.0), half(et.clone()), half(gs.clone())],
        [half(et), e.clone(), f.clone()],
        [half(gs), f.clone(), g.clone()],
    ];
    expr::div(
        expr::sub(det3(m1), det3(m2)),
        expr::mul(det.clone(), det.clone()),
    )
}

/// The graph of a closed 1-form: X = (p, ∇u) with ∇u = e^{−2r}(u_s, u_t),
/// always Lagrangian; the model rank-2 family.
#[derive(Debug, Clone)]
pub struct GradientGraph {
    immersion: TBImmersion,
    u: ScalarField,
}

impl GradientGraph {
    pub fn new(
        chart: Arc<ConformalChart>,
        u_text: &str,
        domain: Rect,
        params: &[(&str, f64)],
    ) -> Result<GradientGraph, GeomError> {
        let u = ScalarField::new(u_text, &["s", "t"], params)?;
        Self::from_field(chart, u, domain)
    }

    pub fn from_field(
        chart: Arc<ConformalChart>,
        u: ScalarField,
        domain: Rect,
    ) -> Result<GradientGraph, GeomError> {
        let inv = expr::call(
            Func::Exp,
            expr::mul(expr::cst(-2.0), chart.r().ast().clone()),
        );
        let v1 = expr::mul(inv.clone(), u.derivative_ast(1, 0)?);
        let v2 = expr::mul(inv, u.derivative_ast(0, 1)?);
        let id_s = ScalarField::new("s", &["s", "t"], &[])?;
        let id_t = ScalarField::new("t", &["s", "t"], &[])?;
        let immersion = TBImmersion::from_fields(
            chart,
            [id_s, id_t],
            [
                ScalarField::from_ast(v1, &["s", "t"], &[])?,
                ScalarField::from_ast(v2, &["s", "t"], &[])?,
            ],
            domain,
        )?;
        Ok(GradientGraph { immersion, u })
    }

    pub fn with_tol_null(mut self, tol: f64) -> GradientGraph {
        self.immersion = self.immersion.with_tol_null(tol);
        self
    }

    pub fn immersion(&self) -> &TBImmersion {
        &self.immersion
    }

    pub fn into_immersion(self) -> TBImmersion {
        self.immersion
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }
}

/// Ruled surface over a base curve: X(s,t) = (γ(s), a(s)γ' + t jγ');
/// Lagrangian for every offset a, with projection rank 1. Needs γ in
/// arclength so that jγ' spans the fiber direction isometrically.
#[derive(Debug, Clone)]
pub struct AffineNormalBundle {
    immersion: TBImmersion,
    curve: CurveOnSurface,
    offset: ScalarField,
}

impl AffineNormalBundle {
    pub fn new(
        curve: CurveOnSurface,
        offset: ScalarField,
        t_range: (f64, f64),
    ) -> Result<AffineNormalBundle, GeomError> {
        if !curve.is_arclength() {
            return Err(GeomError::Numerical(
                "affine normal bundles need an arclength base curve".into(),
            ));
        }
        let xp = curve.x().ast().clone();
        let yp = curve.y().ast().clone();
        let dx = expr::diff(&xp, "s");
        let dy = expr::diff(&yp, "s");
        let a = offset.ast().clone();
        let t = expr::var("t");
        // ξ = a γ' + t jγ' with jγ' = (−y', x').
        let v1 = expr::sub(expr::mul(a.clone(), dx.clone()), expr::mul(t.clone(), dy.clone()));
        let v2 = expr::add(expr::mul(a, dy), expr::mul(t, dx));
        let span = curve.span();
        let domain = Rect::new(span.0, span.1, t_range.0, t_range.1);
        let mk = |ast: Arc<Expr>| ScalarField::from_ast(ast, &["s", "t"], &[]);
        let immersion = TBImmersion::from_fields(
            curve.chart().clone(),
            [mk(xp)?, mk(yp)?],
            [mk(v1)?, mk(v2)?],
            domain,
        )?;
        Ok(AffineNormalBundle {
            immersion,
            curve,
            offset,
        })
    }

    pub fn immersion(&self) -> &TBImmersion {
        &self.immersion
    }

    pub fn into_immersion(self) -> TBImmersion {
        self.immersion
    }

    pub fn curve(&self) -> &CurveOnSurface {
        &self.curve
    }

    pub fn offset(&self) -> &ScalarField {
        &self.offset
    }
}

/// Covariant fiber-derivative entries of a gradient graph and their first
/// parameter derivatives, as plain numbers: with q = e^{−2r} and
///   A = u_ss − r_s u_s + r_t u_t,
///   B = u_st − r_s u_t − r_t u_s,
///   C = u_tt + r_s u_s − r_t u_t,
/// the frame is X_s = ((1,0), q(A,B)), X_t = ((0,1), q(B,C)); the conformal
/// factors cancel in the induced metric, (E, F, G) = (−2B, A − C, 2B).
struct GraphData {
    q: f64,
    abc: [f64; 3],
    d_s: [f64; 3],
    d_t: [f64; 3],
}

fn graph_data(rj: &Jet, uj: &Jet) -> GraphData {
    let (rs, rt) = (rj.partial(1, 0), rj.partial(0, 1));
    let (rss, rst, rtt) = (rj.partial(2, 0), rj.partial(1, 1), rj.partial(0, 2));
    let u = |i: u8, j: u8| uj.partial(i, j);
    GraphData {
        q: (-2.0 * rj.partial(0, 0)).exp(),
        abc: [
            u(2, 0) - rs * u(1, 0) + rt * u(0, 1),
            u(1, 1) - rs * u(0, 1) - rt * u(1, 0),
            u(0, 2) + rs * u(1, 0) - rt * u(0, 1),
        ],
        d_s: [
            u(3, 0) - rss * u(1, 0) - rs * u(2, 0) + rst * u(0, 1) + rt * u(1, 1),
            u(2, 1) - rss * u(0, 1) - rs * u(1, 1) - rst * u(1, 0) - rt * u(2, 0),
            u(1, 2) + rss * u(1, 0) + rs * u(2, 0) - rst * u(0, 1) - rt * u(1, 1),
        ],
        d_t: [
            u(2, 1) - rst * u(1, 0) - rs * u(1, 1) + rtt * u(0, 1) + rt * u(0, 2),
            u(1, 2) - rst * u(0, 1) - rs * u(0, 2) - rtt * u(1, 0) - rt * u(1, 1),
            u(0, 3) + rst * u(1, 0) + rs * u(1, 1) - rtt * u(0, 1) - rt * u(0, 2),
        ],
    }
}

/// |H| of the gradient graph at a single point from the data above, or None
/// where the induced metric is degenerate (|EG − F²| below the relative
/// threshold). Split off from the field-based entry point so the probe can
/// reuse precomputed jets.
fn graph_h_from_data(rj: &Jet, gd: &GraphData) -> Option<f64> {
    let [aa, bb, cc] = gd.abc;
    let (e, f, g) = (-2.0 * bb, aa - cc, 2.0 * bb);
    let det = e * g - f * f;
    // Same scale convention as the immersion: ¼(‖X_s‖² + ‖X_t‖²)² in the
    // split Euclidean norm, with the fiber parts carrying q = e^{−2r}.
    let q2 = gd.q * gd.q;
    let frame2 = 2.0 + q2 * (aa * aa + 2.0 * bb * bb + cc * cc);
    if det.abs() < tol::TOL_NULL_REL * 0.25 * frame2 * frame2 {
        return None;
    }
    // Pairings 𝔾(2H, 𝕁X_c) by the angle-gradient route: the conformal
    // factor drops out of arg w, so W = (2B, C − A) works directly.
    let w = [2.0 * bb, cc - aa];
    let dws = [2.0 * gd.d_s[1], gd.d_s[2] - gd.d_s[0]];
    let dwt = [2.0 * gd.d_t[1], gd.d_t[2] - gd.d_t[0]];
    let n2 = w[0] * w[0] + w[1] * w[1];
    let (rs, rt) = (rj.partial(1, 0), rj.partial(0, 1));
    let w1 = (w[0] * dws[1] - w[1] * dws[0]) / n2 - 2.0 * rt;
    let w2 = (w[0] * dwt[1] - w[1] * dwt[0]) / n2 + 2.0 * rs;
    // 2H = α𝕁X_s + β𝕁X_t; its split components in chart coordinates are
    // ((−β, α), q(−αB − βC, αA + βB)).
    let [alpha, beta] = solve2([[e, f], [f, g]], [w1, w2])?;
    let fiber = (
        gd.q * (-alpha * bb - beta * cc),
        gd.q * (alpha * aa + beta * bb),
    );
    let h2 = alpha * alpha + beta * beta + fiber.0 * fiber.0 + fiber.1 * fiber.1;
    Some(0.5 * h2.sqrt())
}

/// |H| (Euclidean norm of the split components of the mean curvature) for
/// the gradient graph of u, computed numerically from a third-order jet of
/// u and a second-order jet of the chart exponent. Agrees with building the
/// [`GradientGraph`] and calling `mean_curvature` wherever both are defined,
/// at a fraction of the cost: no symbolic composition happens per call.
pub fn graph_mean_curvature_magnitude(
    chart: &ConformalChart,
    u: &ScalarField,
    at: V2,
) -> Result<f64, GeomError> {
    let p = [at.x, at.y];
    let rj = chart.r().jet(&p, 2)?;
    let uj = u.jet(&p, 3)?;
    let gd = graph_data(&rj, &uj);
    graph_h_from_data(&rj, &gd).ok_or_else(|| {
        let [aa, bb, cc] = gd.abc;
        GeomError::NullPoint {
            det: -(4.0 * bb * bb + (aa - cc) * (aa - cc)),
            tol: tol::TOL_NULL_REL,
        }
    })
}

/// Outcome of [`minimal_graph_probe`].
#[derive(Debug, Clone, Copy)]
pub struct ProbeResult {
    /// Smallest achieved max|H| over the sample grid, across all restarts.
    pub min_max_h: f64,
    /// Unit coefficient vector (s², st, t², s³, s²t, t³) attaining it.
    pub best_coeffs: [f64; 6],
    /// Total objective evaluations spent.
    pub evals: usize,
}

const PROBE_MONOMIALS: [&str; 6] = ["s^2", "s*t", "t^2", "s^3", "s^2*t", "t^3"];

/// Search for a minimal gradient graph u = Σ cᵢ·mᵢ over the six-parameter
/// polynomial family (coefficients normalized to the unit sphere, so the
/// trivially minimal zero section is excluded). The objective is max|H| on
/// a 5×5 grid spanning the central 60% of the chart domain; points inside
/// the null locus are skipped and configurations with fewer than eight
/// usable points are rejected with a large penalty. Multi-start
/// Nelder–Mead; deterministic for a fixed seed.
pub fn minimal_graph_probe(
    chart: &ConformalChart,
    seed: u64,
    restarts: usize,
    iters: usize,
) -> Result<ProbeResult, GeomError> {
    const PENALTY: f64 = 1e6;
    let d = chart.domain();
    let (cs, ct) = (0.5 * (d.s0 + d.s1), 0.5 * (d.t0 + d.t1));
    let (hs, ht) = (0.3 * (d.s1 - d.s0), 0.3 * (d.t1 - d.t0));
    // Jets are linear in the coefficients: precompute one order-3 jet per
    // monomial per grid point, plus the chart jet, then every objective
    // evaluation is pure arithmetic.
    let fields = PROBE_MONOMIALS
        .iter()
        .map(|m| ScalarField::new(m, &["s", "t"], &[]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut nodes: Vec<(Jet, Vec<Jet>)> = Vec::with_capacity(25);
    for i in 0..5 {
        for j in 0..5 {
            let p = [
                cs + hs * (i as f64 / 2.0 - 1.0),
                ct + ht * (j as f64 / 2.0 - 1.0),
            ];
            let rj = chart.r().jet(&p, 2)?;
            let mono = fields
                .iter()
                .map(|f| f.jet(&p, 3))
                .collect::<Result<Vec<_>, _>>()?;
            nodes.push((rj, mono));
        }
    }
    let mut evals = 0usize;
    let mut objective = |c: &[f64]| -> f64 {
        evals += 1;
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return PENALTY;
        }
        let mut worst = 0.0f64;
        let mut usable = 0usize;
        for (rj, mono) in &nodes {
            let mut uj = Jet::zero(3);
            for (ck, mj) in c.iter().zip(mono) {
                uj.add_scaled(ck / norm, mj);
            }
            let gd = graph_data(rj, &uj);
            if let Some(h) = graph_h_from_data(rj, &gd) {
                worst = worst.max(h);
                usable += 1;
            }
        }
        if usable < 8 {
            PENALTY
        } else {
            worst
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (PENALTY, vec![0.0; 6]);
    for _ in 0..restarts.max(1) {
        let start: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (point, value) = nelder_mead(&mut objective, &start, 0.35, iters);
        if value < best.0 {
            best = (value, point);
        }
    }
    let norm = best.1.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let mut coeffs = [0.0; 6];
    for (o, b) in coeffs.iter_mut().zip(&best.1) {
        *o = b / norm;
    }
    Ok(ProbeResult {
        min_max_h: best.0,
        best_coeffs: coeffs,
        evals,
    })
}
