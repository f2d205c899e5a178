//! Flat-chart laboratory: the Lagrangian angle of gradient graphs over
//! the Euclidean chart, the constant-angle (minimal) family, coordinate
//! rotations, pseudo-orthonormal tangent frames, and grid surveys of the
//! angle across the null locus.
//!
//! Over the flat chart the fiber derivative of a gradient section is the
//! Hessian of the potential, ∇ξ = [[a, b], [b, c]] with a = u_ss,
//! b = u_st, c = u_tt, and the Lagrangian angle is
//! β = arg(2b + i(c − a)) ∈ (−π, π]. Its defining identity is
//! 2H = 𝕁∇β with ∇β the induced-metric gradient; minimal graphs are
//! exactly those of constant angle.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::Vector2;

use crate::basegeo::{ChartKind, ConformalChart, GeomError};
use crate::expr::{self, ScalarField};
use crate::lagrangian::GradientGraph;
use crate::numerics::Rect;
use crate::tbundle::{gmetric, jmap, SplitTangent};

type V2 = Vector2<f64>;

/// Wrap an angle into (−π, π].
pub fn normalize_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else if y == 0.0 {
        0.0
    } else {
        y
    }
}

fn require_flat(gg: &GradientGraph) -> Result<(), GeomError> {
    if gg.immersion().chart().kind() != ChartKind::Flat {
        return Err(GeomError::Numerical(
            "flat-chart analysis applied to a curved chart".into(),
        ));
    }
    Ok(())
}

/// Hessian entries (u_ss, u_st, u_tt) of the potential at a point.
fn hessian(gg: &GradientGraph, at: V2) -> Result<(f64, f64, f64), GeomError> {
    let jet = gg.u().jet(&[at.x, at.y], 2)?;
    Ok((jet.partial(2, 0), jet.partial(1, 1), jet.partial(0, 2)))
}

/// Lagrangian angle β = arg(2u_st + i(u_tt − u_ss)) ∈ (−π, π].
/// Errors at null points, where the defining vector vanishes.
pub fn lagrangian_angle(gg: &GradientGraph, at: V2) -> Result<f64, GeomError> {
    require_flat(gg)?;
    gg.immersion().induced_metric(at)?;
    let (a, b, c) = hessian(gg, at)?;
    Ok(normalize_angle((c - a).atan2(2.0 * b)))
}

/// ‖2H − 𝕁∇β‖ in the split norm: the pointwise defect of the
/// angle-gradient identity. The β derivatives are taken branch-free from
/// the vector w = (2u_st, u_tt − u_ss) as (w × ∂w)/|w|².
pub fn angle_gradient_residual(gg: &GradientGraph, at: V2) -> Result<f64, GeomError> {
    require_flat(gg)?;
    let imm = gg.immersion();
    let m = imm.induced_metric(at)?;

    let u = gg.u().ast();
    let uss = expr::diff(&expr::diff(u, "s"), "s");
    let ust = expr::diff(&expr::diff(u, "s"), "t");
    let utt = expr::diff(&expr::diff(u, "t"), "t");
    let w1 = expr::mul(expr::cst(2.0), ust);
    let w2 = expr::sub(utt, uss);
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
    let q = [at.x, at.y];
    let beta_s = ScalarField::from_ast(arg_d("s"), &["s", "t"], &[])?.eval(&q)?;
    let beta_t = ScalarField::from_ast(arg_d("t"), &["s", "t"], &[])?.eval(&q)?;

    // ∇β = g^{ab} β_b X_a with the induced metric.
    let c1 = (m.g * beta_s - m.f * beta_t) / m.det;
    let c2 = (m.e * beta_t - m.f * beta_s) / m.det;
    let fr = imm.frame(at)?;
    let grad = fr[0] * c1 + fr[1] * c2;
    let mc = imm.mean_curvature(at)?;
    let diff = mc.vector * 2.0 - jmap(grad);
    // Flat chart: the split norm has unit conformal factor.
    Ok((diff.h.dot(&diff.h) + diff.v.dot(&diff.v)).sqrt())
}

/// Residual of the constant-angle equation
/// cos(β₀)(u_tt − u_ss) − 2 sin(β₀) u_st at a point; a flat gradient
/// graph is minimal with angle β₀ exactly when this vanishes.
pub fn constant_angle_residual(
    u: &ScalarField,
    beta0: f64,
    at: V2,
) -> Result<f64, GeomError> {
    let jet = u.jet(&[at.x, at.y], 2)?;
    let (a, b, c) = (jet.partial(2, 0), jet.partial(1, 1), jet.partial(0, 2));
    Ok(beta0.cos() * (c - a) - 2.0 * beta0.sin() * b)
}

/// Two profile functions of one variable `q` and a target angle β₀.
/// In coordinates rotated by θ = β₀/2 + π/4 the potential
/// u = f₁(q₊) + f₂(q₋) solves the constant-angle equation for every
/// profile pair; when f₁″ > f₂″ the angle is exactly β₀ (it shifts by π
/// where the ordering reverses).
#[derive(Debug, Clone)]
pub struct MinimalFamilySpec {
    pub beta0: f64,
    /// f₁(q), DSL text in the variable q.
    pub profile_plus: String,
    /// f₂(q), DSL text in the variable q.
    pub profile_minus: String,
}

/// Assemble the minimal-family potential and its gradient graph.
pub fn build_minimal(
    spec: &MinimalFamilySpec,
    domain: Rect,
    params: &[(&str, f64)],
) -> Result<GradientGraph, GeomError> {
    let theta = 0.5 * spec.beta0 + FRAC_PI_4;
    let (cs, sn) = (theta.cos(), theta.sin());
    let f1 = ScalarField::new(&spec.profile_plus, &["q"], params)?;
    let f2 = ScalarField::new(&spec.profile_minus, &["q"], params)?;
    let qplus = expr::add(
        expr::mul(expr::cst(cs), expr::var("s")),
        expr::mul(expr::cst(sn), expr::var("t")),
    );
    let qminus = expr::sub(
        expr::mul(expr::cst(cs), expr::var("t")),
        expr::mul(expr::cst(sn), expr::var("s")),
    );
    let u = expr::add(
        expr::substitute(f1.ast(), "q", &qplus),
        expr::substitute(f2.ast(), "q", &qminus),
    );
    let field = ScalarField::from_ast(u, &["s", "t"], &[])?;
    GradientGraph::from_field(ConformalChart::flat(), field, domain)
}

/// Pull the potential back along the rotation by −φ, i.e.
/// u′(x) = u(R_{−φ} x). The graph of u′ is the image of the graph of u
/// under the rotation by φ, and the Lagrangian angle shifts by 2φ.
pub fn rotate_coordinates(u: &ScalarField, phi: f64) -> Result<ScalarField, GeomError> {
    let (cs, sn) = (phi.cos(), phi.sin());
    let snew = expr::add(
        expr::mul(expr::cst(cs), expr::var("s")),
        expr::mul(expr::cst(sn), expr::var("t")),
    );
    let tnew = expr::sub(
        expr::mul(expr::cst(cs), expr::var("t")),
        expr::mul(expr::cst(sn), expr::var("s")),
    );
    Ok(u.substituted(&[("s", snew), ("t", tnew)], &["s", "t"])?)
}

/// 𝔾-orthonormal tangent frame at a point of a Lagrangian surface:
/// 𝔾(e₁,e₁) = −1, 𝔾(e₂,e₂) = +1, 𝔾(e₁,e₂) = 0. Exists wherever the
/// induced metric is nondegenerate (it then has signature (1,1)).
#[derive(Debug, Clone, Copy)]
pub struct FlatLagrangianFrame {
    pub e1: SplitTangent,
    pub e2: SplitTangent,
}

/// Diagonalize the induced metric and rescale the eigen-directions.
pub fn pseudo_orthonormal_frame(
    imm: &crate::lagrangian::TBImmersion,
    at: V2,
) -> Result<FlatLagrangianFrame, GeomError> {
    let m = imm.induced_metric(at)?;
    let fr = imm.frame(at)?;
    // Symmetric 2×2 eigenvectors: for eigenvalue λ, (E−λ)x + Fy = 0.
    let (lo, hi) = crate::numerics::eig2_real([[m.e, m.f], [m.f, m.g]]);
    if !(lo < 0.0 && hi > 0.0) {
        return Err(GeomError::Numerical(format!(
            "induced metric is not of signature (1,1): eigenvalues {lo}, {hi}"
        )));
    }
    let evec = |lambda: f64| -> V2 {
        // Pick the better-conditioned row of (M − λI).
        let r1 = V2::new(m.e - lambda, m.f);
        let r2 = V2::new(m.f, m.g - lambda);
        let v = if r1.norm() >= r2.norm() {
            V2::new(-r1.y, r1.x)
        } else {
            V2::new(-r2.y, r2.x)
        };
        v / v.norm()
    };
    let v1 = evec(lo);
    let v2 = evec(hi);
    let comb = |v: V2| fr[0] * v.x + fr[1] * v.y;
    // 𝔾(vᵀX, vᵀX) = vᵀMv = λ|v|² = λ for unit v.
    let e1 = comb(v1) * (1.0 / (-lo).sqrt());
    let e2 = comb(v2) * (1.0 / hi.sqrt());
    Ok(FlatLagrangianFrame { e1, e2 })
}

/// Verification helper: the three 𝔾-pairings of a candidate frame,
/// ordered (𝔾(e₁,e₁), 𝔾(e₂,e₂), 𝔾(e₁,e₂)).
pub fn frame_pairings(
    imm: &crate::lagrangian::TBImmersion,
    at: V2,
    frame: &FlatLagrangianFrame,
) -> Result<[f64; 3], GeomError> {
    let p = imm.point(at)?;
    let chart = imm.chart();
    Ok([
        gmetric(chart, p, frame.e1, frame.e1)?,
        gmetric(chart, p, frame.e2, frame.e2)?,
        gmetric(chart, p, frame.e1, frame.e2)?,
    ])
}

/// One connected component of the non-null grid nodes.
#[derive(Debug, Clone)]
pub struct AngleComponent {
    /// Number of grid nodes in the component.
    pub size: usize,
    /// Circular mean of the angle over the component.
    pub mean_angle: f64,
    /// Root-mean-square circular deviation from the mean.
    pub circular_stddev: f64,
    /// A parameter point inside the component.
    pub representative: V2,
}

/// Result of sampling the Lagrangian angle over a parameter grid.
#[derive(Debug, Clone)]
pub struct AngleSurvey {
    pub grid: usize,
    /// Nodes where the induced metric fell under the null threshold.
    pub null_nodes: usize,
    /// Components sorted by size, largest first.
    pub components: Vec<AngleComponent>,
}

/// Sample β on an n×n grid over the graph's domain, split the non-null
/// nodes into connected components, and report per-component circular
/// statistics. Adjacent nodes are connected only when the defining
/// vector w keeps its direction across the edge (positive dot product);
/// a transversal zero of w between two nodes flips it, so components do
/// not leak across the null locus even when no sampled node lies on it.
pub fn survey_angle(gg: &GradientGraph, grid: usize) -> Result<AngleSurvey, GeomError> {
    require_flat(gg)?;
    assert!(grid >= 2, "angle survey needs at least a 2x2 grid");
    let imm = gg.immersion();
    let d = imm.domain();
    let n = grid;
    let point = |i: usize, j: usize| {
        V2::new(
            d.s0 + (d.s1 - d.s0) * (i as f64) / ((n - 1) as f64),
            d.t0 + (d.t1 - d.t0) * (j as f64) / ((n - 1) as f64),
        )
    };

    // Per node: None = null, Some((β, w)).
    let mut data: Vec<Option<(f64, V2)>> = Vec::with_capacity(n * n);
    let mut null_nodes = 0usize;
    for j in 0..n {
        for i in 0..n {
            let at = point(i, j);
            match imm.induced_metric(at) {
                Ok(_) => {
                    let (a, b, c) = hessian(gg, at)?;
                    let w = V2::new(2.0 * b, c - a);
                    data.push(Some((normalize_angle(w.y.atan2(w.x)), w)));
                }
                Err(GeomError::NullPoint { .. }) => {
                    null_nodes += 1;
                    data.push(None);
                }
                Err(other) => return Err(other),
            }
        }
    }

    let idx = |i: usize, j: usize| j * n + i;
    let mut component = vec![usize::MAX; n * n];
    let mut comps: Vec<AngleComponent> = Vec::new();
    for j0 in 0..n {
        for i0 in 0..n {
            let start = idx(i0, j0);
            if component[start] != usize::MAX || data[start].is_none() {
                continue;
            }
            let id = comps.len();
            let mut queue = VecDeque::from([(i0, j0)]);
            component[start] = id;
            let mut members: Vec<(usize, usize)> = Vec::new();
            while let Some((i, j)) = queue.pop_front() {
                members.push((i, j));
                let here = data[idx(i, j)].unwrap().1;
                let mut push = |i2: usize, j2: usize| {
                    let k = idx(i2, j2);
                    if component[k] == usize::MAX {
                        if let Some((_, w2)) = data[k] {
                            if here.dot(&w2) > 0.0 {
                                component[k] = id;
                                queue.push_back((i2, j2));
                            }
                        }
                    }
                };
                if i > 0 {
                    push(i - 1, j);
                }
                if i + 1 < n {
                    push(i + 1, j);
                }
                if j > 0 {
                    push(i, j - 1);
                }
                if j + 1 < n {
                    push(i, j + 1);
                }
            }
            // Circular statistics over the members.
            let (mut sx, mut sy) = (0.0, 0.0);
            for &(i, j) in &members {
                let beta = data[idx(i, j)].unwrap().0;
                sx += beta.cos();
                sy += beta.sin();
            }
            let mean = normalize_angle(sy.atan2(sx));
            let mut dev2 = 0.0;
            for &(i, j) in &members {
                let beta = data[idx(i, j)].unwrap().0;
                let delta = (beta - mean).sin().atan2((beta - mean).cos());
                dev2 += delta * delta;
            }
            let (ri, rj) = members[members.len() / 2];
            comps.push(AngleComponent {
                size: members.len(),
                mean_angle: mean,
                circular_stddev: (dev2 / members.len() as f64).sqrt(),
                representative: point(ri, rj),
            });
        }
    }
    comps.sort_by(|a, b| b.size.cmp(&a.size));
    Ok(AngleSurvey {
        grid: n,
        null_nodes,
        components: comps,
    })
}
