//! Normal line congruences of surfaces in Euclidean and Minkowski 3-space,
//! realized as Lagrangian surfaces in TΣ.
//!
//! An oriented line in Euclidean 3-space is a pair (N, Y): a unit direction
//! N and the moment foot Y = X − ⟨X, N⟩N, the point of the line closest to
//! the origin. The normals of an oriented surface S trace a map
//! X̄ = (N, Y) into the tangent bundle of the unit sphere; stereographic
//! projection from the south pole carries that bundle onto the sphere chart
//! used by [`TBImmersion`]. In Minkowski 3-space the unit normal of a
//! spacelike surface lives on the upper hyperboloid ⟨N, N⟩₁ = −1, the moment
//! foot is Y = X + ⟨X, N⟩₁N, and the same projection lands in the Poincaré
//! disk chart.
//!
//! Three classical facts drive the test oracles here:
//! the congruence is Lagrangian for Ω; its 𝔾-area element equals
//! |λ − μ| times the surface area element (λ, μ the principal curvatures),
//! so the congruence area is twice the functional ½∫|λ − μ| dA; and a
//! normal variation of the surface with speed h induces a Hamiltonian
//! variation of the congruence, V̄^⊥ = ε·𝕁 grad h with ε = ⟨N, N⟩ the causal
//! sign of the normal, the gradient taken in the induced 𝔾-metric.
//!
//! Two independent realizations of the line-space tensors coexist and are
//! cross-checked in the test suites. The chart route composes the immersion
//! with stereographic projection and reuses the whole [`TBImmersion`]
//! machinery; it degenerates on the measure-zero set where a normal points
//! straight down (the projection's excluded direction). The ambient route
//! keeps (N, Y) in ℝ³ with split tangents (ν, η^T), Ω(ξ, ζ) =
//! ⟨Kξ, Pζ⟩ − ⟨Pξ, Kζ⟩ and the rotation j = N × ·; it has no chart
//! singularities and is therefore the one used for area quadrature.

use std::sync::{Arc, OnceLock};

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::basegeo::{ConformalChart, GeomError};
use crate::expr::{self, Expr, Func, ScalarField};
use crate::lagrangian::TBImmersion;
use crate::numerics::{eig2_real, quad2d, quad2d_adaptive, solve2, GaussLegendre, QuadResult, Rect};
use crate::tbundle::{gmetric, jmap, split_gnorm, SplitTangent};
use crate::tol;

type V2 = Vector2<f64>;
type V3 = Vector3<f64>;

/// ⟨u, v⟩₁ = u₁v₁ + u₂v₂ − u₃v₃.
pub fn minkowski_dot(u: V3, v: V3) -> f64 {
    u.x * v.x + u.y * v.y - u.z * v.z
}

/// Minkowski cross product: ⟨u ×₁ v, w⟩₁ = det(u, v, w), so
/// u ×₁ v = ((u × v)₁, (u × v)₂, −(u × v)₃) and u ×₁ v ⊥₁ u, v.
pub fn minkowski_cross(u: V3, v: V3) -> V3 {
    let c = u.cross(&v);
    V3::new(c.x, c.y, -c.z)
}

/// Ambient signature for a parametric surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientSpace {
    Euclidean,
    /// ℝ³ with ⟨u, v⟩₁ = u₁v₁ + u₂v₂ − u₃v₃; surfaces must be spacelike.
    Minkowski,
}

impl AmbientSpace {
    pub fn dot(self, u: V3, v: V3) -> f64 {
        match self {
            AmbientSpace::Euclidean => u.dot(&v),
            AmbientSpace::Minkowski => minkowski_dot(u, v),
        }
    }

    pub fn cross(self, u: V3, v: V3) -> V3 {
        match self {
            AmbientSpace::Euclidean => u.cross(&v),
            AmbientSpace::Minkowski => minkowski_cross(u, v),
        }
    }
}

/// Symbolic dot product respecting the ambient signature.
fn dot3_expr(space: AmbientSpace, a: &[Arc<Expr>; 3], b: &[Arc<Expr>; 3]) -> Arc<Expr> {
    let planar = expr::add(
        expr::mul(a[0].clone(), b[0].clone()),
        expr::mul(a[1].clone(), b[1].clone()),
    );
    let vertical = expr::mul(a[2].clone(), b[2].clone());
    match space {
        AmbientSpace::Euclidean => expr::add(planar, vertical),
        AmbientSpace::Minkowski => expr::sub(planar, vertical),
    }
}

/// Symbolic cross product; the Minkowski variant negates the third slot.
fn cross3_expr(space: AmbientSpace, a: &[Arc<Expr>; 3], b: &[Arc<Expr>; 3]) -> [Arc<Expr>; 3] {
    let minor = |i: usize, j: usize| {
        expr::sub(
            expr::mul(a[i].clone(), b[j].clone()),
            expr::mul(a[j].clone(), b[i].clone()),
        )
    };
    let z = minor(0, 1);
    [
        minor(1, 2),
        minor(2, 0),
        match space {
            AmbientSpace::Euclidean => z,
            AmbientSpace::Minkowski => expr::neg(z),
        },
    ]
}

/// Point of the oriented-line space in its ambient realization: the unit
/// direction N and the moment foot Y, the point of the line closest to the
/// origin (Y ⊥ N in the ambient pairing).
#[derive(Debug, Clone, Copy)]
pub struct LinePoint {
    pub n: V3,
    pub y: V3,
}

/// Tangent vector to the oriented-line space in the ambient realization,
/// split as (ν, η^T): ν = Ṅ is the horizontal part and η^T the component of
/// Ẏ orthogonal to N. Both live in the plane N^⊥ ⊂ ℝ³.
#[derive(Debug, Clone, Copy)]
pub struct SplitLineTangent {
    pub h: V3,
    pub v: V3,
}

/// Complex-structure rotation of a single N^⊥ vector: the cross product with
/// N in the ambient signature.
pub fn ambient_j(space: AmbientSpace, n: V3, v: V3) -> V3 {
    space.cross(n, v)
}

/// 𝕁 acts on split line tangents by rotating both parts with N.
pub fn ambient_jmap(space: AmbientSpace, n: V3, xi: SplitLineTangent) -> SplitLineTangent {
    SplitLineTangent {
        h: ambient_j(space, n, xi.h),
        v: ambient_j(space, n, xi.v),
    }
}

/// Symplectic pairing of two line tangents at the same line,
/// Ω(ξ, ζ) = ⟨ξ_v, ζ_h⟩ − ⟨ξ_h, ζ_v⟩ in the ambient signature.
pub fn ambient_omega(space: AmbientSpace, xi: SplitLineTangent, zeta: SplitLineTangent) -> f64 {
    space.dot(xi.v, zeta.h) - space.dot(xi.h, zeta.v)
}

/// Neutral metric 𝔾(ξ, ζ) = Ω(𝕁ξ, ζ) in the ambient realization.
pub fn ambient_gmetric(
    space: AmbientSpace,
    n: V3,
    xi: SplitLineTangent,
    zeta: SplitLineTangent,
) -> f64 {
    ambient_omega(space, ambient_jmap(space, n, xi), zeta)
}

/// Cached symbolic data for the normal congruence of a surface: the unit
/// normal N and the moment foot Y as fields of (s, t), differentiated on
/// demand through the field jet cache.
#[derive(Debug, Clone)]
struct LineSymbols {
    n: [ScalarField; 3],
    y: [ScalarField; 3],
}

/// Principal curvature data of an ambient surface at a point, for the
/// Weingarten map A = −dN expressed in the (X_s, X_t) coordinate basis.
/// `lambda ≤ mu`; each eigenvalue carries its parameter-space direction.
#[derive(Debug, Clone, Copy)]
pub struct ShapeData {
    pub lambda: f64,
    pub mu: f64,
    pub dir_lambda: V2,
    pub dir_mu: V2,
}

impl ShapeData {
    pub fn mean(&self) -> f64 {
        0.5 * (self.lambda + self.mu)
    }

    pub fn gauss(&self) -> f64 {
        self.lambda * self.mu
    }

    /// The principal curvature whose direction is closest to the s-axis,
    /// then the one for the t-axis. Useful on curvature-line charts.
    pub fn by_direction(&self) -> (f64, f64) {
        if self.dir_lambda.x.abs() >= self.dir_mu.x.abs() {
            (self.lambda, self.mu)
        } else {
            (self.mu, self.lambda)
        }
    }
}

/// Oriented parametric surface in Euclidean or Minkowski 3-space, stored as
/// three scalar fields over (s, t). Catalog constructors mark whether their
/// parametrization is by curvature lines.
#[derive(Debug, Clone)]
pub struct AmbientSurface {
    space: AmbientSpace,
    name: String,
    x: [ScalarField; 3],
    domain: Rect,
    curvature_line: bool,
    /// ±1 applied to the raw cross product; Minkowski constructors pick the
    /// future-pointing normal, Euclidean ones keep the parametrization.
    orient: f64,
    /// Lazily built symbolic (N, Y) fields for the ambient line-space route.
    line: OnceLock<LineSymbols>,
}

const SURFACE_VARS: [&str; 2] = ["s", "t"];

impl AmbientSurface {
    fn build(
        space: AmbientSpace,
        name: &str,
        texts: [&str; 3],
        params: &[(&str, f64)],
        domain: Rect,
        curvature_line: bool,
    ) -> Result<AmbientSurface, GeomError> {
        let mk = |t: &str| ScalarField::new(t, &SURFACE_VARS, params);
        let mut surf = AmbientSurface {
            space,
            name: name.into(),
            x: [mk(texts[0])?, mk(texts[1])?, mk(texts[2])?],
            domain,
            curvature_line,
            orient: 1.0,
            line: OnceLock::new(),
        };
        if space == AmbientSpace::Minkowski {
            surf.orient_future()?;
        }
        Ok(surf)
    }

    /// Flip the raw normal if needed so that N points to the future (N₃ > 0),
    /// sampled at the domain center.
    fn orient_future(&mut self) -> Result<(), GeomError> {
        let at = V2::new(
            0.5 * (self.domain.s0 + self.domain.s1),
            0.5 * (self.domain.t0 + self.domain.t1),
        );
        let (xs, xt) = self.velocities(at)?;
        let c = self.space.cross(xs, xt);
        if minkowski_dot(c, c) >= 0.0 {
            return Err(GeomError::Numerical(format!(
                "surface '{}' is not spacelike at the domain center",
                self.name
            )));
        }
        self.orient = if c.z > 0.0 { 1.0 } else { -1.0 };
        Ok(())
    }

    /// Round sphere of the given radius, in polar/azimuthal coordinates.
    /// Totally umbilic: its congruence collapses onto the zero section.
    pub fn sphere(radius: f64) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "sphere",
            ["a*sin(s)*cos(t)", "a*sin(s)*sin(t)", "a*cos(s)"],
            &[("a", radius)],
            Rect::new(0.35, std::f64::consts::PI - 0.35, 0.0, std::f64::consts::TAU),
            true,
        )
    }

    /// Circular cylinder about the z-axis; s is the angle, t the height.
    pub fn cylinder(radius: f64, height: f64) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "cylinder",
            ["a*cos(s)", "a*sin(s)", "t"],
            &[("a", radius)],
            Rect::new(0.0, std::f64::consts::TAU, -0.5 * height, 0.5 * height),
            true,
        )
    }

    /// Spheroid with equatorial radius `a` and polar radius `c`; meridian and
    /// parallel coordinates are curvature lines. Poles are excluded.
    pub fn spheroid(a: f64, c: f64) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "spheroid",
            ["a*sin(s)*cos(t)", "a*sin(s)*sin(t)", "c*cos(s)"],
            &[("a", a), ("c", c)],
            Rect::new(0.35, std::f64::consts::PI - 0.35, 0.0, std::f64::consts::TAU),
            true,
        )
    }

    /// Torus of revolution: s around the tube, t around the axis.
    pub fn torus(big: f64, small: f64) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "torus",
            [
                "(a+b*cos(s))*cos(t)",
                "(a+b*cos(s))*sin(t)",
                "b*sin(s)",
            ],
            &[("a", big), ("b", small)],
            Rect::new(0.0, std::f64::consts::TAU, 0.0, std::f64::consts::TAU),
            true,
        )
    }

    /// Cone of half-angle `alpha` about the z-axis, with apex excluded:
    /// s ∈ [s0, s1] is the arclength along the rulings, t the angle.
    pub fn cone(alpha: f64, s0: f64, s1: f64) -> Result<AmbientSurface, GeomError> {
        if !(0.0 < alpha && alpha < std::f64::consts::FRAC_PI_2) || !(0.0 < s0 && s0 < s1) {
            return Err(GeomError::Numerical(
                "cone needs 0 < alpha < π/2 and 0 < s0 < s1".into(),
            ));
        }
        Self::build(
            AmbientSpace::Euclidean,
            "cone",
            ["s*sin(a)*cos(t)", "s*sin(a)*sin(t)", "s*cos(a)"],
            &[("a", alpha)],
            Rect::new(s0, s1, 0.0, std::f64::consts::TAU),
            true,
        )
    }

    /// Horizontal plane z = height; every normal line is vertical.
    pub fn plane(height: f64) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "plane",
            ["s", "t", "c"],
            &[("c", height)],
            Rect::new(-1.0, 1.0, -1.0, 1.0),
            true,
        )
    }

    /// Euclidean graph z = f(s, t).
    pub fn euclidean_graph(
        f: &str,
        domain: Rect,
        params: &[(&str, f64)],
    ) -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Euclidean,
            "graph",
            ["s", "t", f],
            params,
            domain,
            false,
        )
    }

    /// Upper unit hyperboloid ⟨X, X⟩₁ = −1 in Minkowski 3-space, the totally
    /// umbilic spacelike surface; its congruence collapses onto the zero
    /// section of the disk chart.
    pub fn hyperboloid() -> Result<AmbientSurface, GeomError> {
        Self::build(
            AmbientSpace::Minkowski,
            "hyperboloid",
            ["sinh(s)*cos(t)", "sinh(s)*sin(t)", "cosh(s)"],
            &[],
            Rect::new(0.2, 1.5, 0.0, std::f64::consts::TAU),
            true,
        )
    }

    /// Spacelike graph z = f(s, t) in Minkowski 3-space; requires
    /// f_s² + f_t² < 1, checked on a sample grid.
    pub fn minkowski_graph(
        f: &str,
        domain: Rect,
        params: &[(&str, f64)],
    ) -> Result<AmbientSurface, GeomError> {
        let surf = Self::build(
            AmbientSpace::Minkowski,
            "minkowski graph",
            ["s", "t", f],
            params,
            domain,
            false,
        )?;
        let n = 7;
        for i in 0..=n {
            for j in 0..=n {
                let at = V2::new(
                    domain.s0 + (domain.s1 - domain.s0) * i as f64 / n as f64,
                    domain.t0 + (domain.t1 - domain.t0) * j as f64 / n as f64,
                );
                let (xs, xt) = surf.velocities(at)?;
                if xs.z * xs.z >= 1.0 || xt.z * xt.z >= 1.0 {
                    return Err(GeomError::Numerical(format!(
                        "graph is not spacelike at ({}, {})",
                        at.x, at.y
                    )));
                }
            }
        }
        Ok(surf)
    }

    /// Surface from three coordinate expressions in (s, t), in either
    /// ambient signature; the scene-file constructor. Spacelikeness of
    /// Minkowski surfaces is checked on an 8×8 grid of the domain, and
    /// `curvature_line` asserts that the parametrization follows curvature
    /// lines (which [`congruence_area`] then verifies at quadrature nodes).
    pub fn parametrized(
        space: AmbientSpace,
        name: &str,
        texts: [&str; 3],
        params: &[(&str, f64)],
        domain: Rect,
        curvature_line: bool,
    ) -> Result<AmbientSurface, GeomError> {
        let surf = Self::build(
            space,
            name,
            [texts[0], texts[1], texts[2]],
            params,
            domain,
            curvature_line,
        )?;
        if space == AmbientSpace::Minkowski {
            let n = 7;
            for i in 0..=n {
                for j in 0..=n {
                    let at = V2::new(
                        domain.s0 + (domain.s1 - domain.s0) * i as f64 / n as f64,
                        domain.t0 + (domain.t1 - domain.t0) * j as f64 / n as f64,
                    );
                    let (xs, xt) = surf.velocities(at)?;
                    let e = minkowski_dot(xs, xs);
                    let f = minkowski_dot(xs, xt);
                    let g = minkowski_dot(xt, xt);
                    if e <= 0.0 || e * g - f * f <= 0.0 {
                        return Err(GeomError::Numerical(format!(
                            "surface '{name}' is not spacelike at ({}, {})",
                            at.x, at.y
                        )));
                    }
                }
            }
        }
        Ok(surf)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> AmbientSpace {
        self.space
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    /// Whether the catalog parametrization follows curvature lines, in which
    /// case the congruence metric has Ē = Ḡ = 0 identically.
    pub fn is_curvature_line(&self) -> bool {
        self.curvature_line
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.x[i]
    }

    pub fn position(&self, at: V2) -> Result<V3, GeomError> {
        let p = [at.x, at.y];
        Ok(V3::new(
            self.x[0].eval(&p)?,
            self.x[1].eval(&p)?,
            self.x[2].eval(&p)?,
        ))
    }

    /// Coordinate velocities (X_s, X_t).
    pub fn velocities(&self, at: V2) -> Result<(V3, V3), GeomError> {
        let p = [at.x, at.y];
        let xs = V3::new(
            self.x[0].eval_derivative(1, 0, &p)?,
            self.x[1].eval_derivative(1, 0, &p)?,
            self.x[2].eval_derivative(1, 0, &p)?,
        );
        let xt = V3::new(
            self.x[0].eval_derivative(0, 1, &p)?,
            self.x[1].eval_derivative(0, 1, &p)?,
            self.x[2].eval_derivative(0, 1, &p)?,
        );
        Ok((xs, xt))
    }

    /// Oriented unit normal: ⟨N, N⟩ = 1 (Euclidean) or −1 with N₃ > 0
    /// (Minkowski, future-pointing timelike).
    pub fn normal(&self, at: V2) -> Result<V3, GeomError> {
        let (xs, xt) = self.velocities(at)?;
        let c = self.space.cross(xs, xt);
        let n2 = match self.space {
            AmbientSpace::Euclidean => c.dot(&c),
            AmbientSpace::Minkowski => -minkowski_dot(c, c),
        };
        if n2 <= 1e-28 {
            return Err(GeomError::NotImmersed(1));
        }
        Ok(c * (self.orient / n2.sqrt()))
    }

    /// First fundamental form (E, F, G) in the ambient signature.
    pub fn first_fundamental(&self, at: V2) -> Result<(f64, f64, f64), GeomError> {
        let (xs, xt) = self.velocities(at)?;
        Ok((
            self.space.dot(xs, xs),
            self.space.dot(xs, xt),
            self.space.dot(xt, xt),
        ))
    }

    /// Surface area ∫√(EG − F²) over the parameter domain.
    pub fn area(&self, order: usize) -> Result<f64, GeomError> {
        let rule = GaussLegendre::new(order);
        quad2d(&rule, self.domain, &mut |s, t| {
            let (e, f, g) = self.first_fundamental(V2::new(s, t))?;
            Ok((e * g - f * f).abs().sqrt())
        })
    }

    /// Principal curvatures and directions of the Weingarten map A = −dN,
    /// computed as I⁻¹·II with II_ab = ⟨N, X_ab⟩. Spacelike first
    /// fundamental forms make A diagonalizable with real spectrum.
    pub fn shape_data(&self, at: V2) -> Result<ShapeData, GeomError> {
        let p = [at.x, at.y];
        let n = self.normal(at)?;
        let (e, f, g) = self.first_fundamental(at)?;
        let det = e * g - f * f;
        let scale = e.abs().max(f.abs()).max(g.abs()).max(1e-300);
        if det.abs() <= 1e-14 * scale * scale {
            return Err(GeomError::NotImmersed(1));
        }
        let second = |i: u8, j: u8| -> Result<V3, GeomError> {
            Ok(V3::new(
                self.x[0].eval_derivative(i, j, &p)?,
                self.x[1].eval_derivative(i, j, &p)?,
                self.x[2].eval_derivative(i, j, &p)?,
            ))
        };
        let l = self.space.dot(n, second(2, 0)?);
        let m = self.space.dot(n, second(1, 1)?);
        let q = self.space.dot(n, second(0, 2)?);
        let w = [
            [(g * l - f * m) / det, (g * m - f * q) / det],
            [(e * m - f * l) / det, (e * q - f * m) / det],
        ];
        let (lo, hi) = eig2_real(w);
        let wscale = w
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1e-300);
        let dir = |ev: f64, other: V2| {
            // Kernel vector of W − ev·Id from its better-conditioned row.
            let r0 = V2::new(w[0][0] - ev, w[0][1]);
            let r1 = V2::new(w[1][0], w[1][1] - ev);
            let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
            if r.norm() <= 1e-9 * wscale {
                // Near-umbilic: directions are arbitrary; use the axes.
                other
            } else {
                V2::new(r.y, -r.x).normalize()
            }
        };
        Ok(ShapeData {
            lambda: lo,
            mu: hi,
            dir_lambda: dir(lo, V2::new(1.0, 0.0)),
            dir_mu: dir(hi, V2::new(0.0, 1.0)),
        })
    }

    /// ½ ∫ |λ − μ| dA over the parameter domain, with an order-refinement
    /// error estimate; half the congruence area. This principal-curvature
    /// route is the independent oracle for `congruence_area`.
    pub fn functional_f(&self, order: usize) -> Result<QuadResult, GeomError> {
        quad2d_adaptive(
            order,
            self.domain,
            tol::QUAD_REL_TOL,
            tol::QUAD_MAX_DEPTH,
            &mut |s, t| {
                let at = V2::new(s, t);
                let sd = self.shape_data(at)?;
                let (e, f, g) = self.first_fundamental(at)?;
                Ok(0.5 * (sd.mu - sd.lambda).abs() * (e * g - f * f).abs().sqrt())
            },
        )
    }

    /// Symbolic oriented unit normal components.
    fn normal_exprs(&self) -> [Arc<Expr>; 3] {
        let x: [Arc<Expr>; 3] = [
            self.x[0].ast().clone(),
            self.x[1].ast().clone(),
            self.x[2].ast().clone(),
        ];
        let xs = [
            expr::diff(&x[0], "s"),
            expr::diff(&x[1], "s"),
            expr::diff(&x[2], "s"),
        ];
        let xt = [
            expr::diff(&x[0], "t"),
            expr::diff(&x[1], "t"),
            expr::diff(&x[2], "t"),
        ];
        let c = cross3_expr(self.space, &xs, &xt);
        let c2 = dot3_expr(self.space, &c, &c);
        let n2 = match self.space {
            AmbientSpace::Euclidean => c2,
            AmbientSpace::Minkowski => expr::neg(c2),
        };
        let invn = expr::div(expr::cst(self.orient), expr::call(Func::Sqrt, n2));
        [
            expr::mul(c[0].clone(), invn.clone()),
            expr::mul(c[1].clone(), invn.clone()),
            expr::mul(c[2].clone(), invn),
        ]
    }

    /// Symbolic moment foot Y = X ∓ ⟨X, N⟩N: the component of X orthogonal
    /// to the given normal; ⟨N, N⟩ = ±1 flips the projection sign.
    fn moment_exprs(&self, n: &[Arc<Expr>; 3]) -> [Arc<Expr>; 3] {
        let x: [Arc<Expr>; 3] = [
            self.x[0].ast().clone(),
            self.x[1].ast().clone(),
            self.x[2].ast().clone(),
        ];
        let xn = dot3_expr(self.space, &x, n);
        let foot = |i: usize| match self.space {
            AmbientSpace::Euclidean => expr::sub(x[i].clone(), expr::mul(xn.clone(), n[i].clone())),
            AmbientSpace::Minkowski => expr::add(x[i].clone(), expr::mul(xn.clone(), n[i].clone())),
        };
        [foot(0), foot(1), foot(2)]
    }

    /// Build (or fetch) the cached (N, Y) scalar fields of the congruence.
    fn line_symbols(&self) -> Result<&LineSymbols, GeomError> {
        if self.line.get().is_none() {
            let n = self.normal_exprs();
            let y = self.moment_exprs(&n);
            let field = |a: &Arc<Expr>| ScalarField::from_ast(a.clone(), &SURFACE_VARS, &[]);
            let sym = LineSymbols {
                n: [field(&n[0])?, field(&n[1])?, field(&n[2])?],
                y: [field(&y[0])?, field(&y[1])?, field(&y[2])?],
            };
            let _ = self.line.set(sym);
        }
        Ok(self.line.get().expect("symbols were just stored"))
    }

    /// Ambient line-space image (N, Y) of a parameter point.
    pub fn line_point(&self, at: V2) -> Result<LinePoint, GeomError> {
        let sym = self.line_symbols()?;
        let p = [at.x, at.y];
        let ev = |f: &[ScalarField; 3]| -> Result<V3, GeomError> {
            Ok(V3::new(f[0].eval(&p)?, f[1].eval(&p)?, f[2].eval(&p)?))
        };
        Ok(LinePoint {
            n: ev(&sym.n)?,
            y: ev(&sym.y)?,
        })
    }

    /// Coordinate frame of the congruence in the ambient realization:
    /// X̄_a = (∂ₐN, (∂ₐY)^T), the vertical part projected onto N^⊥ in the
    /// ambient signature.
    pub fn line_frame(&self, at: V2) -> Result<[SplitLineTangent; 2], GeomError> {
        let sym = self.line_symbols()?;
        let p = [at.x, at.y];
        let d = |f: &[ScalarField; 3], i: u8, j: u8| -> Result<V3, GeomError> {
            Ok(V3::new(
                f[0].eval_derivative(i, j, &p)?,
                f[1].eval_derivative(i, j, &p)?,
                f[2].eval_derivative(i, j, &p)?,
            ))
        };
        let n = V3::new(sym.n[0].eval(&p)?, sym.n[1].eval(&p)?, sym.n[2].eval(&p)?);
        let tang = |eta: V3| match self.space {
            AmbientSpace::Euclidean => eta - n * self.space.dot(eta, n),
            AmbientSpace::Minkowski => eta + n * self.space.dot(eta, n),
        };
        Ok([
            SplitLineTangent {
                h: d(&sym.n, 1, 0)?,
                v: tang(d(&sym.y, 1, 0)?),
            },
            SplitLineTangent {
                h: d(&sym.n, 0, 1)?,
                v: tang(d(&sym.y, 0, 1)?),
            },
        ])
    }

    /// Congruence metric (Ē, F̄, Ḡ) computed entirely in the ambient
    /// realization; matches the chart route wherever the chart is regular.
    pub fn ambient_metric(&self, at: V2) -> Result<(f64, f64, f64), GeomError> {
        let lp = self.line_point(at)?;
        let fr = self.line_frame(at)?;
        Ok((
            ambient_gmetric(self.space, lp.n, fr[0], fr[0]),
            ambient_gmetric(self.space, lp.n, fr[0], fr[1]),
            ambient_gmetric(self.space, lp.n, fr[1], fr[1]),
        ))
    }

    /// Normal congruence of the surface as a Lagrangian immersion into TΣ:
    /// the sphere chart for Euclidean ambients, the disk chart for Minkowski
    /// ones. Base point p = σ(N) under stereographic projection from
    /// (0, 0, −1), fiber ξ = dσ_N(Y) for the moment foot Y.
    pub fn normal_congruence(&self) -> Result<TBImmersion, GeomError> {
        let n = self.normal_exprs();
        let y = self.moment_exprs(&n);
        let denom = expr::add(expr::cst(1.0), n[2].clone());
        let proj = |i: usize| expr::div(n[i].clone(), denom.clone());
        // dσ_N(Y)_i = Y_i/(1 + N₃) − N_i Y₃/(1 + N₃)².
        let push = |i: usize| {
            expr::sub(
                expr::div(y[i].clone(), denom.clone()),
                expr::div(
                    expr::mul(n[i].clone(), y[2].clone()),
                    expr::mul(denom.clone(), denom.clone()),
                ),
            )
        };
        let chart = match self.space {
            AmbientSpace::Euclidean => ConformalChart::sphere(),
            AmbientSpace::Minkowski => ConformalChart::hyperbolic(),
        };
        let field = |a: Arc<Expr>| ScalarField::from_ast(a, &SURFACE_VARS, &[]);
        TBImmersion::from_fields(
            chart,
            [field(proj(0))?, field(proj(1))?],
            [field(push(0))?, field(push(1))?],
            self.domain,
        )
    }

    /// Surface moved along its own normals with speed field h: X + ε·h·N.
    /// The result keeps this surface's parameter domain.
    pub fn varied(&self, h: &ScalarField, eps: f64) -> Result<AmbientSurface, GeomError> {
        let n = self.normal_exprs();
        let shift = |i: usize| {
            expr::add(
                self.x[i].ast().clone(),
                expr::mul(expr::cst(eps), expr::mul(h.ast().clone(), n[i].clone())),
            )
        };
        Ok(AmbientSurface {
            space: self.space,
            name: format!("{} (varied)", self.name),
            x: [
                ScalarField::from_ast(shift(0), &SURFACE_VARS, &[])?,
                ScalarField::from_ast(shift(1), &SURFACE_VARS, &[])?,
                ScalarField::from_ast(shift(2), &SURFACE_VARS, &[])?,
            ],
            domain: self.domain,
            curvature_line: false,
            orient: self.orient,
            line: OnceLock::new(),
        })
    }

    /// Image under the rigid motion x ↦ R·x + shift (Euclidean only;
    /// R must be a rotation so the normal orientation is preserved).
    pub fn transformed(&self, rot: &Matrix3<f64>, shift: V3) -> Result<AmbientSurface, GeomError> {
        if self.space != AmbientSpace::Euclidean {
            return Err(GeomError::Numerical(
                "rigid motions are implemented for Euclidean ambients".into(),
            ));
        }
        if (rot.determinant() - 1.0).abs() > 1e-10 {
            return Err(GeomError::Numerical(
                "transformation must be a rotation (det = 1)".into(),
            ));
        }
        let comp = |i: usize| {
            let mut acc = expr::cst(shift[i]);
            for (j, xj) in self.x.iter().enumerate() {
                acc = expr::add(acc, expr::mul(expr::cst(rot[(i, j)]), xj.ast().clone()));
            }
            ScalarField::from_ast(acc, &SURFACE_VARS, &[])
        };
        Ok(AmbientSurface {
            space: self.space,
            name: format!("{} (moved)", self.name),
            x: [comp(0)?, comp(1)?, comp(2)?],
            domain: self.domain,
            curvature_line: self.curvature_line,
            orient: self.orient,
            line: OnceLock::new(),
        })
    }
}

/// 𝔾-area of the normal congruence: ∫ √|ĒḠ − F̄²| over the parameter domain,
/// with the metric computed through the ambient (N, Y) realization, which has
/// no chart singularities. Degenerate congruences (umbilic surfaces, whose
/// image collapses onto the zero section) integrate to zero. Curvature-line
/// parametrizations additionally check Ē = Ḡ = 0 at every quadrature node.
pub fn congruence_area(surface: &AmbientSurface, order: usize) -> Result<QuadResult, GeomError> {
    let diagonal = surface.is_curvature_line();
    quad2d_adaptive(
        order,
        surface.domain(),
        tol::QUAD_REL_TOL,
        tol::QUAD_MAX_DEPTH,
        &mut |s, t| {
            let (e, f, g) = surface.ambient_metric(V2::new(s, t))?;
            let off = e.abs().max(g.abs());
            if diagonal && off > tol::TOL_CONGRUENCE_METRIC {
                return Err(GeomError::Numerical(format!(
                    "curvature-line congruence has |Ē| or |Ḡ| = {off:.3e} at ({s:.4}, {t:.4})"
                )));
            }
            Ok((e * g - f * f).abs().sqrt())
        },
    )
}

/// The same area through the chart realization (stereographic projection
/// into TΣ); the independent cross-check of `congruence_area`. Fixed-order
/// quadrature, so chart-singular directions must stay off the node lattice.
pub fn chart_congruence_area(imm: &TBImmersion, order: usize) -> Result<f64, GeomError> {
    let rule = GaussLegendre::new(order);
    quad2d(&rule, imm.domain(), &mut |s, t| {
        Ok(imm.metric_data(V2::new(s, t))?.det.abs().sqrt())
    })
}

/// Distribution of congruence projection ranks over a sample grid:
/// 0 for planes, 1 for developables (cylinders, cones), 2 generically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankProfile {
    pub counts: [usize; 3],
    pub min: usize,
    pub max: usize,
}

/// Projection ranks of the normal congruence on an n×n grid of parameter
/// cell centers (the grid stays strictly inside the domain).
pub fn developable_rank_profile(
    surface: &AmbientSurface,
    n: usize,
) -> Result<RankProfile, GeomError> {
    let imm = surface.normal_congruence()?;
    let d = surface.domain();
    let mut counts = [0usize; 3];
    for i in 0..n {
        for j in 0..n {
            let at = V2::new(
                d.s0 + (d.s1 - d.s0) * (i as f64 + 0.5) / n as f64,
                d.t0 + (d.t1 - d.t0) * (j as f64 + 0.5) / n as f64,
            );
            counts[imm.projection_rank(at)?.min(2)] += 1;
        }
    }
    let present: Vec<usize> = (0..3).filter(|&r| counts[r] > 0).collect();
    Ok(RankProfile {
        counts,
        min: *present.first().unwrap_or(&0),
        max: *present.last().unwrap_or(&0),
    })
}

/// Finite-difference probe for the variation identity V̄^⊥ = ε·𝕁 grad h,
/// where ε = ⟨N, N⟩ is the causal sign of the surface normal (+1 Euclidean,
/// −1 Minkowski): the congruences of X ± ε·h·N for two step sizes drive a
/// Richardson-improved central difference of the congruence map.
pub struct VariationProbe {
    base: TBImmersion,
    stencil: [(TBImmersion, TBImmersion, f64); 2],
    h: ScalarField,
    /// ⟨N, N⟩: the normal speed h generates the Hamiltonian ⟨N, N⟩·h.
    causal_sign: f64,
}

impl VariationProbe {
    pub fn new(
        surface: &AmbientSurface,
        h: &ScalarField,
        eps: (f64, f64),
    ) -> Result<VariationProbe, GeomError> {
        let base = surface.normal_congruence()?;
        let mk = |e: f64| -> Result<(TBImmersion, TBImmersion, f64), GeomError> {
            Ok((
                surface.varied(h, e)?.normal_congruence()?,
                surface.varied(h, -e)?.normal_congruence()?,
                e,
            ))
        };
        Ok(VariationProbe {
            base,
            stencil: [mk(eps.0)?, mk(eps.1)?],
            h: h.clone(),
            causal_sign: match surface.space() {
                AmbientSpace::Euclidean => 1.0,
                AmbientSpace::Minkowski => -1.0,
            },
        })
    }

    pub fn base(&self) -> &TBImmersion {
        &self.base
    }

    /// Variation generator V̄ = d/dε X̄_ε at ε = 0 as a split tangent vector:
    /// the fiber-coordinate derivative is promoted to the vertical part with
    /// the connection correction ξ̇ + Γ(ṗ)(ξ).
    pub fn generator(&self, at: V2) -> Result<SplitTangent, GeomError> {
        let mut diffs = [(V2::zeros(), V2::zeros()); 2];
        for (slot, (plus, minus, e)) in diffs.iter_mut().zip(self.stencil.iter()) {
            let a = plus.point(at)?;
            let b = minus.point(at)?;
            *slot = ((a.pos - b.pos) / (2.0 * e), (a.fiber - b.fiber) / (2.0 * e));
        }
        // Richardson in ε²: D ≈ (ε₀²·D₁ − ε₁²·D₀)/(ε₀² − ε₁²).
        let (e0, e1) = (self.stencil[0].2, self.stencil[1].2);
        let (w0, w1) = (e0 * e0, e1 * e1);
        let pdot = (diffs[1].0 * w0 - diffs[0].0 * w1) / (w0 - w1);
        let xidot = (diffs[1].1 * w0 - diffs[0].1 * w1) / (w0 - w1);
        let p0 = self.base.point(at)?;
        let gamma = self.base.chart().christoffels(p0.pos)?;
        Ok(SplitTangent::new(pdot, xidot + gamma.apply(pdot, p0.fiber)))
    }

    /// As [`parts`](Self::parts), but reports a degenerate congruence metric
    /// as `None` instead of an error.
    fn try_parts(&self, at: V2) -> Result<Option<(SplitTangent, SplitTangent)>, GeomError> {
        let v = self.generator(at)?;
        let p0 = self.base.point(at)?;
        let fr = self.base.frame(at)?;
        let m = self.base.metric_data(at)?;
        let chart = self.base.chart();
        let gram = [[m.e, m.f], [m.f, m.g]];
        let w = [
            gmetric(chart, p0, v, fr[0])?,
            gmetric(chart, p0, v, fr[1])?,
        ];
        let Some(c) = solve2(gram, w) else {
            return Ok(None);
        };
        let vperp = v - fr[0] * c[0] - fr[1] * c[1];
        let jet = self.h.jet(&[at.x, at.y], 1)?;
        let Some(ch) = solve2(gram, [jet.partial(1, 0), jet.partial(0, 1)]) else {
            return Ok(None);
        };
        let grad = fr[0] * ch[0] + fr[1] * ch[1];
        Ok(Some((vperp, jmap(grad) * self.causal_sign)))
    }

    /// (V̄^⊥, ⟨N, N⟩·𝕁 grad h) at a point: the 𝔾-normal part of the generator
    /// and the Hamiltonian field of ⟨N, N⟩·h in the congruence's metric.
    pub fn parts(&self, at: V2) -> Result<(SplitTangent, SplitTangent), GeomError> {
        self.try_parts(at)?.ok_or_else(|| {
            GeomError::Numerical("congruence metric is degenerate at the probe point".into())
        })
    }

    fn try_residual(&self, at: V2) -> Result<Option<(f64, f64)>, GeomError> {
        let Some((vperp, jgrad)) = self.try_parts(at)? else {
            return Ok(None);
        };
        let v = self.generator(at)?;
        let p0 = self.base.point(at)?;
        let chart = self.base.chart();
        let r = split_gnorm(chart, p0, vperp - jgrad)?;
        let scale = split_gnorm(chart, p0, jgrad)? + split_gnorm(chart, p0, v)?;
        Ok(Some((r, scale)))
    }

    /// ‖V̄^⊥ − ⟨N, N⟩·𝕁 grad h‖ in the split norm, along with the comparison
    /// scale ‖⟨N, N⟩·𝕁 grad h‖ + ‖V̄‖.
    pub fn residual(&self, at: V2) -> Result<(f64, f64), GeomError> {
        self.try_residual(at)?.ok_or_else(|| {
            GeomError::Numerical("congruence metric is degenerate at the probe point".into())
        })
    }

    /// Weak form of the variation identity: |𝔾(V̄, 𝕁X̄_s) − ⟨N, N⟩·h_s| and
    /// the t-counterpart. Tangential parts of V̄ pair to zero against 𝕁X̄_a
    /// because the congruence is Lagrangian, so no metric inversion appears;
    /// the identity itself still presumes a nondegenerate congruence metric.
    pub fn pairing_residuals(&self, at: V2) -> Result<[f64; 2], GeomError> {
        let v = self.generator(at)?;
        let p0 = self.base.point(at)?;
        let fr = self.base.frame(at)?;
        let chart = self.base.chart();
        let jet = self.h.jet(&[at.x, at.y], 1)?;
        let dh = [jet.partial(1, 0), jet.partial(0, 1)];
        Ok([
            (gmetric(chart, p0, v, jmap(fr[0]))? - self.causal_sign * dh[0]).abs(),
            (gmetric(chart, p0, v, jmap(fr[1]))? - self.causal_sign * dh[1]).abs(),
        ])
    }
}

/// Aggregate result of [`hamiltonian_variation_check`].
#[derive(Debug, Clone, Copy)]
pub struct VariationCheck {
    pub samples: usize,
    /// Points dropped because the congruence metric is degenerate there
    /// (umbilic points, whose congruence collapses toward the zero section);
    /// neither form of the identity is defined at such points.
    pub skipped: usize,
    /// Largest split-norm of V̄^⊥ − ⟨N, N⟩·𝕁 grad h over the kept points.
    pub max_residual: f64,
    /// Largest residual divided by its local comparison scale.
    pub max_relative: f64,
    /// Largest weak-form defect |𝔾(V̄, 𝕁X̄_a) − ⟨N, N⟩·h_a| over kept points.
    pub max_pairing: f64,
}

/// Verify the variation identity at the given parameter points, in both the
/// strong (normal-part) and weak (pairing) forms.
pub fn hamiltonian_variation_check(
    surface: &AmbientSurface,
    h: &ScalarField,
    eps: (f64, f64),
    points: &[V2],
) -> Result<VariationCheck, GeomError> {
    let probe = VariationProbe::new(surface, h, eps)?;
    let mut out = VariationCheck {
        samples: points.len(),
        skipped: 0,
        max_residual: 0.0,
        max_relative: 0.0,
        max_pairing: 0.0,
    };
    for &at in points {
        match probe.try_residual(at)? {
            Some((r, scale)) => {
                out.max_residual = out.max_residual.max(r);
                out.max_relative = out.max_relative.max(r / scale.max(1e-300));
                let pairing = probe.pairing_residuals(at)?;
                out.max_pairing = out.max_pairing.max(pairing[0]).max(pairing[1]);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}
