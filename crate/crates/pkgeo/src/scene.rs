//! JSON scene files: one conformal chart, named geometric objects (curves,
//! potentials, immersions, ambient surfaces) and an ordered list of analysis
//! requests, with per-check tolerance overrides. Scenes are the batch input
//! of the `pkgeo` binary; [`SceneFile`] is the raw serde form and
//! [`LoadedScene`] the compiled one with every expression parsed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basegeo::{ConformalChart, CurveOnSurface, GeomError};
use crate::congruence::{AmbientSpace, AmbientSurface};
use crate::expr::FieldError;
use crate::lagrangian::{GradientGraph, TBImmersion};
use crate::numerics::Rect;

/// Errors from reading or compiling a scene. [`SceneError::exit_class`]
/// separates scene-description problems (exit 2) from geometric domain
/// problems (exit 3).
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expression `{text}`: {err}")]
    Expr { text: String, err: FieldError },
    #[error("unknown chart `{0}`; catalog charts are flat, sphere, hyperbolic")]
    UnknownChart(String),
    #[error("`{0}` is not defined in the scene")]
    UndefinedName(String),
    #[error("`{name}` is a {got}, but this request needs a {want}")]
    WrongKind {
        name: String,
        got: &'static str,
        want: &'static str,
    },
    #[error("duplicate object name `{0}`")]
    DuplicateName(String),
    #[error("domain [{0}, {1}] × [{2}, {3}] is empty")]
    EmptyDomain(f64, f64, f64, f64),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geom(GeomError),
}

/// Process-exit classification of a scene error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    /// The scene description itself is wrong (exit code 2).
    Parse,
    /// The description is well-formed but geometrically unusable (exit 3).
    Domain,
}

impl SceneError {
    pub fn exit_class(&self) -> ExitClass {
        match self {
            SceneError::EmptyDomain(..) => ExitClass::Domain,
            SceneError::Geom(GeomError::Field(_)) => ExitClass::Parse,
            SceneError::Geom(_) => ExitClass::Domain,
            _ => ExitClass::Parse,
        }
    }
}

impl From<GeomError> for SceneError {
    fn from(e: GeomError) -> SceneError {
        SceneError::Geom(e)
    }
}

/// Chart selection: a catalog name (`flat`, `sphere`, `hyperbolic`) or a
/// custom log-conformal factor `r(s, t)` with an explicit domain
/// `[s0, s1, t0, t1]`. Catalog charts carry their own domain.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 4]>,
}

impl ChartSpec {
    pub fn build(&self) -> Result<Arc<ConformalChart>, SceneError> {
        if let Some(r) = &self.r {
            if self.name.is_some() {
                return Err(SceneError::Invalid(
                    "chart: give either a catalog `name` or a custom `r`, not both".into(),
                ));
            }
            let domain = self.domain.ok_or_else(|| {
                SceneError::Invalid("chart: a custom `r` needs a `domain`".into())
            })?;
            return ConformalChart::custom("custom", r, checked_rect(domain)?, &[])
                .map_err(SceneError::from);
        }
        if self.domain.is_some() {
            return Err(SceneError::Invalid(
                "chart: `domain` is only set together with a custom `r`".into(),
            ));
        }
        let name = self.name.as_deref().unwrap_or("flat");
        ConformalChart::by_name(name).ok_or_else(|| SceneError::UnknownChart(name.into()))
    }
}

/// A named geometric object of the scene. Expressions use the variables
/// `s` (curves) or `s, t` (everything else); `params` entries become named
/// constants inside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSpec {
    /// Curve (x(s), y(s)) on the base surface over `span`; mark
    /// `arclength` when the parametrization is unit-speed (affine normal
    /// bundles require that, and the flag is spot-checked numerically).
    Curve {
        name: String,
        x: String,
        y: String,
        span: [f64; 2],
        #[serde(default)]
        arclength: bool,
    },
    /// Scalar potential u(s, t); its gradient graph is the Lagrangian
    /// surface under study. Domain defaults to the chart rectangle.
    Potential {
        name: String,
        u: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 4]>,
    },
    /// General parametric surface in TΣ: base point (x, y) and fiber
    /// vector (v, w), all expressions in (s, t).
    Immersion {
        name: String,
        base: [String; 2],
        fiber: [String; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 4]>,
    },
    /// Surface in Euclidean or Minkowski 3-space: either a catalog `shape`
    /// with numeric `params`, or three coordinate expressions `x` with a
    /// `signature` ("euclidean" or "minkowski") and a `domain`.
    Surface {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<[String; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signature: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 4]>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, f64>,
        #[serde(default)]
        curvature_line: bool,
    },
}

impl ObjectSpec {
    pub fn name(&self) -> &str {
        match self {
            ObjectSpec::Curve { name, .. }
            | ObjectSpec::Potential { name, .. }
            | ObjectSpec::Immersion { name, .. }
            | ObjectSpec::Surface { name, .. } => name,
        }
    }
}

/// One analysis request; results appear in the report in request order.
/// `grid` is the per-axis sample count (default 33 or the `--grid` flag);
/// `output` names CSV grid files written next to the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RequestSpec {
    /// Random-sample the pseudo-Kähler structure invariants on the chart:
    /// 𝕁² = −Id, symmetry and signature of 𝔾, 𝔾 = Ω(𝕁·,·), Nijenhuis,
    /// torsion, metric compatibility, parallel 𝕁.
    Structure {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
    },
    /// Grid scan of a potential or immersion: Lagrangian defect everywhere,
    /// plus the dual-route mean-curvature agreement on gradient graphs.
    Lagrangian {
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    /// Affine normal bundle over an arclength curve with offset a(s):
    /// verifies the rank-one package (induced metric [[−2ak, −1], [−1, 0]],
    /// second-fundamental pins, H = (0, k jγ'), stationarity, flatness).
    CurveBundle {
        curve: String,
        offset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_range: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    /// Flat-chart Lagrangian angle survey of a potential: component count,
    /// per-component β statistics, and the 2H = 𝕁∇β identity residual.
    /// With `output`, writes `<output>_beta.csv` and `<output>_residual.csv`.
    Angle {
        object: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<String>,
    },
    /// Build the constant-angle family member for (β₀, f₁, f₂) on the flat
    /// chart and verify it: constant-angle PDE residual, |H| off the null
    /// locus, and per-component β constancy.
    MinimalFamily {
        beta0: f64,
        profile_plus: String,
        profile_minus: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<[f64; 4]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    /// Congruence functional F of a surface vs. the area of its normal
    /// congruence (independent quadratures; the identity is area = 2F).
    Congruence {
        surface: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quad_order: Option<usize>,
    },
    /// Projection-rank histogram of a surface's normal congruence;
    /// `expect_rank` additionally checks the rank is that value everywhere.
    RankProfile {
        surface: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_rank: Option<usize>,
    },
    /// Hamiltonian-variation identity for a surface under the compactly
    /// supported Hamiltonian h(s, t): strong (normal-part) and weak
    /// (pairing) forms via Richardson-extrapolated finite differences.
    Variation {
        surface: String,
        h: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
    /// Sample a named quantity of an object on a grid and write one CSV
    /// (`s,t,value[,value2...]`). Quantities: `defect`, `mean_h`, `rank`,
    /// `metric`, `gauss`, `beta`, `angle_residual` on potentials and
    /// immersions; `congruence_metric`, `principal_curvatures` on surfaces.
    Grid {
        object: String,
        quantity: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
        output: String,
    },
}

/// Scene file: chart, objects, requests, tolerance overrides. The
/// tolerance keys are the ones listed by the report (e.g.
/// `lagrangian_defect`, `area_rel`); unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub chart: ChartSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requests: Vec<RequestSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
}

fn checked_rect(d: [f64; 4]) -> Result<Rect, SceneError> {
    if !(d[0] < d[1] && d[2] < d[3]) {
        return Err(SceneError::EmptyDomain(d[0], d[1], d[2], d[3]));
    }
    Ok(Rect::new(d[0], d[1], d[2], d[3]))
}

fn checked_span(s: [f64; 2]) -> Result<(f64, f64), SceneError> {
    if !(s[0] < s[1]) {
        return Err(SceneError::EmptyDomain(s[0], s[1], 0.0, 0.0));
    }
    Ok((s[0], s[1]))
}

/// A compiled scene object.
pub enum SceneObject {
    Curve(CurveOnSurface),
    Graph(GradientGraph),
    Immersion(TBImmersion),
    Surface(AmbientSurface),
}

impl SceneObject {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SceneObject::Curve(_) => "curve",
            SceneObject::Graph(_) => "potential",
            SceneObject::Immersion(_) => "immersion",
            SceneObject::Surface(_) => "surface",
        }
    }
}

/// Scene with every expression parsed and every object constructed.
pub struct LoadedScene {
    pub chart: Arc<ConformalChart>,
    pub requests: Vec<RequestSpec>,
    objects: BTreeMap<String, SceneObject>,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<SceneFile, SceneError> {
        let text = std::fs::read_to_string(path)?;
        SceneFile::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<SceneFile, SceneError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parse all expressions, build all objects, and validate every
    /// request reference. `null_tol` is the relative null-point threshold
    /// applied to chart immersions.
    pub fn compile(&self, null_tol: f64) -> Result<LoadedScene, SceneError> {
        let chart = self.chart.build()?;
        let mut objects = BTreeMap::new();
        for spec in &self.objects {
            let name = spec.name().to_string();
            let object = compile_object(&chart, spec, null_tol)?;
            if objects.insert(name.clone(), object).is_some() {
                return Err(SceneError::DuplicateName(name));
            }
        }
        let scene = LoadedScene {
            chart,
            requests: self.requests.clone(),
            objects,
        };
        for request in &scene.requests {
            scene.validate_request(request)?;
        }
        Ok(scene)
    }
}

fn compile_object(
    chart: &Arc<ConformalChart>,
    spec: &ObjectSpec,
    null_tol: f64,
) -> Result<SceneObject, SceneError> {
    match spec {
        ObjectSpec::Curve {
            x, y, span, arclength, ..
        } => {
            let span = checked_span(*span)?;
            let curve = CurveOnSurface::new(chart.clone(), x, y, span, *arclength, &[])?;
            Ok(SceneObject::Curve(curve))
        }
        ObjectSpec::Potential { u, domain, .. } => {
            let domain = match domain {
                Some(d) => checked_rect(*d)?,
                None => chart.domain(),
            };
            let gg = GradientGraph::new(chart.clone(), u, domain, &[])?.with_tol_null(null_tol);
            Ok(SceneObject::Graph(gg))
        }
        ObjectSpec::Immersion {
            base, fiber, domain, ..
        } => {
            let domain = match domain {
                Some(d) => checked_rect(*d)?,
                None => chart.domain(),
            };
            let imm = TBImmersion::new(
                chart.clone(),
                &base[0],
                &base[1],
                &fiber[0],
                &fiber[1],
                domain,
                &[],
            )?
            .with_tol_null(null_tol);
            Ok(SceneObject::Immersion(imm))
        }
        ObjectSpec::Surface {
            name,
            shape,
            x,
            signature,
            domain,
            params,
            curvature_line,
        } => Ok(SceneObject::Surface(compile_surface(
            name,
            shape.as_deref(),
            x.as_ref(),
            signature.as_deref(),
            *domain,
            params,
            *curvature_line,
        )?)),
    }
}

fn parse_signature(text: &str) -> Result<AmbientSpace, SceneError> {
    match text {
        "euclidean" => Ok(AmbientSpace::Euclidean),
        "minkowski" => Ok(AmbientSpace::Minkowski),
        other => Err(SceneError::Invalid(format!(
            "unknown signature `{other}`; use euclidean or minkowski"
        ))),
    }
}

/// Fetch shape parameters by name with defaults, rejecting unknown keys.
fn shape_params(
    shape: &str,
    params: &BTreeMap<String, f64>,
    allowed: &[(&str, f64)],
) -> Result<Vec<f64>, SceneError> {
    for key in params.keys() {
        if !allowed.iter().any(|(k, _)| k == key) {
            return Err(SceneError::Invalid(format!(
                "shape `{shape}` does not take a parameter `{key}`"
            )));
        }
    }
    Ok(allowed
        .iter()
        .map(|(k, default)| params.get(*k).copied().unwrap_or(*default))
        .collect())
}

fn compile_surface(
    name: &str,
    shape: Option<&str>,
    x: Option<&[String; 3]>,
    signature: Option<&str>,
    domain: Option<[f64; 4]>,
    params: &BTreeMap<String, f64>,
    curvature_line: bool,
) -> Result<AmbientSurface, SceneError> {
    match (shape, x) {
        (Some(shape), None) => {
            let surf = match shape {
                "sphere" => {
                    let p = shape_params(shape, params, &[("radius", 1.0)])?;
                    AmbientSurface::sphere(p[0])?
                }
                "cylinder" => {
                    let p = shape_params(shape, params, &[("radius", 1.0), ("height", 2.0)])?;
                    AmbientSurface::cylinder(p[0], p[1])?
                }
                "spheroid" => {
                    let p = shape_params(shape, params, &[("a", 1.0), ("c", 1.5)])?;
                    AmbientSurface::spheroid(p[0], p[1])?
                }
                "torus" => {
                    let p = shape_params(shape, params, &[("big", 2.0), ("small", 0.5)])?;
                    AmbientSurface::torus(p[0], p[1])?
                }
                "cone" => {
                    let p = shape_params(
                        shape,
                        params,
                        &[("alpha", 0.5), ("s0", 0.5), ("s1", 2.0)],
                    )?;
                    AmbientSurface::cone(p[0], p[1], p[2])?
                }
                "plane" => {
                    let p = shape_params(shape, params, &[("height", 1.0)])?;
                    AmbientSurface::plane(p[0])?
                }
                "hyperboloid" => {
                    shape_params(shape, params, &[])?;
                    AmbientSurface::hyperboloid()?
                }
                other => {
                    return Err(SceneError::Invalid(format!(
                        "unknown surface shape `{other}`"
                    )))
                }
            };
            if let Some(sig) = signature {
                if parse_signature(sig)? != surf.space() {
                    return Err(SceneError::Invalid(format!(
                        "shape `{shape}` lives in the {} signature, not `{sig}`",
                        match surf.space() {
                            AmbientSpace::Euclidean => "euclidean",
                            AmbientSpace::Minkowski => "minkowski",
                        }
                    )));
                }
            }
            if domain.is_some() {
                return Err(SceneError::Invalid(format!(
                    "shape `{shape}` carries its own domain"
                )));
            }
            Ok(surf)
        }
        (None, Some(x)) => {
            let space = parse_signature(signature.unwrap_or("euclidean"))?;
            let domain = checked_rect(domain.ok_or_else(|| {
                SceneError::Invalid(format!("surface `{name}` needs a domain"))
            })?)?;
            let params: Vec<(&str, f64)> =
                params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            Ok(AmbientSurface::parametrized(
                space,
                name,
                [&x[0], &x[1], &x[2]],
                &params,
                domain,
                curvature_line,
            )?)
        }
        _ => Err(SceneError::Invalid(format!(
            "surface `{name}` needs exactly one of `shape` or `x`"
        ))),
    }
}

impl LoadedScene {
    pub fn object(&self, name: &str) -> Result<&SceneObject, SceneError> {
        self.objects
            .get(name)
            .ok_or_else(|| SceneError::UndefinedName(name.into()))
    }

    fn wrong_kind(&self, name: &str, want: &'static str) -> SceneError {
        let got = self
            .objects
            .get(name)
            .map(SceneObject::kind_name)
            .unwrap_or("undefined");
        SceneError::WrongKind {
            name: name.into(),
            got,
            want,
        }
    }

    pub fn curve(&self, name: &str) -> Result<&CurveOnSurface, SceneError> {
        match self.object(name)? {
            SceneObject::Curve(c) => Ok(c),
            _ => Err(self.wrong_kind(name, "curve")),
        }
    }

    pub fn graph(&self, name: &str) -> Result<&GradientGraph, SceneError> {
        match self.object(name)? {
            SceneObject::Graph(g) => Ok(g),
            _ => Err(self.wrong_kind(name, "potential")),
        }
    }

    /// A potential's or immersion's underlying surface in TΣ.
    pub fn immersion_like(&self, name: &str) -> Result<&TBImmersion, SceneError> {
        match self.object(name)? {
            SceneObject::Graph(g) => Ok(g.immersion()),
            SceneObject::Immersion(i) => Ok(i),
            _ => Err(self.wrong_kind(name, "potential or immersion")),
        }
    }

    pub fn surface(&self, name: &str) -> Result<&AmbientSurface, SceneError> {
        match self.object(name)? {
            SceneObject::Surface(s) => Ok(s),
            _ => Err(self.wrong_kind(name, "surface")),
        }
    }

    fn validate_request(&self, request: &RequestSpec) -> Result<(), SceneError> {
        match request {
            RequestSpec::Structure { .. } => Ok(()),
            RequestSpec::Lagrangian { object, .. } => {
                self.immersion_like(object).map(|_| ())
            }
            RequestSpec::CurveBundle {
                curve,
                offset,
                t_range,
                ..
            } => {
                crate::expr::ScalarField::new(offset, &["s"], &[]).map_err(|err| {
                    SceneError::Expr {
                        text: offset.clone(),
                        err,
                    }
                })?;
                if let Some(r) = t_range {
                    checked_span(*r)?;
                }
                self.curve(curve).map(|_| ())
            }
            RequestSpec::Angle { object, .. } => {
                self.graph(object)?;
                self.need_flat_chart("angle")
            }
            RequestSpec::MinimalFamily {
                profile_plus,
                profile_minus,
                domain,
                ..
            } => {
                for text in [profile_plus, profile_minus] {
                    crate::expr::ScalarField::new(text, &["q"], &[]).map_err(|err| {
                        SceneError::Expr {
                            text: text.clone(),
                            err,
                        }
                    })?;
                }
                if let Some(d) = domain {
                    checked_rect(*d)?;
                }
                self.need_flat_chart("minimal_family")
            }
            RequestSpec::Congruence { surface, .. } => self.surface(surface).map(|_| ()),
            RequestSpec::RankProfile {
                surface,
                expect_rank,
                ..
            } => {
                if let Some(r) = expect_rank {
                    if *r > 2 {
                        return Err(SceneError::Invalid(format!(
                            "expect_rank {r} is out of range (projection ranks are 0..=2)"
                        )));
                    }
                }
                self.surface(surface).map(|_| ())
            }
            RequestSpec::Variation { surface, h, .. } => {
                crate::expr::ScalarField::new(h, &["s", "t"], &[]).map_err(|err| {
                    SceneError::Expr {
                        text: h.clone(),
                        err,
                    }
                })?;
                self.surface(surface).map(|_| ())
            }
            RequestSpec::Grid {
                object, quantity, ..
            } => {
                let known = match self.object(object)? {
                    SceneObject::Graph(_) => matches!(
                        quantity.as_str(),
                        "defect" | "mean_h" | "rank" | "metric" | "gauss" | "beta"
                            | "angle_residual"
                    ),
                    SceneObject::Immersion(_) => matches!(
                        quantity.as_str(),
                        "defect" | "mean_h" | "rank" | "metric" | "gauss"
                    ),
                    SceneObject::Surface(_) => matches!(
                        quantity.as_str(),
                        "congruence_metric" | "principal_curvatures"
                    ),
                    SceneObject::Curve(_) => {
                        return Err(self.wrong_kind(object, "potential, immersion or surface"))
                    }
                };
                if !known {
                    return Err(SceneError::Invalid(format!(
                        "object `{object}` has no grid quantity `{quantity}`"
                    )));
                }
                if matches!(quantity.as_str(), "beta" | "angle_residual") {
                    self.need_flat_chart(quantity)?;
                }
                Ok(())
            }
        }
    }

    fn need_flat_chart(&self, what: &str) -> Result<(), SceneError> {
        if self.chart.kind() != crate::basegeo::ChartKind::Flat {
            return Err(SceneError::Invalid(format!(
                "`{what}` needs the flat chart, but the scene chart is `{}`",
                self.chart.name()
            )));
        }
        Ok(())
    }
}
