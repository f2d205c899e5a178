//! Command-line driver: scene runner, verification suites, congruence
//! comparison, flat-chart angle grids, and CSV export. Exit codes: 0 all
//! requested checks pass, 1 a check failed, 2 the scene or an expression
//! does not parse, 3 a geometric domain error.
//!
//! The verification suites ([`structure_suite`], [`curve_bundle_suite`],
//! [`gradient_graph_suite`], [`minimal_family_suite`]) are plain library
//! functions so the acceptance tests drive exactly the code the binary
//! runs.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basegeo::{self, ChartKind, ConformalChart, GeomError};
use crate::congruence::{
    congruence_area, developable_rank_profile, hamiltonian_variation_check, AmbientSurface,
};
use crate::expr::{self, Expr, ScalarField};
use crate::flatlab::{self, MinimalFamilySpec};
use crate::lagrangian::{minimal_graph_probe, AffineNormalBundle, GradientGraph, TBImmersion};
use crate::numerics::Rect;
use crate::report::{CheckResult, Report, RequestResult, Tolerances};
use crate::scene::{ExitClass, LoadedScene, RequestSpec, SceneError, SceneFile, SceneObject};
use crate::tbundle::{
    gmetric, jmap, metric_compat_residual, nijenhuis, omega, parallel_j_residual, signature,
    torsion_residual, ProjectableField, SplitTangent, TBPoint,
};
use crate::tol;

type V2 = Vector2<f64>;

/// Relative margin on |EG − F²| under which a point counts as too close
/// to the null locus for curvature checks: inverting the induced metric
/// there amplifies roundoff by up to 1/margin, so checks sampling H or β
/// keep a 1e-4 margin (noise ceiling ~1e-12) instead of the bare null
/// threshold (~1e-10, noise ceiling ~1e-6). Grid exports still report
/// every non-null point.
const NULL_MARGIN_REL: f64 = 1e-4;

/// Default per-axis resolution for the variation request, whose
/// finite-difference probe is far costlier per point than a grid scan.
const VARIATION_GRID_DEFAULT: usize = 7;

/// Errors escaping to the process boundary, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: scene, expression, or argument cannot be parsed.
    Parse(String),
    /// Exit 3: geometry is unusable on the requested domain.
    Domain(String),
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> CliError {
        match e.exit_class() {
            ExitClass::Parse => CliError::Parse(e.to_string()),
            ExitClass::Domain => CliError::Domain(e.to_string()),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> CliError {
        match e {
            GeomError::Field(f) => CliError::Parse(f.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pkgeo",
    version,
    about = "Pseudo-Kähler geometry of tangent bundles: scene runner and verification suites"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run every analysis request in a scene file and emit a JSON report.
    Run(RunArgs),
    /// Random-sample the pseudo-Kähler structure invariants on a chart.
    VerifyStructure(VerifyStructureArgs),
    /// Run the classification suites: curve bundles, gradient graphs,
    /// and the flat minimal family.
    VerifyTheorems(VerifyTheoremsArgs),
    /// Compare the congruence functional with the normal-congruence area
    /// for the surfaces of a scene.
    Congruence(CongruenceArgs),
    /// Flat-chart Lagrangian angle: β and residual grids for a potential
    /// or a constant-angle family member.
    Flatlab(FlatlabArgs),
    /// Sample one quantity of one scene object on a grid and write CSV.
    GridExport(GridExportArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Write the report here instead of stdout; grids land next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Default per-axis grid resolution for scans without their own.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Default sample count for randomized checks.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Default Gauss-Legendre order for quadratures.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Relative null-locus threshold override (tolerance key `null_rel`).
    #[arg(long)]
    pub tol_null: Option<f64>,
}

#[derive(Args)]
pub struct VerifyStructureArgs {
    /// Chart: flat, sphere, hyperbolic, or all.
    #[arg(long, default_value = "all")]
    pub chart: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyTheoremsArgs {
    /// Chart: flat, sphere, hyperbolic, or all.
    #[arg(long, default_value = "all")]
    pub chart: String,
    /// Override the per-suite sample counts (bundles, graphs, families).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CongruenceArgs {
    /// Scene file with surface objects.
    #[arg(long)]
    pub scene: PathBuf,
    /// Gauss-Legendre order for both quadratures.
    #[arg(long)]
    pub quad_order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FlatlabArgs {
    /// Potential u(s, t) to survey.
    #[arg(long, conflicts_with_all = ["beta0", "f1", "f2"])]
    pub u: Option<String>,
    /// Target angle β₀ of a constant-angle family member.
    #[arg(long, requires = "f1", requires = "f2")]
    pub beta0: Option<f64>,
    /// Profile f₁(q) of the family member.
    #[arg(long)]
    pub f1: Option<String>,
    /// Profile f₂(q) of the family member.
    #[arg(long)]
    pub f2: Option<String>,
    /// Domain s0 s1 t0 t1.
    #[arg(long, num_args = 4, allow_negative_numbers = true)]
    pub domain: Option<Vec<f64>>,
    #[arg(long, default_value_t = tol::GRID_DEFAULT)]
    pub grid: usize,
    /// Stem for the CSV files `<prefix>_beta.csv`, `<prefix>_residual.csv`.
    #[arg(long, default_value = "flatlab")]
    pub prefix: String,
    /// Write the report here instead of stdout; grids land next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GridExportArgs {
    /// Scene file defining the objects.
    #[arg(long)]
    pub scene: PathBuf,
    /// Object name in the scene.
    #[arg(long)]
    pub object: String,
    /// Quantity to sample (see the grid request documentation).
    #[arg(long)]
    pub quantity: String,
    #[arg(long)]
    pub grid: Option<usize>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative null-locus threshold override.
    #[arg(long)]
    pub tol_null: Option<f64>,
}

/// Entry point for the binary: parse, dispatch, map errors to exit codes.
pub fn run_main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Parse(msg)) => {
            eprintln!("parse error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("domain error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::VerifyStructure(args) => cmd_verify_structure(args),
        Command::VerifyTheorems(args) => cmd_verify_theorems(args),
        Command::Congruence(args) => cmd_congruence(args),
        Command::Flatlab(args) => cmd_flatlab(args),
        Command::GridExport(args) => cmd_grid_export(args),
    }
}

/// Shared defaults and the effective tolerance table for one run.
struct RunCtx<'a> {
    scene: &'a LoadedScene,
    tols: &'a Tolerances,
    seed: u64,
    grid: usize,
    samples: usize,
    quad_order: usize,
    out_dir: PathBuf,
}

fn effective_grid(request: Option<usize>, fallback: usize) -> usize {
    request.unwrap_or(fallback).max(2)
}

/// Directory that grid CSVs are written into: next to the report.
fn out_dir_of(out: Option<&Path>) -> PathBuf {
    out.and_then(|p| p.parent())
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Domain(format!("create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Domain(format!("write {}: {e}", path.display())))
}

/// Print the report (stdout or file) and its failing checks (stderr).
fn emit_report(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    let json = report.to_json();
    match out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    for line in report.failure_lines() {
        eprintln!("{line}");
    }
    Ok(())
}

fn resolve_charts(name: &str) -> Result<Vec<Arc<ConformalChart>>, CliError> {
    if name == "all" {
        return Ok(ConformalChart::catalog().to_vec());
    }
    ConformalChart::by_name(name)
        .map(|c| vec![c])
        .ok_or_else(|| {
            CliError::Parse(format!(
                "unknown chart `{name}`; use flat, sphere, hyperbolic, or all"
            ))
        })
}

// ---------------------------------------------------------------------------
// Randomized verification suites (shared with the acceptance tests).

/// Checks and named scalars produced by one suite run.
pub struct SuiteOutcome {
    pub checks: Vec<CheckResult>,
    pub scalars: BTreeMap<String, f64>,
}

impl SuiteOutcome {
    fn new() -> SuiteOutcome {
        SuiteOutcome {
            checks: Vec::new(),
            scalars: BTreeMap::new(),
        }
    }

    fn scalar(&mut self, key: &str, value: f64) {
        self.scalars
            .insert(key.into(), crate::report::finite_residual(value));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn fold(acc: &mut f64, value: f64) {
    let v = crate::report::finite_residual(value);
    if v > *acc {
        *acc = v;
    }
}

fn rand_tb_point(rng: &mut ChaCha8Rng, chart: &ConformalChart) -> TBPoint {
    let d = chart.domain();
    TBPoint::new(
        V2::new(
            0.5 * rng.gen_range(d.s0..d.s1),
            0.5 * rng.gen_range(d.t0..d.t1),
        ),
        V2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    )
}

fn rand_split(rng: &mut ChaCha8Rng) -> SplitTangent {
    SplitTangent::new(
        V2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        V2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    )
}

/// Random polynomial in (s, t) as an AST: all monomials up to the given
/// degree with coefficients uniform in (−scale, scale).
fn rand_poly(rng: &mut ChaCha8Rng, degree: u32, scale: f64) -> Arc<Expr> {
    let mut terms: Vec<Arc<Expr>> = Vec::new();
    for i in 0..=degree {
        for j in 0..=(degree - i) {
            let mut term = expr::cst(rng.gen_range(-scale..scale));
            for _ in 0..i {
                term = expr::mul(term, expr::var("s"));
            }
            for _ in 0..j {
                term = expr::mul(term, expr::var("t"));
            }
            terms.push(term);
        }
    }
    terms.into_iter().reduce(expr::add).unwrap()
}

fn rand_field(rng: &mut ChaCha8Rng) -> Result<ProjectableField, GeomError> {
    let mut f = || -> Result<ScalarField, GeomError> {
        Ok(ScalarField::from_ast(
            rand_poly(rng, 2, 1.0),
            &["s", "t"],
            &[],
        )?)
    };
    let a = [f()?, f()?];
    let b = [f()?, f()?];
    Ok(ProjectableField::from_fields(a, b))
}

/// Structure suite: random points and tangent vectors exercise 𝕁² = −Id,
/// symmetry, signature (2,2) and 𝔾 = Ω(𝕁·,·); random projectable fields
/// exercise the Nijenhuis tensor and the connection (torsion, metric
/// compatibility, parallel 𝕁).
pub fn structure_suite(
    chart: &Arc<ConformalChart>,
    samples: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<SuiteOutcome, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jj = 0.0f64;
    let mut sym = 0.0f64;
    let mut compat = 0.0f64;
    let mut signature_violations = 0usize;
    let mut nij = 0.0f64;
    let mut tors = 0.0f64;
    let mut mcomp = 0.0f64;
    let mut pj = 0.0f64;

    for _ in 0..samples {
        let at = rand_tb_point(&mut rng, chart);
        let x = rand_split(&mut rng);
        let y = rand_split(&mut rng);

        let jjx = jmap(jmap(x));
        fold(&mut jj, (jjx.h + x.h).norm() + (jjx.v + x.v).norm());

        let gxy = gmetric(chart, at, x, y)?;
        let gyx = gmetric(chart, at, y, x)?;
        fold(&mut sym, (gxy - gyx).abs() / (1.0 + gxy.abs()));

        let oxjy = omega(chart, at, jmap(x), y)?;
        fold(&mut compat, (gxy - oxjy).abs() / (1.0 + gxy.abs()));

        if signature(chart, at)? != (2, 2) {
            signature_violations += 1;
        }

        let fx = rand_field(&mut rng)?;
        let fy = rand_field(&mut rng)?;
        let fz = rand_field(&mut rng)?;
        fold(&mut nij, nijenhuis(chart, at, &fx, &fy)?);
        fold(&mut tors, torsion_residual(chart, at, &fx, &fy)?);
        fold(&mut mcomp, metric_compat_residual(chart, at, &fx, &fy, &fz)?);
        fold(&mut pj, parallel_j_residual(chart, at, &fx, &fy)?);
    }

    let mut out = SuiteOutcome::new();
    out.scalar("samples", samples as f64);
    let exact = tols.get("exact");
    let conn = tols.get("connection");
    out.checks.extend([
        CheckResult::new("tbundle", "complex_structure_involution", jj, 0.0),
        CheckResult::new("tbundle", "metric_symmetry", sym, exact),
        CheckResult::new(
            "tbundle",
            "metric_signature_2_2",
            signature_violations as f64,
            0.0,
        ),
        CheckResult::new("tbundle", "metric_from_omega_and_j", compat, exact),
        CheckResult::new("tbundle", "nijenhuis", nij, tols.get("nijenhuis")),
        CheckResult::new("tbundle", "torsion", tors, conn),
        CheckResult::new("tbundle", "metric_compatibility", mcomp, conn),
        CheckResult::new("tbundle", "parallel_complex_structure", pj, conn),
    ]);
    Ok(out)
}

/// Curve-bundle suite: random circle bundles with affine offsets verify
/// the rank-one package (metric pins, second-fundamental pins, the
/// H = (0, kγ') formula, stationarity, induced flatness), and integrator
/// geodesics verify minimality.
pub fn curve_bundle_suite(
    chart: &Arc<ConformalChart>,
    count: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<SuiteOutcome, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rho_lo, rho_hi) = match chart.kind() {
        ChartKind::Flat => (0.5, 2.0),
        ChartKind::Sphere => (0.3, 1.2),
        _ => (0.2, 0.55),
    };

    let mut metric = 0.0f64;
    let mut pins = 0.0f64;
    let mut hform = 0.0f64;
    let mut hstat = 0.0f64;
    let mut flat = 0.0f64;
    for _ in 0..count {
        let rho = rng.gen_range(rho_lo..rho_hi);
        let phase = rng.gen_range(0.0..TAU);
        let (curve, _) = basegeo::centered_circle(chart, rho, phase)?;
        let c0 = rng.gen_range(0.1..0.35);
        let c1 = rng.gen_range(-0.08..0.08);
        let offset = ScalarField::new("c0 + c1*s", &["s"], &[("c0", c0), ("c1", c1)])?;
        let anb = AffineNormalBundle::new(curve, offset.clone(), (-0.4, 0.4))?;
        let imm = anb.immersion();
        let span = anb.curve().span();
        for sfrac in [0.15, 0.5, 0.85] {
            for tv in [-0.3, 0.05, 0.3] {
                let s = span.0 + sfrac * (span.1 - span.0);
                let at = V2::new(s, tv);
                let fr = anb.curve().frenet(s)?;
                let a = offset.eval(&[s])?;

                let m = imm.induced_metric(at)?;
                fold(&mut metric, (m.e + 2.0 * a * fr.k).abs());
                fold(&mut metric, (m.f + 1.0).abs());
                fold(&mut metric, m.g.abs());

                let sf = imm.second_fundamental(at)?;
                fold(&mut pins, (sf.h[0][1] - fr.k).abs());
                fold(&mut pins, (sf.h[1][0] - fr.k).abs());
                fold(&mut pins, sf.h[0][2].abs());
                fold(&mut pins, sf.h[1][1].abs());
                fold(&mut pins, sf.h[1][2].abs());

                let mc = imm.mean_curvature(at)?;
                fold(
                    &mut hform,
                    mc.vector.h.norm() + (mc.vector.v - fr.k * fr.tangent).norm(),
                );
                fold(&mut hstat, imm.hstationary_divergence(at)?.abs());
                fold(&mut flat, imm.induced_curvature(at)?.abs());
            }
        }
    }

    // Bundles over integrator geodesics (k = 0) are minimal.
    let mut geo_h = 0.0f64;
    let geodesics = 2usize;
    let length = match chart.kind() {
        ChartKind::Hyperbolic => 0.8,
        _ => 0.9,
    };
    for _ in 0..geodesics {
        let p0 = V2::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
        let v0 = V2::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.0));
        let geo = basegeo::geodesic(chart, p0, v0, length, 800)?;
        if geo.truncated {
            return Err(GeomError::Numerical(
                "geodesic left the chart during the curve-bundle suite".into(),
            ));
        }
        let offset = ScalarField::new("0.2", &["s"], &[])?;
        let anb = AffineNormalBundle::new(geo.curve, offset, (-0.3, 0.3))?;
        let span = anb.curve().span();
        for sfrac in [0.25, 0.5, 0.75] {
            for tv in [-0.2, 0.0, 0.2] {
                let s = span.0 + sfrac * (span.1 - span.0);
                let mc = anb.immersion().mean_curvature(V2::new(s, tv))?;
                fold(&mut geo_h, mc.vector.h.norm() + mc.vector.v.norm());
            }
        }
    }

    let mut out = SuiteOutcome::new();
    out.scalar("bundles", count as f64);
    out.scalar("geodesics", geodesics as f64);
    out.checks.extend([
        CheckResult::new(
            "lagrangian",
            "induced_metric_pins",
            metric,
            tols.get("rank1_metric"),
        ),
        CheckResult::new(
            "lagrangian",
            "second_fundamental_pins",
            pins,
            tols.get("rank1_h"),
        ),
        CheckResult::new(
            "lagrangian",
            "mean_curvature_formula",
            hform,
            tols.get("rank1_h"),
        ),
        CheckResult::new(
            "lagrangian",
            "hstationary_divergence",
            hstat,
            tols.get("hstationary"),
        ),
        CheckResult::new(
            "lagrangian",
            "induced_curvature_flat",
            flat,
            tols.get("induced_flat"),
        ),
        CheckResult::new(
            "lagrangian",
            "geodesic_mean_curvature",
            geo_h,
            tols.get("rank1_h"),
        ),
    ]);
    Ok(out)
}

/// Gradient-graph suite: random cubic potentials verify the Lagrangian
/// defect and the dual-route mean-curvature agreement; on curved charts
/// the non-existence probe keeps max|H| above its floor.
pub fn gradient_graph_suite(
    chart: &Arc<ConformalChart>,
    count: usize,
    seed: u64,
    tols: &Tolerances,
    probe: bool,
) -> Result<SuiteOutcome, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = chart.domain();
    let (cs, ct) = (0.5 * (d.s0 + d.s1), 0.5 * (d.t0 + d.t1));
    let (hs, ht) = (0.3 * (d.s1 - d.s0), 0.3 * (d.t1 - d.t0));

    let mut defect = 0.0f64;
    let mut argdiff = 0.0f64;
    let mut marginal = 0usize;
    for _ in 0..count {
        let u = ScalarField::from_ast(rand_poly(&mut rng, 3, 0.6), &["s", "t"], &[])?;
        let gg = GradientGraph::from_field(chart.clone(), u, d)?;
        let imm = gg.immersion();
        for _ in 0..5 {
            let at = V2::new(
                cs + hs * rng.gen_range(-1.0..1.0),
                ct + ht * rng.gen_range(-1.0..1.0),
            );
            fold(&mut defect, imm.lagrangian_defect(at)?.abs());
            match imm.induced_metric(at) {
                Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                    let arg = imm.mean_curvature_arg_form(at)?;
                    let pair = imm.mean_curvature_pairings(at)?;
                    fold(&mut argdiff, (arg[0] - pair[0]).abs());
                    fold(&mut argdiff, (arg[1] - pair[1]).abs());
                }
                Ok(_) => marginal += 1,
                Err(GeomError::NullPoint { .. }) => marginal += 1,
                Err(other) => return Err(other),
            }
        }
    }

    let mut out = SuiteOutcome::new();
    out.scalar("graphs", count as f64);
    out.scalar("near_null_skipped", marginal as f64);
    out.checks.extend([
        CheckResult::new(
            "lagrangian",
            "lagrangian_defect",
            defect,
            tols.get("lagrangian_defect"),
        ),
        CheckResult::new(
            "lagrangian",
            "mean_curvature_arg_form",
            argdiff,
            tols.get("mean_curvature_arg"),
        ),
    ]);

    if probe && chart.kind() != ChartKind::Flat {
        let pr = minimal_graph_probe(chart, seed, 20, 200)?;
        out.scalar("probe_min_max_h", pr.min_max_h);
        out.scalar("probe_evaluations", pr.evals as f64);
        out.checks.push(CheckResult::lower_bound(
            "lagrangian",
            "minimal_probe_floor",
            pr.min_max_h,
            tols.get("probe_floor"),
        ));
    }
    Ok(out)
}

/// Deviation of the doubled Lagrangian angle from 2·β_ref, maximized over
/// grid nodes that sit well off the null locus. Doubling removes the π
/// jump between the two orientations a constant-angle surface mixes, so a
/// member of the β₀ family must bring this to roundoff.
fn doubled_angle_deviation(
    gg: &GradientGraph,
    n: usize,
    beta_ref: f64,
) -> Result<(f64, usize), GeomError> {
    let imm = gg.immersion();
    let d = imm.domain();
    let mut dev = 0.0f64;
    let mut skipped = 0usize;
    for i in 0..n {
        for j in 0..n {
            let at = V2::new(
                d.s0 + (d.s1 - d.s0) * i as f64 / (n - 1) as f64,
                d.t0 + (d.t1 - d.t0) * j as f64 / (n - 1) as f64,
            );
            match imm.induced_metric(at) {
                Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                    let beta = flatlab::lagrangian_angle(gg, at)?;
                    fold(
                        &mut dev,
                        flatlab::normalize_angle(2.0 * (beta - beta_ref)).abs(),
                    );
                }
                Ok(_) => skipped += 1,
                Err(GeomError::NullPoint { .. }) => skipped += 1,
                Err(other) => return Err(other),
            }
        }
    }
    Ok((dev, skipped))
}

/// Profile templates for random family members; coefficients arrive as
/// named parameters so the profile text itself stays fixed.
const PROFILE_TEMPLATES: [&str; 3] = [
    "a*q^2 + b*q^3",
    "a*q^2 + b*sin(q)",
    "a*exp(q) + b*q^2",
];

/// Minimal-family suite: random (β₀, f₁, f₂) members satisfy the
/// constant-angle equation to roundoff, are minimal off the null locus,
/// and have constant angle; random non-minimal potentials verify the
/// 2H = 𝕁∇β identity; the sine example reproduces β = ±π/2.
pub fn minimal_family_suite(
    count: usize,
    seed: u64,
    tols: &Tolerances,
) -> Result<SuiteOutcome, GeomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = Rect::new(-1.5, 1.5, -1.5, 1.5);
    let n = 13;

    let mut pde = 0.0f64;
    let mut hmax = 0.0f64;
    let mut beta_dev = 0.0f64;
    let mut skipped = 0usize;
    for _ in 0..count {
        let beta0 = rng.gen_range(-PI..PI);
        let spec = MinimalFamilySpec {
            beta0,
            profile_plus: PROFILE_TEMPLATES[rng.gen_range(0..PROFILE_TEMPLATES.len())]
                .replace('a', "a1")
                .replace('b', "b1"),
            profile_minus: PROFILE_TEMPLATES[rng.gen_range(0..PROFILE_TEMPLATES.len())]
                .replace('a', "a2")
                .replace('b', "b2"),
        };
        let params: Vec<(&str, f64)> = vec![
            ("a1", rng.gen_range(0.4..1.0)),
            ("b1", rng.gen_range(-0.3..0.3)),
            ("a2", rng.gen_range(0.4..1.0)),
            ("b2", rng.gen_range(-0.3..0.3)),
        ];
        let gg = flatlab::build_minimal(&spec, domain, &params)?;
        let imm = gg.immersion();
        for i in 0..n {
            for j in 0..n {
                let at = V2::new(
                    domain.s0 + (domain.s1 - domain.s0) * i as f64 / (n - 1) as f64,
                    domain.t0 + (domain.t1 - domain.t0) * j as f64 / (n - 1) as f64,
                );
                fold(
                    &mut pde,
                    flatlab::constant_angle_residual(gg.u(), beta0, at)?.abs(),
                );
                match imm.induced_metric(at) {
                    Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                        let mc = imm.mean_curvature(at)?;
                        fold(&mut hmax, mc.vector.h.norm() + mc.vector.v.norm());
                    }
                    Ok(_) => skipped += 1,
                    Err(GeomError::NullPoint { .. }) => skipped += 1,
                    Err(other) => return Err(other),
                }
            }
        }
        let (dev, _) = doubled_angle_deviation(&gg, n, beta0)?;
        fold(&mut beta_dev, dev);
    }

    // Non-minimal potentials still satisfy 2H = 𝕁∇β pointwise.
    let mut agmax = 0.0f64;
    let potentials = 10usize;
    let flat_rect = Rect::new(-2.0, 2.0, -2.0, 2.0);
    for _ in 0..potentials {
        let u = ScalarField::from_ast(rand_poly(&mut rng, 3, 0.6), &["s", "t"], &[])?;
        let gg = GradientGraph::from_field(ConformalChart::flat(), u, flat_rect)?;
        let imm = gg.immersion();
        let m = 7;
        for i in 0..m {
            for j in 0..m {
                let at = V2::new(
                    flat_rect.s0 + (flat_rect.s1 - flat_rect.s0) * i as f64 / (m - 1) as f64,
                    flat_rect.t0 + (flat_rect.t1 - flat_rect.t0) * j as f64 / (m - 1) as f64,
                );
                match imm.induced_metric(at) {
                    Ok(mt) if mt.det.abs() >= NULL_MARGIN_REL * mt.scale => {
                        fold(&mut agmax, flatlab::angle_gradient_residual(&gg, at)?);
                    }
                    Ok(_) => skipped += 1,
                    Err(GeomError::NullPoint { .. }) => skipped += 1,
                    Err(other) => return Err(other),
                }
            }
        }
    }

    // u = sin s + cos t has β = ±π/2 off its null lines {sin s = cos t}.
    let sine = GradientGraph::new(
        ConformalChart::flat(),
        "sin(s) + cos(t)",
        ConformalChart::flat().domain(),
        &[],
    )?;
    let (sine_dev, _) = doubled_angle_deviation(&sine, 21, 0.5 * PI)?;

    let mut out = SuiteOutcome::new();
    out.scalar("families", count as f64);
    out.scalar("potentials", potentials as f64);
    out.scalar("near_null_skipped", skipped as f64);
    out.checks.extend([
        CheckResult::new(
            "flatlab",
            "constant_angle_pde",
            pde,
            tols.get("constant_angle_pde"),
        ),
        CheckResult::new(
            "flatlab",
            "family_mean_curvature",
            hmax,
            tols.get("minimal_h"),
        ),
        CheckResult::new("flatlab", "beta_constancy", beta_dev, tols.get("beta_stddev")),
        CheckResult::new(
            "flatlab",
            "angle_gradient_identity",
            agmax,
            tols.get("angle_gradient"),
        ),
        CheckResult::new("flatlab", "sine_example_angle", sine_dev, tols.get("exact")),
    ]);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scene request runners.

fn merge(res: &mut RequestResult, out: SuiteOutcome) {
    for (k, v) in out.scalars {
        res.scalars.insert(k, v);
    }
    for c in out.checks {
        res.check(c);
    }
}

fn run_request(
    ctx: &RunCtx,
    index: usize,
    request: &RequestSpec,
) -> Result<RequestResult, CliError> {
    match request {
        RequestSpec::Structure { samples } => {
            let mut res = RequestResult::new(index, "structure", ctx.scene.chart.name());
            let out = structure_suite(
                &ctx.scene.chart,
                samples.unwrap_or(ctx.samples),
                ctx.seed,
                ctx.tols,
            )?;
            merge(&mut res, out);
            Ok(res)
        }
        RequestSpec::Lagrangian { object, grid } => {
            run_lagrangian(ctx, index, object, effective_grid(*grid, ctx.grid))
        }
        RequestSpec::CurveBundle {
            curve,
            offset,
            t_range,
            grid,
        } => run_curve_bundle(
            ctx,
            index,
            curve,
            offset,
            t_range.unwrap_or([-0.4, 0.4]),
            effective_grid(*grid, 9),
        ),
        RequestSpec::Angle {
            object,
            grid,
            output,
        } => run_angle(
            ctx,
            index,
            object,
            effective_grid(*grid, ctx.grid),
            output.as_deref(),
        ),
        RequestSpec::MinimalFamily {
            beta0,
            profile_plus,
            profile_minus,
            domain,
            grid,
        } => run_minimal_family(
            ctx,
            index,
            *beta0,
            profile_plus,
            profile_minus,
            *domain,
            effective_grid(*grid, 13),
        ),
        RequestSpec::Congruence {
            surface,
            quad_order,
        } => run_congruence(ctx, index, surface, quad_order.unwrap_or(ctx.quad_order)),
        RequestSpec::RankProfile {
            surface,
            grid,
            expect_rank,
        } => run_rank_profile(ctx, index, surface, effective_grid(*grid, 6), *expect_rank),
        RequestSpec::Variation { surface, h, grid } => run_variation(
            ctx,
            index,
            surface,
            h,
            effective_grid(*grid, VARIATION_GRID_DEFAULT),
        ),
        RequestSpec::Grid {
            object,
            quantity,
            grid,
            output,
        } => run_grid(
            ctx,
            index,
            object,
            quantity,
            effective_grid(*grid, ctx.grid),
            output,
        ),
    }
}

fn grid_nodes(d: Rect, n: usize) -> Vec<V2> {
    let mut nodes = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            nodes.push(V2::new(
                d.s0 + (d.s1 - d.s0) * i as f64 / (n - 1) as f64,
                d.t0 + (d.t1 - d.t0) * j as f64 / (n - 1) as f64,
            ));
        }
    }
    nodes
}

fn cell_centers(d: Rect, n: usize) -> Vec<V2> {
    let mut centers = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            centers.push(V2::new(
                d.s0 + (d.s1 - d.s0) * (i as f64 + 0.5) / n as f64,
                d.t0 + (d.t1 - d.t0) * (j as f64 + 0.5) / n as f64,
            ));
        }
    }
    centers
}

fn run_lagrangian(
    ctx: &RunCtx,
    index: usize,
    object: &str,
    n: usize,
) -> Result<RequestResult, CliError> {
    let imm = ctx.scene.immersion_like(object)?;
    let is_graph = matches!(ctx.scene.object(object)?, SceneObject::Graph(_));
    let mut res = RequestResult::new(index, "lagrangian", object);

    let mut defect = 0.0f64;
    let mut argdiff = 0.0f64;
    let mut mean_h = 0.0f64;
    let mut skipped = 0usize;
    let nodes = grid_nodes(imm.domain(), n);
    for &at in &nodes {
        fold(
            &mut defect,
            imm.lagrangian_defect(at).map_err(GeomError::from)?.abs(),
        );
        match imm.induced_metric(at) {
            Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                let mc = imm.mean_curvature(at)?;
                fold(&mut mean_h, mc.vector.h.norm() + mc.vector.v.norm());
                if is_graph {
                    let arg = imm.mean_curvature_arg_form(at)?;
                    let pair = imm.mean_curvature_pairings(at)?;
                    fold(&mut argdiff, (arg[0] - pair[0]).abs());
                    fold(&mut argdiff, (arg[1] - pair[1]).abs());
                }
            }
            Ok(_) => skipped += 1,
            Err(GeomError::NullPoint { .. }) => skipped += 1,
            Err(other) => return Err(other.into()),
        }
    }

    res.scalar("grid", n as f64);
    res.scalar("points", nodes.len() as f64);
    res.scalar("near_null_skipped", skipped as f64);
    res.scalar("max_mean_h", mean_h);
    res.check(CheckResult::new(
        "lagrangian",
        "lagrangian_defect",
        defect,
        ctx.tols.get("lagrangian_defect"),
    ));
    if is_graph {
        res.check(CheckResult::new(
            "lagrangian",
            "mean_curvature_arg_form",
            argdiff,
            ctx.tols.get("mean_curvature_arg"),
        ));
    }
    Ok(res)
}

fn run_curve_bundle(
    ctx: &RunCtx,
    index: usize,
    curve: &str,
    offset: &str,
    t_range: [f64; 2],
    n: usize,
) -> Result<RequestResult, CliError> {
    let base = ctx.scene.curve(curve)?.clone();
    let offset_field = ScalarField::new(offset, &["s"], &[])
        .map_err(|e| CliError::Parse(format!("expression `{offset}`: {e}")))?;
    if !(t_range[0] < t_range[1]) {
        return Err(CliError::Domain(format!(
            "t_range [{}, {}] is empty",
            t_range[0], t_range[1]
        )));
    }
    let anb = AffineNormalBundle::new(base, offset_field.clone(), (t_range[0], t_range[1]))?;
    let imm = anb.immersion();
    let mut res = RequestResult::new(index, "curve_bundle", curve);

    let mut metric = 0.0f64;
    let mut pins = 0.0f64;
    let mut hform = 0.0f64;
    let mut hstat = 0.0f64;
    let mut flat = 0.0f64;
    let nodes = grid_nodes(imm.domain(), n);
    for &at in &nodes {
        let fr = anb.curve().frenet(at.x)?;
        let a = offset_field.eval(&[at.x]).map_err(GeomError::from)?;
        let m = imm.induced_metric(at)?;
        fold(&mut metric, (m.e + 2.0 * a * fr.k).abs());
        fold(&mut metric, (m.f + 1.0).abs());
        fold(&mut metric, m.g.abs());
        let sf = imm.second_fundamental(at)?;
        fold(&mut pins, (sf.h[0][1] - fr.k).abs());
        fold(&mut pins, (sf.h[1][0] - fr.k).abs());
        fold(&mut pins, sf.h[0][2].abs());
        fold(&mut pins, sf.h[1][1].abs());
        fold(&mut pins, sf.h[1][2].abs());
        let mc = imm.mean_curvature(at)?;
        fold(
            &mut hform,
            mc.vector.h.norm() + (mc.vector.v - fr.k * fr.tangent).norm(),
        );
        fold(&mut hstat, imm.hstationary_divergence(at)?.abs());
        fold(&mut flat, imm.induced_curvature(at)?.abs());
    }

    res.scalar("grid", n as f64);
    res.scalar("points", nodes.len() as f64);
    res.check(CheckResult::new(
        "lagrangian",
        "induced_metric_pins",
        metric,
        ctx.tols.get("rank1_metric"),
    ));
    res.check(CheckResult::new(
        "lagrangian",
        "second_fundamental_pins",
        pins,
        ctx.tols.get("rank1_h"),
    ));
    res.check(CheckResult::new(
        "lagrangian",
        "mean_curvature_formula",
        hform,
        ctx.tols.get("rank1_h"),
    ));
    res.check(CheckResult::new(
        "lagrangian",
        "hstationary_divergence",
        hstat,
        ctx.tols.get("hstationary"),
    ));
    res.check(CheckResult::new(
        "lagrangian",
        "induced_curvature_flat",
        flat,
        ctx.tols.get("induced_flat"),
    ));
    Ok(res)
}

fn run_angle(
    ctx: &RunCtx,
    index: usize,
    object: &str,
    n: usize,
    output: Option<&str>,
) -> Result<RequestResult, CliError> {
    let gg = ctx.scene.graph(object)?;
    let mut res = RequestResult::new(index, "angle", object);

    let survey = flatlab::survey_angle(gg, n)?;
    res.scalar("components", survey.components.len() as f64);
    res.scalar("null_nodes", survey.null_nodes as f64);
    for (i, comp) in survey.components.iter().take(8).enumerate() {
        res.scalar(&format!("beta_mean_{i}"), comp.mean_angle);
        res.scalar(&format!("beta_stddev_{i}"), comp.circular_stddev);
        res.scalar(&format!("component_size_{i}"), comp.size as f64);
    }

    let imm = gg.immersion();
    let mut residual = 0.0f64;
    let mut skipped = 0usize;
    for at in grid_nodes(imm.domain(), n) {
        match imm.induced_metric(at) {
            Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                fold(&mut residual, flatlab::angle_gradient_residual(gg, at)?);
            }
            Ok(_) => skipped += 1,
            Err(GeomError::NullPoint { .. }) => skipped += 1,
            Err(other) => return Err(other.into()),
        }
    }
    res.scalar("near_null_skipped", skipped as f64);
    res.check(CheckResult::new(
        "flatlab",
        "angle_gradient_identity",
        residual,
        ctx.tols.get("angle_gradient"),
    ));

    if let Some(stem) = output {
        let (beta, resid) = angle_grids(gg, n)?;
        res.grids.push(write_grid_csv(
            &ctx.out_dir,
            &format!("{stem}_beta.csv"),
            &beta,
        )?);
        res.grids.push(write_grid_csv(
            &ctx.out_dir,
            &format!("{stem}_residual.csv"),
            &resid,
        )?);
    }
    Ok(res)
}

fn run_minimal_family(
    ctx: &RunCtx,
    index: usize,
    beta0: f64,
    profile_plus: &str,
    profile_minus: &str,
    domain: Option<[f64; 4]>,
    n: usize,
) -> Result<RequestResult, CliError> {
    let spec = MinimalFamilySpec {
        beta0,
        profile_plus: profile_plus.into(),
        profile_minus: profile_minus.into(),
    };
    let domain = match domain {
        Some(d) => Rect::new(d[0], d[1], d[2], d[3]),
        None => Rect::new(-2.0, 2.0, -2.0, 2.0),
    };
    let gg = flatlab::build_minimal(&spec, domain, &[])?;
    let imm = gg.immersion();
    let mut res = RequestResult::new(index, "minimal_family", "flat");

    let mut pde = 0.0f64;
    let mut hmax = 0.0f64;
    let mut skipped = 0usize;
    for at in grid_nodes(domain, n) {
        fold(
            &mut pde,
            flatlab::constant_angle_residual(gg.u(), beta0, at)?.abs(),
        );
        match imm.induced_metric(at) {
            Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                let mc = imm.mean_curvature(at)?;
                fold(&mut hmax, mc.vector.h.norm() + mc.vector.v.norm());
            }
            Ok(_) => skipped += 1,
            Err(GeomError::NullPoint { .. }) => skipped += 1,
            Err(other) => return Err(other.into()),
        }
    }
    let (beta_dev, _) = doubled_angle_deviation(&gg, n, beta0)?;

    res.scalar("beta0", beta0);
    res.scalar("grid", n as f64);
    res.scalar("near_null_skipped", skipped as f64);
    res.check(CheckResult::new(
        "flatlab",
        "constant_angle_pde",
        pde,
        ctx.tols.get("constant_angle_pde"),
    ));
    res.check(CheckResult::new(
        "flatlab",
        "family_mean_curvature",
        hmax,
        ctx.tols.get("minimal_h"),
    ));
    res.check(CheckResult::new(
        "flatlab",
        "beta_constancy",
        beta_dev,
        ctx.tols.get("beta_stddev"),
    ));
    Ok(res)
}

fn run_congruence(
    ctx: &RunCtx,
    index: usize,
    surface: &str,
    order: usize,
) -> Result<RequestResult, CliError> {
    let surf = ctx.scene.surface(surface)?;
    let mut res = RequestResult::new(index, "congruence", surface);

    let fq = surf.functional_f(order)?;
    let aq = congruence_area(surf, order)?;
    let f = fq.value;
    let half_area = 0.5 * aq.value;
    let rel_diff = (f - half_area).abs() / f.abs().max(half_area.abs()).max(1e-10);

    // Degenerate cells: parameter cells whose congruence metric vanishes
    // (umbilic regions), contributing nothing to either quadrature.
    let mtol = ctx.tols.get("congruence_metric");
    let mut cells_skipped = 0usize;
    for at in cell_centers(surf.domain(), ctx.grid) {
        let (e, fm, g) = surf.ambient_metric(at)?;
        if e.abs().max(fm.abs()).max(g.abs()) < mtol {
            cells_skipped += 1;
        }
    }

    res.scalar("F", f);
    res.scalar("area", aq.value);
    res.scalar("rel_diff", rel_diff);
    res.scalar("cells_skipped", cells_skipped as f64);
    res.scalar("f_error_estimate", fq.error_estimate);
    res.scalar("area_error_estimate", aq.error_estimate);
    res.scalar("f_cells", fq.cells as f64);
    res.scalar("area_cells", aq.cells as f64);

    if f.abs() > 1e-8 {
        res.check(CheckResult::new(
            "congruence",
            "area_equals_twice_functional",
            rel_diff,
            ctx.tols.get("area_rel"),
        ));
    } else {
        res.check(CheckResult::new(
            "congruence",
            "umbilic_area_collapse",
            f.abs().max(aq.value.abs()),
            ctx.tols.get("area_abs"),
        ));
    }

    if surf.is_curvature_line() {
        let mut off = 0.0f64;
        for at in grid_nodes(surf.domain(), ctx.grid) {
            let (e, _, g) = surf.ambient_metric(at)?;
            fold(&mut off, e.abs());
            fold(&mut off, g.abs());
        }
        res.check(CheckResult::new(
            "congruence",
            "curvature_line_metric",
            off,
            mtol,
        ));
    }
    Ok(res)
}

fn run_rank_profile(
    ctx: &RunCtx,
    index: usize,
    surface: &str,
    n: usize,
    expect_rank: Option<usize>,
) -> Result<RequestResult, CliError> {
    let surf = ctx.scene.surface(surface)?;
    let prof = developable_rank_profile(surf, n)?;
    let mut res = RequestResult::new(index, "rank_profile", surface);
    res.scalar("grid", n as f64);
    res.scalar("rank0_cells", prof.counts[0] as f64);
    res.scalar("rank1_cells", prof.counts[1] as f64);
    res.scalar("rank2_cells", prof.counts[2] as f64);
    res.scalar("rank_min", prof.min as f64);
    res.scalar("rank_max", prof.max as f64);
    if let Some(want) = expect_rank {
        let off: usize = (0..3).filter(|&r| r != want).map(|r| prof.counts[r]).sum();
        res.check(CheckResult::new(
            "congruence",
            "projection_rank_uniform",
            off as f64,
            0.0,
        ));
    }
    Ok(res)
}

fn run_variation(
    ctx: &RunCtx,
    index: usize,
    surface: &str,
    h: &str,
    n: usize,
) -> Result<RequestResult, CliError> {
    let surf = ctx.scene.surface(surface)?;
    let field = ScalarField::new(h, &["s", "t"], &[])
        .map_err(|e| CliError::Parse(format!("expression `{h}`: {e}")))?;
    let points = cell_centers(surf.domain(), n);
    let check = hamiltonian_variation_check(surf, &field, tol::VARIATION_EPS, &points)?;

    let mut res = RequestResult::new(index, "variation", surface);
    res.scalar("samples", check.samples as f64);
    res.scalar("degenerate_skipped", check.skipped as f64);
    res.scalar("max_residual", check.max_residual);
    res.scalar("max_relative", check.max_relative);
    res.scalar("max_pairing", check.max_pairing);
    res.check(CheckResult::new(
        "congruence",
        "variation_normal_part",
        check.max_residual,
        ctx.tols.get("variation_sup"),
    ));
    res.check(CheckResult::new(
        "congruence",
        "variation_relative",
        check.max_relative,
        ctx.tols.get("variation_pointwise"),
    ));
    res.check(CheckResult::new(
        "congruence",
        "variation_pairing",
        check.max_pairing,
        ctx.tols.get("variation_pointwise"),
    ));
    Ok(res)
}

// ---------------------------------------------------------------------------
// Grid sampling and CSV output.

/// Sampled grid: per-row (s, t, values), with rows on or beyond the null
/// locus skipped and counted.
struct GridData {
    columns: usize,
    rows: Vec<(f64, f64, Vec<f64>)>,
    skipped: usize,
}

impl GridData {
    /// CSV text with the `s,t,value[,value2...]` header.
    fn to_csv(&self) -> String {
        let mut out = String::from("s,t,value");
        for k in 1..self.columns {
            out.push_str(&format!(",value{}", k + 1));
        }
        out.push('\n');
        for (s, t, values) in &self.rows {
            out.push_str(&format!("{s},{t}"));
            for v in values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn write_grid_csv(dir: &Path, file: &str, data: &GridData) -> Result<String, CliError> {
    write_text(&dir.join(file), &data.to_csv())?;
    Ok(file.to_string())
}

/// Sample one quantity of a scene object on an n×n grid of domain nodes.
fn sample_quantity(
    scene: &LoadedScene,
    object: &str,
    quantity: &str,
    n: usize,
) -> Result<GridData, CliError> {
    match scene.object(object)? {
        SceneObject::Graph(gg) => match quantity {
            "beta" => angle_grids(gg, n).map(|(beta, _)| beta),
            "angle_residual" => angle_grids(gg, n).map(|(_, resid)| resid),
            _ => immersion_quantity(gg.immersion(), quantity, n),
        },
        SceneObject::Immersion(imm) => immersion_quantity(imm, quantity, n),
        SceneObject::Surface(surf) => surface_quantity(surf, quantity, n),
        SceneObject::Curve(_) => Err(SceneError::WrongKind {
            name: object.into(),
            got: "curve",
            want: "potential, immersion or surface",
        }
        .into()),
    }
}

/// β and angle-gradient residual grids of a flat potential; null nodes
/// are skipped in both.
fn angle_grids(gg: &GradientGraph, n: usize) -> Result<(GridData, GridData), CliError> {
    let imm = gg.immersion();
    let mut beta = GridData {
        columns: 1,
        rows: Vec::new(),
        skipped: 0,
    };
    let mut resid = GridData {
        columns: 1,
        rows: Vec::new(),
        skipped: 0,
    };
    for at in grid_nodes(imm.domain(), n) {
        match imm.induced_metric(at) {
            Ok(_) => {
                beta.rows
                    .push((at.x, at.y, vec![flatlab::lagrangian_angle(gg, at)?]));
                resid.rows.push((
                    at.x,
                    at.y,
                    vec![flatlab::angle_gradient_residual(gg, at)?],
                ));
            }
            Err(GeomError::NullPoint { .. }) => {
                beta.skipped += 1;
                resid.skipped += 1;
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok((beta, resid))
}

fn immersion_quantity(
    imm: &TBImmersion,
    quantity: &str,
    n: usize,
) -> Result<GridData, CliError> {
    let columns = if quantity == "metric" { 3 } else { 1 };
    let mut data = GridData {
        columns,
        rows: Vec::new(),
        skipped: 0,
    };
    for at in grid_nodes(imm.domain(), n) {
        let row = match quantity {
            "defect" => Some(vec![imm.lagrangian_defect(at)?]),
            "rank" => Some(vec![imm.projection_rank(at)? as f64]),
            "metric" => {
                let m = imm.metric_data(at)?;
                Some(vec![m.e, m.f, m.g])
            }
            "mean_h" => match imm.mean_curvature(at) {
                Ok(mc) => Some(vec![mc.vector.h.norm() + mc.vector.v.norm()]),
                Err(GeomError::NullPoint { .. }) => None,
                Err(other) => return Err(other.into()),
            },
            "gauss" => match imm.induced_curvature(at) {
                Ok(k) => Some(vec![k]),
                Err(GeomError::NullPoint { .. }) => None,
                Err(other) => return Err(other.into()),
            },
            other => {
                return Err(CliError::Parse(format!(
                    "unknown immersion quantity `{other}`"
                )))
            }
        };
        match row {
            Some(values) => data.rows.push((at.x, at.y, values)),
            None => data.skipped += 1,
        }
    }
    Ok(data)
}

fn surface_quantity(
    surf: &AmbientSurface,
    quantity: &str,
    n: usize,
) -> Result<GridData, CliError> {
    let columns = match quantity {
        "congruence_metric" => 3,
        "principal_curvatures" => 2,
        other => {
            return Err(CliError::Parse(format!(
                "unknown surface quantity `{other}`"
            )))
        }
    };
    let mut data = GridData {
        columns,
        rows: Vec::new(),
        skipped: 0,
    };
    for at in grid_nodes(surf.domain(), n) {
        let values = match quantity {
            "congruence_metric" => {
                let (e, f, g) = surf.ambient_metric(at)?;
                vec![e, f, g]
            }
            _ => {
                let sd = surf.shape_data(at)?;
                vec![sd.lambda, sd.mu]
            }
        };
        data.rows.push((at.x, at.y, values));
    }
    Ok(data)
}

fn run_grid(
    ctx: &RunCtx,
    index: usize,
    object: &str,
    quantity: &str,
    n: usize,
    output: &str,
) -> Result<RequestResult, CliError> {
    let data = sample_quantity(ctx.scene, object, quantity, n)?;
    let mut res = RequestResult::new(index, "grid", object);
    res.scalar("grid", n as f64);
    res.scalar("rows", data.rows.len() as f64);
    res.scalar("null_skipped", data.skipped as f64);
    res.grids
        .push(write_grid_csv(&ctx.out_dir, &format!("{output}.csv"), &data)?);
    Ok(res)
}

// ---------------------------------------------------------------------------
// Subcommands.

fn cmd_run(args: RunArgs) -> Result<bool, CliError> {
    let spec = SceneFile::load(&args.scene)?;
    let mut tols = Tolerances::defaults()
        .with_overrides(&spec.tolerances)
        .map_err(CliError::Parse)?;
    if let Some(tn) = args.tol_null {
        if !(tn.is_finite() && tn > 0.0) {
            return Err(CliError::Parse("--tol-null must be positive".into()));
        }
        tols.set("null_rel", tn);
    }
    let scene = spec.compile(tols.get("null_rel"))?;
    let ctx = RunCtx {
        scene: &scene,
        tols: &tols,
        seed: args.seed,
        grid: args.grid.unwrap_or(tol::GRID_DEFAULT).max(2),
        samples: args.samples.unwrap_or(100).max(1),
        quad_order: args.quad_order.unwrap_or(tol::QUAD_ORDER_DEFAULT).max(2),
        out_dir: out_dir_of(args.out.as_deref()),
    };
    let mut report = Report::new(args.seed, &tols);
    for (index, request) in scene.requests.iter().enumerate() {
        report.push(run_request(&ctx, index, request)?);
    }
    emit_report(&report, args.out.as_deref())?;
    Ok(report.passed)
}

fn cmd_verify_structure(args: VerifyStructureArgs) -> Result<bool, CliError> {
    let tols = Tolerances::defaults();
    let mut report = Report::new(args.seed, &tols);
    for (index, chart) in resolve_charts(&args.chart)?.iter().enumerate() {
        let mut res = RequestResult::new(index, "structure", chart.name());
        merge(
            &mut res,
            structure_suite(chart, args.samples.max(1), args.seed, &tols)?,
        );
        report.push(res);
    }
    emit_report(&report, args.out.as_deref())?;
    Ok(report.passed)
}

fn cmd_verify_theorems(args: VerifyTheoremsArgs) -> Result<bool, CliError> {
    let tols = Tolerances::defaults();
    let charts = resolve_charts(&args.chart)?;
    let bundles = args.samples.unwrap_or(10).max(1);
    let graphs = args.samples.unwrap_or(20).max(1);
    let families = args.samples.unwrap_or(10).max(1);

    let mut report = Report::new(args.seed, &tols);
    let mut index = 0usize;
    for chart in &charts {
        let mut res = RequestResult::new(index, "curve_bundle_suite", chart.name());
        merge(&mut res, curve_bundle_suite(chart, bundles, args.seed, &tols)?);
        report.push(res);
        index += 1;
    }
    for chart in &charts {
        let mut res = RequestResult::new(index, "gradient_graph_suite", chart.name());
        merge(
            &mut res,
            gradient_graph_suite(chart, graphs, args.seed, &tols, true)?,
        );
        report.push(res);
        index += 1;
    }
    let mut res = RequestResult::new(index, "minimal_family_suite", "flat");
    merge(&mut res, minimal_family_suite(families, args.seed, &tols)?);
    report.push(res);

    emit_report(&report, args.out.as_deref())?;
    Ok(report.passed)
}

fn cmd_congruence(args: CongruenceArgs) -> Result<bool, CliError> {
    let spec = SceneFile::load(&args.scene)?;
    let tols = Tolerances::defaults()
        .with_overrides(&spec.tolerances)
        .map_err(CliError::Parse)?;
    let scene = spec.compile(tols.get("null_rel"))?;

    // Explicit congruence requests, or one per surface object.
    let mut targets: Vec<(String, Option<usize>)> = scene
        .requests
        .iter()
        .filter_map(|r| match r {
            RequestSpec::Congruence {
                surface,
                quad_order,
            } => Some((surface.clone(), *quad_order)),
            _ => None,
        })
        .collect();
    if targets.is_empty() {
        targets = spec
            .objects
            .iter()
            .filter_map(|o| match o {
                crate::scene::ObjectSpec::Surface { name, .. } => Some((name.clone(), None)),
                _ => None,
            })
            .collect();
    }
    if targets.is_empty() {
        return Err(CliError::Parse(
            "the scene has no congruence request and no surface object".into(),
        ));
    }

    let ctx = RunCtx {
        scene: &scene,
        tols: &tols,
        seed: args.seed,
        grid: tol::GRID_DEFAULT,
        samples: 100,
        quad_order: args.quad_order.unwrap_or(tol::QUAD_ORDER_DEFAULT).max(2),
        out_dir: out_dir_of(args.out.as_deref()),
    };
    let mut passed = true;
    let mut objects = Vec::new();
    for (index, (surface, order)) in targets.iter().enumerate() {
        let res = run_congruence(&ctx, index, surface, order.unwrap_or(ctx.quad_order))?;
        passed &= res.passed;
        for line in res.checks.iter().filter(|c| !c.passed) {
            eprintln!("{}", line.failure_line());
        }
        let mut map = serde_json::Map::new();
        map.insert("surface".into(), surface.as_str().into());
        for key in ["F", "area", "rel_diff", "cells_skipped"] {
            map.insert(key.into(), res.scalars[key].into());
        }
        objects.push(serde_json::Value::Object(map));
    }
    let value = if objects.len() == 1 {
        objects.pop().unwrap()
    } else {
        serde_json::Value::Array(objects)
    };
    let mut text = serde_json::to_string_pretty(&value).expect("congruence json");
    text.push('\n');
    match args.out.as_deref() {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(passed)
}

fn cmd_flatlab(args: FlatlabArgs) -> Result<bool, CliError> {
    let tols = Tolerances::defaults();
    let domain = match &args.domain {
        Some(d) => {
            if !(d[0] < d[1] && d[2] < d[3]) {
                return Err(CliError::Domain(format!(
                    "domain [{}, {}] × [{}, {}] is empty",
                    d[0], d[1], d[2], d[3]
                )));
            }
            Rect::new(d[0], d[1], d[2], d[3])
        }
        None => Rect::new(-2.0, 2.0, -2.0, 2.0),
    };
    let n = args.grid.max(2);

    let mut report = Report::new(0, &tols);
    let out_dir = out_dir_of(args.out.as_deref());
    let mut res;
    let gg;
    match (&args.u, args.beta0) {
        (Some(u), None) => {
            gg = GradientGraph::new(ConformalChart::flat(), u, domain, &[])
                .map_err(CliError::from)?;
            res = RequestResult::new(0, "flatlab", "potential");
            let survey = flatlab::survey_angle(&gg, n)?;
            res.scalar("components", survey.components.len() as f64);
            res.scalar("null_nodes", survey.null_nodes as f64);
            for (i, comp) in survey.components.iter().take(8).enumerate() {
                res.scalar(&format!("beta_mean_{i}"), comp.mean_angle);
                res.scalar(&format!("beta_stddev_{i}"), comp.circular_stddev);
            }
            let imm = gg.immersion();
            let mut residual = 0.0f64;
            for at in grid_nodes(domain, n) {
                match imm.induced_metric(at) {
                    Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                        fold(&mut residual, flatlab::angle_gradient_residual(&gg, at)?);
                    }
                    Ok(_) | Err(GeomError::NullPoint { .. }) => {}
                    Err(other) => return Err(other.into()),
                }
            }
            res.check(CheckResult::new(
                "flatlab",
                "angle_gradient_identity",
                residual,
                tols.get("angle_gradient"),
            ));
        }
        (None, Some(beta0)) => {
            let spec = MinimalFamilySpec {
                beta0,
                profile_plus: args.f1.clone().expect("clap requires f1"),
                profile_minus: args.f2.clone().expect("clap requires f2"),
            };
            gg = flatlab::build_minimal(&spec, domain, &[]).map_err(CliError::from)?;
            res = RequestResult::new(0, "flatlab", "minimal_family");
            let imm = gg.immersion();
            let mut pde = 0.0f64;
            let mut hmax = 0.0f64;
            for at in grid_nodes(domain, n) {
                fold(
                    &mut pde,
                    flatlab::constant_angle_residual(gg.u(), beta0, at)?.abs(),
                );
                match imm.induced_metric(at) {
                    Ok(m) if m.det.abs() >= NULL_MARGIN_REL * m.scale => {
                        let mc = imm.mean_curvature(at)?;
                        fold(&mut hmax, mc.vector.h.norm() + mc.vector.v.norm());
                    }
                    Ok(_) | Err(GeomError::NullPoint { .. }) => {}
                    Err(other) => return Err(other.into()),
                }
            }
            let (beta_dev, _) = doubled_angle_deviation(&gg, n, beta0)?;
            res.scalar("beta0", beta0);
            res.check(CheckResult::new(
                "flatlab",
                "constant_angle_pde",
                pde,
                tols.get("constant_angle_pde"),
            ));
            res.check(CheckResult::new(
                "flatlab",
                "family_mean_curvature",
                hmax,
                tols.get("minimal_h"),
            ));
            res.check(CheckResult::new(
                "flatlab",
                "beta_constancy",
                beta_dev,
                tols.get("beta_stddev"),
            ));
        }
        _ => {
            return Err(CliError::Parse(
                "flatlab needs either --u or (--beta0 --f1 --f2)".into(),
            ))
        }
    }

    let (beta, resid) = angle_grids(&gg, n)?;
    res.grids.push(write_grid_csv(
        &out_dir,
        &format!("{}_beta.csv", args.prefix),
        &beta,
    )?);
    res.grids.push(write_grid_csv(
        &out_dir,
        &format!("{}_residual.csv", args.prefix),
        &resid,
    )?);
    res.scalar("grid", n as f64);

    report.push(res);
    emit_report(&report, args.out.as_deref())?;
    Ok(report.passed)
}

fn cmd_grid_export(args: GridExportArgs) -> Result<bool, CliError> {
    let spec = SceneFile::load(&args.scene)?;
    let tols = Tolerances::defaults()
        .with_overrides(&spec.tolerances)
        .map_err(CliError::Parse)?;
    let null_tol = args.tol_null.unwrap_or_else(|| tols.get("null_rel"));
    let scene = spec.compile(null_tol)?;
    let n = args.grid.unwrap_or(tol::GRID_DEFAULT).max(2);
    let data = sample_quantity(&scene, &args.object, &args.quantity, n)?;
    let csv = data.to_csv();
    match args.out.as_deref() {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(true)
}
