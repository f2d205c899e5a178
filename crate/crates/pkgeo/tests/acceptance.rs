//! Full verification gate. Each test covers one criterion group at its
//! stated tolerance and prints one line per underlying check (visible
//! with `--nocapture`); the test result line is the per-criterion
//! pass/fail verdict.

use std::sync::Arc;

use nalgebra::Vector2;
use pkgeo::cli::{
    curve_bundle_suite, gradient_graph_suite, minimal_family_suite, structure_suite,
};
use pkgeo::congruence::{
    congruence_area, developable_rank_profile, hamiltonian_variation_check, AmbientSurface,
};
use pkgeo::expr::{self, cst, mul, parse, var, Expr, FieldError, Func, ScalarField};
use pkgeo::numerics::Rect;
use pkgeo::report::{CheckResult, Tolerances};
use pkgeo::basegeo::ConformalChart;
use pkgeo::tol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V2 = Vector2<f64>;

const SEED: u64 = 2024;

fn assert_all(label: &str, checks: &[CheckResult]) {
    for c in checks {
        println!(
            "  {label} / {}::{}: observed {:.3e} vs {:.3e} -> {}",
            c.module,
            c.operation,
            c.observed,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "{}::{} observed {:e} vs tolerated {:e}",
                c.module, c.operation, c.observed, c.tolerance
            )
        })
        .collect();
    assert!(failed.is_empty(), "{label}: {failed:?}");
    println!("PASS {label}");
}

#[test]
fn criterion_1_pseudo_kahler_structure_invariants() {
    let tols = Tolerances::defaults();
    for chart in ConformalChart::catalog() {
        let out = structure_suite(&chart, 100, SEED, &tols).unwrap();
        assert_all(&format!("structure[{}]", chart.name()), &out.checks);
    }
}

#[test]
fn criterion_2_curve_bundle_package() {
    let tols = Tolerances::defaults();
    for chart in ConformalChart::catalog() {
        let out = curve_bundle_suite(&chart, 10, SEED, &tols).unwrap();
        assert_all(&format!("curve_bundle[{}]", chart.name()), &out.checks);
    }
}

#[test]
fn criterion_3_gradient_graphs_and_minimal_probe() {
    let tols = Tolerances::defaults();
    for chart in ConformalChart::catalog() {
        let out = gradient_graph_suite(&chart, 20, SEED, &tols, true).unwrap();
        if chart.name() != "flat" {
            assert!(
                out.checks
                    .iter()
                    .any(|c| c.operation == "minimal_probe_floor"),
                "{}: probe check missing",
                chart.name()
            );
        }
        assert_all(&format!("gradient_graph[{}]", chart.name()), &out.checks);
    }
}

#[test]
fn criterion_4_constant_angle_family() {
    let tols = Tolerances::defaults();
    let out = minimal_family_suite(10, SEED, &tols).unwrap();
    assert_all("minimal_family[flat]", &out.checks);
}

fn grid_points(domain: Rect, n: usize) -> Vec<V2> {
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            pts.push(V2::new(
                domain.s0 + (domain.s1 - domain.s0) * (i as f64 + 0.5) / n as f64,
                domain.t0 + (domain.t1 - domain.t0) * (j as f64 + 0.5) / n as f64,
            ));
        }
    }
    pts
}

#[test]
fn criterion_5_normal_congruence_identities() {
    let mut checks = Vec::new();

    // Area = 2 · functional on generic surfaces of both signatures.
    let generic = [
        AmbientSurface::cylinder(1.0, 2.0).unwrap(),
        AmbientSurface::spheroid(1.3, 0.7).unwrap(),
        AmbientSurface::euclidean_graph(
            "0.4*sin(s)*cos(t) + 0.1*s^2",
            Rect::new(-1.0, 1.0, -1.0, 1.0),
            &[],
        )
        .unwrap(),
        AmbientSurface::minkowski_graph(
            "0.3*s^2 + 0.1*t^2",
            Rect::new(-0.8, 0.8, -0.8, 0.8),
            &[],
        )
        .unwrap(),
        AmbientSurface::minkowski_graph(
            "0.2*s*t + 0.1*s^2",
            Rect::new(-0.8, 0.8, -0.8, 0.8),
            &[],
        )
        .unwrap(),
    ];
    for surf in &generic {
        let area = congruence_area(surf, 40).unwrap();
        let f = surf.functional_f(40).unwrap();
        let rel = (area.value - 2.0 * f.value).abs() / (1.0 + area.value);
        checks.push(CheckResult::new(
            "congruence",
            &format!("area_equals_twice_functional[{}]", surf.name()),
            rel,
            tol::TOL_AREA_REL,
        ));
        checks.push(CheckResult::lower_bound(
            "congruence",
            &format!("congruence_nondegenerate[{}]", surf.name()),
            area.value,
            0.1,
        ));
    }

    // Totally umbilic: both sides collapse outright.
    for surf in [
        AmbientSurface::sphere(1.5).unwrap(),
        AmbientSurface::hyperboloid().unwrap(),
    ] {
        let worst = congruence_area(&surf, 16)
            .unwrap()
            .value
            .abs()
            .max(surf.functional_f(16).unwrap().value.abs());
        checks.push(CheckResult::new(
            "congruence",
            &format!("umbilic_area_collapse[{}]", surf.name()),
            worst,
            tol::TOL_AREA_ABS,
        ));
    }

    // Curvature-line parametrizations make the congruence metric
    // anti-diagonal: Ē = Ḡ = 0.
    for surf in [
        AmbientSurface::sphere(1.0).unwrap(),
        AmbientSurface::cylinder(1.0, 2.0).unwrap(),
        AmbientSurface::spheroid(1.3, 0.7).unwrap(),
        AmbientSurface::torus(2.0, 0.6).unwrap(),
        AmbientSurface::cone(0.5, 0.5, 2.0).unwrap(),
        AmbientSurface::hyperboloid().unwrap(),
    ] {
        let mut off = 0.0f64;
        for at in grid_points(surf.domain(), 9) {
            let (e, _, g) = surf.ambient_metric(at).unwrap();
            off = off.max(e.abs()).max(g.abs());
        }
        checks.push(CheckResult::new(
            "congruence",
            &format!("curvature_line_metric[{}]", surf.name()),
            off,
            tol::TOL_CONGRUENCE_METRIC,
        ));
    }

    // Hamiltonian variation identity, Richardson-extrapolated in ε.
    let variation_cases = [
        (AmbientSurface::spheroid(1.3, 0.7).unwrap(), "sin(s)*cos(2*t)"),
        (AmbientSurface::torus(2.0, 0.6).unwrap(), "cos(s) + 0.3*sin(t)"),
        (
            AmbientSurface::minkowski_graph(
                "0.3*s^2 + 0.1*t^2",
                Rect::new(-0.8, 0.8, -0.8, 0.8),
                &[],
            )
            .unwrap(),
            "s*t",
        ),
    ];
    for (surf, htext) in &variation_cases {
        let h = ScalarField::new(htext, &["s", "t"], &[]).unwrap();
        let pts = grid_points(surf.domain(), 5);
        let check = hamiltonian_variation_check(surf, &h, tol::VARIATION_EPS, &pts).unwrap();
        checks.push(CheckResult::new(
            "congruence",
            &format!("variation_relative[{}]", surf.name()),
            check.max_relative,
            tol::TOL_VARIATION_POINTWISE,
        ));
        checks.push(CheckResult::new(
            "congruence",
            &format!("variation_normal_part[{}]", surf.name()),
            check.max_residual,
            tol::TOL_VARIATION_SUP,
        ));
        checks.push(CheckResult::new(
            "congruence",
            &format!("variation_pairing[{}]", surf.name()),
            check.max_pairing,
            tol::TOL_VARIATION_POINTWISE,
        ));
    }

    // Projection ranks classify developables.
    let rank_cases = [
        (AmbientSurface::plane(0.7).unwrap(), 0usize),
        (AmbientSurface::cylinder(1.0, 2.0).unwrap(), 1),
        (AmbientSurface::cone(0.5, 0.5, 2.0).unwrap(), 1),
        (AmbientSurface::spheroid(1.3, 0.7).unwrap(), 2),
    ];
    for (surf, want) in &rank_cases {
        let prof = developable_rank_profile(surf, 6).unwrap();
        let off: usize = (0..3).filter(|r| r != want).map(|r| prof.counts[r]).sum();
        checks.push(CheckResult::new(
            "congruence",
            &format!("projection_rank_{want}[{}]", surf.name()),
            off as f64,
            0.0,
        ));
    }

    assert_all("congruence", &checks);
}

/// Depth-bounded random expression over (s, t), built through the same
/// smart constructors the parser uses, so printing is already canonical.
fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Arc<Expr> {
    if depth == 0 {
        return match rng.gen_range(0..3) {
            0 => cst((rng.gen_range(-40..40) as f64) / 8.0),
            1 => var("s"),
            _ => var("t"),
        };
    }
    match rng.gen_range(0..8) {
        0 => expr::add(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        1 => expr::sub(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        2 => mul(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        3 => expr::div(
            random_expr(rng, depth - 1),
            expr::add(random_expr(rng, depth - 1), cst(17.0)),
        ),
        4 => expr::pow(
            expr::add(mul(random_expr(rng, depth - 1), var("s")), cst(9.0)),
            cst(rng.gen_range(1..4) as f64),
        ),
        5 => expr::neg(random_expr(rng, depth - 1)),
        6 => {
            let funcs = [Func::Sin, Func::Cos, Func::Atan, Func::Exp, Func::Sinh];
            expr::call(
                funcs[rng.gen_range(0..funcs.len())],
                mul(cst(0.25), random_expr(rng, depth - 1)),
            )
        }
        _ => expr::call(
            Func::Sqrt,
            expr::add(
                mul(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
                cst(30.0),
            ),
        ),
    }
}

#[test]
fn criterion_6_expression_engine() {
    // 100 print -> parse round trips reproduce the tree exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for case in 0..100 {
        let e = random_expr(&mut rng, 4);
        let printed = e.to_string();
        let reparsed = parse(&printed)
            .unwrap_or_else(|err| panic!("case {case}: reparse of `{printed}`: {err}"));
        assert_eq!(*reparsed, *e, "case {case}: `{printed}`");
    }
    println!("PASS expression round trips (100 cases)");

    // Symbolic derivatives against central differences.
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for _ in 0..60 {
        let e = random_expr(&mut rng, 3);
        let Ok(f) = ScalarField::from_ast(e, &["s", "t"], &[]) else {
            continue;
        };
        for _ in 0..4 {
            let p = [rng.gen_range(0.3..1.4), rng.gen_range(0.3..1.4)];
            for (i, j) in [(1u8, 0u8), (0, 1), (1, 1), (2, 0)] {
                let Ok(sym) = f.eval_derivative(i, j, &p) else {
                    continue;
                };
                let up = if i > 0 {
                    f.eval_derivative(i - 1, j, &[p[0] + h, p[1]])
                } else {
                    f.eval_derivative(i, j - 1, &[p[0], p[1] + h])
                };
                let dn = if i > 0 {
                    f.eval_derivative(i - 1, j, &[p[0] - h, p[1]])
                } else {
                    f.eval_derivative(i, j - 1, &[p[0], p[1] - h])
                };
                let (Ok(up), Ok(dn)) = (up, dn) else { continue };
                let fd = (up - dn) / (2.0 * h);
                let rel = (sym - fd).abs() / 1.0_f64.max(sym.abs());
                worst = worst.max(rel);
                compared += 1;
                assert!(rel < 1e-6, "d({i},{j}) of {f}: {sym} vs fd {fd} at {p:?}");
            }
        }
    }
    assert!(compared > 400, "only {compared} derivative pairs compared");
    println!("PASS symbolic vs finite differences ({compared} pairs, worst {worst:.3e})");

    // Order-4 jets stay finite wherever evaluation succeeds.
    let mut entries = 0usize;
    for _ in 0..40 {
        let e = random_expr(&mut rng, 3);
        let Ok(f) = ScalarField::from_ast(e, &["s", "t"], &[]) else {
            continue;
        };
        let jet = match f.jet(&[0.7, 0.9], 4) {
            Ok(j) => j,
            Err(FieldError::Eval(_)) => continue,
            Err(other) => panic!("unexpected jet error {other:?}"),
        };
        for i in 0..=4u8 {
            for j in 0..=(4 - i) {
                assert!(jet.partial(i, j).is_finite(), "d({i},{j}) of {f}");
                entries += 1;
            }
        }
    }
    assert!(entries > 300, "only {entries} jet entries checked");
    println!("PASS order-4 jets finite ({entries} entries)");
}
