//! Base-surface geometry: Christoffel symbols, Gauss curvature, the
//! curvature operator, Frénet data of curves, and the geodesic integrator,
//! all checked against closed forms on the catalog charts.

use approx::assert_abs_diff_eq;
use nalgebra::Vector2;
use pkgeo::basegeo::{
    self, arclength_reparametrize, centered_circle, centered_geodesic, chart_isometry, geodesic,
    jrot, map_curve, ChartKind, ConformalChart, CurveOnSurface,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V2 = Vector2<f64>;

fn rand_point(rng: &mut ChaCha8Rng, chart: &ConformalChart) -> V2 {
    // Stay in the middle of the rectangle so hyperbolic points are far
    // from the disk boundary.
    let d = chart.domain();
    V2::new(
        0.5 * rng.gen_range(d.s0..d.s1),
        0.5 * rng.gen_range(d.t0..d.t1),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng) -> V2 {
    V2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

#[test]
fn sphere_christoffels_match_closed_form() {
    let chart = ConformalChart::sphere();
    let p = V2::new(0.4, -0.3);
    // r = log 2 − log(1+s²+t²): r_s = −2s/(1+s²+t²) = −0.64, r_t = 0.48.
    let g = chart.christoffels(p).unwrap();
    assert_abs_diff_eq!(g.sss, -0.64, epsilon = 1e-14);
    assert_abs_diff_eq!(g.tss, -0.48, epsilon = 1e-14);
    assert_abs_diff_eq!(g.sst, 0.48, epsilon = 1e-14);
    assert_abs_diff_eq!(g.tst, -0.64, epsilon = 1e-14);
    assert_abs_diff_eq!(g.stt, 0.64, epsilon = 1e-14);
    assert_abs_diff_eq!(g.ttt, 0.48, epsilon = 1e-14);
}

#[test]
fn catalog_charts_have_constant_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (chart, want) in [
        (ConformalChart::flat(), 0.0),
        (ConformalChart::sphere(), 1.0),
        (ConformalChart::hyperbolic(), -1.0),
    ] {
        for _ in 0..25 {
            let p = rand_point(&mut rng, &chart);
            assert_abs_diff_eq!(chart.gauss_curvature(p).unwrap(), want, epsilon = 1e-11);
        }
    }
}

#[test]
fn custom_chart_curvature_matches_hand_computation() {
    // r = (s² + t²)/2 gives K = −2 e^{−(s²+t²)}.
    let chart = ConformalChart::custom(
        "bump",
        "(s^2 + t^2)/2",
        pkgeo::numerics::Rect::new(-1.0, 1.0, -1.0, 1.0),
        &[],
    )
    .unwrap();
    let p = V2::new(0.3, -0.7);
    let want = -2.0 * (-(0.09 + 0.49) as f64).exp();
    assert_abs_diff_eq!(chart.gauss_curvature(p).unwrap(), want, epsilon = 1e-12);
}

#[test]
fn curvature_operator_symmetries_and_sectional_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for chart in ConformalChart::catalog() {
        for _ in 0..20 {
            let p = rand_point(&mut rng, &chart);
            let (x, y, z) = (rand_vec(&mut rng), rand_vec(&mut rng), rand_vec(&mut rng));
            let k = chart.gauss_curvature(p).unwrap();

            let rxyz = chart.curvature_operator(p, x, y, z).unwrap();
            let ryxz = chart.curvature_operator(p, y, x, z).unwrap();
            assert_abs_diff_eq!((rxyz + ryxz).norm(), 0.0, epsilon = 1e-12);

            // j-invariance, exact by construction.
            let rj = chart.curvature_operator(p, jrot(x), jrot(y), z).unwrap();
            assert_abs_diff_eq!((rxyz - rj).norm(), 0.0, epsilon = 1e-12);

            // g(R(X,Y)Y, X) = K (g(X,X)g(Y,Y) − g(X,Y)²).
            let rxyy = chart.curvature_operator(p, x, y, y).unwrap();
            let lhs = chart.metric_dot(p, rxyy, x).unwrap();
            let gxx = chart.metric_dot(p, x, x).unwrap();
            let gyy = chart.metric_dot(p, y, y).unwrap();
            let gxy = chart.metric_dot(p, x, y).unwrap();
            let rhs = k * (gxx * gyy - gxy * gxy);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10 * (1.0 + rhs.abs()));
        }
    }
}

#[test]
fn flat_circle_curvature_any_parametrization() {
    let chart = ConformalChart::flat();
    // Chart speed 2ρ, so this is not arclength; k must still be 1/ρ.
    let curve = CurveOnSurface::new(
        chart,
        "1.5*cos(2*s)",
        "1.5*sin(2*s)",
        (0.0, 3.0),
        false,
        &[],
    )
    .unwrap();
    for i in 0..7 {
        let f = curve.frenet(0.4 * i as f64).unwrap();
        assert_abs_diff_eq!(f.k, 1.0 / 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.tangent.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((f.normal - jrot(f.tangent)).norm(), 0.0, epsilon = 1e-15);
    }
}

#[test]
fn centered_circles_have_catalog_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for chart in ConformalChart::catalog() {
        for _ in 0..8 {
            let rho = match chart.kind() {
                ChartKind::Hyperbolic => rng.gen_range(0.1..0.6),
                _ => rng.gen_range(0.3..1.5),
            };
            let phase = rng.gen_range(0.0..6.28);
            let (curve, k_formula) = centered_circle(&chart, rho, phase).unwrap();
            let (a, b) = curve.span();
            for i in 0..9 {
                let s = a + (b - a) * i as f64 / 9.0;
                let f = curve.frenet(s).unwrap();
                assert_abs_diff_eq!(f.k, k_formula, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn centered_geodesics_have_zero_curvature_and_unit_speed() {
    for chart in ConformalChart::catalog() {
        let span = match chart.kind() {
            ChartKind::Hyperbolic => (-1.2, 1.2),
            _ => (-1.0, 1.0),
        };
        for phi in [0.0, 0.7, 2.1] {
            let curve = centered_geodesic(&chart, phi, span).unwrap();
            assert!(curve.is_arclength());
            for i in 0..9 {
                let s = span.0 + (span.1 - span.0) * i as f64 / 8.0;
                if s.abs() < 1e-3 {
                    continue;
                }
                let f = curve.frenet(s).unwrap();
                assert_abs_diff_eq!(f.k, 0.0, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn integrated_geodesics_track_closed_forms() {
    // On the sphere chart, the geodesic from the origin in direction φ is
    // tan(s/2)(cos φ, sin φ); compare the fitted polynomial directly.
    let chart = ConformalChart::sphere();
    let phi = 0.83_f64;
    let res = geodesic(
        &chart,
        V2::zeros(),
        V2::new(phi.cos(), phi.sin()),
        1.8,
        1000,
    )
    .unwrap();
    assert!(!res.truncated);
    assert!(res.arclength_drift < 1e-9, "drift {}", res.arclength_drift);
    for i in 0..=20 {
        let s = 1.8 * i as f64 / 20.0;
        let want = V2::new((s / 2.0).tan() * phi.cos(), (s / 2.0).tan() * phi.sin());
        let got = res.curve.point(s).unwrap();
        assert!((got - want).norm() < 1e-9, "s = {s}: {got:?} vs {want:?}");
    }
}

#[test]
fn integrated_geodesics_have_small_curvature_on_all_charts() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for chart in ConformalChart::catalog() {
        for _ in 0..3 {
            let p0 = rand_point(&mut rng, &chart);
            let v0 = rand_vec(&mut rng);
            if v0.norm() < 0.1 {
                continue;
            }
            let len = if chart.kind() == ChartKind::Hyperbolic {
                1.0
            } else {
                1.4
            };
            let res = geodesic(&chart, p0, v0, len, 1200).unwrap();
            assert!(res.arclength_drift < 1e-6, "drift {}", res.arclength_drift);
            let (a, b) = res.curve.span();
            for i in 1..12 {
                let s = a + (b - a) * i as f64 / 12.0;
                let f = res.curve.frenet(s).unwrap();
                assert!(f.k.abs() < 1e-8, "{}: k = {}", chart.name(), f.k);
            }
        }
    }
}

#[test]
fn geodesic_truncates_at_the_chart_boundary() {
    let chart = ConformalChart::flat();
    let res = geodesic(&chart, V2::new(3.5, 0.0), V2::new(1.0, 0.0), 2.0, 800).unwrap();
    assert!(res.truncated);
    assert!(res.length < 0.55, "length {}", res.length);
    assert!(res.length > 0.45, "length {}", res.length);
}

#[test]
fn curve_length_matches_circumference() {
    let chart = ConformalChart::flat();
    let (curve, _) = centered_circle(&chart, 1.0, 0.0).unwrap();
    let len = curve.length(24).unwrap();
    assert_abs_diff_eq!(len, std::f64::consts::TAU, epsilon = 1e-10);
}

#[test]
fn arclength_flag_is_validated() {
    let chart = ConformalChart::flat();
    let err = CurveOnSurface::new(chart, "2*s", "0", (0.0, 1.0), true, &[]).unwrap_err();
    match err {
        basegeo::GeomError::NotArclength(dev) => assert!((dev - 1.0).abs() < 1e-12),
        other => panic!("expected NotArclength, got {other:?}"),
    }
}

#[test]
fn isometries_preserve_frenet_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for chart in ConformalChart::catalog() {
        let rho = 0.4;
        let (curve, k_formula) = centered_circle(&chart, rho, 0.3).unwrap();
        for _ in 0..4 {
            let raw = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let iso = chart_isometry(chart.kind(), raw);
            let moved = map_curve(&curve, &iso).unwrap();
            assert!(moved.is_arclength());
            let (a, b) = moved.span();
            for i in 0..7 {
                let s = a + (b - a) * (i as f64 + 0.3) / 7.0;
                let f = moved.frenet(s).unwrap();
                assert_abs_diff_eq!(f.k, k_formula, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn arclength_reparametrization_yields_unit_speed() {
    let chart = ConformalChart::flat();
    // Parabola, clearly not arclength.
    let curve = CurveOnSurface::new(chart, "s", "s^2", (0.0, 1.0), false, &[]).unwrap();
    // The inverse arclength function has a branch point at ℓ ≈ ±0.39i
    // (where 1 + 4s² vanishes), so the polynomial refit needs headroom.
    let re = arclength_reparametrize(&curve, 64).unwrap();
    assert!(re.is_arclength());
    // Total length of the parabola y = x² over [0,1].
    let want = 0.5 * 5.0_f64.sqrt() + 0.25 * (2.0 + 5.0_f64.sqrt()).ln();
    assert_abs_diff_eq!(re.span().1, want, epsilon = 1e-9);
}
