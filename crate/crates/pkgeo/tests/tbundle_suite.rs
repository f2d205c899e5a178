//! Structure suite for (𝕁, Ω, 𝔾) on TΣ: algebraic pins in the standard
//! frame, the (2,2) signature, and the Levi-Civita connection checks
//! (torsion, metric compatibility, parallel 𝕁, Nijenhuis, closed Ω,
//! Koszul formula) on random projectable fields over all catalog charts.

use std::sync::Arc;

use nalgebra::Vector2;
use pkgeo::basegeo::ConformalChart;
use pkgeo::expr::{self, Expr, ScalarField};
use pkgeo::tbundle::{
    self, gmetric, gram_matrix, jmap, omega, signature, split_gnorm, ProjectableField,
    SplitTangent, TBPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V2 = Vector2<f64>;

fn rand_point(rng: &mut ChaCha8Rng, chart: &ConformalChart) -> TBPoint {
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

/// Random quadratic polynomial in (s, t) with coefficients in [−1, 1].
fn rand_poly(rng: &mut ChaCha8Rng) -> Arc<Expr> {
    let mut c = || expr::cst(rng.gen_range(-1.0..1.0));
    let s = expr::var("s");
    let t = expr::var("t");
    let terms = [
        c(),
        expr::mul(c(), s.clone()),
        expr::mul(c(), t.clone()),
        expr::mul(c(), expr::mul(s.clone(), t.clone())),
        expr::mul(c(), expr::mul(s.clone(), s)),
        expr::mul(c(), expr::mul(t.clone(), t)),
    ];
    terms.into_iter().reduce(expr::add).unwrap()
}

fn rand_field(rng: &mut ChaCha8Rng) -> ProjectableField {
    let mut f = || ScalarField::from_ast(rand_poly(rng), &["s", "t"], &[]).unwrap();
    let a = [f(), f()];
    let b = [f(), f()];
    ProjectableField::from_fields(a, b)
}

#[test]
fn flat_gram_matrix_pins() {
    let chart = ConformalChart::flat();
    let at = TBPoint::new(V2::new(0.3, -1.1), V2::new(0.5, 0.2));
    let m = gram_matrix(&chart, at).unwrap();
    let want = nalgebra::Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0,
    );
    assert_eq!(m, want);

    // 𝔾((∂s,∂t),(∂s,∂t)) = −2 and Ω((∂s,0),(0,∂s)) = −1.
    let x = SplitTangent::new(V2::new(1.0, 0.0), V2::new(0.0, 1.0));
    assert_eq!(gmetric(&chart, at, x, x).unwrap(), -2.0);
    let hs = SplitTangent::new(V2::new(1.0, 0.0), V2::zeros());
    let vs = SplitTangent::new(V2::zeros(), V2::new(1.0, 0.0));
    assert_eq!(omega(&chart, at, hs, vs).unwrap(), -1.0);
}

#[test]
fn curved_gram_is_the_flat_one_scaled() {
    let chart = ConformalChart::sphere();
    let at = TBPoint::new(V2::new(0.7, 0.4), V2::new(-0.3, 1.0));
    let f = chart.conformal_factor(at.pos).unwrap();
    let m = gram_matrix(&chart, at).unwrap();
    let flat = nalgebra::Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0,
    );
    assert!((m - f * flat).norm() < 1e-14 * f);
}

#[test]
fn jmap_squares_to_minus_identity_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x = rand_split(&mut rng);
        let jjx = jmap(jmap(x));
        assert_eq!(jjx.h, -x.h);
        assert_eq!(jjx.v, -x.v);
    }
}

#[test]
fn gmetric_symmetry_omega_antisymmetry_and_j_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for chart in ConformalChart::catalog() {
        for _ in 0..40 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_split(&mut rng);
            let y = rand_split(&mut rng);
            let gxy = gmetric(&chart, at, x, y).unwrap();
            let gyx = gmetric(&chart, at, y, x).unwrap();
            assert!((gxy - gyx).abs() < 1e-13 * (1.0 + gxy.abs()));

            let oxy = omega(&chart, at, x, y).unwrap();
            let oyx = omega(&chart, at, y, x).unwrap();
            assert!((oxy + oyx).abs() < 1e-13 * (1.0 + oxy.abs()));

            // 𝔾 = Ω(𝕁·,·) is definitional; pin the 𝕁-invariance of both.
            let ojj = omega(&chart, at, jmap(x), jmap(y)).unwrap();
            assert!((ojj - oxy).abs() < 1e-13 * (1.0 + oxy.abs()));
            let gjj = gmetric(&chart, at, jmap(x), jmap(y)).unwrap();
            assert!((gjj - gxy).abs() < 1e-13 * (1.0 + gxy.abs()));
        }
    }
}

#[test]
fn signature_is_two_two_on_all_charts() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let custom = ConformalChart::custom(
        "wavy",
        "0.2*sin(s)*cos(t)",
        pkgeo::numerics::Rect::new(-2.0, 2.0, -2.0, 2.0),
        &[],
    )
    .unwrap();
    let charts = [
        ConformalChart::flat(),
        ConformalChart::sphere(),
        ConformalChart::hyperbolic(),
        custom,
    ];
    for chart in charts {
        for _ in 0..25 {
            let at = rand_point(&mut rng, &chart);
            assert_eq!(signature(&chart, at).unwrap(), (2, 2));
        }
    }
}

#[test]
fn connection_is_torsion_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for chart in ConformalChart::catalog() {
        for _ in 0..12 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let res = tbundle::torsion_residual(&chart, at, &x, &y).unwrap();
            assert!(res < 1e-12, "{}: torsion {res:.3e}", chart.name());
        }
    }
}

#[test]
fn connection_is_metric_compatible() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for chart in ConformalChart::catalog() {
        let mut worst: f64 = 0.0;
        for _ in 0..12 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let z = rand_field(&mut rng);
            worst = worst.max(tbundle::metric_compat_residual(&chart, at, &x, &y, &z).unwrap());
        }
        assert!(worst < 1e-8, "{}: metric compat {worst:.3e}", chart.name());
    }
}

#[test]
fn j_is_parallel() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for chart in ConformalChart::catalog() {
        for _ in 0..12 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let res = tbundle::parallel_j_residual(&chart, at, &x, &y).unwrap();
            assert!(res < 1e-8, "{}: D𝕁 {res:.3e}", chart.name());
        }
    }
}

#[test]
fn nijenhuis_tensor_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for chart in ConformalChart::catalog() {
        for _ in 0..12 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let res = tbundle::nijenhuis(&chart, at, &x, &y).unwrap();
            assert!(res < 1e-9, "{}: nijenhuis {res:.3e}", chart.name());
        }
    }
}

#[test]
fn omega_is_closed() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for chart in ConformalChart::catalog() {
        for _ in 0..10 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let z = rand_field(&mut rng);
            let res = tbundle::domega_residual(&chart, at, &x, &y, &z).unwrap();
            assert!(res < 1e-9, "{}: dΩ {res:.3e}", chart.name());
        }
    }
}

#[test]
fn koszul_formula_pins_the_connection_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for chart in ConformalChart::catalog() {
        for _ in 0..10 {
            let at = rand_point(&mut rng, &chart);
            let x = rand_field(&mut rng);
            let y = rand_field(&mut rng);
            let z = rand_field(&mut rng);
            let res = tbundle::koszul_residual(&chart, at, &x, &y, &z).unwrap();
            assert!(res < 1e-9, "{}: koszul {res:.3e}", chart.name());
        }
    }
}

#[test]
fn constant_frame_fields_evaluate_and_rotate() {
    let chart = ConformalChart::flat();
    let f = ProjectableField::constant(V2::new(1.0, 0.0), V2::new(0.0, 2.0));
    let at = TBPoint::new(V2::new(0.1, 0.2), V2::new(0.0, 0.0));
    let v = f.value(at.pos).unwrap();
    assert_eq!(v.h, V2::new(1.0, 0.0));
    assert_eq!(v.v, V2::new(0.0, 2.0));
    let jv = f.jmapped().value(at.pos).unwrap();
    assert_eq!(jv.h, V2::new(0.0, 1.0));
    assert_eq!(jv.v, V2::new(-2.0, 0.0));
    assert!(split_gnorm(&chart, at, v).unwrap() > 0.0);
}
