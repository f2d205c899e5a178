//! Flat-chart angle laboratory: the constant-angle family, the
//! angle-gradient identity, coordinate rotations, pseudo-orthonormal
//! frames, and the grid survey across the null locus.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

use approx::assert_relative_eq;
use nalgebra::{Matrix4x2, Vector2, Vector4};

use pkgeo::basegeo::{self, ConformalChart};
use pkgeo::expr::ScalarField;
use pkgeo::flatlab::{
    self, build_minimal, constant_angle_residual, lagrangian_angle, normalize_angle,
    rotate_coordinates, survey_angle, MinimalFamilySpec,
};
use pkgeo::lagrangian::{AffineNormalBundle, GradientGraph, TBImmersion};
use pkgeo::numerics::Rect;
use pkgeo::tol;

type V2 = Vector2<f64>;

fn flat_rect() -> Rect {
    Rect::new(-4.0, 4.0, -4.0, 4.0)
}

fn sample_points() -> Vec<V2> {
    vec![
        V2::new(0.4, 0.7),
        V2::new(-1.1, 0.2),
        V2::new(0.9, -1.3),
        V2::new(-0.6, -0.8),
        V2::new(1.4, 1.2),
    ]
}

#[test]
fn normalize_angle_lands_in_half_open_interval() {
    assert_eq!(normalize_angle(PI), PI);
    assert_eq!(normalize_angle(-PI), PI);
    assert_eq!(normalize_angle(3.0 * PI), PI);
    assert_relative_eq!(normalize_angle(-1.5 * PI), FRAC_PI_2, max_relative = 1e-15);
    assert_eq!(normalize_angle(0.0), 0.0);
    assert_relative_eq!(
        normalize_angle(7.0 * FRAC_PI_3),
        FRAC_PI_3,
        max_relative = 1e-12
    );
}

/// Members of the constant-angle family solve the defining equation to
/// rounding, carry the prescribed angle, and are minimal.
#[test]
fn minimal_family_members_are_minimal() {
    let specs = [
        MinimalFamilySpec {
            beta0: 0.6,
            profile_plus: "q^2".into(),
            profile_minus: "cos(q)".into(),
        },
        // f₁″ must dominate f₂″ over the whole sampled range for the
        // angle to sit on the β₀ branch.
        MinimalFamilySpec {
            beta0: -1.2,
            profile_plus: "q^2 + 0.1*sin(q)".into(),
            profile_minus: "0.2*cos(q)".into(),
        },
        MinimalFamilySpec {
            beta0: 2.4,
            profile_plus: "q^2 + sin(q)".into(),
            profile_minus: "0.3*q^2".into(),
        },
    ];
    for spec in &specs {
        let gg = build_minimal(spec, flat_rect(), &[]).unwrap();
        for at in sample_points() {
            let res = constant_angle_residual(gg.u(), spec.beta0, at).unwrap();
            assert!(
                res.abs() < 1e-12,
                "beta0 {}: residual {res} at {at:?}",
                spec.beta0
            );
            let beta = lagrangian_angle(&gg, at).unwrap();
            assert_relative_eq!(
                beta,
                normalize_angle(spec.beta0),
                max_relative = 1e-11,
                epsilon = 1e-12
            );
            let mc = gg.immersion().mean_curvature(at).unwrap();
            let hnorm = mc.vector.h.norm() + mc.vector.v.norm();
            assert!(hnorm < 1e-10, "beta0 {}: |H| = {hnorm}", spec.beta0);
            let agr = flatlab::angle_gradient_residual(&gg, at).unwrap();
            assert!(agr < tol::TOL_ANGLE_GRADIENT);
        }
    }
}

/// 2H = 𝕁∇β holds pointwise on generic (non-minimal) flat graphs.
#[test]
fn angle_gradient_identity_on_generic_graphs() {
    let texts = [
        "s^3*t",
        "s^4/12 + s^2*t^2/2 + sin(s)*t",
        "exp(0.3*s) * cos(0.4*t)",
    ];
    let chart = ConformalChart::flat();
    for text in texts {
        let gg = GradientGraph::new(chart.clone(), text, flat_rect(), &[]).unwrap();
        for at in sample_points() {
            if gg.immersion().induced_metric(at).is_err() {
                continue;
            }
            let res = flatlab::angle_gradient_residual(&gg, at).unwrap();
            assert!(
                res < tol::TOL_ANGLE_GRADIENT,
                "u = {text}: residual {res} at {at:?}"
            );
        }
    }
}

/// Rotating coordinates by φ shifts the Lagrangian angle by exactly 2φ,
/// composes additively, and is the identity at φ = 0.
#[test]
fn rotation_identities() {
    let spec = MinimalFamilySpec {
        beta0: 0.5,
        profile_plus: "q^2".into(),
        profile_minus: "cos(q)".into(),
    };
    let base = build_minimal(&spec, flat_rect(), &[]).unwrap();
    let u0 = base.u().clone();

    for phi in [0.3, -0.7] {
        let rotated = rotate_coordinates(&u0, phi).unwrap();
        let target = spec.beta0 + 2.0 * phi;
        let gg = GradientGraph::from_field(ConformalChart::flat(), rotated.clone(), flat_rect())
            .unwrap();
        for at in sample_points() {
            let res = constant_angle_residual(&rotated, target, at).unwrap();
            assert!(res.abs() < 1e-12, "phi {phi}: residual {res}");
            let beta = lagrangian_angle(&gg, at).unwrap();
            assert_relative_eq!(
                beta,
                normalize_angle(target),
                max_relative = 1e-11,
                epsilon = 1e-12
            );
        }
    }

    let once = rotate_coordinates(&rotate_coordinates(&u0, 0.4).unwrap(), 0.25).unwrap();
    let joint = rotate_coordinates(&u0, 0.65).unwrap();
    let ident = rotate_coordinates(&u0, 0.0).unwrap();
    for at in sample_points() {
        let q = [at.x, at.y];
        assert_relative_eq!(
            once.eval(&q).unwrap(),
            joint.eval(&q).unwrap(),
            max_relative = 1e-12,
            epsilon = 1e-13
        );
        assert_relative_eq!(
            ident.eval(&q).unwrap(),
            u0.eval(&q).unwrap(),
            max_relative = 1e-14
        );
    }
}

fn span_residual(imm: &TBImmersion, at: V2, v: pkgeo::tbundle::SplitTangent) -> f64 {
    let fr = imm.frame(at).unwrap();
    let cols = [fr[0], fr[1]].map(|x| Vector4::new(x.h.x, x.h.y, x.v.x, x.v.y));
    let m = Matrix4x2::from_columns(&cols);
    let rhs = Vector4::new(v.h.x, v.h.y, v.v.x, v.v.y);
    let x = m.svd(true, true).solve(&rhs, 1e-14).unwrap();
    (m * x - rhs).norm()
}

/// The pseudo-orthonormal frame has pairings (−1, 1, 0) and stays inside
/// the tangent plane.
#[test]
fn pseudo_orthonormal_frames() {
    let chart = ConformalChart::flat();
    let gg = GradientGraph::new(chart.clone(), "s^3*t", flat_rect(), &[]).unwrap();
    let (curve, _) = basegeo::centered_circle(&chart, 1.0, 0.0).unwrap();
    let offset = ScalarField::new("0.3 + 0.1*s", &["s"], &[]).unwrap();
    let anb = AffineNormalBundle::new(curve, offset, (-0.5, 0.5)).unwrap();

    let cases: Vec<(&TBImmersion, V2)> = vec![
        (gg.immersion(), V2::new(1.0, 1.0)),
        (gg.immersion(), V2::new(-0.8, 0.6)),
        (anb.immersion(), V2::new(0.3, 0.2)),
        (anb.immersion(), V2::new(2.0, -0.4)),
    ];
    for (imm, at) in cases {
        let frame = flatlab::pseudo_orthonormal_frame(imm, at).unwrap();
        let pair = flatlab::frame_pairings(imm, at, &frame).unwrap();
        assert_relative_eq!(pair[0], -1.0, max_relative = 1e-10);
        assert_relative_eq!(pair[1], 1.0, max_relative = 1e-10);
        assert!(pair[2].abs() < 1e-10);
        assert!(span_residual(imm, at, frame.e1) < 1e-9);
        assert!(span_residual(imm, at, frame.e2) < 1e-9);
    }
}

/// u = sin s + cos t: u_st ≡ 0, so β = ±π/2 away from the null lines
/// sin s = cos t, which cut the square into diagonal strips. Every
/// component must carry a constant angle of ±π/2 and both signs occur.
#[test]
fn angle_survey_splits_sine_graph() {
    let gg = GradientGraph::new(
        ConformalChart::flat(),
        "sin(s) + cos(t)",
        flat_rect(),
        &[],
    )
    .unwrap();
    let survey = survey_angle(&gg, 41).unwrap();
    assert!(
        survey.components.len() >= 4,
        "expected several strips, got {}",
        survey.components.len()
    );
    let total: usize = survey.components.iter().map(|c| c.size).sum();
    assert_eq!(total + survey.null_nodes, 41 * 41);

    let (mut plus, mut minus) = (0usize, 0usize);
    for comp in &survey.components {
        assert!(
            comp.circular_stddev < tol::TOL_BETA_STDDEV,
            "component stddev {}",
            comp.circular_stddev
        );
        let m = comp.mean_angle;
        assert!(
            (m - FRAC_PI_2).abs() < 1e-10 || (m + FRAC_PI_2).abs() < 1e-10,
            "component mean {m}"
        );
        if m > 0.0 {
            plus += comp.size;
        } else {
            minus += comp.size;
        }
    }
    assert!(plus > 0 && minus > 0, "both angle signs must appear");
}

/// The survey still reports a single component for a graph whose metric
/// never degenerates on the domain.
#[test]
fn angle_survey_single_component_off_null() {
    let gg = GradientGraph::new(
        ConformalChart::flat(),
        "s^2 + s*t + 2*t^2",
        Rect::new(-1.0, 1.0, -1.0, 1.0),
        &[],
    )
    .unwrap();
    // Hessian is constant: w = (2, 2), never zero.
    let survey = survey_angle(&gg, 17).unwrap();
    assert_eq!(survey.null_nodes, 0);
    assert_eq!(survey.components.len(), 1);
    assert_eq!(survey.components[0].size, 17 * 17);
    assert!(survey.components[0].circular_stddev < 1e-14);
}
