mod common;

use std::sync::Arc;

use common::oracles;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wienerbv::geometry::*;

fn catalog() -> Vec<Arc<dyn Domain>> {
    ["ball:d=2,r=1", "ball:d=3,r=1", "box:d=3,a=1", "halfspace:d=2,b=1", "notch:d=2,a=1",
        "example-spike:d=4", "spike-prism:d=5,k=3"]
        .iter()
        .map(|id| parse_domain(id).unwrap())
        .collect()
}

#[test]
fn q_is_one_lipschitz_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dom in catalog() {
        let d = dom.dim();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lhs = (dom.q(&x) - dom.q(&y)).abs();
            assert!(lhs <= dist(&x, &y) * (1.0 + 1e-12) + 1e-14, "{} at {x:?}, {y:?}", dom.id());
        }
    }
}

#[test]
fn sign_of_q_matches_membership() {
    let ball = Ball { d: 3, radius: 1.0 };
    assert!(ball.q(&[0.5, 0.0, 0.0]) > 0.0);
    assert_eq!(ball.q(&[0.0, 1.0, 0.0]), 0.0);
    assert!(ball.q(&[0.0, 0.0, 1.5]) < 0.0);
    let notch = Notch { d: 2, a: 1.0 };
    assert!(notch.q(&[0.0, 0.0]) > 0.0);
    assert_eq!(notch.q(&[1.0, 2.0]), 0.0);
    assert!(notch.q(&[1.5, 1.5]) < 0.0);
    for dom in catalog() {
        assert!(dom.q(&vec![0.0; dom.dim()]) > 0.0, "{}", dom.id());
    }
}

#[test]
fn spike_axis_distance_matches_dense_sampling() {
    let spike = parse_domain("example-spike:d=4").unwrap();
    let q = spike.q(&[0.0, 0.0, 0.0, 1.5]);
    let oracle = oracles::spike_axis_distance(1.5, 1.0, 200_000);
    assert!(q < 0.0);
    assert!((q + oracle).abs() < 1e-6, "{q} vs {oracle}");
    // a point below the tip: nearest boundary is the tip itself
    let below = spike.q(&[0.0, 0.0, 0.0, 0.7]);
    assert!((below - oracles::spike_axis_distance(0.7, 1.0, 200_000)).abs() < 1e-6);
}

#[test]
fn notch_radii_match_tangent_ball_search() {
    let notch = Notch { d: 2, a: 1.0 };
    let (r_max, tol) = default_ball_params(&notch);
    for t in [0.05, 0.3, 0.9] {
        let y = [1.0, 1.0 + t];
        let rep = exterior_ball_radius(&notch, &y, r_max, tol).unwrap();
        let brute = oracles::notch_tangent_ball_radius(1.0, y, 4000, 720);
        assert!((rep.radius - brute).abs() < 2e-3, "t={t}: {} vs {brute}", rep.radius);
    }
    let corner = exterior_ball_radius(&notch, &[1.0, 1.0], r_max, tol).unwrap();
    assert_eq!(corner.radius, 0.0);
    assert_eq!(oracles::notch_tangent_ball_radius(1.0, [1.0, 1.0], 4000, 720), 0.0);
}

#[test]
fn flat_and_convex_boundaries_report_infinity() {
    let half = HalfSpace { d: 2, b: 1.0 };
    let (r_max, tol) = default_ball_params(&half);
    assert!(exterior_ball_radius(&half, &[0.0, 1.0], r_max, tol).unwrap().radius.is_infinite());
    for dom in catalog().into_iter().filter(|d| d.is_convex()) {
        let radii = boundary_radii(dom.as_ref(), 256, 4).unwrap();
        assert!(radii.iter().all(|(_, r)| r.is_infinite()), "{}", dom.id());
    }
}

#[test]
fn off_boundary_point_is_rejected() {
    let ball = Ball { d: 2, radius: 1.0 };
    assert!(matches!(
        exterior_ball_radius(&ball, &[0.5, 0.0], 1e3, 1e-6),
        Err(wienerbv::Error::NotOnBoundary { .. })
    ));
}

#[test]
fn singular_sets_of_the_catalog() {
    let ball = Ball { d: 3, radius: 1.0 };
    assert!(singular_set(&ball, 0.1, 512, 1).unwrap().is_empty());

    let spike = parse_domain("example-spike:d=4").unwrap();
    let tip = [0.0, 0.0, 0.0, 1.0];
    let s = singular_set(spike.as_ref(), 0.1, 2048, 1).unwrap();
    assert!(!s.is_empty());
    // exterior radius on the cone grows linearly with the distance to the tip
    let far = s.points.iter().map(|p| dist(p, &tip)).fold(0.0, f64::max);
    assert!(far < 0.25, "{far}");

    let notch = Notch { d: 2, a: 1.0 };
    let s = singular_set(&notch, 0.1, 2048, 1).unwrap();
    assert!(!s.is_empty());
    assert!(s.points.iter().all(|p| dist(p, &[1.0, 1.0]) <= 0.1 + 1e-5));
}

#[test]
fn singular_set_grows_with_r() {
    let spike = parse_domain("example-spike:d=4").unwrap();
    let radii = boundary_radii(spike.as_ref(), 1024, 9).unwrap();
    let mut prev = 0;
    for r in [0.01, 0.03, 0.1, 0.3] {
        let s = singular_set_from(&radii, r);
        assert!(s.points.len() >= prev);
        prev = s.points.len();
    }
}

#[test]
fn sampled_domain_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("circle.csv");
    let mut text = String::from("x,y\n");
    for i in 0..720 {
        let t = 2.0 * std::f64::consts::PI * i as f64 / 720.0;
        text.push_str(&format!("{},{}\n", t.cos(), t.sin()));
    }
    std::fs::write(&path, text).unwrap();
    let id = format!("points:path={}", path.display());
    let dom = parse_domain(&id).unwrap();
    assert!((dom.q(&[0.0, 0.0]) - 1.0).abs() < 1e-2);
    assert!((dom.q(&[1.5, 0.0]) + 0.5).abs() < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radius_is_invariant_under_rigid_motions(t in 0.05f64..1.5, angle in 0.0f64..std::f64::consts::TAU, sx in -1.0f64..1.0, sy in -1.0f64..1.0) {
        let inner: Arc<dyn Domain> = Arc::new(Notch { d: 2, a: 1.0 });
        let moved = Rigid::planar(inner.clone(), angle, vec![sx, sy]);
        let (r_max, tol) = default_ball_params(inner.as_ref());
        let y = [1.0, 1.0 + t];
        let a = exterior_ball_radius(inner.as_ref(), &y, r_max, tol).unwrap().radius;
        let b = exterior_ball_radius(&moved, &moved.map_point(&y), r_max, tol).unwrap().radius;
        prop_assert!((a - b).abs() <= 10.0 * tol, "{} vs {}", a, b);
    }

    #[test]
    fn lipschitz_on_spike_pairs(x in prop::collection::vec(-2.5f64..2.5, 4), y in prop::collection::vec(-2.5f64..2.5, 4)) {
        let spike = Spike::new(4, 4, 1.0).unwrap();
        prop_assert!((spike.q(&x) - spike.q(&y)).abs() <= dist(&x, &y) + 1e-12);
    }

    #[test]
    fn tube_membership_is_distance_test(px in -1.0f64..1.0, py in -1.0f64..1.0, r in 0.01f64..0.5) {
        let a = SingularSetApprox { r, points: vec![vec![0.0, 0.0]], tube_radius: r };
        prop_assert_eq!(in_tube(&a, &[px, py]), px.hypot(py) <= r);
    }
}
