mod common;

use common::oracles;
use wienerbv::capacity::{check_condition_9, Condition9Options};
use wienerbv::exec::Exec;
use wienerbv::geometry::{parse_domain, Ball, HalfSpace};
use wienerbv::mcverify::*;
use wienerbv::stats::{McEstimate, Status};

fn opts(n_paths: usize, n_steps: usize, seed: u64) -> McOptions {
    McOptions { n_paths, n_steps, seed, level: 0.99, boundary_samples: 64, exec: Exec::default() }
}

/// Monitoring every dt moves a barrier outward by BGK sqrt(dt).
fn shift(horizon: f64, n_steps: usize) -> f64 {
    oracles::BGK * (horizon / n_steps as f64).sqrt()
}

fn close(e: &McEstimate, exact: f64) -> bool {
    let sd = (exact * (1.0 - exact) / e.n as f64).sqrt();
    (e.mean - exact).abs() <= 4.0 * sd + 1e-12
}

#[test]
fn staying_probability_in_a_half_line() {
    let o = opts(40_000, 1024, 3);
    let dom = HalfSpace { d: 1, b: 1.0 };
    for x in [0.5, 0.9] {
        let rep = verify_prop_3_2(&dom, &[x], 1.0, &o).unwrap();
        assert!(rep.delta.is_infinite());
        assert_eq!(rep.verdict.bound, 1.0 - x);
        let exact = oracles::running_min_survival(1.0 - x + shift(1.0, 1024), 1.0);
        assert!(close(&rep.paired.fine, exact), "x={x}: {} vs {exact}", rep.paired.fine.mean);
        // coarse grid sees a barrier shifted by sqrt 2 as much
        let coarse = oracles::running_min_survival(1.0 - x + shift(1.0, 512), 1.0);
        assert!(close(&rep.paired.coarse, coarse));
        // at this step size the refinement shift may exceed the half-width
        assert_ne!(rep.verdict.status, Status::Fail);
    }
}

#[test]
fn staying_probability_in_an_interval() {
    let o = opts(40_000, 1024, 4);
    let dom = Ball { d: 1, radius: 1.0 };
    let rep = verify_prop_3_2(&dom, &[0.7], 0.5, &o).unwrap();
    let exact = oracles::interval_survival(0.7, 1.0 + shift(0.5, 1024), 0.5, 200);
    assert!(close(&rep.paired.fine, exact), "{} vs {exact}", rep.paired.fine.mean);
}

#[test]
fn band_probability_in_an_interval() {
    let n_steps = 2048;
    let o = opts(40_000, n_steps, 8);
    let dom = Ball { d: 1, radius: 1.0 };
    let u = 1.0;
    let out = verify_boundary_bounds(&dom, &[vec![0.0]], u, &[0.05, 0.1, 0.2], 0.5, &o).unwrap();
    let l = 1.0 + shift(u, n_steps);
    for band in &out[0].bands.bands {
        // scale the interval (-l, l) to (-1, 1)
        let exact = oracles::band_probability(band.r / l, u / (l * l));
        assert!(close(&band.paired.fine, exact), "r={}: {} vs {exact}", band.r, band.paired.fine.mean);
        assert_eq!(band.verdict.bound, c2_from_c1(0.5) * band.r);
        assert!(band.verdict.pass);
    }
    assert_eq!(out[0].bands.linear, Some(true));
}

#[test]
fn prop_3_5_rejects_r_above_gamma() {
    let dom = Ball { d: 2, radius: 1.0 };
    assert!(verify_prop_3_5(&dom, &[0.0, 0.0], 0.1, 0.2, 1.0, 0.5, &opts(100, 16, 0)).is_err());
}

#[test]
fn exit_cdf_matches_interval_series() {
    let n_steps = 2048;
    let o = opts(20_000, n_steps, 12);
    let dom = Ball { d: 1, radius: 1.0 };
    let grid = default_t_grid();
    let rep = verify_exit_density(&dom, &[0.0], 0.2, &grid, &o).unwrap();
    assert!(rep.monotone);
    let l = 0.8 + shift(1.0, n_steps);
    for (t, e) in grid.iter().zip(&rep.cdf) {
        let exact = 1.0 - oracles::interval_survival(0.0, l, *t, 200).min(1.0);
        assert!(close(e, exact.max(0.0)), "t={t}: {} vs {exact}", e.mean);
    }
    // envelope constant dominates every bin's slope times t
    assert!(rep.bins.iter().all(|b| b.slope * b.t_hi <= rep.c1 + 1e-12));
}

#[test]
fn exit_cdf_is_monotone_in_d2() {
    let o = opts(4000, 512, 13);
    let dom = parse_domain("ball:d=2").unwrap();
    let reps = verify_exit_density_many(dom.as_ref(), &[vec![0.0, 0.5], vec![0.0, 0.9]], 0.05, &default_t_grid(), &o)
        .unwrap();
    for rep in &reps {
        assert!(rep.monotone);
        assert!(rep.cdf.iter().all(|e| (0.0..=1.0).contains(&e.mean)));
    }
    // the deeper start leaves later
    assert!(reps[0].cdf[10].mean <= reps[1].cdf[10].mean);
}

#[test]
fn calibration_takes_the_largest_envelope() {
    let o = opts(2000, 512, 14);
    let b1 = parse_domain("ball:d=1").unwrap();
    let b2 = parse_domain("ball:d=2").unwrap();
    let cal = calibrate_c1(&[b1.as_ref(), b2.as_ref()], 0.05, &[0.05, 0.1], &default_t_grid(), &o).unwrap();
    assert_eq!(cal.reports.len(), 4);
    let m = cal.reports.iter().map(|r| r.c1).fold(0.0, f64::max);
    assert_eq!(cal.c1, m);
    assert_eq!(cal.c2, 4.0 * cal.c1 + 2.0);
}

#[test]
fn psi_matches_two_excursion_series() {
    let n_steps = 2048;
    let o = opts(40_000, n_steps, 21);
    let dom = Ball { d: 1, radius: 1.0 };
    let sample = simulate_from_origin(&dom, 1.0, 0.5, &[0.5], &o).unwrap();
    assert_eq!(sample.tube_points, vec![0]);
    let rep = verify_psi_quadratic_from(&sample, &[0.1, 0.2, 0.4], 1).unwrap();
    let l = 1.0 + shift(1.0, n_steps);
    for e in &rep.entries {
        let exact = oracles::two_excursion_probability(e.r / l, 0.5 / (l * l), 1.0 / (l * l));
        assert!(close(&e.paired.fine, exact), "r={}: {} vs {exact}", e.r, e.paired.fine.mean);
    }
    assert!(rep.fit.unwrap().slope >= PSI_SLOPE_FLOOR);
}

#[test]
fn null_boundary_in_an_interval() {
    let n_steps = 2048;
    let o = opts(40_000, n_steps, 22);
    let dom = Ball { d: 1, radius: 1.0 };
    let c9 = check_condition_9(&dom, &[(0.1, 64)], &Condition9Options::default()).unwrap();
    let sample = simulate_from_origin(&dom, 1.0, 0.5, &[], &o).unwrap();
    let eps = [0.0125, 0.025, 0.05, 0.1];
    let rep = verify_null_boundary_from(&sample, &eps, &c9).unwrap();
    let l = 1.0 + shift(1.0, n_steps);
    for (e, est) in eps.iter().zip(&rep.estimates) {
        let exact = oracles::band_probability(e / l, 1.0 / (l * l));
        assert!(close(&est.fine, exact), "eps={e}: {} vs {exact}", est.fine.mean);
    }
    let slope = rep.loglog.unwrap().slope;
    assert!((slope - 1.0).abs() <= NULL_SLOPE_TOL, "{slope}");
}

#[test]
fn gradient_mass_is_bounded_by_the_ceiling() {
    let o = opts(20_000, 1024, 23);
    let dom = Ball { d: 1, radius: 1.0 };
    let rep = verify_gradient_mass(&dom, 1, &[2, 4, 8, 16], 1.0, 0.5, &o).unwrap();
    assert!(rep.bounded);
    assert_eq!(rep.ceiling, c2_from_c1(0.5));
    let l = 1.0 + shift(1.0, 1024);
    for e in &rep.entries {
        let exact = e.m as f64 * oracles::band_probability(1.0 / (e.m as f64 * l), 1.0 / (l * l));
        let sd = e.m as f64 * (exact / e.m as f64 / 20_000.0).sqrt();
        assert!((e.paired.fine.mean - exact).abs() <= 4.0 * sd, "m={}: {} vs {exact}", e.m, e.paired.fine.mean);
    }
}

#[test]
fn seeds_reproduce_and_invalid_options_are_rejected() {
    let dom = Ball { d: 2, radius: 1.0 };
    let a = verify_prop_3_2(&dom, &[0.0, 0.5], 1.0, &opts(500, 64, 1)).unwrap();
    let b = verify_prop_3_2(&dom, &[0.0, 0.5], 1.0, &opts(500, 64, 1)).unwrap();
    assert_eq!(a, b);
    assert!(verify_prop_3_2(&dom, &[0.0, 0.5], 1.0, &opts(500, 63, 1)).is_err());
    assert!(verify_prop_3_2(&dom, &[0.0, 1.5], 1.0, &opts(500, 64, 1)).is_err());
}
