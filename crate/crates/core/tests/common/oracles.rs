//! Closed forms, series and brute-force searches used as independent
//! references. Nothing here calls the estimators under test.

#![allow(dead_code)]

use statrs::function::erf::erfc;
use std::f64::consts::PI;

pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(eta <= u) for eta = inf{t : C t + S_t <= -r}.
pub fn first_passage_cdf(c: f64, r: f64, u: f64) -> f64 {
    let s = u.sqrt();
    phi((-r - c * u) / s) + (-2.0 * c * r).exp() * phi((-r + c * u) / s)
}

/// Broadie-Glasserman-Kou constant: a barrier monitored every dt behaves
/// like a continuous one shifted outward by BGK * sqrt(dt).
pub const BGK: f64 = 0.582_597_157_939_010_6;

/// P(inf_{[0,t]} B >= -a) for standard BM from 0.
pub fn running_min_survival(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    2.0 * phi(a / t.sqrt()) - 1.0
}

/// Survival of BM from x in (-l, l) up to time t (odd-mode series).
pub fn interval_survival(x: f64, l: f64, t: f64, terms: usize) -> f64 {
    if x.abs() >= l {
        return 0.0;
    }
    (0..terms)
        .map(|j| {
            let k = (2 * j + 1) as f64;
            4.0 / (k * PI) * (k * PI * (x + l) / (2.0 * l)).sin() * (-(k * k) * PI * PI * t / (8.0 * l * l)).exp()
        })
        .sum()
}

/// Transition density of BM killed on leaving (-l, l).
pub fn interval_density(x: f64, y: f64, l: f64, t: f64, terms: usize) -> f64 {
    if x.abs() >= l || y.abs() >= l {
        return 0.0;
    }
    (1..=terms)
        .map(|k| {
            let k = k as f64;
            (k * PI * (x + l) / (2.0 * l)).sin()
                * (k * PI * (y + l) / (2.0 * l)).sin()
                * (-(k * k) * PI * PI * t / (8.0 * l * l)).exp()
        })
        .sum::<f64>()
        / l
}

/// P(BM from 0 stays in [-1, 1] on [0, t] and comes within eps of +-1).
pub fn band_probability(eps: f64, t: f64) -> f64 {
    interval_survival(0.0, 1.0, t, 200) - interval_survival(0.0, 1.0 - eps, t, 200)
}

/// Two-excursion probability on (-1, 1): stays in [-1, 1] on [0, t_end]
/// and comes within r of the boundary both on [0, s] and on [s, t_end],
/// by the Markov property at time s.
pub fn two_excursion_probability(r: f64, s: f64, t_end: f64) -> f64 {
    let n = 4000;
    let h = 2.0 / n as f64;
    let inner = 1.0 - r;
    let mut total = 0.0;
    for i in 1..n {
        let y = -1.0 + i as f64 * h;
        let first = interval_density(0.0, y, 1.0, s, 200) - interval_density(0.0, y, inner, s, 200);
        let second = interval_survival(y, 1.0, t_end - s, 200) - interval_survival(y, inner, t_end - s, 200);
        total += first * second * h;
    }
    total
}

/// Minimum of a 3x3 quadratic form over the 2-simplex: grid search at
/// step 1e-3 followed by two local refinements.
pub fn simplex_grid_min(k: &[[f64; 3]; 3]) -> (f64, [f64; 3]) {
    let f = |w: [f64; 3]| -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += w[i] * w[j] * k[i][j];
            }
        }
        s
    };
    let mut best = (f64::INFINITY, [0.0; 3]);
    let n = 1000;
    for a in 0..=n {
        for b in 0..=(n - a) {
            let w = [a as f64 / n as f64, b as f64 / n as f64, (n - a - b) as f64 / n as f64];
            let v = f(w);
            if v < best.0 {
                best = (v, w);
            }
        }
    }
    let mut step = 1e-3;
    for _ in 0..2 {
        let centre = best.1;
        step /= 100.0;
        for da in -200i32..=200 {
            for db in -200i32..=200 {
                let a = centre[0] + da as f64 * step;
                let b = centre[1] + db as f64 * step;
                let c = 1.0 - a - b;
                if a < 0.0 || b < 0.0 || c < 0.0 {
                    continue;
                }
                let v = f([a, b, c]);
                if v < best.0 {
                    best = (v, [a, b, c]);
                }
            }
        }
    }
    best
}

/// Mean of |X - Y|^{-beta} for X, Y uniform on a disc of radius r, from the
/// classical disc distance density (2u/R^2)(2/pi)(acos(s) - s sqrt(1-s^2)),
/// s = u / 2R, by the midpoint rule after u = 2R v^2. The transformed
/// integrand behaves like v^(3 - 2 beta), so results degrade past beta = 1.5.
pub fn disc_self_energy(beta: f64, radius: f64) -> f64 {
    let n = 200_000;
    let mut total = 0.0;
    for i in 0..n {
        let v = (i as f64 + 0.5) / n as f64;
        let u = 2.0 * radius * v * v;
        let s = u / (2.0 * radius);
        let dens = 2.0 * u / (radius * radius) * (2.0 / PI) * (s.acos() - s * (1.0 - s * s).sqrt());
        total += u.powf(-beta) * dens * 4.0 * radius * v / n as f64;
    }
    total
}

/// Largest r such that some ball B(y + r e, r) with e on an angular grid
/// meets the closure of R^2 minus the quadrant {x, y >= a} only at y.
/// Contact is unique when the centre lies in the quadrant at distance >= r
/// from both faces, with equality allowed only on the face through y.
pub fn notch_tangent_ball_radius(a: f64, y: [f64; 2], r_grid: usize, angles: usize) -> f64 {
    let on_vertical = (y[0] - a).abs() < 1e-12 && y[1] > a;
    let on_horizontal = (y[1] - a).abs() < 1e-12 && y[0] > a;
    let mut best: f64 = 0.0;
    for j in 0..angles {
        let th = 2.0 * PI * j as f64 / angles as f64;
        let e = [th.cos(), th.sin()];
        for i in 1..=r_grid {
            let r = 4.0 * i as f64 / r_grid as f64;
            let z = [y[0] + r * e[0], y[1] + r * e[1]];
            let dx = z[0] - a;
            let dy = z[1] - a;
            let tol = 1e-9 * r;
            let ok_x = if on_vertical { (dx - r).abs() <= tol } else { dx > r + tol };
            let ok_y = if on_horizontal { (dy - r).abs() <= tol } else { dy > r + tol };
            if ok_x && ok_y {
                best = best.max(r);
            }
        }
    }
    best
}

/// Distance from a point on the axis of the example spike (meridian
/// coordinates) to its boundary profile, by dense sampling of the profile.
pub fn spike_axis_distance(z: f64, slope: f64, samples: usize) -> f64 {
    // cone rho = slope (t - 1), t in [1, t_j], then the sphere of radius 2
    let s2 = slope * slope;
    let tj = (2.0 * s2 + ((2.0 * s2).powi(2) - 4.0 * (s2 + 1.0) * (s2 - 4.0)).sqrt()) / (2.0 * (s2 + 1.0));
    let mut best = f64::INFINITY;
    for i in 0..=samples {
        let t = 1.0 + (tj - 1.0) * i as f64 / samples as f64;
        let rho = slope * (t - 1.0);
        best = best.min(rho.hypot(z - t));
    }
    let th_j = (slope * (tj - 1.0)).atan2(tj);
    for i in 0..=samples {
        let th = th_j + (PI - th_j) * i as f64 / samples as f64;
        best = best.min((2.0 * th.sin()).hypot(z - 2.0 * th.cos()));
    }
    best
}

/// Stationary density of dX = sqrt(v) dB - X/2 dt reflected at b, from the
/// zero-flux finite-difference discretization of the Fokker-Planck equation
/// on [lo, b]; returns (grid, cumulative distribution).
pub fn reflected_ou_stationary_cdf(v: f64, b: f64, lo: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    // J_{i+1/2} = -(x_{i+1/2}/2)(p_i + p_{i+1})/2 - (v/2)(p_{i+1} - p_i)/h = 0
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    for i in 0..n {
        let m = 0.5 * (xs[i] + xs[i + 1]);
        let a = v / (2.0 * h);
        let c = m / 4.0;
        p[i + 1] = p[i] * (a - c) / (a + c);
    }
    let mut cdf = vec![0.0; n + 1];
    for i in 0..n {
        cdf[i + 1] = cdf[i] + 0.5 * (p[i] + p[i + 1]) * h;
    }
    let total = cdf[n];
    cdf.iter_mut().for_each(|c| *c /= total);
    (xs, cdf)
}
