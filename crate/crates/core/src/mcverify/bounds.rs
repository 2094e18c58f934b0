use serde::{Deserialize, Serialize};

use super::sim::Probe;
use super::{loglog_fit, loglog_points, McOptions, PairedEstimate};
use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{default_ball_params, exterior_ball_radius, singular_set, Domain, Point, SingularSetApprox};
use crate::rng::derive_seed;
use crate::stats::{grouped_slope_fit, BoundVerdict, LinearFit};

/// Minimum log-log slope of the band probability against r.
pub const BAND_SLOPE_FLOOR: f64 = 0.85;
/// Slope fits with a larger standard error cannot tell linear decay from
/// square-root decay and give no verdict.
pub const BAND_SLOPE_SE_MAX: f64 = 0.25;

/// Linearity verdict for a fitted slope: rejected only when the upper
/// confidence limit falls below [`BAND_SLOPE_FLOOR`]; `None` when the fit
/// is missing or too imprecise.
pub fn slope_verdict(fit: Option<LinearFit>, level: f64) -> Option<bool> {
    let f = fit?;
    if !(f.slope_se <= BAND_SLOPE_SE_MAX) {
        return None;
    }
    Some(f.slope + crate::stats::z_for_level(level) * f.slope_se >= BAND_SLOPE_FLOOR)
}

/// Label under which boundary-sampling seeds are derived from the root seed.
pub(crate) const BOUNDARY_SEED_LABEL: u64 = 0xB0_0D;

pub fn c2_from_c1(c1: f64) -> f64 {
    4.0 * c1 + 2.0
}

/// ((d-1)/delta + u^{-1/2}) q(x); the first term vanishes for delta = inf.
pub fn staying_bound(d: usize, delta: f64, u: f64, qx: f64) -> f64 {
    let curvature = if delta.is_infinite() { 0.0 } else { (d as f64 - 1.0) / delta };
    (curvature + u.powf(-0.5)) * qx
}

/// ((d-1)/gamma + C2 u^{-1/2}) r.
pub fn band_bound(d: usize, gamma: f64, c2: f64, u: f64, r: f64) -> f64 {
    ((d as f64 - 1.0) / gamma + c2 * u.powf(-0.5)) * r
}

/// Point on the ray through e_d at depth q = `depth`, found by bisection.
pub fn point_at_depth(domain: &dyn Domain, depth: f64) -> Result<Point> {
    let d = domain.dim();
    let at = |s: f64| {
        let mut x = vec![0.0; d];
        x[d - 1] = s;
        x
    };
    let q0 = domain.q(&at(0.0));
    if !(q0 >= depth) || !q0.is_finite() {
        return Err(Error::Precondition(format!("origin has depth {q0}, below the requested {depth}")));
    }
    let mut hi = domain.diameter();
    while domain.q(&at(hi)) > depth {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Precondition("ray along e_d never leaves the domain".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if domain.q(&at(mid)) > depth {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayingReport {
    pub x: Point,
    pub q_x: f64,
    pub nearest: Point,
    pub delta: f64,
    pub u: f64,
    pub paired: PairedEstimate,
    pub verdict: BoundVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub r: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub paired: PairedEstimate,
    pub verdict: BoundVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSchedule {
    pub x: Point,
    pub q_x: f64,
    pub u: f64,
    pub bands: Vec<BandReport>,
    pub fit: Option<LinearFit>,
    pub censored: usize,
    /// See [`slope_verdict`].
    pub linear: Option<bool>,
}

/// Both estimates for one start point, computed from the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBounds {
    pub staying: StayingReport,
    pub bands: BandSchedule,
}

struct Start {
    x: Point,
    qx: f64,
    nearest: Point,
    delta: f64,
}

fn prepare_start(domain: &dyn Domain, x: &[f64]) -> Result<Start> {
    ensure_dim(domain.dim(), x.len())?;
    let qx = domain.q(x);
    if !qx.is_finite() {
        return Err(Error::Precondition("domain has no boundary".into()));
    }
    if qx < 0.0 {
        return Err(Error::Precondition(format!("start point lies outside the closure (q = {qx})")));
    }
    let nearest = domain.nearest_boundary_point(x);
    let (r_max, tol) = default_ball_params(domain);
    let delta = exterior_ball_radius(domain, &nearest, r_max, tol)?.radius;
    if delta <= 0.0 {
        return Err(Error::Precondition(format!(
            "nearest boundary point {nearest:?} has exterior-ball radius 0"
        )));
    }
    Ok(Start { x: x.to_vec(), qx, nearest, delta })
}

fn tubes_for(domain: &dyn Domain, gammas: &[f64], opts: &McOptions) -> Result<Vec<SingularSetApprox>> {
    let seed = derive_seed(opts.seed, BOUNDARY_SEED_LABEL);
    gammas.iter().map(|&g| singular_set(domain, g, opts.boundary_samples, seed)).collect()
}

/// Staying probability of the closure up to time `u` from `x`, against
/// ((d-1)/delta(y) + u^{-1/2}) q(x) with y the nearest boundary point.
pub fn verify_prop_3_2(domain: &dyn Domain, x: &[f64], u: f64, opts: &McOptions) -> Result<StayingReport> {
    Ok(verify_boundary_bounds(domain, &[x.to_vec()], u, &[], 1.0, opts)?.remove(0).staying)
}

/// Band probability P[0 <= inf q <= r, no visit to A_gamma before u] against
/// ((d-1)/gamma + C2 u^{-1/2}) r with C2 = 4 C1 + 2.
pub fn verify_prop_3_5(
    domain: &dyn Domain,
    x: &[f64],
    gamma: f64,
    r: f64,
    u: f64,
    c1: f64,
    opts: &McOptions,
) -> Result<BandReport> {
    if !(r > 0.0 && r <= gamma) {
        return Err(Error::InvalidArgument(format!("need 0 < r <= gamma, got r={r}, gamma={gamma}")));
    }
    let mut out = verify_bands(domain, &[x.to_vec()], u, &[(r, gamma)], c1, opts)?;
    Ok(out.remove(0).bands.bands.remove(0))
}

/// Staying verdicts and band schedules (with gamma = r) for several starts
/// driven by the same Brownian paths.
pub fn verify_boundary_bounds(
    domain: &dyn Domain,
    xs: &[Point],
    u: f64,
    r_schedule: &[f64],
    c1: f64,
    opts: &McOptions,
) -> Result<Vec<BoundaryBounds>> {
    let pairs: Vec<(f64, f64)> = r_schedule.iter().map(|&r| (r, r)).collect();
    verify_bands(domain, xs, u, &pairs, c1, opts)
}

/// As [`verify_boundary_bounds`], with r given as fractions of q(x) and a
/// common gamma (`None`: gamma = r for each band).
pub fn verify_boundary_bounds_relative(
    domain: &dyn Domain,
    xs: &[Point],
    u: f64,
    r_fractions: &[f64],
    gamma: Option<f64>,
    c1: f64,
    opts: &McOptions,
) -> Result<Vec<BoundaryBounds>> {
    let starts: Vec<Start> = xs.iter().map(|x| prepare_start(domain, x)).collect::<Result<_>>()?;
    let per_start: Vec<Vec<(f64, f64)>> = starts
        .iter()
        .map(|s| r_fractions.iter().map(|f| (f * s.qx, gamma.unwrap_or(f * s.qx))).collect())
        .collect();
    run_bands(domain, starts, u, &per_start, c1, opts)
}

fn verify_bands(
    domain: &dyn Domain,
    xs: &[Point],
    u: f64,
    r_gamma: &[(f64, f64)],
    c1: f64,
    opts: &McOptions,
) -> Result<Vec<BoundaryBounds>> {
    let starts: Vec<Start> = xs.iter().map(|x| prepare_start(domain, x)).collect::<Result<_>>()?;
    let per_start = vec![r_gamma.to_vec(); starts.len()];
    run_bands(domain, starts, u, &per_start, c1, opts)
}

fn run_bands(
    domain: &dyn Domain,
    starts: Vec<Start>,
    u: f64,
    per_start: &[Vec<(f64, f64)>],
    c1: f64,
    opts: &McOptions,
) -> Result<Vec<BoundaryBounds>> {
    opts.validate()?;
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidArgument(format!("u must be positive, got {u}")));
    }
    for &(r, g) in per_start.iter().flatten() {
        if !(r > 0.0 && r <= g) {
            return Err(Error::InvalidArgument(format!("need 0 < r <= gamma, got r={r}, gamma={g}")));
        }
    }
    let mut gammas: Vec<f64> = per_start.iter().flatten().map(|p| p.1).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let tubes = tubes_for(domain, &gammas, opts)?;
    let live: Vec<&SingularSetApprox> = tubes.iter().filter(|t| !t.is_empty()).collect();
    let tube_index = |g: f64| -> Option<usize> {
        let t = &tubes[gammas.iter().position(|&x| x == g).expect("gamma listed")];
        live.iter().position(|l| std::ptr::eq(*l, t))
    };
    let points: Vec<Point> = starts.iter().map(|s| s.x.clone()).collect();
    let probe = Probe {
        domain,
        starts: &points,
        horizon: u,
        n_steps: opts.n_steps,
        cuts: &[],
        hit_level: None,
        tubes: &live,
    };
    let traces = probe.run(opts.n_paths, opts.seed, opts.exec);
    let c2 = c2_from_c1(c1);
    let d = domain.dim();
    let mut out = Vec::with_capacity(starts.len());
    for (j, s) in starts.into_iter().enumerate() {
        let paired = PairedEstimate::from_pairs(
            traces.iter().map(|t| (t[j].fine.min() >= 0.0, t[j].coarse.min() >= 0.0)),
            opts.level,
            opts.seed,
        );
        let bound = staying_bound(d, s.delta, u, s.qx);
        let verdict = BoundVerdict::new(paired.fine, bound, paired.allowance, paired.shift);
        let staying = StayingReport {
            x: s.x.clone(),
            q_x: s.qx,
            nearest: s.nearest,
            delta: s.delta,
            u,
            paired,
            verdict,
        };
        let mut bands = Vec::new();
        for &(r, gamma) in &per_start[j] {
            let k = tube_index(gamma);
            let band = |g: &super::sim::GridTrace| {
                let m = g.min();
                g.constrained(k) && m <= r
            };
            let paired = PairedEstimate::from_pairs(
                traces.iter().map(|t| (band(&t[j].fine), band(&t[j].coarse))),
                opts.level,
                opts.seed,
            );
            let bound = band_bound(d, gamma, c2, u, r);
            let verdict = BoundVerdict::new(paired.fine, bound, paired.allowance, paired.shift);
            bands.push(BandReport { r, gamma, c1, c2, paired, verdict });
        }
        let rs: Vec<f64> = bands.iter().map(|b| b.r).collect();
        let est: Vec<_> = bands.iter().map(|b| b.paired.fine).collect();
        let (fit, censored) = if rs.len() >= 2 { loglog_fit(&rs, &est) } else { (None, 0) };
        let linear = slope_verdict(fit, opts.level);
        out.push(BoundaryBounds {
            staying,
            bands: BandSchedule { x: s.x, q_x: s.qx, u, bands, fit, censored, linear },
        });
    }
    Ok(out)
}

/// Common log-log slope of the band probability against r over several
/// starts, with one intercept per start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledBandSlope {
    pub fit: Option<LinearFit>,
    /// Band estimates entering the fit.
    pub points: usize,
    pub censored: usize,
    /// See [`slope_verdict`].
    pub linear: Option<bool>,
}

pub fn pooled_band_slope(schedules: &[&BandSchedule], level: f64) -> PooledBandSlope {
    let mut groups = Vec::with_capacity(schedules.len());
    let (mut points, mut censored) = (0, 0);
    for s in schedules {
        let rs: Vec<f64> = s.bands.iter().map(|b| b.r).collect();
        let est: Vec<_> = s.bands.iter().map(|b| b.paired.fine).collect();
        let (lx, ly, w, c) = loglog_points(&rs, &est);
        censored += c;
        if lx.len() >= 2 {
            points += lx.len();
            groups.push((lx, ly, w));
        }
    }
    let fit = grouped_slope_fit(&groups);
    PooledBandSlope { fit, points, censored, linear: slope_verdict(fit, level) }
}
