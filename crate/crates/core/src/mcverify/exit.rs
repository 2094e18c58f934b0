use serde::{Deserialize, Serialize};

use super::bounds::{c2_from_c1, point_at_depth};
use super::sim::Probe;
use super::McOptions;
use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{Domain, Point};
use crate::stats::McEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBin {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Finite-difference slope of the exit-time CDF over the bin.
    pub slope: f64,
    /// Slope at the upper confidence limit of the bin probability.
    pub slope_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitDensityReport {
    pub x: Point,
    pub r: f64,
    pub t_grid: Vec<f64>,
    /// Estimates of P[tau_r <= t] on `t_grid`.
    pub cdf: Vec<McEstimate>,
    pub bins: Vec<SlopeBin>,
    /// Smallest C1 with slope_upper <= C1 / t on every bin (t the right end).
    pub c1: f64,
    pub monotone: bool,
}

/// Geometric time grid from 2^-11 to 1 with ratio sqrt 2.
pub fn default_t_grid() -> Vec<f64> {
    (0..=22).map(|k| 2f64.powf(-11.0 + 0.5 * k as f64)).collect()
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    let ok = t_grid.len() >= 2
        && t_grid[0] > 0.0
        && t_grid.windows(2).all(|w| w[1] > w[0])
        && t_grid.iter().all(|t| t.is_finite());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument("time grid must be positive, finite, strictly increasing, length >= 2".into()))
    }
}

/// Exit-time CDF of O_r = {q > r} from `x` and the C1 envelope it supports.
pub fn verify_exit_density(
    domain: &dyn Domain,
    x: &[f64],
    r: f64,
    t_grid: &[f64],
    opts: &McOptions,
) -> Result<ExitDensityReport> {
    Ok(verify_exit_density_many(domain, &[x.to_vec()], r, t_grid, opts)?.remove(0))
}

/// [`verify_exit_density`] for several starts sharing the same paths.
pub fn verify_exit_density_many(
    domain: &dyn Domain,
    xs: &[Point],
    r: f64,
    t_grid: &[f64],
    opts: &McOptions,
) -> Result<Vec<ExitDensityReport>> {
    opts.validate()?;
    validate_grid(t_grid)?;
    for x in xs {
        ensure_dim(domain.dim(), x.len())?;
        let qx = domain.q(x);
        if !(qx > r) {
            return Err(Error::Precondition(format!("start point not in O_r: q = {qx}, r = {r}")));
        }
    }
    let horizon = *t_grid.last().expect("validated");
    let dt = horizon / opts.n_steps as f64;
    let probe = Probe {
        domain,
        starts: xs,
        horizon,
        n_steps: opts.n_steps,
        cuts: &[],
        hit_level: Some(r),
        tubes: &[],
    };
    let traces = probe.run(opts.n_paths, opts.seed, opts.exec);
    let n = opts.n_paths as u64;
    let mut out = Vec::with_capacity(xs.len());
    for (j, x) in xs.iter().enumerate() {
        let mut times: Vec<f64> =
            traces.iter().filter_map(|t| t[j].fine.hit.map(|s| s as f64 * dt)).collect();
        times.sort_by(f64::total_cmp);
        let counts: Vec<u64> = t_grid.iter().map(|&t| times.partition_point(|&s| s <= t) as u64).collect();
        let cdf: Vec<McEstimate> =
            counts.iter().map(|&c| McEstimate::bernoulli(c, n, opts.level, opts.seed)).collect();
        let bins: Vec<SlopeBin> = t_grid
            .windows(2)
            .zip(counts.windows(2))
            .map(|(t, c)| {
                let width = t[1] - t[0];
                let e = McEstimate::bernoulli(c[1] - c[0], n, opts.level, opts.seed);
                SlopeBin { t_lo: t[0], t_hi: t[1], slope: e.mean / width, slope_upper: e.hi / width }
            })
            .collect();
        let c1 = bins.iter().map(|b| b.slope_upper * b.t_hi).fold(0.0, f64::max);
        let monotone = cdf.windows(2).all(|w| w[1].mean >= w[0].mean);
        out.push(ExitDensityReport { x: x.clone(), r, t_grid: t_grid.to_vec(), cdf, bins, c1, monotone });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Calibration {
    pub c1: f64,
    pub c2: f64,
    pub r: f64,
    pub depths: Vec<f64>,
    pub domains: Vec<String>,
    pub reports: Vec<ExitDensityReport>,
}

/// Calibrates C1 as the largest envelope constant over the given domains
/// and start depths q(x) - r, on a common time grid.
pub fn calibrate_c1(
    domains: &[&dyn Domain],
    r: f64,
    depths: &[f64],
    t_grid: &[f64],
    opts: &McOptions,
) -> Result<C1Calibration> {
    if domains.is_empty() || depths.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one domain and one depth".into()));
    }
    let mut reports = Vec::new();
    for dom in domains {
        let xs: Vec<Point> = depths.iter().map(|&e| point_at_depth(*dom, r + e)).collect::<Result<_>>()?;
        reports.extend(verify_exit_density_many(*dom, &xs, r, t_grid, opts)?);
    }
    let c1 = reports.iter().map(|rep| rep.c1).fold(0.0, f64::max);
    Ok(C1Calibration {
        c1,
        c2: c2_from_c1(c1),
        r,
        depths: depths.to_vec(),
        domains: domains.iter().map(|d| d.id()).collect(),
        reports,
    })
}
