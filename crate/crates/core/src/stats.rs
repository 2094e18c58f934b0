//! Monte-Carlo estimates, bound verdicts and the small set of classical
//! tests the verifiers rely on (Wilson intervals, Mann-Kendall,
//! Anderson-Darling, weighted least squares).

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc_inv};

/// Default confidence level of every interval.
pub const DEFAULT_LEVEL: f64 = 0.99;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn z_for_level(level: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(1.0 - level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n: u64,
    pub mean: f64,
    pub half_width: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub seed: u64,
}

/// Counts below which the Wald interval is replaced by Wilson's.
const WALD_MIN_COUNT: u64 = 10;

impl McEstimate {
    /// Bernoulli estimate from `hits` successes out of `n`.
    pub fn bernoulli(hits: u64, n: u64, level: f64, seed: u64) -> Self {
        assert!(n > 0, "empty sample");
        let z = z_for_level(level);
        let nf = n as f64;
        let p = hits as f64 / nf;
        if hits < WALD_MIN_COUNT || n - hits < WALD_MIN_COUNT {
            let (lo, hi) = wilson(hits, n, z);
            let half_width = 0.5 * (hi - lo);
            Self { n, mean: p, half_width, lo, hi, level, seed }
        } else {
            let hw = z * (p * (1.0 - p) / nf).sqrt();
            Self { n, mean: p, half_width: hw, lo: p - hw, hi: p + hw, level, seed }
        }
    }

    /// Sample-mean estimate from real observations.
    pub fn from_samples(xs: &[f64], level: f64, seed: u64) -> Self {
        let n = xs.len() as u64;
        assert!(n > 1, "need at least two samples");
        let (mean, var) = mean_var(xs);
        let hw = z_for_level(level) * (var / n as f64).sqrt();
        Self { n, mean, half_width: hw, lo: mean - hw, hi: mean + hw, level, seed }
    }

    /// Rescales a Bernoulli or mean estimate by a positive constant.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mean: self.mean * c,
            half_width: self.half_width * c,
            lo: self.lo * c,
            hi: self.hi * c,
            ..*self
        }
    }

    pub fn upper(&self) -> f64 {
        self.hi
    }
}

fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - spread).max(0.0), (centre + spread).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Grid refinement moved the estimate by more than its CI half-width.
    Withheld,
}

/// Comparison of an upper confidence bound against an analytic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub estimate: McEstimate,
    pub bound: f64,
    /// `bound - estimate.upper()`
    pub slack: f64,
    pub discretization_allowance: f64,
    /// Change of the estimate when the time step is doubled.
    pub refinement_shift: f64,
    pub stable: bool,
    pub pass: bool,
    pub status: Status,
}

impl BoundVerdict {
    pub fn new(estimate: McEstimate, bound: f64, allowance: f64, refinement_shift: f64) -> Self {
        let slack = bound - estimate.upper();
        let stable = refinement_shift.abs() <= estimate.half_width;
        let holds = slack >= -allowance;
        let (pass, status) = match (stable, holds) {
            (false, _) => (false, Status::Withheld),
            (true, true) => (true, Status::Pass),
            (true, false) => (false, Status::Fail),
        };
        Self {
            estimate,
            bound,
            slack,
            discretization_allowance: allowance,
            refinement_shift,
            stable,
            pass,
            status,
        }
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannKendall {
    pub s: i64,
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

impl MannKendall {
    /// Significant monotone increase at level `alpha` (two-sided test).
    pub fn increasing(&self, alpha: f64) -> bool {
        self.s > 0 && self.p_value < alpha
    }
}

/// Mann-Kendall trend test with the normal approximation and tie correction.
pub fn mann_kendall(xs: &[f64]) -> MannKendall {
    let n = xs.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let nf = n as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let z = if var <= 0.0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let p_value = 2.0 * (1.0 - normal_cdf(z.abs()));
    MannKendall { s, z, p_value }
}

/// Anderson-Darling statistic of `xs` against a fully specified normal law.
pub fn anderson_darling_normal(xs: &[f64], mean: f64, sd: f64) -> f64 {
    let mut u: Vec<f64> = xs
        .iter()
        .map(|x| normal_cdf((x - mean) / sd).clamp(1e-300, 1.0 - 1e-16))
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let sum: f64 = u
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let k = (2 * i + 1) as f64;
            k * (ui.ln() + (1.0 - u[u.len() - 1 - i]).ln())
        })
        .sum();
    -n - sum / n
}

/// Upper 1% critical value of A^2 for a fully specified null.
pub const AD_CRITICAL_1PCT: f64 = 3.857;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

/// Weighted least squares `y = a + b x`; weights are inverse variances.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    let sy: f64 = y.iter().zip(w).map(|(a, b)| a * b).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm) * (a - xm)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - xm) * (c - ym))
        .sum();
    let slope = sxy / sxx;
    Some(LinearFit { intercept: ym - slope * xm, slope, slope_se: (1.0 / sxx).sqrt() })
}

/// Weighted least squares with one intercept per group and a common slope;
/// groups with fewer than two points or no spread in x are skipped. The
/// reported intercept is the weighted mean of the group intercepts.
pub fn grouped_slope_fit(groups: &[(Vec<f64>, Vec<f64>, Vec<f64>)]) -> Option<LinearFit> {
    let (mut sxx, mut sxy, mut wsum, mut isum) = (0.0, 0.0, 0.0, 0.0);
    let mut centred = Vec::new();
    for (x, y, w) in groups {
        if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
            continue;
        }
        let sw: f64 = w.iter().sum();
        let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let gxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm) * (a - xm)).sum();
        if gxx <= 0.0 {
            continue;
        }
        sxx += gxx;
        sxy += x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - xm) * (c - ym)).sum::<f64>();
        centred.push((xm, ym, sw));
    }
    if centred.is_empty() {
        return None;
    }
    let slope = sxy / sxx;
    for (xm, ym, sw) in centred {
        isum += sw * (ym - slope * xm);
        wsum += sw;
    }
    Some(LinearFit { intercept: isum / wsum, slope, slope_se: (1.0 / sxx).sqrt() })
}

/// Lag-one sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let (mean, _) = mean_var(xs);
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let den: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
