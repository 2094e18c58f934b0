//! Monte-Carlo estimators and verdicts for the boundary estimates: the
//! staying bound, the exit-time density envelope, the band bound, and the
//! three path-space estimates (bounded gradient mass, quadratic two-excursion
//! decay, null boundary).
//!
//! Every estimate is computed on a fine grid and on its even sub-grid from
//! the same paths. The coarse-minus-fine shift D measures the grid bias:
//! with the bias of a grid infimum scaling as sqrt(dt), the bias of the fine
//! estimate is D / (sqrt 2 - 1). The allowance added to every verdict is that
//! quantity evaluated at the upper confidence limit of D.

mod bounds;
mod exit;
pub(crate) mod sim;
mod thm33;

pub use bounds::*;
pub use exit::*;
pub use thm33::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::stats::{z_for_level, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_paths: usize,
    /// Fine-grid steps; the coarse grid uses every other step.
    pub n_steps: usize,
    pub seed: u64,
    pub level: f64,
    /// Boundary samples used to build singular-set approximations.
    pub boundary_samples: usize,
    pub exec: Exec,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_paths: 100_000, n_steps: 4096, seed: 0, level: 0.99, boundary_samples: 4096, exec: Exec::default() }
    }
}

impl McOptions {
    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidArgument("n_paths must be at least 2".into()));
        }
        if self.n_steps < 2 || !self.n_steps.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("n_steps must be even and >= 2, got {}", self.n_steps)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must lie in (0,1), got {}", self.level)));
        }
        Ok(())
    }
}

const SQRT2_MINUS_1: f64 = std::f64::consts::SQRT_2 - 1.0;

/// A Bernoulli functional evaluated on the fine and the coarse grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedEstimate {
    pub fine: McEstimate,
    pub coarse: McEstimate,
    /// coarse - fine
    pub shift: f64,
    /// Half-width of the paired confidence interval for `shift`.
    pub shift_half_width: f64,
    /// Estimated grid bias of `fine`, at the upper confidence limit.
    pub allowance: f64,
}

impl PairedEstimate {
    pub fn from_pairs(pairs: impl Iterator<Item = (bool, bool)>, level: f64, seed: u64) -> Self {
        let (mut n, mut nf, mut nc, mut up, mut down) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for (f, c) in pairs {
            n += 1;
            nf += f as u64;
            nc += c as u64;
            match (f, c) {
                (false, true) => up += 1,
                (true, false) => down += 1,
                _ => {}
            }
        }
        let nn = n as f64;
        let shift = (up as f64 - down as f64) / nn;
        let second = (up + down) as f64 / nn;
        let var = (second - shift * shift).max(0.0) / (nn - 1.0).max(1.0);
        let shift_half_width = z_for_level(level) * var.sqrt();
        let allowance = (shift.abs() + shift_half_width) / SQRT2_MINUS_1;
        Self {
            fine: McEstimate::bernoulli(nf, n, level, seed),
            coarse: McEstimate::bernoulli(nc, n, level, seed),
            shift,
            shift_half_width,
            allowance,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            fine: self.fine.scaled(c),
            coarse: self.coarse.scaled(c),
            shift: self.shift * c,
            shift_half_width: self.shift_half_width * c,
            allowance: self.allowance * c,
        }
    }

    /// Halving the step moved the estimate by less than its half-width.
    pub fn stable(&self) -> bool {
        self.shift.abs() <= self.fine.half_width
    }
}

/// Log-log points of Bernoulli estimates against a positive abscissa, with
/// binomial weights: (log x, log p, weight, number censored).
///
/// Points are sorted by decreasing abscissa and the longest prefix with
/// positive counts is kept.
pub(crate) fn loglog_points(xs: &[f64], est: &[McEstimate]) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]));
    let keep: Vec<usize> = idx.iter().cloned().take_while(|&i| est[i].mean > 0.0).collect();
    let censored = xs.len() - keep.len();
    let lx: Vec<f64> = keep.iter().map(|&i| xs[i].ln()).collect();
    let ly: Vec<f64> = keep.iter().map(|&i| est[i].mean.ln()).collect();
    let w: Vec<f64> = keep
        .iter()
        .map(|&i| {
            let e = &est[i];
            let p = e.mean.min(1.0 - 1e-12);
            e.n as f64 * p / (1.0 - p)
        })
        .collect();
    (lx, ly, w, censored)
}

/// Weighted log-log fit of Bernoulli estimates against a positive abscissa;
/// returns (fit, number of leading points dropped as censored).
pub fn loglog_fit(xs: &[f64], est: &[McEstimate]) -> (Option<crate::stats::LinearFit>, usize) {
    let (lx, ly, w, censored) = loglog_points(xs, est);
    (crate::stats::weighted_linear_fit(&lx, &ly, &w), censored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_shift_and_allowance() {
        let pairs = (0..1000).map(|i| (i < 100, i < 110));
        let p = PairedEstimate::from_pairs(pairs, 0.99, 0);
        assert!((p.shift - 0.01).abs() < 1e-15);
        assert!(p.allowance > 0.01 / SQRT2_MINUS_1);
        assert_eq!(p.fine.n, 1000);
    }

    #[test]
    fn censored_points_are_dropped() {
        let est: Vec<McEstimate> =
            [0, 4, 16, 64].iter().map(|&h| McEstimate::bernoulli(h, 10_000, 0.99, 0)).collect();
        let (fit, censored) = loglog_fit(&[0.5, 1.0, 2.0, 4.0], &est);
        assert_eq!(censored, 1);
        assert!((fit.unwrap().slope - 2.0).abs() < 1e-9);
    }
}
