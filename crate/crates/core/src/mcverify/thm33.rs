use serde::{Deserialize, Serialize};

use super::bounds::{c2_from_c1, BOUNDARY_SEED_LABEL};
use super::sim::{GridTrace, Probe, Trace};
use super::{loglog_fit, McOptions, PairedEstimate};
use crate::capacity::{Condition9Report, Condition9Verdict};
use crate::error::{Error, Result};
use crate::geometry::{singular_set, Domain, SingularSetApprox};
use crate::rng::derive_seed;
use crate::stats::{mann_kendall, weighted_linear_fit, BoundVerdict, LinearFit, MannKendall, McEstimate};

/// Significance level of the trend test on the gradient-mass sequence.
pub const TREND_ALPHA: f64 = 0.05;
/// Minimum fitted log-log slope of Psi(r).
pub const PSI_SLOPE_FLOOR: f64 = 1.7;
/// Accepted deviation of the null-boundary log-log slope from 1.
pub const NULL_SLOPE_TOL: f64 = 0.15;

/// Paths of Brownian motion started at the origin over [0, horizon], cut at
/// time `s`, with the tubes A_rho for every requested rho.
pub struct OriginSample {
    pub domain: String,
    pub d: usize,
    pub horizon: f64,
    pub s: f64,
    pub tube_radii: Vec<f64>,
    /// Number of singular-set points behind each tube.
    pub tube_points: Vec<usize>,
    tube_slot: Vec<Option<usize>>,
    traces: Vec<Trace>,
    opts: McOptions,
}

/// Simulates the paths shared by the three path-space checks.
pub fn simulate_from_origin(
    domain: &dyn Domain,
    horizon: f64,
    s: f64,
    tube_radii: &[f64],
    opts: &McOptions,
) -> Result<OriginSample> {
    opts.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if !(s > 0.0 && s < horizon) {
        return Err(Error::InvalidArgument(format!("need 0 < s < T, got s={s}, T={horizon}")));
    }
    if !(domain.q(&vec![0.0; domain.dim()]) > 0.0) {
        return Err(Error::Precondition("the origin must lie in the domain".into()));
    }
    let seed = derive_seed(opts.seed, BOUNDARY_SEED_LABEL);
    let tubes: Vec<SingularSetApprox> = tube_radii
        .iter()
        .map(|&rho| singular_set(domain, rho, opts.boundary_samples, seed))
        .collect::<Result<_>>()?;
    let mut live: Vec<&SingularSetApprox> = Vec::new();
    let mut tube_slot = Vec::with_capacity(tubes.len());
    for t in &tubes {
        if t.is_empty() {
            tube_slot.push(None);
        } else {
            tube_slot.push(Some(live.len()));
            live.push(t);
        }
    }
    // The cut sits on the coarse grid so both grids split at the same time.
    let cut = (((s / horizon) * opts.n_steps as f64 / 2.0).round() as usize * 2).clamp(2, opts.n_steps - 2);
    let origin = vec![vec![0.0; domain.dim()]];
    let probe = Probe {
        domain,
        starts: &origin,
        horizon,
        n_steps: opts.n_steps,
        cuts: &[cut],
        hit_level: None,
        tubes: &live,
    };
    let traces = probe.run(opts.n_paths, opts.seed, opts.exec).into_iter().map(|mut t| t.remove(0)).collect();
    Ok(OriginSample {
        domain: domain.id(),
        d: domain.dim(),
        horizon,
        s: horizon * cut as f64 / opts.n_steps as f64,
        tube_radii: tube_radii.to_vec(),
        tube_points: tubes.iter().map(|t| t.points.len()).collect(),
        tube_slot,
        traces,
        opts: *opts,
    })
}

impl OriginSample {
    fn slot(&self, rho: f64) -> Result<Option<usize>> {
        self.tube_radii
            .iter()
            .position(|&x| x == rho)
            .map(|i| self.tube_slot[i])
            .ok_or_else(|| Error::InvalidArgument(format!("tube radius {rho} was not simulated")))
    }

    fn paired(&self, event: impl Fn(&GridTrace) -> bool) -> PairedEstimate {
        PairedEstimate::from_pairs(
            self.traces.iter().map(|t| (event(&t.fine), event(&t.coarse))),
            self.opts.level,
            self.opts.seed,
        )
    }

    pub fn n_paths(&self) -> usize {
        self.traces.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMassEntry {
    pub m: usize,
    /// m times the probability of {0 <= h <= 1/m, no tube visit}.
    pub paired: PairedEstimate,
    pub verdict: BoundVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMassReport {
    pub domain: String,
    pub k: usize,
    pub horizon: f64,
    pub c1: f64,
    pub c2: f64,
    /// (k+1)(d-1) + C2 T^{-1/2}
    pub ceiling: f64,
    pub entries: Vec<GradientMassEntry>,
    pub trend: MannKendall,
    pub increasing: bool,
    pub bounded: bool,
    pub pass: bool,
}

pub fn verify_gradient_mass(
    domain: &dyn Domain,
    k: usize,
    m_schedule: &[usize],
    horizon: f64,
    c1: f64,
    opts: &McOptions,
) -> Result<GradientMassReport> {
    let rho = 1.0 / (k as f64 + 1.0);
    let sample = simulate_from_origin(domain, horizon, 0.5 * horizon, &[rho], opts)?;
    verify_gradient_mass_from(&sample, k, m_schedule, c1)
}

pub fn verify_gradient_mass_from(
    sample: &OriginSample,
    k: usize,
    m_schedule: &[usize],
    c1: f64,
) -> Result<GradientMassReport> {
    if m_schedule.len() < 2 {
        return Err(Error::InvalidArgument("m schedule needs at least two values".into()));
    }
    if let Some(&m) = m_schedule.iter().find(|&&m| m < k + 1) {
        return Err(Error::InvalidArgument(format!("need m >= k+1, got m={m}, k={k}")));
    }
    let slot = sample.slot(1.0 / (k as f64 + 1.0))?;
    let c2 = c2_from_c1(c1);
    let ceiling = (k as f64 + 1.0) * (sample.d as f64 - 1.0) + c2 / sample.horizon.sqrt();
    let entries: Vec<GradientMassEntry> = m_schedule
        .iter()
        .map(|&m| {
            let level = 1.0 / m as f64;
            let paired = sample.paired(|g| g.constrained(slot) && g.min() <= level).scaled(m as f64);
            let verdict = BoundVerdict::new(paired.fine, ceiling, paired.allowance, paired.shift);
            GradientMassEntry { m, paired, verdict }
        })
        .collect();
    let means: Vec<f64> = entries.iter().map(|e| e.paired.fine.mean).collect();
    let trend = mann_kendall(&means);
    let increasing = trend.increasing(TREND_ALPHA);
    let bounded = entries.iter().all(|e| e.verdict.pass);
    Ok(GradientMassReport {
        domain: sample.domain.clone(),
        k,
        horizon: sample.horizon,
        c1,
        c2,
        ceiling,
        entries,
        trend,
        increasing,
        bounded,
        pass: bounded && !increasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEntry {
    pub r: f64,
    pub paired: PairedEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub domain: String,
    pub l: usize,
    pub s: f64,
    pub horizon: f64,
    pub entries: Vec<PsiEntry>,
    pub fit: Option<LinearFit>,
    pub censored: usize,
    pub stable: bool,
    pub pass: bool,
}

pub fn verify_psi_quadratic(
    domain: &dyn Domain,
    s: f64,
    r_schedule: &[f64],
    l: usize,
    horizon: f64,
    opts: &McOptions,
) -> Result<PsiReport> {
    let rho = 1.0 / (l as f64 + 1.0);
    let sample = simulate_from_origin(domain, horizon, s, &[rho], opts)?;
    verify_psi_quadratic_from(&sample, r_schedule, l)
}

/// Psi(r): constrained paths off A_{1/(l+1)} that come within r of the
/// boundary both before and after the cut time s.
pub fn verify_psi_quadratic_from(sample: &OriginSample, r_schedule: &[f64], l: usize) -> Result<PsiReport> {
    let rho = 1.0 / (l as f64 + 1.0);
    if r_schedule.len() < 2 {
        return Err(Error::InvalidArgument("r schedule needs at least two values".into()));
    }
    if let Some(&r) = r_schedule.iter().find(|&&r| !(r > 0.0 && r <= rho)) {
        return Err(Error::InvalidArgument(format!("need 0 < r <= 1/(l+1) = {rho}, got {r}")));
    }
    let slot = sample.slot(rho)?;
    let entries: Vec<PsiEntry> = r_schedule
        .iter()
        .map(|&r| {
            let paired = sample.paired(|g| g.constrained(slot) && g.seg_min[0] <= r && g.seg_min[1] <= r);
            PsiEntry { r, paired }
        })
        .collect();
    let est: Vec<McEstimate> = entries.iter().map(|e| e.paired.fine).collect();
    let (fit, censored) = loglog_fit(r_schedule, &est);
    let stable = entries.iter().all(|e| e.paired.stable());
    let pass = fit.is_some_and(|f| f.slope >= PSI_SLOPE_FLOOR);
    Ok(PsiReport {
        domain: sample.domain.clone(),
        l,
        s: sample.s,
        horizon: sample.horizon,
        entries,
        fit,
        censored,
        stable,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullBoundaryReport {
    pub domain: String,
    pub condition_9: Condition9Verdict,
    pub eps: Vec<f64>,
    pub estimates: Vec<PairedEstimate>,
    pub loglog: Option<LinearFit>,
    pub censored: usize,
    /// Weighted fit of the probability against eps.
    pub linear: Option<LinearFit>,
    pub pass: bool,
}

pub fn verify_null_boundary(
    domain: &dyn Domain,
    eps_schedule: &[f64],
    horizon: f64,
    condition_9: &Condition9Report,
    opts: &McOptions,
) -> Result<NullBoundaryReport> {
    let sample = simulate_from_origin(domain, horizon, 0.5 * horizon, &[], opts)?;
    verify_null_boundary_from(&sample, eps_schedule, condition_9)
}

/// mu(0 <= h <= eps) along a schedule: log-log slope within 1 +- 0.15 and a
/// linear extrapolation to eps = 0 inside the smallest estimate's half-width.
pub fn verify_null_boundary_from(
    sample: &OriginSample,
    eps_schedule: &[f64],
    condition_9: &Condition9Report,
) -> Result<NullBoundaryReport> {
    if condition_9.verdict == Condition9Verdict::Fails {
        return Err(Error::Precondition(format!(
            "capacity condition fails for {}; the boundary need not be null",
            condition_9.domain
        )));
    }
    if eps_schedule.len() < 2 || eps_schedule.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("eps schedule needs at least two positive values".into()));
    }
    let estimates: Vec<PairedEstimate> =
        eps_schedule.iter().map(|&e| sample.paired(|g| g.constrained(None) && g.min() <= e)).collect();
    let fine: Vec<McEstimate> = estimates.iter().map(|p| p.fine).collect();
    let (loglog, censored) = loglog_fit(eps_schedule, &fine);
    let w: Vec<f64> = fine.iter().map(|e| 1.0 / (e.half_width * e.half_width).max(1e-300)).collect();
    let ys: Vec<f64> = fine.iter().map(|e| e.mean).collect();
    let linear = weighted_linear_fit(eps_schedule, &ys, &w);
    let smallest = eps_schedule
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| fine[i].half_width)
        .expect("nonempty");
    let pass = loglog.is_some_and(|f| (f.slope - 1.0).abs() <= NULL_SLOPE_TOL)
        && linear.is_some_and(|f| f.intercept.abs() <= smallest);
    Ok(NullBoundaryReport {
        domain: sample.domain.clone(),
        condition_9: condition_9.verdict,
        eps: eps_schedule.to_vec(),
        estimates,
        loglog,
        censored,
        linear,
        pass,
    })
}
