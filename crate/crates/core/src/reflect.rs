//! The reflecting Ornstein-Uhlenbeck process on a time-discretized path
//! space, and checks of its decomposition into driving noise, drift and a
//! boundary local-time term.
//!
//! A state is a path sampled at the grid times t_i = i T / n (i = 1..n, the
//! value at t = 0 is pinned to the origin), stored row-major as n x d. The
//! Cameron-Martin inner product is the sum of <dh_i, dk_i> / dt over grid
//! increments; its reproducing kernel is min(s, t).

use std::sync::Arc;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{Domain, Whole};
use crate::rng::stream_rng;
use crate::stats::{anderson_darling_normal, z_for_level, AD_CRITICAL_1PCT};

/// Relative tolerance of the quadratic-variation check.
pub const QV_TOL: f64 = 0.05;
/// Required share of single-touch reflection events.
pub const SINGLE_TOUCH_FLOOR: f64 = 0.99;
/// Default |q| tolerance defining a touching grid time.
pub const TOUCH_TOL: f64 = 1e-9;
/// Level of the lag-one autocorrelation test.
const LAG1_LEVEL: f64 = 0.99;
/// Largest number of increments fed to the normality test.
const AD_SAMPLE_CAP: usize = 100_000;

#[derive(Debug, Clone)]
pub struct DiscretePathSpace {
    pub d: usize,
    pub horizon: f64,
    pub n_grid: usize,
    pub domain: Arc<dyn Domain>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl DiscretePathSpace {
    pub fn new(domain: Arc<dyn Domain>, horizon: f64, n_grid: usize) -> Result<Self> {
        if n_grid == 0 || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("need n_grid >= 1 and T > 0, got {n_grid}, {horizon}")));
        }
        if !domain.contains_origin() {
            return Err(Error::Precondition("the domain must contain the origin".into()));
        }
        Ok(Self { d: domain.dim(), horizon, n_grid, domain })
    }

    /// The space without constraint.
    pub fn unconstrained(d: usize, horizon: f64, n_grid: usize) -> Result<Self> {
        Self::new(Arc::new(Whole { d }), horizon, n_grid)
    }

    pub fn len(&self) -> usize {
        self.d * self.n_grid
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid_step(&self) -> f64 {
        self.horizon / self.n_grid as f64
    }

    /// t_1, ..., t_n.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_grid).map(|i| i as f64 * self.grid_step()).collect()
    }

    fn time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.grid_step()
    }

    pub fn value<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.d..(i + 1) * self.d]
    }

    pub fn cm_inner(&self, h: &[f64], k: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..self.n_grid {
            for c in 0..d {
                let dh = h[i * d + c] - if i == 0 { 0.0 } else { h[(i - 1) * d + c] };
                let dk = k[i * d + c] - if i == 0 { 0.0 } else { k[(i - 1) * d + c] };
                s += dh * dk;
            }
        }
        s / self.grid_step()
    }

    pub fn cm_norm(&self, h: &[f64]) -> f64 {
        self.cm_inner(h, h).max(0.0).sqrt()
    }

    /// |l|_H^2 for the functional l(x) = sum_i <l_i, x(t_i)>.
    pub fn dual_norm_sq(&self, l: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..self.n_grid {
            for j in 0..self.n_grid {
                let k = self.time(i.min(j));
                for c in 0..d {
                    s += l[i * d + c] * l[j * d + c] * k;
                }
            }
        }
        s
    }

    /// Every grid value lies in the closure of the domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.n_grid).all(|i| self.domain.q(self.value(x, i)) >= 0.0)
    }

    /// Grid times with |q| <= tol.
    pub fn touching(&self, x: &[f64], tol: f64) -> usize {
        (0..self.n_grid).filter(|&i| self.domain.q(self.value(x, i)).abs() <= tol).count()
    }

    /// Adds the Cameron-Martin-minimal perturbation moving x(t_i) by v.
    fn shift_at(&self, y: &mut [f64], i: usize, v: &[f64]) {
        let ti = self.time(i);
        for j in 0..self.n_grid {
            let f = self.time(i.min(j)) / ti;
            for c in 0..self.d {
                y[j * self.d + c] += f * v[c];
            }
        }
    }

    /// Cameron-Martin projection onto the constraint set by Dykstra's
    /// algorithm over the per-time constraints, exact for convex domains.
    /// The returned point satisfies q >= 0 at every grid time in floating
    /// point when the iteration converged.
    pub fn project(&self, z: &[f64], tol: f64, max_sweeps: usize) -> Projection {
        let mut p = self.project_with(z, tol, max_sweeps, true);
        if p.converged {
            p.converged = self.nudge_inside(&mut p.point);
        }
        p
    }

    fn project_with(&self, z: &[f64], tol: f64, max_sweeps: usize, dykstra: bool) -> Projection {
        let d = self.d;
        let n = self.n_grid;
        let mut y = z.to_vec();
        let mut incr = vec![0.0; n * d];
        let mut v = vec![0.0; d];
        for sweep in 1..=max_sweeps {
            let before = y.clone();
            for i in 0..n {
                if dykstra {
                    // u = y + p_i, with p_i stored as a value at t_i
                    let pi = incr[i * d..(i + 1) * d].to_vec();
                    self.shift_at(&mut y, i, &pi);
                }
                let yi = self.value(&y, i).to_vec();
                let p = self.domain.project_closure(&yi);
                for c in 0..d {
                    v[c] = p[c] - yi[c];
                }
                self.shift_at(&mut y, i, &v);
                if dykstra {
                    for c in 0..d {
                        incr[i * d + c] = -v[c];
                    }
                }
            }
            let moved: Vec<f64> = y.iter().zip(&before).map(|(a, b)| a - b).collect();
            let change = self.cm_norm(&moved);
            let worst = (0..n).map(|i| self.domain.q(self.value(&y, i))).fold(f64::INFINITY, f64::min);
            if change <= tol && worst >= -tol {
                return Projection { point: y, sweeps: sweep, converged: true };
            }
        }
        Projection { point: y, sweeps: max_sweeps, converged: false }
    }

    /// Moves violating grid values onto the closure: nearest point first,
    /// then towards the origin until q >= 0 holds in floating point.
    fn nudge_inside(&self, y: &mut [f64]) -> bool {
        let d = self.d;
        for i in 0..self.n_grid {
            let yi = self.value(y, i).to_vec();
            if self.domain.q(&yi) >= 0.0 {
                continue;
            }
            let mut p = self.domain.project_closure(&yi);
            let mut eta = 1e-16;
            while self.domain.q(&p) < 0.0 {
                if eta > 1e-9 {
                    return false;
                }
                p.iter_mut().for_each(|c| *c *= 1.0 - eta);
                eta *= 2.0;
            }
            y[i * d..(i + 1) * d].copy_from_slice(&p);
        }
        true
    }

    /// A path of the same law as sqrt(dt) times Brownian motion at the grid.
    fn noise(&self, rng: &mut ChaCha8Rng, dt: f64, out: &mut [f64]) {
        let sd = (dt * self.grid_step()).sqrt();
        let d = self.d;
        for i in 0..self.n_grid {
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let prev = if i == 0 { 0.0 } else { out[(i - 1) * d + c] };
                out[i * d + c] = prev + sd * z;
            }
        }
    }

    /// The law of X_t for the unconstrained process from x0: mean
    /// x0 e^{-t/2}, covariance (1 - e^{-t}) min(t_i, t_j) per coordinate.
    pub fn ou_marginal(&self, x0: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.len();
        let mean = x0.iter().map(|v| v * (-0.5 * t).exp()).collect();
        let f = -(-t).exp_m1();
        let mut cov = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                if a % self.d == b % self.d {
                    cov[a * m + b] = f * self.time((a / self.d).min(b / self.d));
                }
            }
        }
        (mean, cov)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scheme {
    /// Cameron-Martin projection after each Euler step.
    Projection,
    /// Relaxation towards the constraint at rate `strength`.
    Penalization { strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouOptions {
    pub t_end: f64,
    pub dt_sim: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub projection_tol: f64,
    pub max_sweeps: usize,
}

impl Default for RouOptions {
    fn default() -> Self {
        Self { t_end: 5.0, dt_sim: 1e-3, seed: 0, scheme: Scheme::Projection, projection_tol: 1e-13, max_sweeps: 10_000 }
    }
}

impl RouOptions {
    fn n_steps(&self) -> Result<usize> {
        if !(self.dt_sim > 0.0 && self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need dt_sim > 0 and t_end > 0, got {} and {}",
                self.dt_sim, self.t_end
            )));
        }
        Ok(((self.t_end / self.dt_sim).round() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    pub step: usize,
    pub delta_a: f64,
    /// Unit Cameron-Martin direction of the correction.
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedTrajectory {
    pub d: usize,
    pub n_grid: usize,
    pub horizon: f64,
    pub dt_sim: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Cumulative local time A at each simulation time.
    pub local_time: Vec<f64>,
    pub events: Vec<ReflectionEvent>,
    /// Increments of W recovered from the decomposition identity.
    pub driver: Vec<Vec<f64>>,
    /// Set when the projection failed; the trajectory stops there.
    pub failure: Option<String>,
}

struct Step {
    delta_w: Vec<f64>,
    delta_a: f64,
    sigma: Vec<f64>,
}

struct Stepper<'a> {
    space: &'a DiscretePathSpace,
    opts: RouOptions,
    rng: ChaCha8Rng,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(space: &'a DiscretePathSpace, opts: RouOptions, stream: u64) -> Self {
        Self { space, opts, rng: stream_rng(opts.seed, stream), noise: vec![0.0; space.len()] }
    }

    /// Advances `x` in place by one Euler step followed by the correction.
    fn advance(&mut self, x: &mut [f64]) -> Result<Step> {
        let dt = self.opts.dt_sim;
        let sp = self.space;
        sp.noise(&mut self.rng, dt, &mut self.noise);
        let z: Vec<f64> = x.iter().zip(&self.noise).map(|(xi, b)| xi + b - 0.5 * xi * dt).collect();
        let y = match self.opts.scheme {
            _ if sp.contains(&z) => z.clone(),
            Scheme::Projection => {
                let mut best = sp.project(&z, self.opts.projection_tol, self.opts.max_sweeps);
                if !sp.domain.is_convex() {
                    // second start: plain alternating projections
                    let alt = sp.project_with(&z, self.opts.projection_tol, self.opts.max_sweeps, false);
                    let dist = |p: &Projection| {
                        let diff: Vec<f64> = p.point.iter().zip(&z).map(|(a, b)| a - b).collect();
                        sp.cm_norm(&diff)
                    };
                    if alt.converged && (!best.converged || dist(&alt) < dist(&best)) {
                        best = alt;
                    }
                }
                if !best.converged {
                    return Err(Error::Precondition(format!(
                        "projection did not converge in {} sweeps",
                        self.opts.max_sweeps
                    )));
                }
                let mut p = best.point;
                if !sp.nudge_inside(&mut p) {
                    return Err(Error::Precondition("projected state could not be made feasible".into()));
                }
                p
            }
            Scheme::Penalization { strength } => {
                let w = (strength * dt).min(1.0);
                let mut y = z.clone();
                for i in 0..sp.n_grid {
                    let zi = sp.value(&z, i);
                    let p = sp.domain.project_closure(zi);
                    let v: Vec<f64> = p.iter().zip(zi).map(|(a, b)| w * (a - b)).collect();
                    sp.shift_at(&mut y, i, &v);
                }
                y
            }
        };
        let corr: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a - b).collect();
        let size = sp.cm_norm(&corr);
        let (delta_a, sigma) = if size > 0.0 {
            (2.0 * size, corr.iter().map(|c| c / size).collect())
        } else {
            (0.0, Vec::new())
        };
        // W from X' - X = dW - X dt / 2 + sigma dA / 2
        let delta_w: Vec<f64> = (0..y.len())
            .map(|k| {
                let half_sigma_da = if sigma.is_empty() { 0.0 } else { 0.5 * sigma[k] * delta_a };
                y[k] - x[k] + 0.5 * x[k] * dt - half_sigma_da
            })
            .collect();
        x.copy_from_slice(&y);
        Ok(Step { delta_w, delta_a, sigma })
    }
}

fn check_start(space: &DiscretePathSpace, x0: &[f64]) -> Result<()> {
    if x0.len() != space.len() {
        return Err(Error::DimensionMismatch { expected: space.len(), got: x0.len() });
    }
    if !space.contains(x0) {
        return Err(Error::Precondition("initial path violates the constraint".into()));
    }
    Ok(())
}

/// One trajectory with every state, event and driver increment recorded.
pub fn simulate_rou(space: &DiscretePathSpace, x0: &[f64], opts: &RouOptions) -> Result<ReflectedTrajectory> {
    simulate_rou_stream(space, x0, opts, 0)
}

pub fn simulate_rou_stream(
    space: &DiscretePathSpace,
    x0: &[f64],
    opts: &RouOptions,
    stream: u64,
) -> Result<ReflectedTrajectory> {
    check_start(space, x0)?;
    let n = opts.n_steps()?;
    let mut stepper = Stepper::new(space, *opts, stream);
    let mut x = x0.to_vec();
    let mut traj = ReflectedTrajectory {
        d: space.d,
        n_grid: space.n_grid,
        horizon: space.horizon,
        dt_sim: opts.dt_sim,
        times: vec![0.0],
        states: vec![x.clone()],
        local_time: vec![0.0],
        events: Vec::new(),
        driver: Vec::new(),
        failure: None,
    };
    for k in 1..=n {
        match stepper.advance(&mut x) {
            Ok(step) => {
                let a = traj.local_time[k - 1] + step.delta_a;
                if step.delta_a > 0.0 {
                    traj.events.push(ReflectionEvent { step: k, delta_a: step.delta_a, sigma: step.sigma });
                }
                traj.times.push(k as f64 * opts.dt_sim);
                traj.states.push(x.clone());
                traj.local_time.push(a);
                traj.driver.push(step.delta_w);
            }
            Err(e) => {
                traj.failure = Some(e.to_string());
                break;
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub direction: Vec<f64>,
    pub n_increments: usize,
    pub qv: f64,
    /// t |l|_H^2
    pub expected_qv: f64,
    pub qv_ratio: f64,
    pub anderson_darling: f64,
    pub lag1: f64,
    pub lag1_bound: f64,
    pub qv_pass: bool,
    pub normal_pass: bool,
    pub uncorrelated_pass: bool,
    pub pass: bool,
}

fn decomposition_report(direction: &[f64], acc: &DirectionAcc, dt: f64, norm_sq: f64) -> Result<DecompositionReport> {
    if acc.n < 20 {
        return Err(Error::InsufficientData(format!("{} increments; at least 20 needed", acc.n)));
    }
    let expected_qv = acc.time * norm_sq;
    let qv_ratio = acc.qv / expected_qv;
    let sd = (dt * norm_sq).sqrt();
    let anderson_darling = anderson_darling_normal(&acc.sample, 0.0, sd);
    let lag1 = if acc.lag_den > 0.0 { acc.lag_num / acc.lag_den } else { 0.0 };
    let lag1_bound = z_for_level(LAG1_LEVEL) / (acc.lag_pairs.max(1) as f64).sqrt();
    let qv_pass = (qv_ratio - 1.0).abs() <= QV_TOL;
    let normal_pass = anderson_darling <= AD_CRITICAL_1PCT;
    let uncorrelated_pass = lag1.abs() <= lag1_bound;
    Ok(DecompositionReport {
        direction: direction.to_vec(),
        n_increments: acc.n,
        qv: acc.qv,
        expected_qv,
        qv_ratio,
        anderson_darling,
        lag1,
        lag1_bound,
        qv_pass,
        normal_pass,
        uncorrelated_pass,
        pass: qv_pass && normal_pass && uncorrelated_pass,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
struct DirectionAcc {
    n: usize,
    time: f64,
    qv: f64,
    sample: Vec<f64>,
    lag_num: f64,
    lag_den: f64,
    lag_pairs: usize,
}

impl DirectionAcc {
    fn merge(&mut self, o: DirectionAcc) {
        self.n += o.n;
        self.time += o.time;
        self.qv += o.qv;
        self.sample.extend(o.sample);
        self.lag_num += o.lag_num;
        self.lag_den += o.lag_den;
        self.lag_pairs += o.lag_pairs;
    }
}

fn pairing(l: &[f64], x: &[f64]) -> f64 {
    l.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Tests l(W) for Brownianity: quadratic variation t |l|_H^2, normal
/// increments (Anderson-Darling at 1%), no lag-one correlation.
pub fn check_decomposition(
    space: &DiscretePathSpace,
    traj: &ReflectedTrajectory,
    l: &[f64],
) -> Result<DecompositionReport> {
    if l.len() != space.len() {
        return Err(Error::DimensionMismatch { expected: space.len(), got: l.len() });
    }
    let incs: Vec<f64> = traj.driver.iter().map(|w| pairing(l, w)).collect();
    let mut acc = DirectionAcc::default();
    acc.absorb_offset(&incs, traj.dt_sim, incs.len().div_ceil(AD_SAMPLE_CAP).max(1), 0);
    decomposition_report(l, &acc, traj.dt_sim, space.dual_norm_sq(l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusReport {
    pub events: usize,
    pub single_touch: usize,
    pub multi_touch: usize,
    /// Events whose state touches at no grid time within the tolerance.
    pub no_touch: usize,
    pub fraction: f64,
    pub pass: bool,
}

impl LocusReport {
    fn from_counts(events: usize, single_touch: usize, multi_touch: usize) -> Self {
        let fraction = if events == 0 { 1.0 } else { single_touch as f64 / events as f64 };
        Self {
            events,
            single_touch,
            multi_touch,
            no_touch: events - single_touch - multi_touch,
            fraction,
            pass: fraction >= SINGLE_TOUCH_FLOOR,
        }
    }
}

/// Share of reflection events at which exactly one grid time touches the
/// boundary (|q| <= tol).
pub fn check_reflection_locus(space: &DiscretePathSpace, traj: &ReflectedTrajectory, tol: f64) -> LocusReport {
    let (mut single, mut multi) = (0, 0);
    for e in &traj.events {
        match space.touching(&traj.states[e.step], tol) {
            1 => single += 1,
            0 => {}
            _ => multi += 1,
        }
    }
    LocusReport::from_counts(traj.events.len(), single, multi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub t: f64,
    /// Largest |estimate - exact| / standard error over mean entries.
    pub mean_max_z: f64,
    /// Same over covariance entries.
    pub cov_max_z: f64,
    /// Per-entry cut-offs: each family as a whole is rejected as often as
    /// a single comparison at three standard errors.
    pub mean_threshold: f64,
    pub cov_threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_trajectories: usize,
    pub n_steps: usize,
    pub failures: usize,
    pub mean_local_time: f64,
    pub decomposition: Vec<DecompositionReport>,
    pub locus: LocusReport,
    pub marginal: Option<MarginalCheck>,
    /// Final states, one row per trajectory.
    #[serde(skip)]
    pub finals: Vec<Vec<f64>>,
}

struct TrajSummary {
    accs: Vec<DirectionAcc>,
    local_time: f64,
    events: usize,
    single: usize,
    multi: usize,
    failed: bool,
    last: Vec<f64>,
}

/// Runs `n_traj` independent trajectories (stream = index) and pools the
/// decomposition and locus statistics without storing the trajectories.
/// With `marginal` set, the final states are compared against the
/// unconstrained Ornstein-Uhlenbeck law.
pub fn simulate_ensemble(
    space: &DiscretePathSpace,
    x0: &[f64],
    opts: &RouOptions,
    n_traj: usize,
    directions: &[Vec<f64>],
    touch_tol: f64,
    marginal: bool,
    exec: Exec,
) -> Result<EnsembleReport> {
    check_start(space, x0)?;
    let n = opts.n_steps()?;
    if n_traj < 2 {
        return Err(Error::InvalidArgument("ensemble needs at least two trajectories".into()));
    }
    for l in directions {
        if l.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), got: l.len() });
        }
    }
    let stride = (n_traj * n).div_ceil(AD_SAMPLE_CAP).max(1);
    let summaries: Vec<TrajSummary> = exec.map(n_traj, |t| {
        let mut stepper = Stepper::new(space, *opts, t as u64);
        let mut x = x0.to_vec();
        let mut incs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); directions.len()];
        let (mut a, mut events, mut single, mut multi, mut failed) = (0.0, 0, 0, 0, false);
        for _ in 0..n {
            match stepper.advance(&mut x) {
                Ok(step) => {
                    for (l, inc) in directions.iter().zip(incs.iter_mut()) {
                        inc.push(pairing(l, &step.delta_w));
                    }
                    if step.delta_a > 0.0 {
                        a += step.delta_a;
                        events += 1;
                        match space.touching(&x, touch_tol) {
                            1 => single += 1,
                            0 => {}
                            _ => multi += 1,
                        }
                    }
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        let accs = incs
            .iter()
            .map(|inc| {
                let mut acc = DirectionAcc::default();
                // a common phase keeps the subsample independent of worker count
                acc.absorb_offset(inc, opts.dt_sim, stride, (t * n) % stride);
                acc
            })
            .collect();
        TrajSummary { accs, local_time: a, events, single, multi, failed, last: x }
    });
    let mut accs = vec![DirectionAcc::default(); directions.len()];
    let (mut lt, mut events, mut single, mut multi, mut failures) = (0.0, 0, 0, 0, 0);
    let mut finals = Vec::with_capacity(n_traj);
    for s in summaries {
        for (acc, o) in accs.iter_mut().zip(s.accs) {
            acc.merge(o);
        }
        lt += s.local_time;
        events += s.events;
        single += s.single;
        multi += s.multi;
        failures += s.failed as usize;
        finals.push(s.last);
    }
    let norm_sq: Vec<f64> = directions.iter().map(|l| space.dual_norm_sq(l)).collect();
    let decomposition = directions
        .iter()
        .zip(&accs)
        .zip(&norm_sq)
        .map(|((l, acc), &ns)| decomposition_report(l, acc, opts.dt_sim, ns))
        .collect::<Result<Vec<_>>>()?;
    let marginal = marginal.then(|| marginal_check(space, x0, n as f64 * opts.dt_sim, &finals));
    Ok(EnsembleReport {
        n_trajectories: n_traj,
        n_steps: n,
        failures,
        mean_local_time: lt / n_traj as f64,
        decomposition,
        locus: LocusReport::from_counts(events, single, multi),
        marginal,
        finals,
    })
}

impl DirectionAcc {
    fn absorb_offset(&mut self, incs: &[f64], dt: f64, stride: usize, offset: usize) {
        self.n += incs.len();
        self.time += incs.len() as f64 * dt;
        for (k, v) in incs.iter().enumerate() {
            self.qv += v * v;
            self.lag_den += v * v;
            if k + 1 < incs.len() {
                self.lag_num += v * incs[k + 1];
                self.lag_pairs += 1;
            }
            if (k + offset).is_multiple_of(stride) {
                self.sample.push(*v);
            }
        }
    }
}

/// Entrywise comparison of sample mean and covariance with the exact
/// unconstrained law, in units of their standard errors.
pub fn marginal_check(space: &DiscretePathSpace, x0: &[f64], t: f64, finals: &[Vec<f64>]) -> MarginalCheck {
    let (mean, cov) = space.ou_marginal(x0, t);
    let m = mean.len();
    let nf = finals.len() as f64;
    let emp_mean: Vec<f64> = (0..m).map(|a| finals.iter().map(|x| x[a]).sum::<f64>() / nf).collect();
    let mut mean_max_z: f64 = 0.0;
    for a in 0..m {
        let se = (cov[a * m + a] / nf).sqrt();
        mean_max_z = mean_max_z.max((emp_mean[a] - mean[a]).abs() / se);
    }
    let mut cov_max_z: f64 = 0.0;
    for a in 0..m {
        for b in a..m {
            let c = finals.iter().map(|x| (x[a] - emp_mean[a]) * (x[b] - emp_mean[b])).sum::<f64>() / (nf - 1.0);
            let se = ((cov[a * m + a] * cov[b * m + b] + cov[a * m + b].powi(2)) / nf).sqrt();
            cov_max_z = cov_max_z.max((c - cov[a * m + b]).abs() / se);
        }
    }
    let mean_threshold = family_threshold(m);
    let cov_threshold = family_threshold(m * (m + 1) / 2);
    MarginalCheck {
        t,
        mean_max_z,
        cov_max_z,
        mean_threshold,
        cov_threshold,
        pass: mean_max_z <= mean_threshold && cov_max_z <= cov_threshold,
    }
}

/// Sidak cut-off for `k` two-sided comparisons with the family-wise level
/// of one comparison at 3 standard errors.
pub fn family_threshold(k: usize) -> f64 {
    let single = 1.0 - 2.0 * (1.0 - crate::stats::normal_cdf(3.0));
    crate::stats::z_for_level(single.powf(1.0 / k.max(1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub strength: f64,
    /// Cameron-Martin distance of the final states.
    pub final_distance: f64,
    pub max_distance: f64,
    pub local_time_projection: f64,
    pub local_time_penalization: f64,
    /// Largest constraint violation (-q) seen along the penalized run.
    pub max_violation: f64,
    pub projection_failure: Option<String>,
}

/// Runs the projection and penalization schemes on the same noise and
/// reports how far apart they end up.
pub fn compare_schemes(
    space: &DiscretePathSpace,
    x0: &[f64],
    opts: &RouOptions,
    strength: f64,
) -> Result<SchemeComparison> {
    if !(strength > 0.0) {
        return Err(Error::InvalidArgument(format!("penalization strength must be positive, got {strength}")));
    }
    let proj = simulate_rou(space, x0, &RouOptions { scheme: Scheme::Projection, ..*opts })?;
    let pen = simulate_rou(space, x0, &RouOptions { scheme: Scheme::Penalization { strength }, ..*opts })?;
    let steps = proj.states.len().min(pen.states.len());
    let dist = |k: usize| {
        let diff: Vec<f64> = proj.states[k].iter().zip(&pen.states[k]).map(|(a, b)| a - b).collect();
        space.cm_norm(&diff)
    };
    let max_distance = (0..steps).map(dist).fold(0.0, f64::max);
    let max_violation = pen
        .states
        .iter()
        .flat_map(|x| (0..space.n_grid).map(|i| -space.domain.q(space.value(x, i))).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    Ok(SchemeComparison {
        strength,
        final_distance: dist(steps - 1),
        max_distance,
        local_time_projection: *proj.local_time.last().expect("nonempty"),
        local_time_penalization: *pen.local_time.last().expect("nonempty"),
        max_violation,
        projection_failure: proj.failure,
    })
}

/// The functional a . x(t_i), as a vector in the path space.
pub fn point_functional(space: &DiscretePathSpace, i: usize, a: &[f64]) -> Result<Vec<f64>> {
    if i == 0 || i > space.n_grid || a.len() != space.d {
        return Err(Error::InvalidArgument(format!("grid index {i} or direction length {} out of range", a.len())));
    }
    let mut l = vec![0.0; space.len()];
    l[(i - 1) * space.d..i * space.d].copy_from_slice(a);
    Ok(l)
}
