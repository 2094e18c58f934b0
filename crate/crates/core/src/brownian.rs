//! Brownian paths on a uniform grid, the first-passage law of drifted
//! Brownian motion, and the path functionals inf q(w(t)) and hitting times.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{in_tube, Domain, SingularSetApprox};
use crate::quadrature::Quadrature;
use crate::rng::stream_rng;

/// A d-dimensional path sampled at `n_steps + 1` equally spaced times in
/// [0, horizon]; `values` is row-major with one row per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub d: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// A path that stays at `x` for `n_steps` steps.
    pub fn constant(x: &[f64], horizon: f64, n_steps: usize) -> Self {
        let values = x.iter().cloned().cycle().take(x.len() * (n_steps + 1)).collect();
        Self { d: x.len(), horizon, n_steps, values }
    }
}

/// Streaming Brownian motion: yields the grid positions one step at a time,
/// with the same increments as [`sample_path`] for the same (seed, stream).
pub struct Walker {
    rng: ChaCha8Rng,
    sd: f64,
    pos: Vec<f64>,
}

impl Walker {
    pub fn new(start: &[f64], dt: f64, seed: u64, stream: u64) -> Self {
        Self { rng: stream_rng(seed, stream), sd: dt.sqrt(), pos: start.to_vec() }
    }

    pub fn position(&self) -> &[f64] {
        &self.pos
    }

    pub fn step(&mut self) -> &[f64] {
        for p in self.pos.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *p += self.sd * z;
        }
        &self.pos
    }
}

pub fn sample_path(d: usize, horizon: f64, n_steps: usize, start: &[f64], seed: u64, stream: u64) -> Result<PathSample> {
    ensure_dim(d, start.len())?;
    if n_steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample_path needs n_steps >= 1 and T > 0, got n_steps={n_steps}, T={horizon}"
        )));
    }
    let mut w = Walker::new(start, horizon / n_steps as f64, seed, stream);
    let mut values = Vec::with_capacity(d * (n_steps + 1));
    values.extend_from_slice(start);
    for _ in 0..n_steps {
        values.extend_from_slice(w.step());
    }
    Ok(PathSample { d, horizon, n_steps, values })
}

/// Law of eta = inf{t : C t + S_t <= -r} for a standard Brownian motion S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageLaw {
    pub drift_coeff: f64,
    pub barrier: f64,
}

/// Residual quadrature error accepted by [`FirstPassageLaw`] integrals.
const FP_QUAD_TOL: f64 = 1e-8;

impl FirstPassageLaw {
    pub fn new(drift_coeff: f64, barrier: f64) -> Result<Self> {
        if !(drift_coeff >= 0.0 && drift_coeff.is_finite() && barrier > 0.0 && barrier.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "first-passage law needs C >= 0 and r > 0, got C={drift_coeff}, r={barrier}"
            )));
        }
        Ok(Self { drift_coeff, barrier })
    }

    /// The drift (d-1)/(2 delta) attached to an exterior-ball radius delta.
    pub fn drift_for(d: usize, delta: f64) -> f64 {
        if delta.is_infinite() {
            0.0
        } else {
            (d as f64 - 1.0) / (2.0 * delta)
        }
    }

    fn density_unchecked(&self, t: f64) -> f64 {
        let (c, r) = (self.drift_coeff, self.barrier);
        let a = r + c * t;
        r / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-(a * a) / (2.0 * t)).exp()
    }

    pub fn fp_density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("density needs t > 0, got {t}")));
        }
        Ok(self.density_unchecked(t))
    }

    /// Mass of the atom at +infinity.
    pub fn atom_at_infinity(&self) -> f64 {
        -(-2.0 * self.drift_coeff * self.barrier).exp_m1()
    }

    /// Integral of the density over [u, infinity), through t = u / v^2 which
    /// maps the t^{-3/2} tail onto a bounded integrand on (0, 1].
    fn tail_integral(&self, u: f64) -> Result<f64> {
        let f = |v: f64| {
            if v <= 0.0 {
                if self.drift_coeff == 0.0 {
                    self.barrier * (2.0 / (std::f64::consts::PI * u)).sqrt()
                } else {
                    0.0
                }
            } else {
                self.density_unchecked(u / (v * v)) * 2.0 * u / (v * v * v)
            }
        };
        checked(Quadrature::default().integrate(f, 0.0, 1.0))
    }

    /// Mass of the density on (0, infinity).
    pub fn density_mass(&self) -> Result<f64> {
        let split = self.barrier * self.barrier;
        let head = checked(Quadrature::default().integrate(
            |t| if t <= 0.0 { 0.0 } else { self.density_unchecked(t) },
            0.0,
            split,
        ))?;
        Ok(head + self.tail_integral(split)?)
    }

    /// P(eta > u), computed as the tail integral of the density plus the atom.
    pub fn fp_survival(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::InvalidArgument(format!("survival needs u > 0, got {u}")));
        }
        if u.is_infinite() {
            return Ok(self.atom_at_infinity());
        }
        Ok((self.tail_integral(u)? + self.atom_at_infinity()).min(1.0))
    }
}

fn checked(res: Result<crate::quadrature::Integral>) -> Result<f64> {
    let res = res?;
    if res.error > FP_QUAD_TOL {
        Err(Error::Quadrature { estimate: res.value, error: res.error })
    } else {
        Ok(res.value)
    }
}

/// Minimum of q over the grid points of the path.
pub fn path_min_q(domain: &dyn Domain, path: &PathSample) -> Result<f64> {
    ensure_dim(domain.dim(), path.d)?;
    Ok(path.points().map(|x| domain.q(x)).fold(f64::INFINITY, f64::min))
}

/// First grid time at which `hit` holds.
pub fn first_hit_time(path: &PathSample, hit: impl Fn(&[f64]) -> bool) -> Option<f64> {
    path.points().position(hit).map(|i| path.time(i))
}

/// First grid time in the closed tube around a singular-set approximation.
pub fn tube_hit_time(approx: &SingularSetApprox, path: &PathSample) -> Option<f64> {
    first_hit_time(path, |x| in_tube(approx, x))
}

/// First grid time outside O_r = {q > r}.
pub fn exit_time(domain: &dyn Domain, r: f64, path: &PathSample) -> Option<f64> {
    first_hit_time(path, |x| domain.q(x) <= r)
}
