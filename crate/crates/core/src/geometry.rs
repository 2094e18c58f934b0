//! Open sets in R^d described by a signed-distance oracle and a boundary
//! sampler, together with exterior-ball radii, singular sets and tubes.

use std::sync::Arc;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::stream_rng;

pub type Point = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// An open set O in R^d.
///
/// `q` is the signed distance dist(x, O^c) - dist(x, O). Implementations may
/// assume `x.len() == self.dim()`; the free function [`signed_distance`]
/// performs the check.
pub trait Domain: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    /// Catalog identifier, e.g. `ball:d=2,r=1`.
    fn id(&self) -> String;

    fn q(&self, x: &[f64]) -> f64;

    /// `count` points on the boundary, deterministic in `seed`.
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>>;

    fn is_convex(&self) -> bool;

    /// Length scale used for default tolerances.
    fn diameter(&self) -> f64;

    fn contains_origin(&self) -> bool {
        self.q(&vec![0.0; self.dim()]) > 0.0
    }

    /// A nearest point of the boundary. The default runs a few Newton steps
    /// on q, which is exact for flat pieces and quadratically convergent near
    /// smooth ones.
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        let h = 1e-7 * self.diameter();
        let mut y = x.to_vec();
        for _ in 0..50 {
            let v = self.q(&y);
            if v.abs() <= 1e-14 * self.diameter() {
                break;
            }
            let g = central_gradient(self, &y, h);
            let gn = dot(&g, &g);
            if gn < 1e-12 {
                break;
            }
            for (yi, gi) in y.iter_mut().zip(&g) {
                *yi -= v * gi / gn;
            }
        }
        y
    }

    /// A nearest point of the closure of O.
    fn project_closure(&self, x: &[f64]) -> Point {
        if self.q(x) >= 0.0 {
            x.to_vec()
        } else {
            self.nearest_boundary_point(x)
        }
    }
}

/// q(x) with a dimension and finiteness check.
pub fn signed_distance(domain: &dyn Domain, x: &[f64]) -> Result<f64> {
    ensure_dim(domain.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate".into()));
    }
    Ok(domain.q(x))
}

fn central_gradient<D: Domain + ?Sized>(domain: &D, y: &[f64], h: f64) -> Point {
    let mut p = y.to_vec();
    (0..y.len())
        .map(|i| {
            p[i] = y[i] + h;
            let fp = domain.q(&p);
            p[i] = y[i] - h;
            let fm = domain.q(&p);
            p[i] = y[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn uniform_direction<R: Rng>(rng: &mut R, k: usize) -> Point {
    loop {
        let v: Point = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ball {
    pub d: usize,
    pub radius: f64,
}

impl Domain for Ball {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        format!("ball:d={},r={}", self.d, self.radius)
    }
    fn q(&self, x: &[f64]) -> f64 {
        self.radius - norm(x)
    }
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        Ok((0..count)
            .map(|_| uniform_direction(&mut rng, self.d).into_iter().map(|c| c * self.radius).collect())
            .collect())
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        let n = norm(x);
        if n == 0.0 {
            let mut y = vec![0.0; self.d];
            y[0] = self.radius;
            y
        } else {
            x.iter().map(|c| c * self.radius / n).collect()
        }
    }
}

/// The half-space {x_d < b}.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub d: usize,
    pub b: f64,
}

impl Domain for HalfSpace {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        format!("halfspace:d={},b={}", self.d, self.b)
    }
    fn q(&self, x: &[f64]) -> f64 {
        self.b - x[self.d - 1]
    }
    /// Samples the window [-1,1]^{d-1} of the boundary hyperplane.
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        Ok((0..count)
            .map(|_| {
                let mut y: Point = (0..self.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                y[self.d - 1] = self.b;
                y
            })
            .collect())
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn diameter(&self) -> f64 {
        2.0
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        let mut y = x.to_vec();
        y[self.d - 1] = self.b;
        y
    }
    fn project_closure(&self, x: &[f64]) -> Point {
        let mut y = x.to_vec();
        y[self.d - 1] = y[self.d - 1].min(self.b);
        y
    }
}

/// The open cube (-a, a)^d.
#[derive(Debug, Clone)]
pub struct Cube {
    pub d: usize,
    pub half: f64,
}

impl Domain for Cube {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        format!("box:d={},a={}", self.d, self.half)
    }
    fn q(&self, x: &[f64]) -> f64 {
        let excess: Point = x.iter().map(|c| c.abs() - self.half).collect();
        let worst = excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if worst <= 0.0 {
            -worst
        } else {
            -excess.iter().map(|e| e.max(0.0).powi(2)).sum::<f64>().sqrt()
        }
    }
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        Ok((0..count)
            .map(|_| {
                let mut y: Point =
                    (0..self.d).map(|_| rng.random_range(-self.half..=self.half)).collect();
                let face = rng.random_range(0..self.d);
                y[face] = if rng.random::<bool>() { self.half } else { -self.half };
                y
            })
            .collect())
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn diameter(&self) -> f64 {
        2.0 * self.half * (self.d as f64).sqrt()
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        if self.q(x) <= 0.0 {
            return x.iter().map(|c| c.clamp(-self.half, self.half)).collect();
        }
        let (i, _) = x
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("d >= 1");
        let mut y = x.to_vec();
        y[i] = self.half.copysign(x[i]);
        y
    }
    fn project_closure(&self, x: &[f64]) -> Point {
        x.iter().map(|c| c.clamp(-self.half, self.half)).collect()
    }
}

/// O = R^d; q is identically +infinity and the boundary is empty.
#[derive(Debug, Clone)]
pub struct Whole {
    pub d: usize,
}

impl Domain for Whole {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        format!("whole:d={}", self.d)
    }
    fn q(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn boundary_sample(&self, _count: usize, _seed: u64) -> Result<Vec<Point>> {
        Ok(Vec::new())
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn diameter(&self) -> f64 {
        1.0
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        x.iter().map(|_| f64::INFINITY).collect()
    }
    fn project_closure(&self, x: &[f64]) -> Point {
        x.to_vec()
    }
}

/// Complement of the closed quadrant {x_1 >= a, x_2 >= a}; further
/// coordinates are free.
#[derive(Debug, Clone)]
pub struct Notch {
    pub d: usize,
    pub a: f64,
}

/// Length of the boundary rays covered by the notch sampler.
const NOTCH_WINDOW: f64 = 2.0;

impl Domain for Notch {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        format!("notch:d={},a={}", self.d, self.a)
    }
    fn q(&self, x: &[f64]) -> f64 {
        let u = x[0] - self.a;
        let v = x[1] - self.a;
        if u >= 0.0 && v >= 0.0 {
            -u.min(v)
        } else {
            (u.min(0.0).powi(2) + v.min(0.0).powi(2)).sqrt()
        }
    }
    /// Half of the points are log-uniform in the distance to the corner.
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        Ok((0..count)
            .map(|i| {
                let t = if i % 2 == 0 {
                    rng.random_range(0.0..=NOTCH_WINDOW)
                } else {
                    NOTCH_WINDOW * 1e-4f64.powf(rng.random::<f64>())
                };
                let mut y: Point = (0..self.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                if rng.random::<bool>() {
                    y[0] = self.a;
                    y[1] = self.a + t;
                } else {
                    y[0] = self.a + t;
                    y[1] = self.a;
                }
                y
            })
            .collect())
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn diameter(&self) -> f64 {
        2.0 * NOTCH_WINDOW
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        let mut y = x.to_vec();
        let u = x[0] - self.a;
        let v = x[1] - self.a;
        if u >= 0.0 && v >= 0.0 {
            if u <= v {
                y[0] = self.a;
            } else {
                y[1] = self.a;
            }
        } else {
            y[0] = x[0].max(self.a);
            y[1] = x[1].max(self.a);
        }
        y
    }
}

/// B(0,2) minus the solid cone {x_k in [1,2), |(x_1..x_{k-1})| <= s (x_k - 1)},
/// acting on the first `k` coordinates and extruded along the remaining
/// `d - k` ones. With `k == d` this is a single inward spike with tip
/// (0,...,0,1).
#[derive(Debug, Clone)]
pub struct Spike {
    pub d: usize,
    pub k: usize,
    pub slope: f64,
    junction: (f64, f64),
}

/// Half-width of the window sampled along the extruded coordinates.
const PRISM_WINDOW: f64 = 1.0;

impl Spike {
    pub fn new(d: usize, k: usize, slope: f64) -> Result<Self> {
        if k < 2 || k > d {
            return Err(Error::InvalidArgument(format!("spike needs 2 <= k <= d, got k={k}, d={d}")));
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::InvalidArgument(format!("spike slope must be positive, got {slope}")));
        }
        // Cone line rho = s (z - 1) meets rho^2 + z^2 = 4.
        let s2 = slope * slope;
        let (a, b, c) = (s2 + 1.0, -2.0 * s2, s2 - 4.0);
        let z = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        Ok(Self { d, k, slope, junction: (slope * (z - 1.0), z) })
    }

    pub fn tip(&self) -> Point {
        let mut p = vec![0.0; self.d];
        p[self.k - 1] = 1.0;
        p
    }

    fn meridian(&self, x: &[f64]) -> (f64, f64) {
        let rho = x[..self.k - 1].iter().map(|c| c * c).sum::<f64>().sqrt();
        (rho, x[self.k - 1])
    }

    fn in_cone(&self, rho: f64, z: f64) -> bool {
        (1.0..2.0).contains(&z) && rho <= self.slope * (z - 1.0)
    }

    /// Distance in the meridian half-plane to the profile curve (sphere arc
    /// below the junction, then the cone segment up to the tip).
    fn profile_distance(&self, rho: f64, z: f64) -> f64 {
        let (jr, jz) = self.junction;
        let r = rho.hypot(z);
        let arc = if r == 0.0 || z / r <= jz / 2.0 {
            (2.0 - r).abs()
        } else {
            (rho - jr).hypot(z - jz)
        };
        let (ux, uz) = (jr, jz - 1.0);
        let len2 = ux * ux + uz * uz;
        let t = ((rho * ux + (z - 1.0) * uz) / len2).clamp(0.0, 1.0);
        let seg = (rho - t * ux).hypot(z - 1.0 - t * uz);
        arc.min(seg)
    }
}

impl Domain for Spike {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        if self.k == self.d {
            format!("example-spike:d={},s={}", self.d, self.slope)
        } else {
            format!("spike-prism:d={},k={},s={}", self.d, self.k, self.slope)
        }
    }
    fn q(&self, x: &[f64]) -> f64 {
        let (rho, z) = self.meridian(x);
        let dist = self.profile_distance(rho, z);
        if rho.hypot(z) < 2.0 && !self.in_cone(rho, z) {
            dist
        } else {
            -dist
        }
    }
    /// Half of the points lie on the cone with log-uniform distance to the
    /// tip, so that small exterior-ball radii are represented.
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        let (jr, jz) = self.junction;
        let len = jr.hypot(jz - 1.0);
        let (sin_a, cos_a) = (jr / len, (jz - 1.0) / len);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let mut y = vec![0.0; self.d];
            if i % 2 == 0 {
                let l = len * 1e-4f64.powf(rng.random::<f64>());
                let u = uniform_direction(&mut rng, self.k - 1);
                for (yj, uj) in y.iter_mut().zip(&u) {
                    *yj = l * sin_a * uj;
                }
                y[self.k - 1] = 1.0 + l * cos_a;
            } else {
                loop {
                    let u = uniform_direction(&mut rng, self.k);
                    let (rho, z) = self.meridian(&u);
                    if !self.in_cone(2.0 * rho, 2.0 * z) {
                        for (yj, uj) in y.iter_mut().zip(&u) {
                            *yj = 2.0 * uj;
                        }
                        break;
                    }
                }
            }
            for yj in y.iter_mut().skip(self.k) {
                *yj = rng.random_range(-PRISM_WINDOW..=PRISM_WINDOW);
            }
            out.push(y);
        }
        Ok(out)
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn diameter(&self) -> f64 {
        4.0
    }
}

/// A domain known only through boundary samples.
///
/// |q| is the distance to the nearest sample; its sign comes from an outward
/// normal fitted by PCA on the nearest neighbours of that sample, oriented
/// away from the origin. The representation therefore assumes the domain is
/// star-shaped about 0 and is accurate to about the sample spacing.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub d: usize,
    pub source: String,
    points: Vec<Point>,
    normals: Vec<Point>,
    spacing: f64,
}

/// Neighbours used for normal fitting.
const PCA_NEIGHBOURS: usize = 8;

impl Sampled {
    pub fn new(source: String, points: Vec<Point>) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if points.len() < d + 1 || d == 0 {
            return Err(Error::InsufficientData(format!(
                "sampled domain needs at least d+1 boundary points, got {}",
                points.len()
            )));
        }
        let k = PCA_NEIGHBOURS.max(d + 1).min(points.len());
        let mut spacing: f64 = 0.0;
        let mut normals = Vec::with_capacity(points.len());
        for p in &points {
            let mut by_dist: Vec<(f64, usize)> =
                points.iter().enumerate().map(|(j, o)| (dist(p, o), j)).collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            spacing = spacing.max(by_dist.get(1).map_or(0.0, |v| v.0));
            let nbrs: Vec<&Point> = by_dist[..k].iter().map(|&(_, j)| &points[j]).collect();
            let mean: Point =
                (0..d).map(|c| nbrs.iter().map(|v| v[c]).sum::<f64>() / k as f64).collect();
            let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
            for v in &nbrs {
                let dv = nalgebra::DVector::from_iterator(d, v.iter().zip(&mean).map(|(a, b)| a - b));
                cov += &dv * dv.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let imin = eig.eigenvalues.imin();
            let mut n: Point = eig.eigenvectors.column(imin).iter().cloned().collect();
            if dot(&n, p) < 0.0 {
                n.iter_mut().for_each(|c| *c = -*c);
            }
            normals.push(n);
        }
        Ok(Self { d, source, points, normals, spacing })
    }

    /// Reads a CSV with a header row and `d` floating-point columns.
    pub fn from_csv(path: &str) -> Result<Self> {
        Self::new(format!("points:path={path}"), read_point_csv(path)?)
    }

    /// Largest nearest-neighbour distance between samples.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }
}

impl Domain for Sampled {
    fn dim(&self) -> usize {
        self.d
    }
    fn id(&self) -> String {
        self.source.clone()
    }
    fn q(&self, x: &[f64]) -> f64 {
        let (i, r) = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist(x, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        let side: f64 = self.normals[i].iter().zip(x.iter().zip(&self.points[i])).map(|(n, (a, b))| n * (a - b)).sum();
        if side > 0.0 {
            -r
        } else {
            r
        }
    }
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let mut rng = stream_rng(seed, 0);
        if count >= self.points.len() {
            return Ok(self.points.clone());
        }
        Ok((0..count).map(|_| self.points[rng.random_range(0..self.points.len())].clone()).collect())
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn diameter(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for p in &self.points {
            for c in 0..self.d {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        dist(&lo, &hi)
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        self.points
            .iter()
            .min_by(|a, b| dist(x, a).total_cmp(&dist(x, b)))
            .expect("nonempty")
            .clone()
    }
}

/// Reads a header-prefixed CSV of points with a common column count.
pub fn read_point_csv(path: &str) -> Result<Vec<Point>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let width = reader
        .headers()
        .map_err(|e| Error::PointFile { path: path.into(), message: e.to_string() })?
        .len();
    let mut points = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::PointFile { path: path.into(), message: e.to_string() })?;
        if rec.len() != width {
            return Err(Error::PointFile {
                path: path.into(),
                message: format!("row {} has {} columns, header has {width}", line + 2, rec.len()),
            });
        }
        let p: std::result::Result<Point, _> = rec.iter().map(str::parse::<f64>).collect();
        let p = p.map_err(|e| Error::PointFile {
            path: path.into(),
            message: format!("row {}: {e}", line + 2),
        })?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::PointFile { path: path.into(), message: "no rows".into() });
    }
    Ok(points)
}

/// Image of a domain under x -> R x + t with R orthogonal.
#[derive(Debug, Clone)]
pub struct Rigid {
    pub inner: Arc<dyn Domain>,
    /// Row-major d x d orthogonal matrix.
    pub rotation: Vec<f64>,
    pub shift: Point,
}

impl Rigid {
    fn to_inner(&self, x: &[f64]) -> Point {
        let d = self.inner.dim();
        let y: Point = x.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        (0..d).map(|j| (0..d).map(|i| self.rotation[i * d + j] * y[i]).sum()).collect()
    }

    fn to_outer(&self, y: &[f64]) -> Point {
        let d = self.inner.dim();
        (0..d)
            .map(|i| self.shift[i] + (0..d).map(|j| self.rotation[i * d + j] * y[j]).sum::<f64>())
            .collect()
    }

    /// Rotation by `angle` in the (0,1) coordinate plane.
    pub fn planar(inner: Arc<dyn Domain>, angle: f64, shift: Point) -> Self {
        let d = inner.dim();
        let mut rotation = vec![0.0; d * d];
        for i in 0..d {
            rotation[i * d + i] = 1.0;
        }
        let (s, c) = angle.sin_cos();
        rotation[0] = c;
        rotation[1] = -s;
        rotation[d] = s;
        rotation[d + 1] = c;
        Self { inner, rotation, shift }
    }

    pub fn map_point(&self, y: &[f64]) -> Point {
        self.to_outer(y)
    }
}

impl Domain for Rigid {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn id(&self) -> String {
        format!("rigid({})", self.inner.id())
    }
    fn q(&self, x: &[f64]) -> f64 {
        self.inner.q(&self.to_inner(x))
    }
    fn boundary_sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        Ok(self.inner.boundary_sample(count, seed)?.iter().map(|y| self.to_outer(y)).collect())
    }
    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }
    fn nearest_boundary_point(&self, x: &[f64]) -> Point {
        self.to_outer(&self.inner.nearest_boundary_point(&self.to_inner(x)))
    }
    fn project_closure(&self, x: &[f64]) -> Point {
        self.to_outer(&self.inner.project_closure(&self.to_inner(x)))
    }
}

/// Catalog names accepted by [`parse_domain`], with their parameters.
pub const CATALOG: &[(&str, &str)] = &[
    ("ball", "d, r=1: open ball B(0,r)"),
    ("box", "d, a=1: open cube (-a,a)^d"),
    ("halfspace", "d, b=1: half-space {x_d < b}"),
    ("whole", "d: all of R^d (empty boundary)"),
    ("notch", "d=2, a=1: complement of the quadrant {x_1>=a, x_2>=a}"),
    ("example-spike", "d=4, s=1: B(0,2) minus an inward cone with tip (0,..,0,1)"),
    ("spike-prism", "d=5, k=3, s=1: spike in the first k coordinates, extruded"),
    ("points", "path: sampled boundary from a CSV file"),
];

struct Params<'a> {
    id: &'a str,
    kv: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(id: &'a str) -> Result<(&'a str, Self)> {
        let (name, rest) = id.split_once(':').unwrap_or((id, ""));
        let mut kv = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("`{part}` in `{id}` is not key=value")))?;
            kv.push((k.trim(), v.trim()));
        }
        Ok((name.trim(), Self { id, kv }))
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{v}` for `{key}` in `{}`", self.id))),
            None => default.ok_or_else(|| Error::InvalidArgument(format!("`{}` requires `{key}`", self.id))),
        }
    }

    fn finish(&self, allowed: &[&str]) -> Result<()> {
        match self.kv.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(Error::InvalidArgument(format!("unknown parameter `{k}` in `{}`", self.id))),
            None => Ok(()),
        }
    }
}

fn positive_dim(d: usize) -> Result<usize> {
    if d == 0 {
        Err(Error::InvalidArgument("dimension must be positive".into()))
    } else {
        Ok(d)
    }
}

/// Builds a domain from a catalog identifier such as `ball:d=2,r=1`.
pub fn parse_domain(id: &str) -> Result<Arc<dyn Domain>> {
    let (name, p) = Params::parse(id)?;
    let domain: Arc<dyn Domain> = match name {
        "ball" => {
            p.finish(&["d", "r"])?;
            Arc::new(Ball { d: positive_dim(p.get("d", None)?)?, radius: p.get("r", Some(1.0))? })
        }
        "box" => {
            p.finish(&["d", "a"])?;
            Arc::new(Cube { d: positive_dim(p.get("d", None)?)?, half: p.get("a", Some(1.0))? })
        }
        "halfspace" => {
            p.finish(&["d", "b"])?;
            Arc::new(HalfSpace { d: positive_dim(p.get("d", None)?)?, b: p.get("b", Some(1.0))? })
        }
        "whole" => {
            p.finish(&["d"])?;
            Arc::new(Whole { d: positive_dim(p.get("d", None)?)? })
        }
        "notch" => {
            p.finish(&["d", "a"])?;
            let d: usize = p.get("d", Some(2))?;
            if d < 2 {
                return Err(Error::InvalidArgument("notch needs d >= 2".into()));
            }
            Arc::new(Notch { d, a: p.get("a", Some(1.0))? })
        }
        "example-spike" => {
            p.finish(&["d", "s"])?;
            let d = p.get("d", Some(4))?;
            Arc::new(Spike::new(d, d, p.get("s", Some(1.0))?)?)
        }
        "spike-prism" => {
            p.finish(&["d", "k", "s"])?;
            Arc::new(Spike::new(p.get("d", Some(5))?, p.get("k", Some(3))?, p.get("s", Some(1.0))?)?)
        }
        "points" => {
            p.finish(&["path"])?;
            let path: String = p.get("path", None)?;
            Arc::new(Sampled::from_csv(&path)?)
        }
        _ => return Err(Error::UnknownId(id.to_string())),
    };
    let r = domain.diameter();
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!("degenerate domain `{id}`")));
    }
    Ok(domain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorBallReport {
    pub point: Point,
    /// Certified lower bound on the exterior-ball radius; may be infinite.
    pub radius: f64,
    pub witness_center: Option<Point>,
}

/// Threshold on the disagreement of one-sided difference quotients above
/// which the boundary is treated as non-differentiable.
const KINK_THRESHOLD: f64 = 0.1;

/// Default certification parameters: (r_max, tol).
pub fn default_ball_params(domain: &dyn Domain) -> (f64, f64) {
    let diam = domain.diameter();
    (1e3 * diam, 1e-6 * diam)
}

/// Outward unit normal at a boundary point, or `None` at a kink.
pub fn outward_normal(domain: &dyn Domain, y: &[f64], h: f64) -> Option<Point> {
    let q0 = domain.q(y);
    let mut p = y.to_vec();
    let mut g = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        p[i] = y[i] + h;
        let fwd = (domain.q(&p) - q0) / h;
        p[i] = y[i] - h;
        let bwd = (q0 - domain.q(&p)) / h;
        p[i] = y[i];
        if !(fwd.is_finite() && bwd.is_finite()) || (fwd - bwd).abs() > KINK_THRESHOLD {
            return None;
        }
        g.push(-0.5 * (fwd + bwd));
    }
    let n = norm(&g);
    if n < 0.5 {
        return None;
    }
    Some(g.into_iter().map(|c| c / n).collect())
}

/// Lower bound on the exterior-ball radius at the boundary point `y`.
///
/// The candidate ball of radius r is centred at z = y + r n with n the
/// finite-difference outward normal; it is accepted when dist(z, O) >= r,
/// which is read off q globally. Acceptance is monotone in r, so the
/// supremum is located by bisection to within `tol`. A radius certified at
/// `r_max` is reported as +infinity.
pub fn exterior_ball_radius(domain: &dyn Domain, y: &[f64], r_max: f64, tol: f64) -> Result<ExteriorBallReport> {
    ensure_dim(domain.dim(), y.len())?;
    if !(r_max > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument("r_max and tol must be positive".into()));
    }
    let residual = domain.q(y).abs();
    if residual > tol {
        return Err(Error::NotOnBoundary { residual, tol });
    }
    let Some(n) = outward_normal(domain, y, tol) else {
        return Ok(ExteriorBallReport { point: y.to_vec(), radius: 0.0, witness_center: None });
    };
    let centre = |r: f64| -> Point { y.iter().zip(&n).map(|(a, b)| a + r * b).collect() };
    let accepts = |r: f64| {
        let z = centre(r);
        let slack = 8.0 * f64::EPSILON * (1.0 + norm(&z) + r);
        -domain.q(&z) >= r - residual - slack
    };
    if accepts(r_max) {
        return Ok(ExteriorBallReport { point: y.to_vec(), radius: f64::INFINITY, witness_center: Some(centre(r_max)) });
    }
    let (mut lo, mut hi) = (0.0, r_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if accepts(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let witness_center = (lo > 0.0).then(|| centre(lo));
    Ok(ExteriorBallReport { point: y.to_vec(), radius: lo, witness_center })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSetApprox {
    pub r: f64,
    pub points: Vec<Point>,
    pub tube_radius: f64,
}

impl SingularSetApprox {
    pub fn empty(r: f64) -> Self {
        Self { r, points: Vec::new(), tube_radius: r }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sampled boundary points together with their exterior-ball radii.
pub fn boundary_radii(domain: &dyn Domain, n_samples: usize, seed: u64) -> Result<Vec<(Point, f64)>> {
    let (r_max, tol) = default_ball_params(domain);
    let samples = domain.boundary_sample(n_samples, seed)?;
    crate::exec::Exec::default().map(samples.len(), |i| {
        let y = &samples[i];
        exterior_ball_radius(domain, y, r_max, tol).map(|rep| (y.clone(), rep.radius))
    })
    .into_iter()
    .collect()
}

/// Boundary samples whose exterior-ball radius is below `r`.
pub fn singular_set(domain: &dyn Domain, r: f64, n_samples: usize, seed: u64) -> Result<SingularSetApprox> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("singular_set needs r > 0, got {r}")));
    }
    let radii = boundary_radii(domain, n_samples, seed)?;
    Ok(singular_set_from(&radii, r))
}

/// Filters precomputed radii; lets schedules share one boundary sample.
pub fn singular_set_from(radii: &[(Point, f64)], r: f64) -> SingularSetApprox {
    SingularSetApprox {
        r,
        points: radii.iter().filter(|(_, d)| *d < r).map(|(p, _)| p.clone()).collect(),
        tube_radius: r,
    }
}

/// Discrete membership test for the tube A_r.
pub fn in_tube(approx: &SingularSetApprox, x: &[f64]) -> bool {
    let r2 = approx.tube_radius * approx.tube_radius;
    approx
        .points
        .iter()
        .any(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
}
