//! Riesz and logarithmic capacities of compact sets, computed by minimizing
//! a discrete energy over probability weights on a point cloud.
//!
//! A purely off-diagonal discrete energy is not a usable objective: its
//! minimum over the simplex is zero at any vertex. Each point therefore
//! carries a cell (a k-dimensional ball of the same measure as its share of
//! the set) and the diagonal of the energy matrix is the mean kernel value
//! over that cell. The off-diagonal sum is still reported.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{boundary_radii, dist, read_point_csv, singular_set_from, Domain, Point};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszKernel {
    pub beta: f64,
}

impl RieszKernel {
    pub fn new(beta: f64) -> Self {
        Self { beta }
    }

    /// t^{-beta} for beta != 0, max(log(1/t), 1) for beta = 0.
    pub fn eval(&self, t: f64) -> f64 {
        if self.beta == 0.0 {
            (-t.ln()).max(1.0)
        } else {
            t.powf(-self.beta)
        }
    }

    /// Mean of g(|X - Y|) for X, Y independent and uniform on a
    /// k-dimensional ball of radius `radius`; +inf when it diverges.
    pub fn ball_self_energy(&self, k: usize, radius: f64) -> f64 {
        if self.beta > 0.0 && self.beta >= k as f64 {
            return f64::INFINITY;
        }
        let kf = k as f64;
        let two_r = 2.0 * radius;
        // Density of |X - Y| times g, with u = 2R s.
        let f = |s: f64| {
            if s <= 0.0 || s >= 1.0 {
                return 0.0;
            }
            let u = two_r * s;
            let density = kf / radius.powf(kf) * u.powf(kf - 1.0) * beta_reg((kf + 1.0) / 2.0, 0.5, 1.0 - s * s);
            self.eval(u) * density * two_r
        };
        let quad = Quadrature { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 4000 };
        match quad.integrate(f, 0.0, 1.0) {
            Ok(v) => v.value,
            Err(Error::Quadrature { estimate, .. }) => estimate,
            Err(_) => f64::NAN,
        }
    }
}

/// Points with cell radii in a common intrinsic dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cloud {
    pub points: Vec<Point>,
    pub cell_radius: Vec<f64>,
    pub intrinsic_dim: usize,
}

impl Cloud {
    pub fn with_cells(points: Vec<Point>, cell_radius: Vec<f64>, intrinsic_dim: usize) -> Result<Self> {
        if points.len() != cell_radius.len() {
            return Err(Error::InvalidArgument("one cell radius per point required".into()));
        }
        if intrinsic_dim == 0 {
            return Err(Error::InvalidArgument("intrinsic dimension must be positive".into()));
        }
        if let Some(d) = points.first().map(|p| p.len()) {
            if let Some(bad) = points.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
        }
        Ok(Self { points, cell_radius, intrinsic_dim })
    }

    /// Cells of radius half the distance to the nearest other point.
    pub fn nearest_neighbour(points: Vec<Point>, intrinsic_dim: usize) -> Result<Self> {
        let radii = if points.len() < 2 {
            vec![0.0; points.len()]
        } else {
            Exec::default().map(points.len(), |i| {
                let p = &points[i];
                0.5 * points
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, o)| dist(p, o))
                    .fold(f64::INFINITY, f64::min)
            })
        };
        Self::with_cells(points, radii, intrinsic_dim)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            cell_radius: idx.iter().map(|&i| self.cell_radius[i]).collect(),
            intrinsic_dim: self.intrinsic_dim,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| p.iter().map(|v| v * c).collect()).collect(),
            cell_radius: self.cell_radius.iter().map(|r| r * c).collect(),
            intrinsic_dim: self.intrinsic_dim,
        }
    }
}

/// Equal-area partition of the sphere of radius `radius` in R^3 into `n`
/// cells (two polar caps and latitude bands), represented by cell centres.
pub fn sphere_cloud(n: usize, radius: f64) -> Result<Cloud> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("sphere partition needs at least 3 cells, got {n}")));
    }
    let nf = n as f64;
    let cap_z = 1.0 - 2.0 / nf;
    let cap_theta = cap_z.acos();
    let height = (4.0 * std::f64::consts::PI / nf).sqrt();
    let n_bands = (((std::f64::consts::PI - 2.0 * cap_theta) / height).round() as usize).max(1);
    let mut counts = Vec::with_capacity(n_bands);
    let mut carry = 0.0;
    for b in 0..n_bands {
        let step = (std::f64::consts::PI - 2.0 * cap_theta) / n_bands as f64;
        let (t0, t1) = (cap_theta + b as f64 * step, cap_theta + (b + 1) as f64 * step);
        let ideal = (t0.cos() - t1.cos()) / 2.0 * nf;
        let c = (ideal + carry).round();
        carry += ideal - c;
        counts.push(c as i64);
    }
    let assigned: i64 = counts.iter().sum();
    *counts.last_mut().expect("n_bands >= 1") += n as i64 - 2 - assigned;
    if counts.iter().any(|&c| c < 1) {
        return Err(Error::InvalidArgument(format!("sphere partition degenerate at n = {n}")));
    }
    let on_sphere = |z: f64, phi: f64| {
        let s = (1.0 - z * z).max(0.0).sqrt();
        vec![radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
    };
    let mut points = vec![on_sphere(0.5 * (1.0 + cap_z), 0.0)];
    let mut cum = 1.0;
    let mut z_hi = cap_z;
    for &c in &counts {
        cum += c as f64;
        let z_lo = 1.0 - 2.0 * cum / nf;
        let z = 0.5 * (z_hi + z_lo);
        for i in 0..c {
            let phi = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / c as f64;
            points.push(on_sphere(z, phi));
        }
        z_hi = z_lo;
    }
    points.push(on_sphere(0.5 * (-1.0 + z_hi), 0.0));
    let cell = radius * 2.0 / nf.sqrt();
    Cloud::with_cells(points, vec![cell; n], 2)
}

/// The square [-a, a]^2 x {0}^{d-2} on an m x m grid of cell centres.
pub fn square_cloud(d: usize, m: usize, half: f64) -> Result<Cloud> {
    if d < 2 || m == 0 {
        return Err(Error::InvalidArgument("square needs d >= 2 and a positive grid size".into()));
    }
    let h = 2.0 * half / m as f64;
    let mut points = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut p = vec![0.0; d];
            p[0] = -half + (i as f64 + 0.5) * h;
            p[1] = -half + (j as f64 + 0.5) * h;
            points.push(p);
        }
    }
    let cell = h / std::f64::consts::PI.sqrt();
    Cloud::with_cells(points, vec![cell; m * m], 2)
}

/// A point fattened to a sphere of radius 1/n (a circle or a segment in low
/// dimension) carrying n cells. Capacities of these shrinking compact
/// neighbourhoods decrease to the capacity of the point.
pub fn singleton_cloud(p: &[f64], n: usize) -> Result<Cloud> {
    let d = p.len();
    let rho = 1.0 / n as f64;
    let shift = |q: Vec<f64>| -> Point {
        let mut out = p.to_vec();
        for (o, v) in out.iter_mut().zip(q) {
            *o += v;
        }
        out
    };
    match d {
        0 => Err(Error::InvalidArgument("point needs d >= 1".into())),
        1 => {
            let h = 2.0 * rho / n as f64;
            let pts = (0..n).map(|i| shift(vec![-rho + (i as f64 + 0.5) * h])).collect();
            Cloud::with_cells(pts, vec![0.5 * h; n], 1)
        }
        2 => {
            let pts = (0..n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                    shift(vec![rho * t.cos(), rho * t.sin()])
                })
                .collect();
            Cloud::with_cells(pts, vec![std::f64::consts::PI * rho / n as f64; n], 1)
        }
        _ => {
            let s = sphere_cloud(n.max(3), rho)?;
            let pts = s.points.into_iter().map(shift).collect();
            Cloud::with_cells(pts, s.cell_radius, 2)
        }
    }
}

/// Energy matrix (row-major), with cell self-energies on the diagonal.
pub fn energy_matrix(cloud: &Cloud, kernel: &RieszKernel, exec: Exec) -> Vec<f64> {
    let n = cloud.len();
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let diag: Vec<f64> = cloud
        .cell_radius
        .iter()
        .map(|&r| {
            *cache.entry(r.to_bits()).or_insert_with(|| {
                if r > 0.0 {
                    kernel.ball_self_energy(cloud.intrinsic_dim, r)
                } else {
                    f64::INFINITY
                }
            })
        })
        .collect();
    exec.map(n, |i| {
        (0..n)
            .map(|j| if i == j { diag[i] } else { kernel.eval(dist(&cloud.points[i], &cloud.points[j])) })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("weights must be a probability vector".into()));
    }
    Ok(())
}

/// Off-diagonal discrete energy sum_{i != j} g(|x_i - x_j|) w_i w_j.
pub fn riesz_energy(points: &[Point], weights: &[f64], kernel: &RieszKernel) -> Result<f64> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::InvalidArgument("need one weight per point and at least one point".into()));
    }
    check_simplex(weights)?;
    let mut total = 0.0;
    for i in 0..points.len() {
        if weights[i] == 0.0 {
            continue;
        }
        for j in 0..points.len() {
            if i == j || weights[j] == 0.0 {
                continue;
            }
            let t = dist(&points[i], &points[j]);
            if t == 0.0 && kernel.beta >= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += kernel.eval(t) * weights[i] * weights[j];
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the Frank-Wolfe gap falls below `tol` times the energy.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the energy after every iteration.
    pub record_history: bool,
    pub exec: Exec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 400_000, record_history: false, exec: Exec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub weights: Vec<f64>,
    /// w^T K w including cell self-energies.
    pub energy: f64,
    pub off_diagonal_energy: f64,
    pub capacity: f64,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    /// Set when non-positive curvature forced projected-gradient steps.
    pub used_projected_gradient: bool,
    pub history: Vec<f64>,
}

fn quad_form(k: &[f64], n: usize, w: &[f64]) -> f64 {
    (0..n)
        .filter(|&i| w[i] != 0.0)
        .map(|i| w[i] * (0..n).filter(|&j| w[j] != 0.0).map(|j| k[i * n + j] * w[j]).sum::<f64>())
        .sum()
}

fn mat_vec(k: &[f64], n: usize, w: &[f64]) -> Vec<f64> {
    (0..n).map(|i| (0..n).filter(|&j| w[j] != 0.0).map(|j| k[i * n + j] * w[j]).sum()).collect()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizes w^T K w over the simplex by pairwise Frank-Wolfe with exact
/// line search; on non-positive curvature it switches to projected gradient.
pub fn minimize_matrix(k: &[f64], n: usize, opts: &SolverOptions) -> EquilibriumSolution {
    let finite: Vec<usize> = (0..n).filter(|&i| k[i * n + i].is_finite()).collect();
    let mut w = vec![0.0; n];
    if finite.is_empty() {
        return EquilibriumSolution {
            weights: vec![1.0 / n as f64; n],
            energy: f64::INFINITY,
            off_diagonal_energy: f64::INFINITY,
            capacity: 0.0,
            iterations: 0,
            gap: 0.0,
            converged: true,
            used_projected_gradient: false,
            history: Vec::new(),
        };
    }
    for &i in &finite {
        w[i] = 1.0 / finite.len() as f64;
    }
    let mut g = mat_vec(k, n, &w);
    let mut f = quad_form(k, n, &w);
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut pg = false;
    let mut it = 0;
    while it < opts.max_iter {
        let i_fw = *finite.iter().min_by(|&&a, &&b| g[a].total_cmp(&g[b])).expect("nonempty");
        gap = 2.0 * (f - g[i_fw]);
        if gap <= opts.tol * f.abs() {
            converged = true;
            break;
        }
        it += 1;
        if pg {
            // Projected gradient with backtracking on the exact objective.
            let mut eta = 1.0 / (2.0 * finite.iter().map(|&i| k[i * n + i].abs()).fold(0.0, f64::max));
            loop {
                let trial: Vec<f64> = {
                    let v: Vec<f64> = finite.iter().map(|&i| w[i] - eta * 2.0 * g[i]).collect();
                    let p = project_simplex(&v);
                    let mut t = vec![0.0; n];
                    for (c, &i) in finite.iter().enumerate() {
                        t[i] = p[c];
                    }
                    t
                };
                let ft = quad_form(k, n, &trial);
                if ft <= f || eta < 1e-300 {
                    if ft <= f {
                        w = trial;
                        f = ft;
                        g = mat_vec(k, n, &w);
                    }
                    break;
                }
                eta *= 0.5;
            }
        } else {
            let a = *finite
                .iter()
                .filter(|&&i| w[i] > 0.0)
                .max_by(|&&x, &&y| g[x].total_cmp(&g[y]))
                .expect("support nonempty");
            let slope = g[i_fw] - g[a];
            let curv = k[i_fw * n + i_fw] + k[a * n + a] - 2.0 * k[i_fw * n + a];
            if curv <= 0.0 {
                pg = true;
                continue;
            }
            let max_step = w[a];
            let step = (-slope / curv).min(max_step);
            if !(step > 0.0) {
                pg = true;
                continue;
            }
            w[i_fw] += step;
            if step == max_step {
                w[a] = 0.0;
            } else {
                w[a] -= step;
            }
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += step * (k[j * n + i_fw] - k[j * n + a]);
            }
            f += 2.0 * step * slope + step * step * curv;
            if it % 512 == 0 {
                g = mat_vec(k, n, &w);
                f = quad_form(k, n, &w);
            }
        }
        if opts.record_history {
            history.push(f);
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    let energy = quad_form(k, n, &w);
    let diag: f64 = (0..n).filter(|&i| w[i] != 0.0).map(|i| k[i * n + i] * w[i] * w[i]).sum();
    EquilibriumSolution {
        capacity: if energy.is_finite() && energy > 0.0 { 1.0 / energy } else { 0.0 },
        off_diagonal_energy: energy - diag,
        energy,
        weights: w,
        iterations: it,
        gap,
        converged,
        used_projected_gradient: pg,
        history,
    }
}

/// Equilibrium weights and capacity of a cloud.
pub fn minimize_energy(cloud: &Cloud, kernel: &RieszKernel, opts: &SolverOptions) -> Result<EquilibriumSolution> {
    if kernel.beta < 0.0 {
        return Err(Error::InvalidArgument("negative beta: capacity is 1 on nonempty sets by definition".into()));
    }
    if cloud.len() < 2 {
        return Err(Error::InvalidArgument(format!("energy minimization needs >= 2 points, got {}", cloud.len())));
    }
    let k = energy_matrix(cloud, kernel, opts.exec);
    Ok(minimize_matrix(&k, cloud.len(), opts))
}

/// Catalog of compact sets accepted by [`capacity_value`].
pub const SET_CATALOG: &[(&str, &str)] = &[
    ("empty", "the empty set"),
    ("point", "d: the point (0,..,0,1), fattened to a sphere of radius 1/resolution"),
    ("sphere", "d=3, r=1: the sphere of radius r in R^3"),
    ("square", "d, a=1: the square [-a,a]^2 x {0}^{d-2}"),
    ("points", "path, k: point cloud from CSV with intrinsic dimension k"),
];

/// Discretization of a catalog set; `None` for the empty set.
pub fn catalog_cloud(set_id: &str, resolution: usize) -> Result<Option<Cloud>> {
    let (name, rest) = set_id.split_once(':').unwrap_or((set_id, ""));
    let mut kv = HashMap::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("`{part}` in `{set_id}` is not key=value")))?;
        kv.insert(k.trim(), v.trim());
    }
    let num = |key: &str, default: Option<f64>| -> Result<f64> {
        match kv.get(key) {
            Some(v) => v.parse().map_err(|_| Error::InvalidArgument(format!("bad `{key}` in `{set_id}`"))),
            None => default.ok_or_else(|| Error::InvalidArgument(format!("`{set_id}` requires `{key}`"))),
        }
    };
    let allowed: &[&str] = match name {
        "empty" => &[],
        "point" => &["d"],
        "sphere" => &["d", "r"],
        "square" => &["d", "a"],
        "points" => &["path", "k"],
        _ => return Err(Error::UnknownId(set_id.to_string())),
    };
    if let Some(k) = kv.keys().find(|k| !allowed.contains(k)) {
        return Err(Error::InvalidArgument(format!("unknown parameter `{k}` in `{set_id}`")));
    }
    if resolution == 0 && name != "empty" {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    Ok(match name {
        "empty" => None,
        "point" => {
            let d = num("d", None)? as usize;
            if d == 0 {
                return Err(Error::InvalidArgument("point needs d >= 1".into()));
            }
            let mut p = vec![0.0; d];
            p[d - 1] = 1.0;
            Some(singleton_cloud(&p, resolution)?)
        }
        "sphere" => {
            if num("d", Some(3.0))? != 3.0 {
                return Err(Error::InvalidArgument("sphere sets are available in d = 3 only".into()));
            }
            Some(sphere_cloud(resolution, num("r", Some(1.0))?)?)
        }
        "square" => {
            let m = ((resolution as f64).sqrt().round() as usize).max(1);
            Some(square_cloud(num("d", None)? as usize, m, num("a", Some(1.0))?)?)
        }
        "points" => {
            let path = kv.get("path").ok_or_else(|| Error::InvalidArgument("`points` requires `path`".into()))?;
            let pts = read_point_csv(path)?;
            let k = num("k", Some(pts[0].len().saturating_sub(1).max(1) as f64))? as usize;
            let mut cloud = Cloud::nearest_neighbour(pts, k)?;
            if resolution < cloud.len() {
                cloud = thin(&cloud, resolution);
            }
            Some(cloud)
        }
        _ => unreachable!("checked above"),
    })
}

/// Deterministic subsample of `m` points, with cells rescaled so that the
/// total cell measure is preserved.
fn thin(cloud: &Cloud, m: usize) -> Cloud {
    let n = cloud.len();
    let idx: Vec<usize> = (0..m).map(|i| i * n / m).collect();
    let mut out = cloud.subset(&idx);
    let grow = (n as f64 / m as f64).powf(1.0 / cloud.intrinsic_dim as f64);
    out.cell_radius.iter_mut().for_each(|r| *r *= grow);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub set: String,
    pub beta: f64,
    pub resolution: usize,
    pub energy: f64,
    pub capacity: f64,
    pub gap: f64,
    /// `definition` for beta < 0 or the empty set, else `converged` or
    /// `iteration-cap`.
    pub verdict: String,
}

pub fn capacity_value(set_id: &str, beta: f64, resolution: usize, opts: &SolverOptions) -> Result<CapacityReport> {
    let cloud = catalog_cloud(set_id, resolution.max(1))?;
    let report = |energy: f64, capacity: f64, gap: f64, verdict: &str| CapacityReport {
        set: set_id.to_string(),
        beta,
        resolution,
        energy,
        capacity,
        gap,
        verdict: verdict.to_string(),
    };
    match cloud {
        None => Ok(report(f64::INFINITY, 0.0, 0.0, "definition")),
        Some(_) if beta < 0.0 => Ok(report(f64::NAN, 1.0, 0.0, "definition")),
        Some(c) => {
            let sol = minimize_energy(&c, &RieszKernel::new(beta), opts)?;
            let v = if sol.converged { "converged" } else { "iteration-cap" };
            Ok(report(sol.energy, sol.capacity, sol.gap, v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition9Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition9Entry {
    pub r: f64,
    pub n_samples: usize,
    pub n_points: usize,
    pub capacity: f64,
    pub energy: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition9Report {
    pub domain: String,
    pub d: usize,
    pub beta: f64,
    pub entries: Vec<Condition9Entry>,
    /// log(E_last / E_first) / log(g(r_last) / g(r_first)).
    pub growth_exponent: Option<f64>,
    pub extrapolated: f64,
    pub verdict: Condition9Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition9Options {
    /// Largest number of singular-set points passed to the solver.
    pub max_points: usize,
    /// Growth exponent at or above which the capacity is declared to vanish.
    pub vanish_exponent: f64,
    /// Growth exponent below which (with stable estimates) it is declared positive.
    pub positive_exponent: f64,
    /// Fallback: final estimate below this fraction of the first also counts as vanishing.
    pub final_fraction: f64,
    /// Relative change of the last two estimates accepted as stable.
    pub stability: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for Condition9Options {
    fn default() -> Self {
        Self {
            max_points: 1024,
            vanish_exponent: 0.5,
            positive_exponent: 0.25,
            final_fraction: 1e-2,
            stability: 0.1,
            seed: 0,
            solver: SolverOptions { tol: 1e-6, ..SolverOptions::default() },
        }
    }
}

/// Condition Cap_{d-4}(Sigma) = 0 along a schedule of (r, boundary samples).
///
/// For d < 4 the capacity is 1 on any nonempty set, so the condition holds
/// iff every approximation is empty. For d >= 4 the verdict reads the trend
/// of the energy: an equilibrium energy that grows like the kernel at the
/// scale r of the approximations (exponent near 1) means the sets shrink to
/// a set of zero capacity; an energy that stays put means the limit set has
/// positive capacity.
pub fn check_condition_9(
    domain: &dyn Domain,
    schedule: &[(f64, usize)],
    opts: &Condition9Options,
) -> Result<Condition9Report> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::InvalidArgument("schedule radii must decrease".into()));
    }
    let d = domain.dim();
    let beta = d as f64 - 4.0;
    let kernel = RieszKernel::new(beta);
    let mut entries = Vec::with_capacity(schedule.len());
    for &(r, n) in schedule {
        let radii = boundary_radii(domain, n, opts.seed)?;
        let approx = singular_set_from(&radii, r);
        let m = approx.points.len();
        let (capacity, energy, gap) = if m == 0 {
            (0.0, f64::INFINITY, 0.0)
        } else if beta < 0.0 {
            (1.0, f64::NAN, 0.0)
        } else if m == 1 {
            (0.0, f64::INFINITY, 0.0)
        } else {
            let mut cloud = Cloud::nearest_neighbour(approx.points, (d - 1).max(1))?;
            if cloud.len() > opts.max_points {
                cloud = thin(&cloud, opts.max_points);
            }
            let sol = minimize_energy(&cloud, &kernel, &opts.solver)?;
            (sol.capacity, sol.energy, sol.gap)
        };
        entries.push(Condition9Entry { r, n_samples: n, n_points: m, capacity, energy, gap });
    }
    let all_empty = entries.iter().all(|e| e.n_points == 0);
    let (growth_exponent, verdict) = if beta < 0.0 || all_empty {
        (None, if all_empty { Condition9Verdict::Holds } else { Condition9Verdict::Fails })
    } else {
        let first = &entries[0];
        let last = entries.last().expect("nonempty");
        let nonincreasing =
            entries.windows(2).all(|w| w[1].capacity <= w[0].capacity * (1.0 + 1e-9) + w[0].gap.abs());
        let rho = if first.energy.is_finite() && last.energy.is_finite() && entries.len() >= 2 {
            let num = (last.energy / first.energy).ln();
            let den = (kernel.eval(last.r) / kernel.eval(first.r)).ln();
            (den != 0.0).then(|| num / den)
        } else {
            None
        };
        let vanished = last.capacity <= opts.final_fraction * first.capacity;
        let stable = entries.len() >= 2 && {
            let prev = entries[entries.len() - 2].capacity;
            prev > 0.0 && ((last.capacity - prev) / prev).abs() <= opts.stability
        };
        let v = if nonincreasing && (vanished || rho.is_some_and(|x| x >= opts.vanish_exponent)) {
            Condition9Verdict::Holds
        } else if rho.is_some_and(|x| x < opts.positive_exponent) && stable {
            Condition9Verdict::Fails
        } else {
            Condition9Verdict::Inconclusive
        };
        (rho, v)
    };
    let extrapolated = match verdict {
        Condition9Verdict::Holds if beta >= 0.0 => 0.0,
        _ => entries.last().map_or(0.0, |e| e.capacity),
    };
    Ok(Condition9Report {
        domain: domain.id(),
        d,
        beta,
        entries,
        growth_exponent,
        extrapolated,
        verdict,
    })
}
