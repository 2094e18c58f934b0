//! Path simulation kernel shared by the verifiers.
//!
//! Each path is simulated on a fine grid of `n_steps` steps; the coarse grid
//! consists of the even steps of the same path. Several start points may be
//! driven by one Brownian motion. A start is abandoned once its coarse grid
//! has decided every event the caller can ask about, which keeps the cost of
//! paths that leave the domain early proportional to their lifetime.

use crate::brownian::Walker;
use crate::exec::Exec;
use crate::geometry::{in_tube, Domain, Point, SingularSetApprox};

pub(crate) struct Probe<'a> {
    pub domain: &'a dyn Domain,
    pub starts: &'a [Point],
    pub horizon: f64,
    /// Even number of fine steps.
    pub n_steps: usize,
    /// Interior fine-step indices (even, increasing) splitting [0, n_steps]
    /// into segments; a cut point belongs to both neighbouring segments.
    pub cuts: &'a [usize],
    /// Record the first step with q <= level, and stop once it is known.
    pub hit_level: Option<f64>,
    pub tubes: &'a [&'a SingularSetApprox],
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GridTrace {
    /// Minimum of q over each segment; +inf for segments never reached.
    pub seg_min: Vec<f64>,
    pub hit: Option<usize>,
    pub tube_hit: Vec<bool>,
}

impl GridTrace {
    fn new(n_seg: usize, n_tubes: usize) -> Self {
        Self { seg_min: vec![f64::INFINITY; n_seg], hit: None, tube_hit: vec![false; n_tubes] }
    }

    pub fn min(&self) -> f64 {
        self.seg_min.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Path stays in the closure of O and off tube `k` (if any).
    pub fn constrained(&self, tube: Option<usize>) -> bool {
        self.min() >= 0.0 && tube.is_none_or(|k| !self.tube_hit[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Trace {
    pub fine: GridTrace,
    pub coarse: GridTrace,
}

impl Probe<'_> {
    fn record(&self, g: &mut GridTrace, seg: usize, boundary: bool, step: usize, x: &[f64], qx: f64) {
        g.seg_min[seg] = g.seg_min[seg].min(qx);
        if boundary && seg + 1 < g.seg_min.len() {
            g.seg_min[seg + 1] = g.seg_min[seg + 1].min(qx);
        }
        if let Some(level) = self.hit_level {
            if g.hit.is_none() && qx <= level {
                g.hit = Some(step);
            }
        }
        for (k, tube) in self.tubes.iter().enumerate() {
            // singular points lie on the boundary, at distance >= q(x) from x
            if !g.tube_hit[k] && qx <= tube.tube_radius && in_tube(tube, x) {
                g.tube_hit[k] = true;
            }
        }
    }

    fn finished(&self, c: &GridTrace) -> bool {
        match self.hit_level {
            Some(_) => c.hit.is_some(),
            None => c.min() < 0.0 || (!self.tubes.is_empty() && c.tube_hit.iter().all(|&h| h)),
        }
    }

    pub fn run_path(&self, seed: u64, stream: u64) -> Vec<Trace> {
        debug_assert!(self.n_steps.is_multiple_of(2));
        let d = self.domain.dim();
        let n_seg = self.cuts.len() + 1;
        let mut traces: Vec<Trace> = self
            .starts
            .iter()
            .map(|_| Trace {
                fine: GridTrace::new(n_seg, self.tubes.len()),
                coarse: GridTrace::new(n_seg, self.tubes.len()),
            })
            .collect();
        let mut done = vec![false; self.starts.len()];
        let mut live = self.starts.len();
        let mut walker = Walker::new(&vec![0.0; d], self.horizon / self.n_steps as f64, seed, stream);
        let mut x = vec![0.0; d];
        let mut seg = 0;
        for step in 0..=self.n_steps {
            let w = if step == 0 { walker.position() } else { walker.step() };
            let boundary = seg < self.cuts.len() && self.cuts[seg] == step;
            for (j, start) in self.starts.iter().enumerate() {
                if done[j] {
                    continue;
                }
                for c in 0..d {
                    x[c] = start[c] + w[c];
                }
                let qx = self.domain.q(&x);
                let tr = &mut traces[j];
                self.record(&mut tr.fine, seg, boundary, step, &x, qx);
                if step % 2 == 0 {
                    self.record(&mut tr.coarse, seg, boundary, step, &x, qx);
                    if self.finished(&tr.coarse) {
                        done[j] = true;
                        live -= 1;
                    }
                }
            }
            if live == 0 {
                break;
            }
            if boundary {
                seg += 1;
            }
        }
        traces
    }

    /// Runs `n_paths` paths; result `[i][j]` is path `i` from start `j`.
    pub fn run(&self, n_paths: usize, seed: u64, exec: Exec) -> Vec<Vec<Trace>> {
        exec.map_batches(n_paths, 256, |range| {
            range.map(|i| self.run_path(seed, i as u64)).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}
