//! Deterministic parallel ensembles with streaming moments.
//!
//! Trajectories are split into a fixed number of contiguous batches. Each
//! batch is simulated sequentially and the batch partials are merged in batch
//! order, so results do not depend on the thread count. Standard errors of
//! second moments come from the spread of the batch estimates.

use std::sync::Arc;

use rayon::prelude::*;

use super::noise::{trajectory_streams, NoiseSource, NoiseStream};
use super::SplitPoint;
use crate::map_core::PeriodicMap;

/// Resolution of a uniform draw.
const DRAW_RESOLUTION: f64 = 1.0 / (1u64 << 53) as f64;
/// Width at which a deterministic orbit is re-randomised.
const REFRESH_WIDTH: f64 = 1.0 / (1u64 << 24) as f64;

pub type InitialSampler = Arc<dyn Fn(&mut NoiseStream) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum InitialLaw {
    Delta(Vec<f64>),
    /// Uniform on `Q_0`.
    Uniform,
    /// Arbitrary sampler; `resolution` is the width of the set of initial
    /// points a single draw stands for (0 for atoms).
    Custom { sampler: InitialSampler, resolution: f64 },
}

impl std::fmt::Debug for InitialLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialLaw::Delta(x) => write!(f, "Delta({x:?})"),
            InitialLaw::Uniform => write!(f, "Uniform"),
            InitialLaw::Custom { resolution, .. } => write!(f, "Custom {{ resolution: {resolution} }}"),
        }
    }
}

impl InitialLaw {
    fn draw(&self, d: usize, aux: &mut NoiseStream) -> (SplitPoint, f64) {
        match self {
            InitialLaw::Delta(x) => (SplitPoint::new(x), 0.0),
            InitialLaw::Uniform => {
                let frac = (0..d).map(|_| aux.uniform()).collect();
                (SplitPoint { cube: vec![0; d], frac }, DRAW_RESOLUTION)
            }
            InitialLaw::Custom { sampler, resolution } => (SplitPoint::new(&sampler(aux)), *resolution),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub eps: f64,
    pub steps: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub initial: InitialLaw,
    /// Times at which moments are recorded; defaults to `[steps]` when empty.
    pub checkpoints: Vec<usize>,
    /// Directions `v` whose variances `var(v·X_n)` are reported.
    pub directions: Vec<Vec<f64>>,
    pub batches: usize,
}

impl EnsembleSpec {
    pub fn new(eps: f64, steps: usize, trajectories: usize, seed: u64) -> Self {
        EnsembleSpec {
            eps,
            steps,
            trajectories,
            seed,
            initial: InitialLaw::Uniform,
            checkpoints: Vec::new(),
            directions: Vec::new(),
            batches: 64,
        }
    }

    pub fn checkpoint_times(&self) -> Vec<usize> {
        let mut t = if self.checkpoints.is_empty() { vec![self.steps] } else { self.checkpoints.clone() };
        t.sort_unstable();
        t.dedup();
        t
    }

    fn batch_count(&self) -> usize {
        self.batches.clamp(1, self.trajectories.max(1))
    }
}

/// Streaming mean and co-moment matrix (Welford, merged with Chan's rule).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major sum of centred products.
    pub comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(d: usize) -> Self {
        MomentAccumulator { count: 0, mean: vec![0.0; d], comoment: vec![0.0; d * d] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        self.count += 1;
        let n = self.count as f64;
        let mut delta = vec![0.0; d];
        for i in 0..d {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..d {
            let after = x[i] - self.mean[i];
            for j in 0..d {
                self.comoment[i * d + j] += after * delta[j];
            }
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let d = self.dim();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = (0..d).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..d {
            for j in 0..d {
                self.comoment[i * d + j] += other.comoment[i * d + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..d {
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
    }

    /// Unbiased covariance (zero for fewer than two samples).
    pub fn covariance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.comoment.len()];
        }
        let n1 = (self.count - 1) as f64;
        self.comoment.iter().map(|c| c / n1).collect()
    }

    /// `var(v·X)` from the covariance.
    pub fn directional_variance(&self, v: &[f64]) -> f64 {
        let d = self.dim();
        let cov = self.covariance();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += v[i] * cov[i * d + j] * v[j];
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalVariance {
    pub direction: Vec<f64>,
    pub variance: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSnapshot {
    pub time: usize,
    pub count: u64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Row-major unbiased covariance.
    pub covariance: Vec<f64>,
    pub covariance_se: Vec<f64>,
    pub directional: Vec<DirectionalVariance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub dim: usize,
    pub snapshots: Vec<MomentSnapshot>,
    /// `batches[b][c]`: partial moments of batch `b` at checkpoint `c`.
    pub batches: Vec<Vec<MomentAccumulator>>,
}

impl EnsembleReport {
    pub fn snapshot(&self, time: usize) -> Option<&MomentSnapshot> {
        self.snapshots.iter().find(|s| s.time == time)
    }
}

/// Standard error of the mean of per-batch estimates.
pub(crate) fn batch_std_error(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return f64::NAN;
    }
    let m = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Runs one trajectory, calling `record(k, point)` at each checkpoint index.
pub(crate) fn run_trajectory<M, F>(
    map: &M,
    initial: &InitialLaw,
    eps: f64,
    times: &[usize],
    seed: u64,
    t: u64,
    mut record: F,
) where
    M: PeriodicMap + ?Sized,
    F: FnMut(usize, &SplitPoint),
{
    let d = map.dim();
    let (mut noise, mut aux) = trajectory_streams(seed, t);
    let (mut p, mut width) = initial.draw(d, &mut aux);
    let mut buf = vec![0.0; d];
    let mut jitter = vec![0.0; d];
    let mut next = 0;
    let last = times.last().copied().unwrap_or(0);
    for n in 0..=last {
        while next < times.len() && times[next] == n {
            record(next, &p);
            next += 1;
        }
        if n == last {
            break;
        }
        let expansion = p.advance(map, eps, &mut noise, &mut buf);
        if eps == 0.0 && width > 0.0 {
            // a uniform law on a small box stays uniform on its image; once
            // the image is wide enough, redraw the point inside it
            width *= expansion;
            if width > REFRESH_WIDTH {
                for j in jitter.iter_mut() {
                    *j = width * (aux.uniform() - 0.5);
                }
                p.nudge(&jitter);
                width = DRAW_RESOLUTION;
            }
        }
    }
}

/// Streaming moments of `X_n` at the checkpoint times.
pub fn simulate_ensemble<M: PeriodicMap + ?Sized>(map: &M, spec: &EnsembleSpec) -> EnsembleReport {
    let d = map.dim();
    let times = spec.checkpoint_times();
    let b = spec.batch_count();
    let per = spec.trajectories / b;
    let extra = spec.trajectories % b;
    let ranges: Vec<(u64, u64)> = (0..b)
        .map(|i| {
            let start = i * per + i.min(extra);
            let len = per + usize::from(i < extra);
            (start as u64, (start + len) as u64)
        })
        .collect();

    let batches: Vec<Vec<MomentAccumulator>> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = vec![MomentAccumulator::new(d); times.len()];
            let mut x = vec![0.0; d];
            for t in lo..hi {
                run_trajectory(map, &spec.initial, spec.eps, &times, spec.seed, t, |k, p| {
                    for (xi, (c, f)) in x.iter_mut().zip(p.cube.iter().zip(&p.frac)) {
                        *xi = *c as f64 + f;
                    }
                    acc[k].push(&x);
                });
            }
            acc
        })
        .collect();

    let snapshots = times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let mut total = MomentAccumulator::new(d);
            for batch in &batches {
                total.merge(&batch[k]);
            }
            let cov = total.covariance();
            let n = total.count.max(1) as f64;
            let mean_se = (0..d).map(|i| (cov[i * d + i] / n).sqrt()).collect();
            let covariance_se = (0..d * d)
                .map(|e| {
                    let vals: Vec<f64> = batches.iter().map(|bt| bt[k].covariance()[e]).collect();
                    batch_std_error(&vals)
                })
                .collect();
            let directional = spec
                .directions
                .iter()
                .map(|v| {
                    let vals: Vec<f64> = batches.iter().map(|bt| bt[k].directional_variance(v)).collect();
                    DirectionalVariance {
                        direction: v.clone(),
                        variance: total.directional_variance(v),
                        std_error: batch_std_error(&vals),
                    }
                })
                .collect();
            MomentSnapshot {
                time,
                count: total.count,
                mean: total.mean.clone(),
                mean_se,
                covariance: cov,
                covariance_se,
                directional,
            }
        })
        .collect();

    EnsembleReport { dim: d, snapshots, batches }
}

/// Full paths `X_0, …, X_n`, flattened as `[trajectory][time][coordinate]`.
pub fn simulate_paths<M: PeriodicMap + ?Sized>(map: &M, spec: &EnsembleSpec) -> Vec<f64> {
    let d = map.dim();
    let n = spec.steps;
    let times: Vec<usize> = (0..=n).collect();
    let per_traj: Vec<Vec<f64>> = (0..spec.trajectories as u64)
        .into_par_iter()
        .map(|t| {
            let mut path = Vec::with_capacity((n + 1) * d);
            run_trajectory(map, &spec.initial, spec.eps, &times, spec.seed, t, |_, p| {
                path.extend(p.to_point());
            });
            path
        })
        .collect();
    per_traj.concat()
}
