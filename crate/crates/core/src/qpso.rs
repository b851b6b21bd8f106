//! Quantum-behaved particle swarm optimization (QPSO) with a repeat-run
//! stability check.
//!
//! Each particle moves to `p ± β·|mbest − x|·ln(1/u)`, where `p` is a random
//! convex combination of its personal best and the global best, `mbest` is the
//! mean of all personal bests and `β` (contraction-expansion coefficient) is
//! annealed linearly over the iteration budget.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Number of repeated optimisation runs used to cross-check hyperparameters.
pub const DEFAULT_REPEAT_RUNS: usize = 12;
pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_LOG_BOUND: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpsoConfig {
    pub swarm_size: usize,
    pub stability_tol: f64,
    pub max_iters: usize,
    /// Iterations over which the improvement is compared to `stability_tol`.
    pub patience: usize,
    pub bounds: Vec<(f64, f64)>,
    /// β at the first and last iteration.
    pub contraction_expansion: (f64, f64),
    pub n_repeat_runs: usize,
    pub seed: u64,
}

impl QpsoConfig {
    /// Generic configuration with symmetric bounds `[−bound, bound]`.
    pub fn new(dim: usize, swarm_size: usize, stability_tol: f64) -> Self {
        Self {
            swarm_size,
            stability_tol,
            max_iters: DEFAULT_MAX_ITERS,
            patience: DEFAULT_PATIENCE,
            bounds: vec![(-DEFAULT_LOG_BOUND, DEFAULT_LOG_BOUND); dim],
            contraction_expansion: (1.0, 0.5),
            n_repeat_runs: DEFAULT_REPEAT_RUNS,
            seed: 0,
        }
    }

    /// Swarm 200, tolerance 1e-3.
    pub fn static_gp(dim: usize) -> Self {
        Self::new(dim, 200, 1e-3)
    }

    /// Swarm 1000, tolerance 1e-5.
    pub fn gp_narx(dim: usize) -> Self {
        Self::new(dim, 1000, 1e-5)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Copy with `dim` bounds of `[lo, hi]`.
    pub fn with_uniform_bounds(mut self, dim: usize, lo: f64, hi: f64) -> Self {
        self.bounds = vec![(lo, hi); dim];
        self
    }

    /// Copy searching `dim` dimensions; keeps the bounds when they already
    /// match, otherwise repeats the first dimension's bounds.
    pub fn resized(&self, dim: usize) -> Self {
        let mut cfg = self.clone();
        if cfg.bounds.len() != dim {
            let b = cfg
                .bounds
                .first()
                .copied()
                .unwrap_or((-DEFAULT_LOG_BOUND, DEFAULT_LOG_BOUND));
            cfg.bounds = vec![b; dim];
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config("swarm_size must be ≥ 2".into()));
        }
        if !(self.stability_tol > 0.0) {
            return Err(Error::Config("stability_tol must be > 0".into()));
        }
        if self.n_repeat_runs < 1 {
            return Err(Error::Config("n_repeat_runs must be ≥ 1".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("at least one search dimension is required".into()));
        }
        if let Some((i, b)) = self
            .bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::Config(format!("bounds {b:?} of dimension {i} are invalid")));
        }
        let (b0, b1) = self.contraction_expansion;
        if !(b0 > 0.0 && b1 > 0.0) {
            return Err(Error::Config("contraction-expansion coefficients must be > 0".into()));
        }
        Ok(())
    }
}

/// One optimisation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub position: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    /// Global-best cost after each iteration of the best run.
    pub cost_trace: Vec<f64>,
    pub best_run: usize,
    pub runs: Vec<RunResult>,
}

impl OptimResult {
    /// Fails with the best run's cost trace unless that run met the
    /// stability tolerance.
    pub fn require_converged(&self) -> Result<()> {
        let run = &self.runs[self.best_run];
        if run.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: run.iterations,
                best_cost: run.cost,
                cost_trace: run.cost_trace.clone(),
            })
        }
    }

    pub fn write_cost_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_cost_trace_to(&mut f).map_err(|e| Error::io(path, e))
    }

    /// Long format: `run,iteration,best_cost`.
    pub fn write_cost_trace_to<W: Write + ?Sized>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "run,iteration,best_cost")?;
        for (r, run) in self.runs.iter().enumerate() {
            for (i, c) in run.cost_trace.iter().enumerate() {
                writeln!(w, "{r},{i},{c:?}")?;
            }
        }
        Ok(())
    }
}

fn sanitize(c: f64) -> f64 {
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

fn run_once<F>(cost: &F, cfg: &QpsoConfig, seed: u64) -> RunResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = cfg.dim();
    let m = cfg.swarm_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut positions: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            cfg.bounds
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect()
        })
        .collect();
    let mut costs: Vec<f64> = positions.par_iter().map(|x| sanitize(cost(x))).collect();
    let mut pbest = positions.clone();
    let mut pbest_cost = costs.clone();
    let mut g = argmin(&pbest_cost);
    let mut trace = vec![pbest_cost[g]];
    let mut converged = false;
    let mut iterations = 0;

    let (b0, b1) = cfg.contraction_expansion;
    for k in 0..cfg.max_iters {
        let beta = b0 - (b0 - b1) * k as f64 / cfg.max_iters.max(1) as f64;
        let mut mbest = vec![0.0; dim];
        for p in &pbest {
            for (mb, v) in mbest.iter_mut().zip(p) {
                *mb += v;
            }
        }
        mbest.iter_mut().for_each(|v| *v /= m as f64);

        for i in 0..m {
            for j in 0..dim {
                let phi: f64 = rng.random();
                let attractor = phi * pbest[i][j] + (1.0 - phi) * pbest[g][j];
                let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
                let step = beta * (mbest[j] - positions[i][j]).abs() * (1.0 / u).ln();
                let x = if rng.random::<bool>() {
                    attractor + step
                } else {
                    attractor - step
                };
                let (lo, hi) = cfg.bounds[j];
                positions[i][j] = x.clamp(lo, hi);
            }
        }
        costs.clear();
        costs.par_extend(positions.par_iter().map(|x| sanitize(cost(x))));
        for i in 0..m {
            if costs[i] < pbest_cost[i] {
                pbest_cost[i] = costs[i];
                pbest[i].clone_from(&positions[i]);
            }
        }
        g = argmin(&pbest_cost);
        trace.push(pbest_cost[g]);
        iterations = k + 1;

        let last = trace.len() - 1;
        if last >= cfg.patience && trace[last].is_finite() {
            let improvement = trace[last - cfg.patience] - trace[last];
            if improvement < cfg.stability_tol {
                converged = true;
                break;
            }
        }
    }

    RunResult {
        position: pbest[g].clone(),
        cost: pbest_cost[g],
        iterations,
        converged,
        cost_trace: trace,
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if *c < v[best] {
            best = i;
        }
    }
    best
}

/// Minimizes `cost` within `cfg.bounds`. Non-finite costs count as `+∞`.
///
/// Runs `cfg.n_repeat_runs` independent swarms with seeds derived from
/// `cfg.seed` and returns the best; all runs are kept for
/// [`stability_report`].
pub fn qpso_minimize<F>(cost: F, cfg: &QpsoConfig) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let runs: Vec<RunResult> = (0..cfg.n_repeat_runs)
        .map(|r| run_once(&cost, cfg, derive_seed(cfg.seed, &format!("qpso-run-{r}"))))
        .collect();
    let best_run = argmin(&runs.iter().map(|r| r.cost).collect::<Vec<_>>());
    if !runs[best_run].cost.is_finite() {
        return Err(Error::Infeasible(format!(
            "all {} runs produced only non-finite costs",
            runs.len()
        )));
    }
    Ok(OptimResult {
        best_position: runs[best_run].position.clone(),
        best_cost: runs[best_run].cost,
        cost_trace: runs[best_run].cost_trace.clone(),
        best_run,
        runs,
    })
}

/// Outcome of cross-checking repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Runs whose cost or position disagrees with the best run.
    pub outlier_runs: Vec<usize>,
    pub max_cost_gap: f64,
    pub max_position_gap: f64,
    pub n_runs: usize,
}

/// A result is stable when every run's cost is within `cost_tol` of the best
/// and every run's position is within `position_tol` (max-norm, log space) of
/// the best run's position. A single run is trivially stable.
pub fn stability_report(result: &OptimResult, position_tol: f64, cost_tol: f64) -> StabilityVerdict {
    let best = &result.runs[result.best_run];
    let mut outliers = Vec::new();
    let mut max_cost_gap: f64 = 0.0;
    let mut max_position_gap: f64 = 0.0;
    for (i, run) in result.runs.iter().enumerate() {
        let cost_gap = run.cost - best.cost;
        let pos_gap = run
            .position
            .iter()
            .zip(&best.position)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cost_gap = if cost_gap.is_nan() { f64::INFINITY } else { cost_gap };
        max_cost_gap = max_cost_gap.max(cost_gap);
        max_position_gap = max_position_gap.max(pos_gap);
        if cost_gap > cost_tol || pos_gap > position_tol {
            outliers.push(i);
        }
    }
    StabilityVerdict {
        stable: outliers.is_empty(),
        outlier_runs: outliers,
        max_cost_gap,
        max_position_gap,
        n_runs: result.runs.len(),
    }
}
