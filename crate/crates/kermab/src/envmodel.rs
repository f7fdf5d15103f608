//! Synthetic optimization environments.
//!
//! The continuous action space is discretized to an [`ActionGrid`]. Each
//! agent owns a private local reward function, drawn once per trial from a
//! zero-mean Gaussian prior with the trial kernel's Gram matrix; the global
//! objective is the pointwise average of the locals. Rewards are the true
//! local value plus Gaussian noise from an agent-scoped seeded stream, and
//! pseudo-regret measures how far the agents' joint actions sit below the
//! global optimum.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::seeding::{substream, StreamPurpose};

/// Discretized action domain: `m >= 2` distinct points of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl ActionGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Input(format!(
                "action grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Input(
                "action grid points must share a positive dimension".into(),
            ));
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(Error::Input(format!(
                        "action grid points {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self { dim, points })
    }

    /// `m` evenly spaced points spanning `[lo, hi]` inclusive.
    pub fn uniform_1d(m: usize, lo: f64, hi: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Input(format!("grid size must be >= 2, got {m}")));
        }
        if !(hi > lo) {
            return Err(Error::Input(format!(
                "grid interval is empty: [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (m - 1) as f64;
        Self::new((0..m).map(|i| vec![lo + step * i as f64]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }
}

/// Draws `n_agents` independent local reward functions over the grid, each
/// a sample from `N(0, K + jitter I)` with `K` the kernel Gram matrix.
/// Row `i` comes from the agent-`i` test-function stream of `seed`.
pub fn sample_test_functions(
    kernel: &KernelSpec,
    grid: &ActionGrid,
    n_agents: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_agents == 0 {
        return Err(Error::Input("need at least one agent".into()));
    }
    let m = grid.len();
    let mut k = kernel.gram(grid.points())?;
    for i in 0..m {
        k[(i, i)] += jitter;
    }
    let chol = nalgebra::Cholesky::new(k).ok_or_else(|| {
        Error::Numerical(format!(
            "prior covariance is not positive definite with jitter {jitter}; \
             try a larger env.jitter"
        ))
    })?;
    let l = chol.l();
    let mut rows = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let mut rng = substream(seed, StreamPurpose::TestFunction, agent as u64);
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let mut row = vec![0.0; m];
        for (j, rj) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (s, zs) in z.iter().enumerate().take(j + 1) {
                acc += l[(j, s)] * zs;
            }
            *rj = acc;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// A fixed environment for one trial: true local values on the grid, their
/// average (the global objective), and per-agent noise streams.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: ActionGrid,
    locals: Vec<Vec<f64>>,
    global_vals: Vec<f64>,
    opt_index: usize,
    opt_value: f64,
    eta: f64,
    noise: Vec<ChaCha8Rng>,
}

impl Environment {
    /// Wraps explicit local values (`n_agents` rows of grid length).
    pub fn from_locals(
        grid: ActionGrid,
        locals: Vec<Vec<f64>>,
        eta: f64,
        seed: u64,
    ) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::Input("need at least one agent".into()));
        }
        if locals.iter().any(|row| row.len() != grid.len()) {
            return Err(Error::Input(
                "local value rows must match the grid length".into(),
            ));
        }
        if !(eta >= 0.0) {
            return Err(Error::Config(format!(
                "noise scale eta must be nonnegative, got {eta}"
            )));
        }
        let n = locals.len();
        let m = grid.len();
        let global_vals: Vec<f64> = (0..m)
            .map(|j| locals.iter().map(|row| row[j]).sum::<f64>() / n as f64)
            .collect();
        let opt_index = argmax_lowest(&global_vals);
        let opt_value = global_vals[opt_index];
        let noise = (0..n)
            .map(|i| substream(seed, StreamPurpose::Reward, i as u64))
            .collect();
        Ok(Self {
            grid,
            locals,
            global_vals,
            opt_index,
            opt_value,
            eta,
            noise,
        })
    }

    /// Samples local functions from the GP prior and builds the environment.
    pub fn sample(
        kernel: &KernelSpec,
        grid: ActionGrid,
        n_agents: usize,
        jitter: f64,
        eta: f64,
        seed: u64,
    ) -> Result<Self> {
        let locals = sample_test_functions(kernel, &grid, n_agents, jitter, seed)?;
        Self::from_locals(grid, locals, eta, seed)
    }

    pub fn n_agents(&self) -> usize {
        self.locals.len()
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn locals(&self) -> &[Vec<f64>] {
        &self.locals
    }

    /// Global objective `F` on the grid (exact average of the locals).
    pub fn global_vals(&self) -> &[f64] {
        &self.global_vals
    }

    /// Lowest grid index attaining the global maximum.
    pub fn opt_index(&self) -> usize {
        self.opt_index
    }

    pub fn opt_value(&self) -> f64 {
        self.opt_value
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Noisy reward for `agent` playing grid point `action`. Consumes one
    /// draw from the agent's noise stream even when `eta = 0`, so noiseless
    /// and noisy runs stay stream-aligned.
    pub fn reward(&mut self, agent: usize, action: usize) -> f64 {
        let z: f64 = self.noise[agent].sample(StandardNormal);
        self.locals[agent][action] + self.eta * z
    }

    /// Instantaneous pseudo-regret of a joint action profile:
    /// `F(x*) - mean_j F(x_j)`.
    pub fn inst_regret(&self, actions: &[usize]) -> f64 {
        assert_eq!(
            actions.len(),
            self.n_agents(),
            "one action per agent required"
        );
        let mean: f64 = actions
            .iter()
            .map(|&a| self.global_vals[a])
            .sum::<f64>()
            / actions.len() as f64;
        self.opt_value - mean
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
