//! Per-agent Gaussian-process regression.
//!
//! [`GpState`] maintains the posterior over an unknown function after `t`
//! noisy observations: mean `mu_t(x) = k_t(x)' (K_t + lambda I)^{-1} y` and
//! deviation `sigma_t(x) = sqrt(k(x,x) - k_t(x)' (K_t + lambda I)^{-1} k_t(x))`.
//!
//! The factor `L` with `L L' = K_t + lambda I` is extended one bordered row
//! per observation (O(t^2)), never recomputed from scratch. A state built
//! with [`GpState::with_tracked_grid`] additionally keeps the whitened
//! cross-kernel rows for a fixed query grid so the full grid posterior is
//! refreshed in O(t·m) per observation — the path the bandit agents run on.
//!
//! The realized information gain `1/2 ln det(I + lambda^{-1} K_t)` is kept
//! as a running sum of per-step increments `1/2 ln(1 + lambda^{-1}
//! sigma_{t-1}^2(x_t))`; [`GpState::info_gain_determinant`] recomputes it
//! from the factor diagonal as an independent route.

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};

/// Row-major packed storage for a growable lower-triangular matrix.
#[derive(Debug, Clone, Default)]
struct PackedLower {
    data: Vec<f64>,
    n: usize,
}

impl PackedLower {
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    fn diag(&self, i: usize) -> f64 {
        self.data[i * (i + 1) / 2 + i]
    }

    /// Appends row `t` of the factor: `t` off-diagonal entries plus the pivot.
    fn push_row(&mut self, mut row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.n + 1);
        self.data.append(&mut row);
        self.n += 1;
    }

    /// Solves `L v = b` by forward substitution over the first `b.len()` rows.
    fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; b.len()];
        for i in 0..b.len() {
            let row = self.row(i);
            let mut acc = b[i];
            for (j, vj) in v[..i].iter().enumerate() {
                acc -= row[j] * vj;
            }
            v[i] = acc / row[i];
        }
        v
    }
}

/// Grid-tracking state: whitened cross-kernel rows plus the materialized
/// posterior over the tracked points.
#[derive(Debug, Clone)]
struct TrackedGrid {
    points: Vec<Vec<f64>>,
    /// Rows of `V = L^{-1} K_cross`, one per observation.
    whitened_rows: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    /// Per-point running sum of squared whitened entries; the posterior
    /// variance at tracked point j is `k(x_j,x_j) - sumsq[j]`.
    sumsq: Vec<f64>,
    prior_diag: Vec<f64>,
}

/// Posterior state of one agent's GP after `t` observations.
#[derive(Debug, Clone)]
pub struct GpState {
    kernel: KernelSpec,
    lambda: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    chol: PackedLower,
    /// `z = L^{-1} y`, extended alongside the factor.
    whitened_targets: Vec<f64>,
    info_gain: f64,
    tracked: Option<TrackedGrid>,
}

impl GpState {
    /// Empty state with regularizer `lambda > 0`.
    pub fn new(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "GP regularizer lambda must be a positive real, got {lambda}"
            )));
        }
        Ok(Self {
            kernel,
            lambda,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: PackedLower::default(),
            whitened_targets: Vec::new(),
            info_gain: 0.0,
            tracked: None,
        })
    }

    /// Empty state that additionally maintains the posterior over a fixed
    /// set of query points across observations.
    pub fn with_tracked_grid(
        kernel: KernelSpec,
        lambda: f64,
        grid_points: &[Vec<f64>],
    ) -> Result<Self> {
        let mut state = Self::new(kernel, lambda)?;
        let mut prior_diag = Vec::with_capacity(grid_points.len());
        for p in grid_points {
            prior_diag.push(kernel.eval(p, p)?);
        }
        state.tracked = Some(TrackedGrid {
            points: grid_points.to_vec(),
            whitened_rows: Vec::new(),
            mu: vec![0.0; grid_points.len()],
            sigma: prior_diag.iter().map(|&d| d.sqrt()).collect(),
            sumsq: vec![0.0; grid_points.len()],
            prior_diag,
        });
        Ok(state)
    }

    /// Number of observations so far.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// The tracked query points, if this state was built with a grid.
    pub fn tracked_points(&self) -> Option<&[Vec<f64>]> {
        self.tracked.as_ref().map(|g| g.points.as_slice())
    }

    /// Current posterior `(mu, sigma)` over the tracked grid.
    pub fn tracked_posterior(&self) -> Option<(&[f64], &[f64])> {
        self.tracked
            .as_ref()
            .map(|g| (g.mu.as_slice(), g.sigma.as_slice()))
    }

    /// Posterior mean and deviation at `x`. For `t = 0` this is the prior
    /// `(0, sqrt(k(x,x)))`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        let kxx = self.kernel.eval(x, x)?;
        if self.is_empty() {
            return Ok((0.0, kxx.sqrt()));
        }
        let mut cross = Vec::with_capacity(self.len());
        for input in &self.inputs {
            cross.push(self.kernel.eval(input, x)?);
        }
        let v = self.chol.forward_solve(&cross);
        let mu = dot(&v, &self.whitened_targets);
        let var = clamp_variance(kxx - dot(&v, &v));
        Ok((mu, var.sqrt()))
    }

    /// Posterior at each of `xs` via independent solves.
    pub fn posterior_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mu = Vec::with_capacity(xs.len());
        let mut sigma = Vec::with_capacity(xs.len());
        for x in xs {
            let (m, s) = self.posterior(x)?;
            mu.push(m);
            sigma.push(s);
        }
        Ok((mu, sigma))
    }

    /// Incorporates the observation `y` at `x`, extending the Cholesky
    /// factor by one bordered row and accumulating the information-gain
    /// increment `1/2 ln(1 + lambda^{-1} sigma_prev^2(x))`.
    pub fn observe(&mut self, x: &[f64], y: f64) -> Result<()> {
        let t = self.len();
        let kxx = self.kernel.eval(x, x)?;
        let mut cross = Vec::with_capacity(t);
        for input in &self.inputs {
            cross.push(self.kernel.eval(input, x)?);
        }
        let w = self.chol.forward_solve(&cross);
        let pivot_sq = kxx + self.lambda - dot(&w, &w);
        if !(pivot_sq > 0.0) {
            return Err(Error::Numerical(format!(
                "cholesky breakdown extending the factor at observation {} \
                 (pivot^2 = {pivot_sq:.3e}); lambda = {} may be too small",
                t + 1,
                self.lambda
            )));
        }
        let pivot = pivot_sq.sqrt();

        let var_prev = clamp_variance(kxx - dot(&w, &w));
        self.info_gain += 0.5 * (1.0 + var_prev / self.lambda).ln();

        let z_new = (y - dot(&w, &self.whitened_targets)) / pivot;
        self.whitened_targets.push(z_new);

        if let Some(grid) = self.tracked.as_mut() {
            let m = grid.points.len();
            let mut v_new = Vec::with_capacity(m);
            for (j, point) in grid.points.iter().enumerate() {
                let mut acc = self.kernel.eval(x, point)?;
                for (row, &wi) in grid.whitened_rows.iter().zip(&w) {
                    acc -= wi * row[j];
                }
                v_new.push(acc / pivot);
            }
            for j in 0..m {
                grid.mu[j] += v_new[j] * z_new;
                grid.sumsq[j] += v_new[j] * v_new[j];
                grid.sigma[j] = clamp_variance(grid.prior_diag[j] - grid.sumsq[j]).sqrt();
            }
            grid.whitened_rows.push(v_new);
        }

        let mut row = w;
        row.push(pivot);
        self.chol.push_row(row);
        self.inputs.push(x.to_vec());
        self.targets.push(y);
        Ok(())
    }

    /// Realized information gain in nats (running sum of per-step
    /// increments; equals the determinant form up to rounding).
    pub fn realized_info_gain(&self) -> f64 {
        self.info_gain
    }

    /// Information gain recomputed from the factor diagonal:
    /// `1/2 ln det(I + lambda^{-1} K_t) = sum ln L_ii - (t/2) ln lambda`.
    pub fn info_gain_determinant(&self) -> f64 {
        let t = self.len();
        let log_det_half: f64 = (0..t).map(|i| self.chol.diag(i).ln()).sum();
        log_det_half - 0.5 * t as f64 * self.lambda.ln()
    }
}

/// Clamps a posterior variance against downward rounding. Values below
/// -1e-10 indicate a real defect, not rounding, and trip a debug assertion.
fn clamp_variance(var: f64) -> f64 {
    debug_assert!(var > -1e-10, "posterior variance {var} below rounding slack");
    var.clamp(0.0, 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Theoretical maximum-information-gain proxy `gamma_t`, up to the
/// configurable constant `c_gamma`:
///
/// * squared exponential: `c_gamma (ln(t+1))^{d+1}`
/// * Matérn: `c_gamma t^{d/(2nu+d)} (ln(t+1))^{2nu/(2nu+d)}`
///
/// Monotone nondecreasing in `t`.
pub fn gamma_bound(family: KernelFamily, t: usize, d: usize, nu: f64, c_gamma: f64) -> f64 {
    assert!(t >= 1, "gamma bound requires t >= 1");
    let tf = t as f64;
    let log_term = (tf + 1.0).ln();
    match family {
        KernelFamily::SquaredExponential => c_gamma * log_term.powi(d as i32 + 1),
        KernelFamily::Matern => {
            let df = d as f64;
            let denom = 2.0 * nu + df;
            c_gamma * tf.powf(df / denom) * log_term.powf(2.0 * nu / denom)
        }
    }
}
