//! Kernel functions and Gram matrices.
//!
//! All Gaussian-process computations in this crate are driven by a
//! [`KernelSpec`]: a stationary kernel with unit variance, `k(x, x) = 1`.
//! The squared-exponential kernel and the Matérn kernels with
//! ν ∈ {1/2, 3/2, 5/2} (the closed-form cases) are supported.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[serde(alias = "se", alias = "rbf")]
    SquaredExponential,
    Matern,
}

/// A stationary kernel with unit variance.
///
/// Invariants enforced at construction: `lengthscale > 0`, and for Matérn
/// kernels ν ∈ {0.5, 1.5, 2.5}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscale: f64,
    nu: f64,
}

const SUPPORTED_NU: [f64; 3] = [0.5, 1.5, 2.5];

impl KernelSpec {
    /// Builds a kernel, validating hyperparameters. `nu` is ignored for the
    /// squared-exponential family.
    pub fn new(family: KernelFamily, lengthscale: f64, nu: f64) -> Result<Self> {
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(Error::Config(format!(
                "kernel lengthscale must be a positive real, got {lengthscale}"
            )));
        }
        if family == KernelFamily::Matern && !SUPPORTED_NU.contains(&nu) {
            return Err(Error::Config(format!(
                "unsupported Matern nu {nu}; supported values are 0.5, 1.5, 2.5"
            )));
        }
        Ok(Self {
            family,
            lengthscale,
            nu,
        })
    }

    /// Squared-exponential kernel `exp(-r^2 / (2 l^2))`.
    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale, 2.5)
    }

    /// Matérn kernel with smoothness ν ∈ {0.5, 1.5, 2.5}.
    pub fn matern(lengthscale: f64, nu: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern, lengthscale, nu)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Evaluates `k(x, x')`. Symmetric in its arguments and confined to
    /// `[0, 1]` with `k(x, x) = 1`.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::Input(format!(
                "kernel arguments have mismatched dimensions {} and {}",
                x.len(),
                x_prime.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::Input("kernel arguments must have dimension >= 1".into()));
        }
        let r2: f64 = x
            .iter()
            .zip(x_prime)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.eval_r(r2.sqrt(), r2))
    }

    fn eval_r(&self, r: f64, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => (-r2 / (2.0 * l * l)).exp(),
            KernelFamily::Matern => {
                if self.nu == 0.5 {
                    (-r / l).exp()
                } else if self.nu == 1.5 {
                    let s = 3.0_f64.sqrt() * r / l;
                    (1.0 + s) * (-s).exp()
                } else {
                    let s = 5.0_f64.sqrt() * r / l;
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                }
            }
        }
    }

    /// Gram matrix `K[i][j] = k(points[i], points[j])`: symmetric, unit
    /// diagonal, PSD up to rounding. No jitter is added here; regularization
    /// is the GP module's job.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::Input("gram matrix of an empty point set".into()));
        }
        let t = points.len();
        let mut k = DMatrix::zeros(t, t);
        for i in 0..t {
            k[(i, i)] = 1.0;
            for j in (i + 1)..t {
                let v = self.eval(&points[i], &points[j])?;
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}
