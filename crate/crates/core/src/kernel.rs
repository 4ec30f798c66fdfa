//! Gaussian RBF kernel and Silverman bandwidth selection.
//!
//! The kernel is `k(x, y) = exp(-||x - y||^2 / sigma^2)`. There is no factor
//! of two in the denominator.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Kernel spread, in input-space distance units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("must be finite and > 0, got {sigma}"),
            ));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel value for vectors already known to share a dimension.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (-squared_distance(x, y) / (self.sigma * self.sigma)).exp()
    }
}

#[inline]
pub fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gaussian kernel with a dimension check.
pub fn gaussian_kernel(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    Ok(params.eval(x, y))
}

/// Silverman's rule of thumb, `1.06 * s * N^(-1/5)`, where `s` is the mean of
/// the per-coordinate sample standard deviations.
pub fn silverman_bandwidth(samples: &[Vec<f64>]) -> Result<KernelParams> {
    if samples.len() < 2 {
        return Err(Error::Degenerate(format!(
            "silverman bandwidth needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if dim == 0 {
        return Err(Error::Degenerate("samples have dimension 0".into()));
    }
    for s in samples {
        check_dim(dim, s.len())?;
    }
    let n = samples.len() as f64;
    let mut spread = 0.0;
    for c in 0..dim {
        let mean = samples.iter().map(|s| s[c]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        spread += var.sqrt();
    }
    spread /= dim as f64;
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    KernelParams::new(1.06 * spread * n.powf(-0.2))
}
