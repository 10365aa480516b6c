//! Limiting power under local alternatives.
//!
//! With the genotype means `μ₀ ∓ δ_μ/√n` and scales `σ₀ ± δ_σ/√n` (component
//! 1 gets the minus sign) and the QTL at relative position `θ₀`, the
//! statistics converge to suprema of non-central χ² processes with drift
//!
//! ```text
//! ρ(θ) = −{1 + 2r(2θ₀θ − θ₀ − θ)}·τ(θ)^{−1/2}·σ₀⁻¹·A^{1/2}·(δ_μ, δ_σ)ᵀ.
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_r, grid_coefficients, sample_null, tau, NullKind};
use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::rng::{derive_seed, par_draws};

/// Local alternative in the `n^{−1/2}` neighbourhood of a null member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalAlternative {
    /// QTL position within the interval, as a fraction of `r`.
    pub theta0: f64,
    pub delta_mu: f64,
    pub delta_sigma: f64,
    pub sigma0: f64,
    pub kernel: KernelFamily,
}

impl LocalAlternative {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta0) {
            return Err(Error::Domain(format!("theta0 = {} outside [0, 1]", self.theta0)));
        }
        if !(self.delta_mu >= 0.0 && self.delta_sigma >= 0.0) {
            return Err(Error::Domain("local effects must be non-negative".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::Domain("sigma0 must be positive".into()));
        }
        Ok(())
    }

    /// Drift `ρ(θ)` of the two-dimensional process.
    pub fn drift(&self, r: f64, theta: f64) -> [f64; 2] {
        let scale = self.drift_scale(r, theta);
        let h = self.kernel.info_matrix().sqrt();
        [
            scale * (h[0][0] * self.delta_mu + h[0][1] * self.delta_sigma),
            scale * (h[1][0] * self.delta_mu + h[1][1] * self.delta_sigma),
        ]
    }

    /// Drift of the one-dimensional equal-scale process; `δ_σ` does not enter.
    pub fn drift_equal_scale(&self, r: f64, theta: f64) -> f64 {
        self.drift_scale(r, theta) * self.kernel.info_matrix().sigma_t2.sqrt() * self.delta_mu
    }

    fn drift_scale(&self, r: f64, theta: f64) -> f64 {
        let t0 = self.theta0;
        -(1.0 + 2.0 * r * (2.0 * t0 * theta - t0 - theta)) / tau(r, theta).sqrt() / self.sigma0
    }
}

/// Probability that the limiting statistic exceeds the null upper-α
/// quantile, from `n` simulated drifted process paths on a uniform grid.
/// The null quantile comes from the representation sampler with `n` draws.
pub fn local_power_limit(
    r: f64,
    alt: &LocalAlternative,
    kind: NullKind,
    alpha: f64,
    grid_size: usize,
    n: usize,
    seed: u64,
) -> Result<f64> {
    check_r(r)?;
    alt.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) || grid_size < 2 || n == 0 {
        return Err(Error::InvalidInput("need 0 < α < 1, a grid of ≥ 2 points and n ≥ 1".into()));
    }
    let crit = sample_null(kind, r, n, derive_seed(seed, 1))?.critical_value(alpha)?;
    let m = (grid_size - 1) as f64;
    let path: Vec<(f64, f64, [f64; 2], f64)> = grid_coefficients(r, grid_size)
        .into_iter()
        .enumerate()
        .map(|(k, (c1, c2))| {
            let th = k as f64 / m;
            (c1, c2, alt.drift(r, th), alt.drift_equal_scale(r, th))
        })
        .collect();
    let exceed = par_draws(n, derive_seed(seed, 2), |rng| {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut sup = 0.0f64;
        for &(c1, c2, d, d_star) in &path {
            let v = match kind {
                NullKind::Full => {
                    let a = d[0] + c1 * z[0] + c2 * z[1];
                    let b = d[1] + c1 * z[2] + c2 * z[3];
                    a * a + b * b
                }
                NullKind::Star => {
                    let a = d_star + c1 * z[0] + c2 * z[1];
                    a * a
                }
            };
            sup = sup.max(v);
        }
        sup > crit
    });
    Ok(exceed.iter().filter(|&&e| e).count() as f64 / n as f64)
}
