//! Kullback–Leibler information of a four-group alternative from the null family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::weighted_mle;
use crate::kernel::{KernelFamily, LocScaleParams};
use crate::quadrature::composite_rule;

/// Half-width of the integration range in units of each component's scale.
const RANGE_SCALES: f64 = 40.0;
/// Panel width in units of the smallest component scale.
const PANEL_SCALES: f64 = 0.25;

/// One genotype distribution of the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlComponent {
    pub kernel: KernelFamily,
    pub params: LocScaleParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlResult {
    /// `Σᵢ pᵢ KL(gᵢ ‖ f₀)` at the minimising null density.
    pub kl: f64,
    /// Location and scale of the minimising null density.
    pub null: LocScaleParams,
}

/// Probabilities of the four flanking-marker groups in a backcross.
pub fn backcross_group_probs(r: f64) -> [f64; 4] {
    [0.5 * (1.0 - r), 0.5 * r, 0.5 * r, 0.5 * (1.0 - r)]
}

/// Weighted KL information `Σᵢ pᵢ ∫ gᵢ log(gᵢ/f₀)` of the group densities
/// `g₁ = f₁`, `g₂ = θf₁ + (1−θ)f₂`, `g₃ = (1−θ)f₁ + θf₂`, `g₄ = f₂` from the
/// member `f₀` of `kernel_null` that minimises it.
///
/// The minimiser maximises `∫ m log f₀` for the marginal mixture `m = Σ pᵢgᵢ`,
/// so it is the location-scale MLE under `m`; integrals use a fixed
/// composite Kronrod rule.
pub fn kl_information(
    p_groups: [f64; 4],
    f1: KlComponent,
    f2: KlComponent,
    theta: f64,
    kernel_null: KernelFamily,
) -> Result<KlResult> {
    if p_groups.iter().any(|p| !(*p >= 0.0)) || (p_groups.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("group probabilities {p_groups:?} must sum to 1")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} outside [0, 1]")));
    }
    for c in [f1, f2] {
        LocScaleParams::new(c.params.mu, c.params.sigma)?;
    }
    let spread = |c: &KlComponent| RANGE_SCALES * c.params.sigma * c.kernel.quad_scale();
    let lo = (f1.params.mu - spread(&f1)).min(f2.params.mu - spread(&f2));
    let hi = (f1.params.mu + spread(&f1)).max(f2.params.mu + spread(&f2));
    let panels = ((hi - lo) / (PANEL_SCALES * f1.params.sigma.min(f2.params.sigma))).ceil() as usize;
    let rule = composite_rule(lo, hi, panels.clamp(16, 200_000));

    let w = [
        (1.0, 0.0),
        (theta, 1.0 - theta),
        (1.0 - theta, theta),
        (0.0, 1.0),
    ];
    let mut neg_entropy = 0.0;
    let mut ys = Vec::with_capacity(rule.len());
    let mut ms = Vec::with_capacity(rule.len());
    for &(y, wq) in &rule {
        let l1 = f1.kernel.ln_f(y, f1.params.mu, f1.params.sigma);
        let l2 = f2.kernel.ln_f(y, f2.params.mu, f2.params.sigma);
        let (d1, d2) = (l1.exp(), l2.exp());
        let mut m = 0.0;
        for (p, (a, b)) in p_groups.iter().zip(w) {
            let g = a * d1 + b * d2;
            if g > 0.0 {
                neg_entropy += p * wq * g * g.ln();
            }
            m += p * g;
        }
        ys.push(y);
        ms.push(m * wq);
    }
    let mass: f64 = ms.iter().sum();
    let mean = ys.iter().zip(&ms).map(|(y, m)| y * m).sum::<f64>() / mass;
    let var = ys.iter().zip(&ms).map(|(y, m)| m * (y - mean).powi(2)).sum::<f64>() / mass;
    let start = LocScaleParams {
        mu: mean,
        sigma: (var / kernel_null.std_variance()).sqrt(),
    };
    let null = weighted_mle(kernel_null, &ys, &ms, start);
    let cross: f64 = ys
        .iter()
        .zip(&ms)
        .map(|(&y, m)| m * kernel_null.ln_f(y, null.mu, null.sigma))
        .sum();
    let kl = neg_entropy - cross;
    if !kl.is_finite() {
        return Err(Error::Numerical("KL quadrature produced a non-finite value".into()));
    }
    Ok(KlResult { kl: kl.max(0.0), null })
}
