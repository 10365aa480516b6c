//! The four-group backcross model and its log-likelihood.
//!
//! Individuals are split by their flanking-marker genotypes into four groups.
//! Groups 1 and 4 are pure samples from the two QTL-genotype densities `f₁`
//! and `f₂`; groups 2 and 3 are the recombinant classes, mixtures with weight
//! `θ` (resp. `1 − θ`) on `f₁`, where `θ` is the relative QTL position in
//! the interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, LocScaleParams};

/// Phenotypes of the four marker-genotype groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeGroups {
    groups: [Vec<f64>; 4],
}

impl PhenotypeGroups {
    /// Builds the groups. Values must be finite; group-size requirements are
    /// checked by the operations that need them.
    pub fn new(g1: Vec<f64>, g2: Vec<f64>, g3: Vec<f64>, g4: Vec<f64>) -> Result<Self> {
        let groups = [g1, g2, g3, g4];
        for (i, g) in groups.iter().enumerate() {
            if let Some(v) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "group {} holds a non-finite phenotype ({v})",
                    i + 1
                )));
            }
        }
        Ok(Self { groups })
    }

    /// Group `i` (1-based, as in the model).
    pub fn group(&self, i: usize) -> &[f64] {
        &self.groups[i - 1]
    }

    pub fn groups(&self) -> &[Vec<f64>; 4] {
        &self.groups
    }

    pub fn sizes(&self) -> [usize; 4] {
        [
            self.groups[0].len(),
            self.groups[1].len(),
            self.groups[2].len(),
            self.groups[3].len(),
        ]
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// All phenotypes in ascending order, so that anything computed from the
    /// pooled sample ignores group labels exactly.
    pub fn pooled(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.groups.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Requirement for fitting: both anchoring groups hold at least two values.
    pub fn check_fittable(&self) -> Result<()> {
        let [n1, _, _, n4] = self.sizes();
        if n1 < 2 || n4 < 2 {
            return Err(Error::InvalidInput(format!(
                "groups 1 and 4 need at least two observations each (n1={n1}, n4={n4})"
            )));
        }
        Ok(())
    }

    /// Exchanges the two recombinant groups.
    pub fn swap_recombinants(&self) -> Self {
        let [g1, g2, g3, g4] = self.groups.clone();
        Self {
            groups: [g1, g3, g2, g4],
        }
    }

    /// Relabels the QTL genotypes: groups 1↔4 and 2↔3.
    pub fn mirror(&self) -> Self {
        let [g1, g2, g3, g4] = self.groups.clone();
        Self {
            groups: [g4, g3, g2, g1],
        }
    }

    /// Applies `y ↦ a·y + b` to every phenotype.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            groups: self
                .groups
                .clone()
                .map(|g| g.into_iter().map(|y| a * y + b).collect()),
        }
    }
}

/// Flanking-marker interval: recombination frequency and, when known, the
/// map distance it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalConfig {
    pub r: f64,
    pub d_cm: Option<f64>,
}

impl IntervalConfig {
    /// Direct entry of a recombination frequency, `0 < r ≤ 1`.
    pub fn from_r(r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Domain(format!(
                "recombination frequency must lie in (0, 1], got {r}"
            )));
        }
        Ok(Self { r, d_cm: None })
    }

    /// Recombination frequency from a map distance via the Haldane function.
    pub fn from_distance(d_cm: f64) -> Result<Self> {
        Ok(Self {
            r: haldane(d_cm)?,
            d_cm: Some(d_cm),
        })
    }
}

/// Haldane map function, `r = ½(1 − e^{−2d/100})` for `d` in centiMorgans.
pub fn haldane(d_cm: f64) -> Result<f64> {
    if !(d_cm > 0.0) || !d_cm.is_finite() {
        return Err(Error::Domain(format!(
            "map distance must be positive and finite, got {d_cm}"
        )));
    }
    Ok(-0.5 * (-2.0 * d_cm / 100.0).exp_m1())
}

/// Parameters `(θ, μ₁, σ₁, μ₂, σ₂)` of the four-group mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub theta: f64,
    pub comp1: LocScaleParams,
    pub comp2: LocScaleParams,
}

impl MixtureParams {
    pub fn new(theta: f64, comp1: LocScaleParams, comp2: LocScaleParams) -> Result<Self> {
        let p = Self { theta, comp1, comp2 };
        p.validate()?;
        Ok(p)
    }

    /// Both components equal: the null model.
    pub fn homogeneous(params: LocScaleParams) -> Self {
        Self {
            theta: 0.5,
            comp1: params,
            comp2: params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Domain(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        for c in [self.comp1, self.comp2] {
            LocScaleParams::new(c.mu, c.sigma)?;
        }
        Ok(())
    }
}

/// `log{θ·e^{a} + (1 − θ)·e^{b}}`, exact at `θ ∈ {0, 1}`.
#[inline]
pub(crate) fn log_mix(theta: f64, la: f64, lb: f64) -> f64 {
    if theta <= 0.0 {
        return lb;
    }
    if theta >= 1.0 {
        return la;
    }
    let x = theta.ln() + la;
    let y = (-theta).ln_1p() + lb;
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Mixture log-likelihood of the four groups.
pub fn loglik(groups: &PhenotypeGroups, kernel: KernelFamily, params: &MixtureParams) -> Result<f64> {
    params.validate()?;
    let [n1, _, _, n4] = groups.sizes();
    if n1 == 0 || n4 == 0 {
        return Err(Error::InvalidInput("groups 1 and 4 must be non-empty".into()));
    }
    Ok(loglik_unchecked(groups, kernel, params))
}

pub(crate) fn loglik_unchecked(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    params: &MixtureParams,
) -> f64 {
    let MixtureParams { theta, comp1: c1, comp2: c2 } = *params;
    let f1 = |y: f64| kernel.ln_f(y, c1.mu, c1.sigma);
    let f2 = |y: f64| kernel.ln_f(y, c2.mu, c2.sigma);
    let anchors = groups.group(1).iter().map(|&y| f1(y)).sum::<f64>()
        + groups.group(4).iter().map(|&y| f2(y)).sum::<f64>();
    let g2 = groups
        .group(2)
        .iter()
        .map(|&y| log_mix(theta, f1(y), f2(y)))
        .sum::<f64>();
    let g3 = groups
        .group(3)
        .iter()
        .map(|&y| log_mix(1.0 - theta, f1(y), f2(y)))
        .sum::<f64>();
    // pairing the recombinant groups keeps the total exact under g2 <-> g3
    anchors + (g2 + g3)
}

/// Log-likelihood of the null model, where both components equal `params`.
pub fn null_loglik(groups: &PhenotypeGroups, kernel: KernelFamily, params: LocScaleParams) -> Result<f64> {
    loglik(groups, kernel, &MixtureParams::homogeneous(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_PHI0: f64 = -0.918_938_533_204_672_8;

    fn groups(g1: &[f64], g2: &[f64], g3: &[f64], g4: &[f64]) -> PhenotypeGroups {
        PhenotypeGroups::new(g1.to_vec(), g2.to_vec(), g3.to_vec(), g4.to_vec()).unwrap()
    }

    fn std_mix(theta: f64) -> MixtureParams {
        MixtureParams::new(theta, LocScaleParams::standard(), LocScaleParams::standard()).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let k = KernelFamily::Normal;
        let g = groups(&[0.0], &[], &[], &[0.0]);
        assert!((loglik(&g, k, &std_mix(0.5)).unwrap() - 2.0 * LN_PHI0).abs() < 1e-12);
        let g = groups(&[0.0], &[0.0], &[], &[0.0]);
        assert!((loglik(&g, k, &std_mix(0.3)).unwrap() - (-2.756816)).abs() < 1e-6);
        let g = groups(&[-1.0, 1.0], &[], &[], &[-1.0, 1.0]);
        for theta in [0.0, 0.2, 1.0] {
            assert!((loglik(&g, k, &std_mix(theta)).unwrap() - (-5.675754)).abs() < 1e-6);
        }
    }

    #[test]
    fn null_loglik_is_theta_free() {
        let k = KernelFamily::Logistic;
        let g = groups(&[0.3, -1.2], &[2.0, 0.1], &[-0.4], &[1.5, 0.9]);
        let p = LocScaleParams::new(0.2, 1.3).unwrap();
        let null = null_loglik(&g, k, p).unwrap();
        assert_eq!(null, loglik(&g, k, &MixtureParams::homogeneous(p)).unwrap());
        let other = loglik(&g, k, &MixtureParams::new(0.123, p, p).unwrap()).unwrap();
        assert!((null - other).abs() < 1e-12);
    }

    #[test]
    fn pooled_three_points() {
        let g = groups(&[-1.0], &[0.0], &[], &[1.0]);
        let v = null_loglik(&g, KernelFamily::Normal, LocScaleParams::standard()).unwrap();
        assert!((v - (-3.756816)).abs() < 1e-6);
    }

    #[test]
    fn empty_anchor_group_is_rejected() {
        let g = groups(&[], &[0.0], &[], &[1.0]);
        assert!(matches!(
            loglik(&g, KernelFamily::Normal, &std_mix(0.5)),
            Err(Error::InvalidInput(_))
        ));
        let bad = MixtureParams {
            theta: 0.5,
            comp1: LocScaleParams { mu: 0.0, sigma: -1.0 },
            comp2: LocScaleParams::standard(),
        };
        let g = groups(&[1.0], &[], &[], &[2.0]);
        assert!(matches!(loglik(&g, KernelFamily::Normal, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn endpoint_theta_does_not_underflow() {
        // the zero-weight component would give log(0) if evaluated naively
        let g = groups(&[0.0, 0.1], &[50.0], &[-50.0], &[0.0, 0.2]);
        let p = MixtureParams::new(
            0.0,
            LocScaleParams::new(-50.0, 1.0).unwrap(),
            LocScaleParams::new(50.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(loglik(&g, KernelFamily::Normal, &p).unwrap().is_finite());
    }

    #[test]
    fn haldane_values() {
        assert!((haldane(5.0).unwrap() - 0.0475813).abs() < 1e-7);
        assert!((haldane(20.0).unwrap() - 0.1648400).abs() < 1e-7);
        assert!(haldane(1e-9).unwrap() < 1e-10);
        assert!(haldane(0.0).is_err());
        assert!(haldane(-3.0).is_err());
    }

    fn arb_groups() -> impl Strategy<Value = PhenotypeGroups> {
        let g = |min| prop::collection::vec(-5.0f64..5.0, min..6);
        (g(1), g(0), g(0), g(1)).prop_map(|(a, b, c, d)| PhenotypeGroups::new(a, b, c, d).unwrap())
    }

    fn arb_params() -> impl Strategy<Value = MixtureParams> {
        (0.0f64..=1.0, -2.0f64..2.0, 0.3f64..3.0, -2.0f64..2.0, 0.3f64..3.0).prop_map(
            |(t, m1, s1, m2, s2)| MixtureParams {
                theta: t,
                comp1: LocScaleParams { mu: m1, sigma: s1 },
                comp2: LocScaleParams { mu: m2, sigma: s2 },
            },
        )
    }

    proptest! {
        #[test]
        fn theta_swap_symmetry(g in arb_groups(), p in arb_params(), logistic in any::<bool>()) {
            let k = if logistic { KernelFamily::Logistic } else { KernelFamily::Normal };
            let swapped = MixtureParams { theta: 1.0 - p.theta, ..p };
            let a = loglik(&g, k, &p).unwrap();
            let b = loglik(&g.swap_recombinants(), k, &swapped).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn component_relabeling(g1 in prop::collection::vec(-4.0f64..4.0, 1..5),
                                g2 in prop::collection::vec(-4.0f64..4.0, 0..5),
                                g3 in prop::collection::vec(-4.0f64..4.0, 0..5),
                                p in arb_params()) {
            // with g1 = g4, swapping component labels together with θ ↔ 1 − θ
            // leaves the likelihood intact; mirroring the groups while swapping
            // labels does so for any data
            let g = PhenotypeGroups::new(g1.clone(), g2, g3, g1).unwrap();
            let relabeled = MixtureParams { theta: 1.0 - p.theta, comp1: p.comp2, comp2: p.comp1 };
            let k = KernelFamily::Normal;
            let a = loglik(&g, k, &p).unwrap();
            let b = loglik(&g, k, &relabeled).unwrap();
            let mirrored = MixtureParams { theta: p.theta, ..relabeled };
            let c = loglik(&g.mirror(), k, &mirrored).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            prop_assert!((a - c).abs() <= 1e-10 * a.abs().max(1.0));
        }

        #[test]
        fn affine_equivariance(g in arb_groups(), p in arb_params(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            for k in KernelFamily::ALL {
                let mapped = MixtureParams { theta: p.theta, comp1: p.comp1.affine(a, b), comp2: p.comp2.affine(a, b) };
                let lhs = loglik(&g.affine(a, b), k, &mapped).unwrap();
                let rhs = loglik(&g, k, &p).unwrap() - g.n() as f64 * a.ln();
                prop_assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
            }
        }
    }
}
