//! Limiting null distributions of the likelihood ratio statistics.
//!
//! Under the null, `R_n` converges to the supremum over θ of `Z₁²(θ) + Z₂²(θ)`
//! and `R_n*` to the supremum of `Z₁²(θ)`, where `Z₁` and `Z₂` are
//! independent copies of the Gaussian process
//!
//! ```text
//! Z(θ) = c₁(θ)·z₁ + c₂(θ)·z₂,   c₁ = √(1−r)/√τ(θ),   c₂ = √r·(2θ−1)/√τ(θ),
//! τ(θ) = 1 + 4rθ(θ−1).
//! ```
//!
//! Both suprema have closed-form representations in terms of χ²₂ radii and
//! uniform angles. This module samples those representations, simulates the
//! process directly as a brute-force check, and stores the draws as
//! [`NullDistTable`]s.

mod davies;
mod kl;
mod local_power;
mod table;

pub use davies::{davies_constant, davies_pvalue, davies_variation, psi, psi_analytic, rice_constant};
pub use kl::{backcross_group_probs, kl_information, KlComponent, KlResult};
pub use local_power::{local_power_limit, LocalAlternative};
pub use table::{pvalue, NullDistTable, NullKind, SampleMethod, TableMeta};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::par_draws;

/// `τ(θ) = 1 + 4rθ(θ − 1)`; equals 1 at the interval ends and `1 − r` at the midpoint.
#[inline]
pub fn tau(r: f64, theta: f64) -> f64 {
    1.0 + 4.0 * r * theta * (theta - 1.0)
}

/// Coefficients `(c₁(θ), c₂(θ))` of the limiting process.
#[inline]
pub fn process_coefficients(r: f64, theta: f64) -> (f64, f64) {
    let s = tau(r, theta).sqrt();
    ((1.0 - r).sqrt() / s, r.sqrt() * (2.0 * theta - 1.0) / s)
}

/// Covariance `Cov(Z(θ₁), Z(θ₂))` of the limiting process.
#[inline]
pub fn covariance(r: f64, theta1: f64, theta2: f64) -> f64 {
    (1.0 + r * (4.0 * theta1 * theta2 - 2.0 * theta1 - 2.0 * theta2))
        / (tau(r, theta1) * tau(r, theta2)).sqrt()
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("recombination fraction must lie in (0, 1), got {r}")))
    }
}

/// One of the three angle sets partitioning `[−π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AngleSet {
    A1,
    A2,
    A3,
}

/// Angle `γ = arccos √(1 − r)` and the partition it induces.
///
/// * `A1 = [−γ, γ] ∪ [π−γ, π] ∪ [−π, −π+γ]`
/// * `A2 = [γ, π/2] ∪ [−π+γ, −π/2]`
/// * `A3 = [π/2, π−γ] ∪ [−π/2, −γ]`
///
/// Shared endpoints go to the first set in the order A1, A2, A3; the
/// representations are continuous there, so the choice only fixes results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGeometry {
    pub r: f64,
    pub gamma: f64,
}

impl AngleGeometry {
    pub fn new(r: f64) -> Result<Self> {
        check_r(r)?;
        Ok(Self {
            r,
            gamma: (1.0 - r).sqrt().acos(),
        })
    }

    /// Set containing `eta`.
    pub fn classify(&self, eta: f64) -> Result<AngleSet> {
        if !(-PI..=PI).contains(&eta) {
            return Err(Error::Domain(format!("angle {eta} outside [−π, π]")));
        }
        Ok(self.classify_unchecked(eta))
    }

    #[inline]
    fn classify_unchecked(&self, eta: f64) -> AngleSet {
        let g = self.gamma;
        let a = eta.abs();
        if a <= g || a >= PI - g {
            AngleSet::A1
        } else if (eta > 0.0 && eta <= FRAC_PI_2) || eta <= -FRAC_PI_2 {
            AngleSet::A2
        } else {
            AngleSet::A3
        }
    }

    /// `R` for radii `ρ₁², ρ₂²` and angle `η`.
    #[inline]
    pub fn eval_r(&self, rho1_sq: f64, rho2_sq: f64, eta: f64) -> f64 {
        let g = self.gamma;
        let factor = match self.classify_unchecked(eta) {
            AngleSet::A1 => 1.0,
            AngleSet::A2 => (2.0 * eta - 2.0 * g).cos(),
            AngleSet::A3 => (2.0 * eta + 2.0 * g).cos(),
        };
        0.5 * (rho1_sq + rho2_sq) + (rho1_sq * rho2_sq).sqrt() * factor
    }

    /// `R*` for radius `ρ²` and angle `η*`.
    #[inline]
    pub fn eval_rstar(&self, rho_sq: f64, eta: f64) -> f64 {
        let g = self.gamma;
        let factor = match self.classify_unchecked(eta) {
            AngleSet::A1 => 1.0,
            AngleSet::A2 => (eta - g).cos().powi(2),
            AngleSet::A3 => (eta + g).cos().powi(2),
        };
        rho_sq * factor
    }
}

/// Set containing `eta` for the partition of `geom`.
pub fn classify_angle(eta: f64, geom: &AngleGeometry) -> Result<AngleSet> {
    geom.classify(eta)
}

fn chi2_2<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * rng.sample::<f64, _>(Exp1)
}

/// Samples `R` from its representation: `ρ₁², ρ₂²` independent χ²₂,
/// `η = (U₁ + U₂)/2 − π/4` with `U₁, U₂` uniform on `[−3π/4, 5π/4]`.
pub fn sample_r(r: f64, n: usize, seed: u64) -> Result<NullDistTable> {
    let geom = AngleGeometry::new(r)?;
    let draws = par_draws(n, seed, |rng| {
        let rho1 = chi2_2(rng);
        let rho2 = chi2_2(rng);
        let u1 = rng.gen_range(-3.0 * FRAC_PI_4..=5.0 * FRAC_PI_4);
        let u2 = rng.gen_range(-3.0 * FRAC_PI_4..=5.0 * FRAC_PI_4);
        let eta = (0.5 * (u1 + u2) - FRAC_PI_4).clamp(-PI, PI);
        geom.eval_r(rho1, rho2, eta)
    });
    NullDistTable::from_samples(r, NullKind::Full, draws, seed, SampleMethod::Representation)
}

/// Samples `R*` from its representation: `ρ²` χ²₂ and `η*` uniform on `[−π, π]`.
pub fn sample_rstar(r: f64, n: usize, seed: u64) -> Result<NullDistTable> {
    let geom = AngleGeometry::new(r)?;
    let draws = par_draws(n, seed, |rng| {
        let rho = chi2_2(rng);
        let eta = rng.gen_range(-PI..=PI);
        geom.eval_rstar(rho, eta)
    });
    NullDistTable::from_samples(r, NullKind::Star, draws, seed, SampleMethod::Representation)
}

/// Representation sampler for either statistic.
pub fn sample_null(kind: NullKind, r: f64, n: usize, seed: u64) -> Result<NullDistTable> {
    match kind {
        NullKind::Full => sample_r(r, n, seed),
        NullKind::Star => sample_rstar(r, n, seed),
    }
}

/// Coefficients of the process on a uniform grid of `size` points.
fn grid_coefficients(r: f64, size: usize) -> Vec<(f64, f64)> {
    let m = (size - 1) as f64;
    (0..size).map(|k| process_coefficients(r, k as f64 / m)).collect()
}

/// Coupled suprema `(sup Z₁² + Z₂², sup Z₁²)` of simulated process paths on
/// a uniform grid, one pair per replicate, in replicate order.
pub fn oracle_draws(r: f64, grid_size: usize, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_r(r)?;
    if grid_size < 2 {
        return Err(Error::InvalidInput("process grid needs at least two points".into()));
    }
    let coef = grid_coefficients(r, grid_size);
    Ok(par_draws(n, seed, |rng| {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut full = 0.0f64;
        let mut star = 0.0f64;
        for &(c1, c2) in &coef {
            let a = c1 * z[0] + c2 * z[1];
            let b = c1 * z[2] + c2 * z[3];
            full = full.max(a * a + b * b);
            star = star.max(a * a);
        }
        (full, star)
    }))
}

/// Null table from direct simulation of the process on a grid.
pub fn oracle_sup_process(
    r: f64,
    kind: NullKind,
    grid_size: usize,
    n: usize,
    seed: u64,
) -> Result<NullDistTable> {
    let draws = oracle_draws(r, grid_size, n, seed)?;
    let samples = draws
        .into_iter()
        .map(|(full, star)| match kind {
            NullKind::Full => full,
            NullKind::Star => star,
        })
        .collect();
    NullDistTable::from_samples(r, kind, samples, seed, SampleMethod::Oracle)
}

/// Two-sample Kolmogorov–Smirnov distance between sorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    const R_D5: f64 = 0.047_581_3;
    const R_D20: f64 = 0.164_840_0;

    #[test]
    fn classification_examples() {
        let g = AngleGeometry::new(R_D5).unwrap();
        assert!((g.gamma.sin().powi(2) - R_D5).abs() < 1e-15);
        assert!((g.gamma - 0.219_899_3).abs() < 1e-7);
        assert_eq!(g.classify(0.0).unwrap(), AngleSet::A1);
        assert_eq!(g.classify(FRAC_PI_4).unwrap(), AngleSet::A2);
        assert_eq!(g.classify(-PI).unwrap(), AngleSet::A1);
        assert_eq!(g.classify(PI).unwrap(), AngleSet::A1);
        assert_eq!(g.classify(-FRAC_PI_4).unwrap(), AngleSet::A3);
        assert_eq!(g.classify(3.0 * FRAC_PI_4).unwrap(), AngleSet::A3);
        assert_eq!(g.classify(-3.0 * FRAC_PI_4).unwrap(), AngleSet::A2);
        // boundary precedence
        assert_eq!(g.classify(g.gamma).unwrap(), AngleSet::A1);
        assert_eq!(g.classify(FRAC_PI_2).unwrap(), AngleSet::A2);
        assert_eq!(g.classify(-FRAC_PI_2).unwrap(), AngleSet::A2);
        assert!(matches!(g.classify(3.2), Err(Error::Domain(_))));
        assert!(AngleGeometry::new(0.0).is_err());
        assert!(AngleGeometry::new(1.0).is_err());
    }

    #[test]
    fn representation_examples() {
        let g = AngleGeometry::new(R_D5).unwrap();
        assert!((g.eval_r(2.0, 2.0, 0.0) - 4.0).abs() < 1e-15);
        let expected = 2.0 + 2.0 * (FRAC_PI_2 - 2.0 * g.gamma).cos();
        assert!((g.eval_r(2.0, 2.0, FRAC_PI_4) - expected).abs() < 1e-14);
        assert!((expected - 2.851_514_6).abs() < 1e-7);
        let h = AngleGeometry::new(R_D20).unwrap();
        assert!((h.eval_rstar(5.0, 0.0) - 5.0).abs() < 1e-15);
        assert!((h.eval_rstar(5.0, FRAC_PI_2) - 5.0 * R_D20).abs() < 1e-12);
    }

    #[test]
    fn representation_is_continuous_at_boundaries() {
        for r in [R_D5, R_D20, 0.5] {
            let g = AngleGeometry::new(r).unwrap();
            let y = g.gamma;
            for b in [y, FRAC_PI_2, PI - y, -PI + y, -FRAC_PI_2, -y] {
                for (r1, r2) in [(1.3, 0.4), (5.0, 2.0)] {
                    let lo = g.eval_r(r1, r2, b.next_down());
                    let hi = g.eval_r(r1, r2, b.next_up());
                    assert!((lo - hi).abs() < 1e-12, "r={r} b={b}");
                    let lo = g.eval_rstar(r1, b.next_down());
                    let hi = g.eval_rstar(r1, b.next_up());
                    assert!((lo - hi).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sample_quantile_bounds() {
        for r in [0.01, R_D5, R_D20, 0.3] {
            let t = sample_r(r, 20_000, 1).unwrap();
            assert!(t.quantile(0.95).unwrap() >= 5.99146 * 0.97);
            let s = sample_rstar(r, 20_000, 2).unwrap();
            let q = s.quantile(0.95).unwrap();
            assert!(q > 3.84146 * 0.95 && q < 5.99146 * 1.05, "r={r} q={q}");
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let a = sample_r(R_D5, 9_000, 77).unwrap();
        let b = sample_r(R_D5, 9_000, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_r(R_D5, 9_000, 78).unwrap());
    }

    #[test]
    fn oracle_single_path_example() {
        // z₁₁ = 1, others 0: sup of c₁² is reached at θ = 0.5 with value 1
        let coef = grid_coefficients(R_D20, 201);
        let sup = coef.iter().map(|(c1, _)| c1 * c1).fold(0.0, f64::max);
        assert!((sup - 1.0).abs() < 1e-14);
        for (k, (c1, c2)) in coef.iter().enumerate() {
            assert!((c1 * c1 + c2 * c2 - 1.0).abs() < 1e-14, "k={k}");
        }
        assert_eq!(tau(0.3, 0.0), 1.0);
        assert_eq!(tau(0.3, 1.0), 1.0);
        assert!((tau(0.3, 0.5) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn process_covariance_matches_simulation() {
        let r = R_D20;
        let (a1, a2) = process_coefficients(r, 0.2);
        let (b1, b2) = process_coefficients(r, 0.8);
        let n = 100_000;
        let pairs = par_draws(n, 3, |rng| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (a1 * z1 + a2 * z2, b1 * z1 + b2 * z2)
        });
        let cov = pairs.iter().map(|(x, y)| x * y).sum::<f64>() / n as f64;
        let exact = covariance(r, 0.2, 0.8);
        let expected = (1.0 + r * (4.0 * 0.16 - 2.0)) / (tau(r, 0.2) * tau(r, 0.8)).sqrt();
        assert!((exact - expected).abs() < 1e-15);
        assert!((cov - exact).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn full_dominates_star_on_coupled_paths() {
        let draws = oracle_draws(R_D5, 101, 5_000, 4).unwrap();
        assert!(draws.iter().all(|(f, s)| f >= s));
    }

    #[test]
    fn ks_distance_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    }
}
