//! Location-scale kernel families.
//!
//! A family is generated by a standard density `f(z; 0, 1)` through
//! `f(y; μ, σ) = σ⁻¹ f((y − μ)/σ; 0, 1)`. Everything the likelihood code and
//! the limiting theory need from a family is derived from three behavioural
//! functions of the standard density: `log f`, its first derivative and its
//! second derivative.
//!
//! New families (extreme-value, Student t, ...) are added as variants here,
//! supplying those three functions, a sampler and a quadrature scale.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_real_line, QuadConfig};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Supported standard densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Normal,
    Logistic,
}

/// Location and scale, both in phenotype units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocScaleParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LocScaleParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::Domain(format!(
                "location-scale parameters need finite mu and sigma > 0 (got mu={mu}, sigma={sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub const fn standard() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }

    /// Image of the parameters under `y ↦ a·y + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self {
            mu: a * self.mu + b,
            sigma: a.abs() * self.sigma,
        }
    }
}

/// Covariance matrix of the standard scores `(T, U)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub sigma_t2: f64,
    pub sigma_u2: f64,
    pub sigma_tu: f64,
}

impl InfoMatrix {
    pub fn det(&self) -> f64 {
        self.sigma_t2 * self.sigma_u2 - self.sigma_tu * self.sigma_tu
    }

    pub fn is_positive_definite(&self) -> bool {
        self.sigma_t2 > 0.0 && self.sigma_u2 > 0.0 && self.det() > 0.0
    }

    /// `vᵀ A⁻¹ v`.
    pub fn inverse_quad_form(&self, v: [f64; 2]) -> f64 {
        let det = self.det();
        (self.sigma_u2 * v[0] * v[0] - 2.0 * self.sigma_tu * v[0] * v[1]
            + self.sigma_t2 * v[1] * v[1])
            / det
    }

    /// Symmetric positive-definite square root, as row-major `[[a, b], [b, c]]`.
    pub fn sqrt(&self) -> [[f64; 2]; 2] {
        // For a 2x2 SPD matrix M, sqrt(M) = (M + s I) / t with
        // s = sqrt(det M), t = sqrt(trace M + 2 s).
        let s = self.det().sqrt();
        let t = (self.sigma_t2 + self.sigma_u2 + 2.0 * s).sqrt();
        [
            [(self.sigma_t2 + s) / t, self.sigma_tu / t],
            [self.sigma_tu / t, (self.sigma_u2 + s) / t],
        ]
    }
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 2] = [KernelFamily::Normal, KernelFamily::Logistic];

    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Normal => "normal",
            KernelFamily::Logistic => "logistic",
        }
    }

    /// `log f(z; 0, 1)`.
    #[inline]
    pub fn log_density_std(&self, z: f64) -> f64 {
        match self {
            KernelFamily::Normal => -0.5 * z * z - LN_SQRT_2PI,
            KernelFamily::Logistic => {
                let a = z.abs();
                -a - 2.0 * (-a).exp().ln_1p()
            }
        }
    }

    /// `d/dz log f(z; 0, 1)`.
    #[inline]
    pub fn dlog_std(&self, z: f64) -> f64 {
        match self {
            KernelFamily::Normal => -z,
            KernelFamily::Logistic => -(0.5 * z).tanh(),
        }
    }

    /// `d²/dz² log f(z; 0, 1)`.
    #[inline]
    pub fn d2log_std(&self, z: f64) -> f64 {
        match self {
            KernelFamily::Normal => -1.0,
            KernelFamily::Logistic => {
                let t = (0.5 * z).tanh();
                -0.5 * (1.0 - t * t)
            }
        }
    }

    /// `log f(z; 0, 1)` with its first two derivatives, sharing one exponential.
    #[inline]
    pub fn log_density_std_d2(&self, z: f64) -> (f64, f64, f64) {
        match self {
            KernelFamily::Normal => (-0.5 * z * z - LN_SQRT_2PI, -z, -1.0),
            KernelFamily::Logistic => {
                let a = z.abs();
                let e = (-a).exp();
                let inv = 1.0 / (1.0 + e);
                let t = (1.0 - e) * inv;
                (-a - 2.0 * e.ln_1p(), -t.copysign(z), -2.0 * e * inv * inv)
            }
        }
    }

    /// Location score `T(z)`: the μ-derivative of `log f(y; μ, σ)` at `(0, 1)`.
    #[inline]
    pub fn score_location_std(&self, z: f64) -> f64 {
        -self.dlog_std(z)
    }

    /// Scale score `U(z)`: the σ-derivative of `log f(y; μ, σ)` at `(0, 1)`.
    #[inline]
    pub fn score_scale_std(&self, z: f64) -> f64 {
        -1.0 - z * self.dlog_std(z)
    }

    /// `(T(y), U(y))` for the standard member.
    pub fn score(&self, y: f64) -> (f64, f64) {
        (self.score_location_std(y), self.score_scale_std(y))
    }

    /// `log f(y; μ, σ)` without validating `sigma`.
    #[inline]
    pub fn ln_f(&self, y: f64, mu: f64, sigma: f64) -> f64 {
        self.log_density_std((y - mu) / sigma) - sigma.ln()
    }

    /// `log f(y; μ, σ)`.
    pub fn log_density(&self, y: f64, params: LocScaleParams) -> Result<f64> {
        if !(params.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "scale must be positive, got {}",
                params.sigma
            )));
        }
        Ok(self.ln_f(y, params.mu, params.sigma))
    }

    /// Variance of the standard member.
    pub fn std_variance(&self) -> f64 {
        match self {
            KernelFamily::Normal => 1.0,
            KernelFamily::Logistic => PI * PI / 3.0,
        }
    }

    /// Width used to place quadrature nodes for the standard member.
    pub fn quad_scale(&self) -> f64 {
        match self {
            KernelFamily::Normal => 1.0,
            KernelFamily::Logistic => 1.5,
        }
    }

    /// Covariance of `(T, U)` under the standard member, from closed forms.
    pub fn info_matrix(&self) -> InfoMatrix {
        match self {
            KernelFamily::Normal => InfoMatrix {
                sigma_t2: 1.0,
                sigma_u2: 2.0,
                sigma_tu: 0.0,
            },
            KernelFamily::Logistic => InfoMatrix {
                sigma_t2: 1.0 / 3.0,
                sigma_u2: (PI * PI + 3.0) / 9.0,
                sigma_tu: 0.0,
            },
        }
    }

    /// Covariance of `(T, U)` by adaptive quadrature; the route for families
    /// without closed forms and the cross-check for those with them.
    pub fn info_matrix_quadrature(&self) -> Result<InfoMatrix> {
        let cfg = QuadConfig::default();
        let w = self.quad_scale();
        let expect = |g: &dyn Fn(f64) -> f64| {
            integrate_real_line(|y| g(y) * self.log_density_std(y).exp(), 0.0, w, cfg)
        };
        let et = expect(&|y| self.score_location_std(y))?;
        let eu = expect(&|y| self.score_scale_std(y))?;
        let ett = expect(&|y| self.score_location_std(y).powi(2))?;
        let euu = expect(&|y| self.score_scale_std(y).powi(2))?;
        let etu = expect(&|y| self.score_location_std(y) * self.score_scale_std(y))?;
        Ok(InfoMatrix {
            sigma_t2: ett - et * et,
            sigma_u2: euu - eu * eu,
            sigma_tu: etu - et * eu,
        })
    }

    /// Draws one observation from `f(·; μ, σ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, params: LocScaleParams) -> f64 {
        let z = match self {
            KernelFamily::Normal => rng.sample::<f64, _>(StandardNormal),
            KernelFamily::Logistic => {
                // open interval (0, 1) keeps the logit finite
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            }
        };
        params.mu + params.sigma * z
    }

    /// Moment-based start for location-scale estimation.
    pub fn moment_start(&self, values: &[f64]) -> LocScaleParams {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        LocScaleParams {
            mu: mean,
            sigma: (var / self.std_variance()).sqrt(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(KernelFamily::Normal),
            "logistic" => Ok(KernelFamily::Logistic),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn log_density_examples() {
        let k = KernelFamily::Normal;
        assert!(close(k.log_density(0.0, LocScaleParams::standard()).unwrap(), -0.918938533, 1e-9));
        let p = LocScaleParams::new(0.0, 2.0).unwrap();
        assert!(close(k.log_density(1.0, p).unwrap(), -1.737085717, 1e-8));
        let exact = -(2.0f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.125;
        assert!(close(k.log_density(1.0, p).unwrap(), exact, 1e-14));
        let l = KernelFamily::Logistic;
        assert!(close(l.log_density(0.0, LocScaleParams::standard()).unwrap(), -1.386294361, 1e-9));
    }

    #[test]
    fn fused_evaluation_agrees() {
        for k in KernelFamily::ALL {
            for i in -400..=400 {
                let z = i as f64 * 0.1;
                let (g, d1, d2) = k.log_density_std_d2(z);
                assert!(close(g, k.log_density_std(z), 1e-13));
                assert!(close(d1, k.dlog_std(z), 1e-13));
                assert!(close(d2, k.d2log_std(z), 1e-13));
            }
        }
    }

    #[test]
    fn non_positive_sigma_is_a_domain_error() {
        let bad = LocScaleParams { mu: 0.0, sigma: 0.0 };
        assert!(matches!(
            KernelFamily::Normal.log_density(0.0, bad),
            Err(Error::Domain(_))
        ));
        assert!(LocScaleParams::new(0.0, -1.0).is_err());
    }

    #[test]
    fn score_examples() {
        assert_eq!(KernelFamily::Normal.score(0.0), (0.0, -1.0));
        assert_eq!(KernelFamily::Logistic.score(0.0), (0.0, -1.0));
        assert_eq!(KernelFamily::Normal.score(1.0), (1.0, 0.0));
        let (t, u) = KernelFamily::Logistic.score(2.0);
        assert!(close(t, 1.0f64.tanh(), 1e-15));
        assert!(close(u, 2.0 * 1.0f64.tanh() - 1.0, 1e-15));
    }

    #[test]
    fn logistic_tails_are_finite() {
        let l = KernelFamily::Logistic;
        for z in [-800.0, -40.0, 40.0, 800.0] {
            let v = l.log_density_std(z);
            assert!(v.is_finite());
            assert!(close(v, -z.abs(), 1e-9));
        }
    }

    #[test]
    fn densities_integrate_to_one_and_scores_have_zero_mean() {
        for k in KernelFamily::ALL {
            let cfg = QuadConfig::default();
            let f = |y: f64| k.log_density_std(y).exp();
            let mass = integrate_real_line(f, 0.0, k.quad_scale(), cfg).unwrap();
            assert!(close(mass, 1.0, 1e-8), "{k}: mass {mass}");
            let et = integrate_real_line(|y| k.score_location_std(y) * f(y), 0.0, k.quad_scale(), cfg).unwrap();
            let eu = integrate_real_line(|y| k.score_scale_std(y) * f(y), 0.0, k.quad_scale(), cfg).unwrap();
            assert!(et.abs() < 1e-6 && eu.abs() < 1e-6, "{k}: E T={et}, E U={eu}");
        }
    }

    #[test]
    fn finite_difference_scores() {
        let h = 1e-5;
        for k in KernelFamily::ALL {
            for i in -5..=5 {
                let y = i as f64;
                let fd_t = -(k.log_density_std(y + h) - k.log_density_std(y - h)) / (2.0 * h);
                assert!((k.score_location_std(y) - fd_t).abs() < 1e-5, "{k} T at {y}");
                // σ-derivative of log f(y; 0, σ) at σ = 1
                let fd_u = (k.ln_f(y, 0.0, 1.0 + h) - k.ln_f(y, 0.0, 1.0 - h)) / (2.0 * h);
                assert!((k.score_scale_std(y) - fd_u).abs() < 1e-5, "{k} U at {y}");
                let fd_2 = (k.dlog_std(y + h) - k.dlog_std(y - h)) / (2.0 * h);
                assert!((k.d2log_std(y) - fd_2).abs() < 1e-5, "{k} second derivative at {y}");
            }
        }
    }

    #[test]
    fn closed_form_information_matches_quadrature() {
        for k in KernelFamily::ALL {
            let closed = k.info_matrix();
            let quad = k.info_matrix_quadrature().unwrap();
            assert!(close(closed.sigma_t2, quad.sigma_t2, 1e-8), "{k}");
            assert!(close(closed.sigma_u2, quad.sigma_u2, 1e-8), "{k}");
            assert!(close(closed.sigma_tu, quad.sigma_tu, 1e-8), "{k}");
            assert!(closed.is_positive_definite());
        }
        let l = KernelFamily::Logistic.info_matrix();
        assert!(close(l.sigma_t2, 1.0 / 3.0, 1e-15));
        assert_eq!(l.sigma_tu, 0.0);
    }

    #[test]
    fn monte_carlo_score_covariance() {
        // 10^6 draws; each entry of Cov(T, U) within 3 standard errors
        for k in KernelFamily::ALL {
            let mut r = rng::stream(2024, k as u64);
            let n = 1_000_000usize;
            let (mut st, mut su, mut stt, mut suu, mut stu) = (0.0, 0.0, 0.0, 0.0, 0.0);
            let (mut s4t, mut s4u, mut s4tu) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let y = k.sample(&mut r, LocScaleParams::standard());
                let (t, u) = k.score(y);
                st += t;
                su += u;
                stt += t * t;
                suu += u * u;
                stu += t * u;
                s4t += t.powi(4);
                s4u += u.powi(4);
                s4tu += (t * u).powi(2);
            }
            let nf = n as f64;
            let info = k.info_matrix();
            let checks = [
                (stt / nf - (st / nf).powi(2), s4t / nf, info.sigma_t2),
                (suu / nf - (su / nf).powi(2), s4u / nf, info.sigma_u2),
                (stu / nf - st * su / (nf * nf), s4tu / nf, info.sigma_tu),
            ];
            for (est, second_moment, truth) in checks {
                let se = ((second_moment - truth * truth).max(1e-12) / nf).sqrt();
                assert!((est - truth).abs() < 3.0 * se + 1e-9, "{k}: {est} vs {truth} (se {se})");
            }
        }
    }

    #[test]
    fn sqrt_of_info_squares_back() {
        let a = InfoMatrix { sigma_t2: 2.0, sigma_u2: 3.0, sigma_tu: 0.7 };
        let s = a.sqrt();
        let m00 = s[0][0] * s[0][0] + s[0][1] * s[1][0];
        let m01 = s[0][0] * s[0][1] + s[0][1] * s[1][1];
        let m11 = s[1][0] * s[0][1] + s[1][1] * s[1][1];
        assert!(close(m00, 2.0, 1e-12) && close(m01, 0.7, 1e-12) && close(m11, 3.0, 1e-12));
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in KernelFamily::ALL {
            assert_eq!(k.name().parse::<KernelFamily>().unwrap(), k);
        }
        assert!("cauchy".parse::<KernelFamily>().is_err());
    }
}
