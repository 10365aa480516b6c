//! Maximum likelihood fits of the null, equal-scale and full models.
//!
//! The mixing parameter θ enters only through the recombinant groups, so the
//! full and equal-scale fits profile it over a fixed uniform grid and run EM
//! at every grid point. Groups 1 and 4 have fixed component memberships;
//! only groups 2 and 3 carry latent labels.
//!
//! Sums over groups 2 and 3 are always combined as `part₂ + part₃`
//! (commutative in floating point), which makes every fit exactly symmetric
//! under exchanging those groups together with `θ ↔ 1 − θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, LocScaleParams};
use crate::likelihood::{loglik_unchecked, MixtureParams, PhenotypeGroups};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Settings shared by the EM-based fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Number of uniformly spaced θ values in `[0, 1]`, endpoints included.
    pub theta_grid_size: usize,
    pub em_max_iter: usize,
    /// Stop once the log-likelihood gain of one EM iteration falls below this.
    pub em_tol: f64,
    /// Scales are kept above this multiple of the pooled median absolute deviation.
    pub sigma_floor_factor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            theta_grid_size: 101,
            em_max_iter: 500,
            em_tol: 1e-8,
            sigma_floor_factor: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_grid_size < 2 {
            return Err(Error::InvalidInput("theta_grid_size must be at least 2".into()));
        }
        if !(self.em_tol > 0.0) || !(self.sigma_floor_factor > 0.0) || self.em_max_iter == 0 {
            return Err(Error::InvalidInput(
                "em_tol, sigma_floor_factor and em_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid values as `(θ, 1 − θ)` pairs, each computed as `k/m`, so that
    /// the complement of grid point `k` is bit-identical to grid point `m − k`.
    pub fn theta_grid(&self) -> Vec<ThetaPoint> {
        let m = (self.theta_grid_size - 1) as f64;
        (0..self.theta_grid_size)
            .map(|k| ThetaPoint {
                theta: k as f64 / m,
                complement: (self.theta_grid_size - 1 - k) as f64 / m,
            })
            .collect()
    }
}

/// A grid value of θ together with its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPoint {
    pub theta: f64,
    pub complement: f64,
}

impl ThetaPoint {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            complement: 1.0 - theta,
        }
    }

    fn swapped(self) -> Self {
        Self {
            theta: self.complement,
            complement: self.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Null,
    EqualScale,
    Full,
}

/// Result of a maximum likelihood fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub params: MixtureParams,
    pub loglik: f64,
    pub model: ModelKind,
    /// EM reached `em_tol` at the selected grid point without touching the scale floor.
    pub converged: bool,
    /// Some scale estimate of the selected fit sits on the floor.
    pub floor_hit: bool,
    /// Profiled log-likelihood at every grid value of θ (empty for the null fit).
    pub theta_profile: Vec<(f64, f64)>,
}

/// Trace of one EM run at a fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub params: MixtureParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub floor_hit: bool,
    /// Smallest log-likelihood change between consecutive iterations.
    pub min_increment: f64,
}

/// Per-group data the fits share.
struct Problem<'a> {
    kernel: KernelFamily,
    g: [&'a [f64]; 4],
    sigma_floor: f64,
    anchors: [Moments; 2],
}

/// Count, mean and centred sum of squares of a sample.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self { n, mean, m2 }
    }

    /// `Σ (y − μ)²` over the sample.
    fn ss_about(&self, mu: f64) -> f64 {
        self.m2 + self.n * (self.mean - mu).powi(2)
    }
}

/// Pooled median absolute deviation, or the mean absolute deviation when more
/// than half the sample is tied.
fn pooled_spread(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|y| (y - med).abs()).collect();
    let mad = median(&mut dev);
    if mad > 0.0 {
        mad
    } else {
        dev.iter().sum::<f64>() / dev.len() as f64
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl<'a> Problem<'a> {
    fn new(groups: &'a PhenotypeGroups, kernel: KernelFamily, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        groups.check_fittable()?;
        let pooled = groups.pooled();
        let spread = pooled_spread(&pooled);
        if !(spread > 0.0) {
            return Err(Error::DegenerateData("pooled phenotypes have zero spread".into()));
        }
        let g = [groups.group(1), groups.group(2), groups.group(3), groups.group(4)];
        Ok(Self {
            kernel,
            g,
            sigma_floor: cfg.sigma_floor_factor * spread,
            anchors: [Moments::of(g[0]), Moments::of(g[3])],
        })
    }

    /// Log-likelihood of anchor group (0 → group 1, 1 → group 4) under `c`.
    fn anchor_loglik(&self, which: usize, c: &Component) -> f64 {
        match self.kernel {
            KernelFamily::Normal => {
                let m = &self.anchors[which];
                -m.n * (c.ln_sigma + LN_SQRT_2PI)
                    - 0.5 * m.ss_about(c.mu) * c.inv_sigma * c.inv_sigma
            }
            k => {
                let ys = if which == 0 { self.g[0] } else { self.g[3] };
                ys.iter().map(|&y| c.ln_f(k, y)).sum()
            }
        }
    }

    /// Location-scale MLE of a single anchor group.
    fn anchor_mle(&self, which: usize) -> (LocScaleParams, bool) {
        let ys = if which == 0 { self.g[0] } else { self.g[3] };
        match self.kernel {
            KernelFamily::Normal => {
                let m = &self.anchors[which];
                floor_sigma(m.mean, (m.m2 / m.n).sqrt(), self.sigma_floor)
            }
            k => {
                let start = k.moment_start(ys);
                let start = LocScaleParams {
                    mu: start.mu,
                    sigma: start.sigma.max(self.sigma_floor),
                };
                let parts = [Part::unit(ys)];
                let (mus, sigma, hit) =
                    newton_shared_scale(k, &[&parts], &[start.mu], start.sigma, self.sigma_floor);
                (LocScaleParams { mu: mus[0], sigma }, hit)
            }
        }
    }

    /// EM at a fixed grid value of θ.
    fn em(&self, tp: ThetaPoint, model: ModelKind, start: MixtureParams, cfg: &FitConfig) -> EmRun {
        let k = self.kernel;
        let (n2, n3) = (self.g[1].len(), self.g[2].len());
        // posterior weights on component 1 (w) and component 2 (v)
        let mut w2 = vec![0.0; n2];
        let mut v2 = vec![0.0; n2];
        let mut w3 = vec![0.0; n3];
        let mut v3 = vec![0.0; n3];
        let mut params = MixtureParams { theta: tp.theta, ..start };
        let mut prev = f64::NEG_INFINITY;
        let mut min_increment = f64::INFINITY;
        let mut floor_hit = false;
        let mut converged = false;
        let mut iterations = 0;
        let mut ll = f64::NEG_INFINITY;

        for iter in 0..=cfg.em_max_iter {
            // E-step, which also yields the log-likelihood at the current parameters
            let c1 = Component::new(params.comp1);
            let c2 = Component::new(params.comp2);
            let e2 = e_step(k, self.g[1], tp, &c1, &c2, &mut w2, &mut v2);
            let e3 = e_step(k, self.g[2], tp.swapped(), &c1, &c2, &mut w3, &mut v3);
            ll = self.anchor_loglik(0, &c1) + self.anchor_loglik(1, &c2) + (e2 + e3);
            if iter > 0 {
                let inc = ll - prev;
                min_increment = min_increment.min(inc);
                if inc < cfg.em_tol {
                    converged = true;
                    break;
                }
            }
            if iter == cfg.em_max_iter {
                break;
            }
            prev = ll;
            iterations = iter + 1;

            // M-step
            let parts1 = [Part::unit(self.g[0]), Part::weighted(self.g[1], &w2), Part::weighted(self.g[2], &w3)];
            let parts2 = [Part::unit(self.g[3]), Part::weighted(self.g[1], &v2), Part::weighted(self.g[2], &v3)];
            let (new1, new2, hit) = match (k, model) {
                (KernelFamily::Normal, ModelKind::Full) => {
                    let (m1, ss1, wt1) = weighted_normal(&self.anchors[0], &parts1);
                    let (m2, ss2, wt2) = weighted_normal(&self.anchors[1], &parts2);
                    let (a, h1) = floor_sigma(m1, (ss1 / wt1).sqrt(), self.sigma_floor);
                    let (b, h2) = floor_sigma(m2, (ss2 / wt2).sqrt(), self.sigma_floor);
                    (a, b, h1 || h2)
                }
                (KernelFamily::Normal, _) => {
                    let (m1, ss1, wt1) = weighted_normal(&self.anchors[0], &parts1);
                    let (m2, ss2, wt2) = weighted_normal(&self.anchors[1], &parts2);
                    let (a, h) = floor_sigma(m1, ((ss1 + ss2) / (wt1 + wt2)).sqrt(), self.sigma_floor);
                    (a, LocScaleParams { mu: m2, sigma: a.sigma }, h)
                }
                (_, ModelKind::Full) => {
                    let (mu1, s1, h1) = newton_shared_scale(
                        k, &[&parts1], &[params.comp1.mu], params.comp1.sigma, self.sigma_floor,
                    );
                    let (mu2, s2, h2) = newton_shared_scale(
                        k, &[&parts2], &[params.comp2.mu], params.comp2.sigma, self.sigma_floor,
                    );
                    (
                        LocScaleParams { mu: mu1[0], sigma: s1 },
                        LocScaleParams { mu: mu2[0], sigma: s2 },
                        h1 || h2,
                    )
                }
                (_, _) => {
                    let (mus, s, h) = newton_shared_scale(
                        k,
                        &[&parts1, &parts2],
                        &[params.comp1.mu, params.comp2.mu],
                        params.comp1.sigma,
                        self.sigma_floor,
                    );
                    (
                        LocScaleParams { mu: mus[0], sigma: s },
                        LocScaleParams { mu: mus[1], sigma: s },
                        h,
                    )
                }
            };
            floor_hit = hit;
            params.comp1 = new1;
            params.comp2 = new2;
        }
        EmRun {
            params,
            loglik: ll,
            iterations,
            converged: converged && !floor_hit,
            floor_hit,
            min_increment,
        }
    }

    fn anchor_start(&self, model: ModelKind) -> (MixtureParams, bool) {
        let (c1, h1) = self.anchor_mle(0);
        let (c2, h4) = self.anchor_mle(1);
        let start = match model {
            ModelKind::EqualScale => {
                let (n1, n4) = (self.anchors[0].n, self.anchors[1].n);
                let s = ((n1 * c1.sigma.powi(2) + n4 * c2.sigma.powi(2)) / (n1 + n4)).sqrt();
                MixtureParams {
                    theta: 0.5,
                    comp1: LocScaleParams { sigma: s, ..c1 },
                    comp2: LocScaleParams { sigma: s, ..c2 },
                }
            }
            _ => MixtureParams { theta: 0.5, comp1: c1, comp2: c2 },
        };
        (start, h1 || h4)
    }
}

/// Location, log-scale and reciprocal scale of one component.
struct Component {
    mu: f64,
    inv_sigma: f64,
    ln_sigma: f64,
}

impl Component {
    fn new(p: LocScaleParams) -> Self {
        Self {
            mu: p.mu,
            inv_sigma: 1.0 / p.sigma,
            ln_sigma: p.sigma.ln(),
        }
    }

    #[inline]
    fn ln_f(&self, k: KernelFamily, y: f64) -> f64 {
        k.log_density_std((y - self.mu) * self.inv_sigma) - self.ln_sigma
    }
}

/// `(log{θe^{a} + (1−θ)e^{b}}, posterior on a, posterior on b)`.
#[inline]
fn mix_terms(tp: ThetaPoint, la: f64, lb: f64) -> (f64, f64, f64) {
    if tp.theta <= 0.0 {
        return (lb, 0.0, 1.0);
    }
    if tp.complement <= 0.0 {
        return (la, 1.0, 0.0);
    }
    let x = tp.theta.ln() + la;
    let y = tp.complement.ln() + lb;
    let m = x.max(y);
    let ex = (x - m).exp();
    let ey = (y - m).exp();
    let s = ex + ey;
    (m + s.ln(), ex / s, ey / s)
}

fn e_step(
    k: KernelFamily,
    ys: &[f64],
    tp: ThetaPoint,
    c1: &Component,
    c2: &Component,
    w: &mut [f64],
    v: &mut [f64],
) -> f64 {
    let mut ll = 0.0;
    for (j, &y) in ys.iter().enumerate() {
        let (l, a, b) = mix_terms(tp, c1.ln_f(k, y), c2.ln_f(k, y));
        ll += l;
        w[j] = a;
        v[j] = b;
    }
    ll
}

/// Observations with optional weights (unit weights when absent).
#[derive(Clone, Copy)]
struct Part<'a> {
    y: &'a [f64],
    w: Option<&'a [f64]>,
}

impl<'a> Part<'a> {
    fn unit(y: &'a [f64]) -> Self {
        Self { y, w: None }
    }

    fn weighted(y: &'a [f64], w: &'a [f64]) -> Self {
        Self { y, w: Some(w) }
    }

    fn for_each(&self, mut f: impl FnMut(f64, f64)) {
        match self.w {
            None => self.y.iter().for_each(|&y| f(y, 1.0)),
            Some(w) => self.y.iter().zip(w).for_each(|(&y, &wt)| f(y, wt)),
        }
    }
}

/// Combines per-part sums so that exchanging the two recombinant parts
/// (indices 1 and 2) cannot change the result.
#[inline]
fn combine(vals: &[f64]) -> f64 {
    match vals.len() {
        1 => vals[0],
        3 => vals[0] + (vals[1] + vals[2]),
        4 => (vals[0] + vals[3]) + (vals[1] + vals[2]),
        _ => vals.iter().sum(),
    }
}

/// Weighted normal MLE for one component: `(mean, Σw(y−mean)², Σw)`.
/// `parts[0]` is the anchor group, summarised by `anchor`.
fn weighted_normal(anchor: &Moments, parts: &[Part; 3]) -> (f64, f64, f64) {
    let mut sw = [anchor.n, 0.0, 0.0];
    let mut swy = [anchor.n * anchor.mean, 0.0, 0.0];
    for (i, p) in parts.iter().enumerate().skip(1) {
        p.for_each(|y, w| {
            sw[i] += w;
            swy[i] += w * y;
        });
    }
    let wt = combine(&sw);
    let mu = combine(&swy) / wt;
    let mut ss = [anchor.ss_about(mu), 0.0, 0.0];
    for (i, p) in parts.iter().enumerate().skip(1) {
        p.for_each(|y, w| ss[i] += w * (y - mu) * (y - mu));
    }
    (mu, combine(&ss), wt)
}

fn floor_sigma(mu: f64, sigma: f64, floor: f64) -> (LocScaleParams, bool) {
    if sigma < floor || !sigma.is_finite() {
        (LocScaleParams { mu, sigma: floor }, true)
    } else {
        (LocScaleParams { mu, sigma }, false)
    }
}

/// Sums over the parts of one component at `(a, b)`, with `z = b·y − a`.
#[derive(Default, Clone, Copy)]
struct NewtonSums {
    q: f64,
    ga: f64,
    gb: f64,
    haa: f64,
    hab: f64,
    hbb: f64,
}

fn newton_sums(k: KernelFamily, parts: &[Part], a: f64, b: f64) -> NewtonSums {
    let ln_b = b.ln();
    let inv_b2 = 1.0 / (b * b);
    let n = parts.len();
    let mut acc = [NewtonSums::default(); 4];
    for (i, p) in parts.iter().enumerate() {
        let s = &mut acc[i];
        let mut sw = 0.0;
        p.for_each(|y, w| {
            if w == 0.0 {
                return;
            }
            let (g, d1, d2) = k.log_density_std_d2(b * y - a);
            s.q += w * g;
            s.ga -= w * d1;
            s.gb += w * d1 * y;
            s.haa += w * d2;
            s.hab -= w * d2 * y;
            s.hbb += w * d2 * y * y;
            sw += w;
        });
        s.q += sw * ln_b;
        s.gb += sw / b;
        s.hbb -= sw * inv_b2;
    }
    let pick = |f: fn(&NewtonSums) -> f64| combine(&acc[..n].iter().map(f).collect::<Vec<_>>());
    NewtonSums {
        q: pick(|s| s.q),
        ga: pick(|s| s.ga),
        gb: pick(|s| s.gb),
        haa: pick(|s| s.haa),
        hab: pick(|s| s.hab),
        hbb: pick(|s| s.hbb),
    }
}

/// Weighted location-scale MLE for one or two components sharing a scale.
///
/// Works in `(a_k, b) = (μ_k/σ, 1/σ)`, where the log-likelihood of a
/// log-concave standard density is jointly concave, with step halving so
/// that every accepted step increases the objective. Returns the locations,
/// the common scale and whether the scale floor was active.
fn newton_shared_scale(
    k: KernelFamily,
    comps: &[&[Part]],
    mus: &[f64],
    sigma: f64,
    sigma_floor: f64,
) -> (Vec<f64>, f64, bool) {
    let b_max = 1.0 / sigma_floor;
    let mut b = (1.0 / sigma).min(b_max);
    let mut a: Vec<f64> = mus.iter().map(|m| m * b).collect();
    let eval = |a: &[f64], b: f64| -> Vec<NewtonSums> {
        comps.iter().zip(a).map(|(p, &ak)| newton_sums(k, p, ak, b)).collect()
    };
    let total_q = |s: &[NewtonSums]| s.iter().map(|x| x.q).sum::<f64>();
    let mut sums = eval(&a, b);
    let mut q = total_q(&sums);
    let mut on_floor = b >= b_max;

    for _ in 0..100 {
        let gb: f64 = sums.iter().map(|s| s.gb).sum();
        let hbb: f64 = sums.iter().map(|s| s.hbb).sum();
        let schur: f64 = hbb - sums.iter().map(|s| s.hab * s.hab / s.haa).sum::<f64>();
        let mut db = if schur < 0.0 && sums.iter().all(|s| s.haa < 0.0) {
            (-gb + sums.iter().map(|s| s.hab * s.ga / s.haa).sum::<f64>()) / schur
        } else {
            // not strictly concave here: plain gradient direction
            gb * b * b * 1e-3
        };
        if on_floor && db > 0.0 {
            db = 0.0;
        }
        let da: Vec<f64> = sums
            .iter()
            .map(|s| if s.haa < 0.0 { (-s.ga - s.hab * db) / s.haa } else { s.ga * 1e-3 })
            .collect();

        // Newton decrement: predicted gain of the full step, up to a factor 2
        let decrement: f64 = sums.iter().zip(&da).map(|(s, d)| s.ga * d).sum::<f64>() + gb * db;
        if decrement.abs() < 1e-12 * q.abs().max(1.0) {
            // inside rounding noise of the objective: finish with the plain step
            for (x, d) in a.iter_mut().zip(&da) {
                *x += d;
            }
            b = (b + db).clamp(f64::MIN_POSITIVE, b_max);
            on_floor = b >= b_max;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let nb = (b + step * db).min(b_max);
            if nb > 0.0 {
                let na: Vec<f64> = a.iter().zip(&da).map(|(x, d)| x + step * d).collect();
                let trial = eval(&na, nb);
                let nq = total_q(&trial);
                if nq >= q {
                    accepted = Some((na, nb, nq, trial));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((na, nb, nq, trial)) = accepted else { break };
        let moved = da
            .iter()
            .map(|d| (step * d).abs())
            .chain(std::iter::once((step * db).abs() / b))
            .fold(0.0, f64::max);
        a = na;
        b = nb;
        q = nq;
        on_floor = b >= b_max;
        sums = trial;
        if moved < 1e-11 {
            break;
        }
    }
    let sigma = 1.0 / b;
    (a.iter().map(|ak| ak * sigma).collect(), sigma, on_floor)
}

/// Location-scale MLE of the pooled sample (the null model).
pub fn fit_null(groups: &PhenotypeGroups, kernel: KernelFamily) -> Result<MixtureFit> {
    let pooled = groups.pooled();
    if pooled.len() < 2 {
        return Err(Error::InvalidInput("need at least two phenotypes".into()));
    }
    let m = Moments::of(&pooled);
    if !(m.m2 > 0.0) {
        return Err(Error::DegenerateData("pooled phenotypes are constant".into()));
    }
    let params = match kernel {
        KernelFamily::Normal => LocScaleParams {
            mu: m.mean,
            sigma: (m.m2 / m.n).sqrt(),
        },
        k => {
            let start = k.moment_start(&pooled);
            let g = groups.groups();
            let parts = [Part::unit(&g[0]), Part::unit(&g[1]), Part::unit(&g[2]), Part::unit(&g[3])];
            let (mus, sigma, _) = newton_shared_scale(k, &[&parts], &[start.mu], start.sigma, f64::MIN_POSITIVE);
            LocScaleParams { mu: mus[0], sigma }
        }
    };
    let params = MixtureParams::homogeneous(params);
    Ok(MixtureFit {
        loglik: loglik_unchecked(groups, kernel, &params),
        params,
        model: ModelKind::Null,
        converged: true,
        floor_hit: false,
        theta_profile: Vec::new(),
    })
}

/// Full model: separate location and scale for the two QTL genotypes.
pub fn fit_full(groups: &PhenotypeGroups, kernel: KernelFamily, cfg: &FitConfig) -> Result<MixtureFit> {
    fit_profiled(groups, kernel, cfg, ModelKind::Full, &[])
}

/// Equal-scale model: separate locations, one common scale.
pub fn fit_equal_scale(groups: &PhenotypeGroups, kernel: KernelFamily, cfg: &FitConfig) -> Result<MixtureFit> {
    fit_profiled(groups, kernel, cfg, ModelKind::EqualScale, &[])
}

/// Profile-θ EM fit of the full or equal-scale model.
///
/// Every grid point starts EM from the group-1 and group-4 MLEs. Each entry
/// of `extra_starts` is additionally run at the grid point nearest its θ, and
/// the null fit is run at the selected θ; the profile keeps the better run.
/// EM ascent then guarantees that the result is at least as likely as any of
/// those starting points.
pub fn fit_profiled(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    cfg: &FitConfig,
    model: ModelKind,
    extra_starts: &[MixtureParams],
) -> Result<MixtureFit> {
    if model == ModelKind::Null {
        return fit_null(groups, kernel);
    }
    let problem = Problem::new(groups, kernel, cfg)?;
    let grid = cfg.theta_grid();
    let (start, _) = problem.anchor_start(model);
    let mut runs: Vec<EmRun> = grid.iter().map(|&tp| problem.em(tp, model, start, cfg)).collect();

    let nearest = |theta: f64| -> usize {
        let m = (grid.len() - 1) as f64;
        ((theta * m).round() as usize).min(grid.len() - 1)
    };
    let consider = |idx: usize, from: MixtureParams, runs: &mut Vec<EmRun>| {
        let run = problem.em(grid[idx], model, coerce(from, model), cfg);
        if run.loglik > runs[idx].loglik {
            runs[idx] = run;
        }
    };
    for s in extra_starts {
        consider(nearest(s.theta), *s, &mut runs);
    }
    let null = fit_null(groups, kernel)?;
    let best = best_index(&runs);
    if runs[best].loglik < null.loglik {
        consider(best, null.params, &mut runs);
    }
    let best = best_index(&runs);
    let run = &runs[best];
    Ok(MixtureFit {
        params: run.params,
        loglik: run.loglik,
        model,
        converged: run.converged,
        floor_hit: run.floor_hit,
        theta_profile: grid.iter().zip(&runs).map(|(tp, r)| (tp.theta, r.loglik)).collect(),
    })
}

/// Projects a start onto the model's parameter space.
fn coerce(p: MixtureParams, model: ModelKind) -> MixtureParams {
    match model {
        ModelKind::EqualScale if p.comp1.sigma != p.comp2.sigma => {
            let s = (0.5 * (p.comp1.sigma.powi(2) + p.comp2.sigma.powi(2))).sqrt();
            MixtureParams {
                comp1: LocScaleParams { sigma: s, ..p.comp1 },
                comp2: LocScaleParams { sigma: s, ..p.comp2 },
                ..p
            }
        }
        _ => p,
    }
}

/// Index of the largest profile value; ties go to the smallest θ.
fn best_index(runs: &[EmRun]) -> usize {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.loglik > runs[best].loglik {
            best = i;
        }
    }
    best
}

/// Runs EM at a single θ from `start`; exposed for diagnostics and tests.
pub fn em_at_theta(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    theta: f64,
    model: ModelKind,
    start: MixtureParams,
    cfg: &FitConfig,
) -> Result<EmRun> {
    if !(0.0..=1.0).contains(&theta) || model == ModelKind::Null {
        return Err(Error::InvalidInput("EM needs θ in [0, 1] and a mixture model".into()));
    }
    start.validate()?;
    let problem = Problem::new(groups, kernel, cfg)?;
    Ok(problem.em(ThetaPoint::new(theta), model, coerce(start, model), cfg))
}

/// The scale floor used by the fits for these data.
pub fn sigma_floor(groups: &PhenotypeGroups, cfg: &FitConfig) -> f64 {
    cfg.sigma_floor_factor * pooled_spread(&groups.pooled())
}

/// Weighted location-scale MLE by the Newton route, for any kernel; used to
/// cross-check the closed-form normal M-step.
pub fn weighted_mle(
    kernel: KernelFamily,
    y: &[f64],
    w: &[f64],
    start: LocScaleParams,
) -> LocScaleParams {
    let parts = [Part::weighted(y, w)];
    let (mus, sigma, _) = newton_shared_scale(kernel, &[&parts], &[start.mu], start.sigma, f64::MIN_POSITIVE);
    LocScaleParams { mu: mus[0], sigma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::loglik;
    use crate::rng;
    use rand::Rng;

    fn groups(g1: &[f64], g2: &[f64], g3: &[f64], g4: &[f64]) -> PhenotypeGroups {
        PhenotypeGroups::new(g1.to_vec(), g2.to_vec(), g3.to_vec(), g4.to_vec()).unwrap()
    }

    fn random_groups(seed: u64, sizes: [usize; 4], k: KernelFamily, shift: f64) -> PhenotypeGroups {
        let mut r = rng::stream(seed, 0);
        let mut draw = |n: usize, mu: f64| -> Vec<f64> {
            (0..n).map(|_| k.sample(&mut r, LocScaleParams { mu, sigma: 1.0 })).collect()
        };
        let g1 = draw(sizes[0], 0.0);
        let g2 = draw(sizes[1], shift * 0.5);
        let g3 = draw(sizes[2], shift * 0.5);
        let g4 = draw(sizes[3], shift);
        PhenotypeGroups::new(g1, g2, g3, g4).unwrap()
    }

    #[test]
    fn null_fit_examples() {
        let g = groups(&[-1.0], &[0.0], &[], &[1.0]);
        let f = fit_null(&g, KernelFamily::Normal).unwrap();
        assert!(f.params.comp1.mu.abs() < 1e-15);
        assert!((f.params.comp1.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let g = groups(&[0.0, 0.0], &[], &[], &[1.0, 1.0]);
        let f = fit_null(&g, KernelFamily::Normal).unwrap();
        assert!((f.params.comp1.mu - 0.5).abs() < 1e-15);
        assert!((f.params.comp1.sigma - 0.5).abs() < 1e-15);
        assert_eq!(f.params.theta, 0.5);
        assert_eq!(f.params.comp1, f.params.comp2);
    }

    #[test]
    fn logistic_null_fit_of_symmetric_sample_is_centred() {
        let c = 2.5;
        let offs = [0.3, 1.1, 2.0, 0.7, 4.0];
        let mut all: Vec<f64> = offs.iter().map(|o| c + o).collect();
        all.extend(offs.iter().map(|o| c - o));
        let g = groups(&all[0..3], &all[3..5], &all[5..7], &all[7..10]);
        let f = fit_null(&g, KernelFamily::Logistic).unwrap();
        assert!((f.params.comp1.mu - c).abs() < 1e-9);
        let start = KernelFamily::Logistic.moment_start(&all);
        let at_start = loglik(&g, KernelFamily::Logistic, &MixtureParams::homogeneous(start)).unwrap();
        assert!(f.loglik >= at_start);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let g = groups(&[1.0, 1.0], &[1.0], &[], &[1.0, 1.0]);
        assert!(matches!(fit_null(&g, KernelFamily::Normal), Err(Error::DegenerateData(_))));
        assert!(fit_full(&g, KernelFamily::Normal, &FitConfig::default()).is_err());
    }

    #[test]
    fn small_anchor_groups_are_rejected() {
        let g = groups(&[1.0], &[1.0, 2.0], &[], &[1.0, 3.0]);
        assert!(matches!(
            fit_full(&g, KernelFamily::Normal, &FitConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn no_recombinants_decouples() {
        let g = groups(&[0.1, -0.4, 1.3, 0.2], &[], &[], &[2.0, 2.9, 1.7]);
        for k in KernelFamily::ALL {
            let f = fit_full(&g, k, &FitConfig::default()).unwrap();
            let sep1 = fit_null(&groups(&g.group(1)[..2], &[], &[], &g.group(1)[2..]), k).unwrap();
            let sep4 = fit_null(&groups(&g.group(4)[..1], &[], &[], &g.group(4)[1..]), k).unwrap();
            assert!((f.params.comp1.mu - sep1.params.comp1.mu).abs() < 1e-7, "{k}");
            assert!((f.params.comp2.sigma - sep4.params.comp1.sigma).abs() < 1e-7, "{k}");
            assert!((f.loglik - (sep1.loglik + sep4.loglik)).abs() < 1e-7, "{k}");
            // flat profile: tie broken toward the smallest θ
            assert_eq!(f.params.theta, 0.0);
        }
    }

    #[test]
    fn equal_scale_without_recombinants_pools_the_scale() {
        let g = groups(&[0.1, -0.4, 1.3, 0.2], &[], &[], &[2.0, 2.9, 1.7]);
        let f = fit_equal_scale(&g, KernelFamily::Normal, &FitConfig::default()).unwrap();
        let m1 = Moments::of(g.group(1));
        let m4 = Moments::of(g.group(4));
        let pooled = ((m1.m2 + m4.m2) / 7.0).sqrt();
        assert!((f.params.comp1.sigma - pooled).abs() < 1e-9);
        assert_eq!(f.params.comp1.sigma, f.params.comp2.sigma);
    }

    #[test]
    fn normal_closed_form_matches_newton() {
        let mut r = rng::stream(3, 1);
        let y: Vec<f64> = (0..50).map(|_| r.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..50).map(|_| r.gen_range(0.0..1.0)).collect();
        let sw: f64 = w.iter().sum();
        let mu = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let sigma = (y.iter().zip(&w).map(|(a, b)| b * (a - mu).powi(2)).sum::<f64>() / sw).sqrt();
        let newton = weighted_mle(KernelFamily::Normal, &y, &w, LocScaleParams { mu: 1.0, sigma: 3.0 });
        assert!((newton.mu - mu).abs() < 1e-9);
        assert!((newton.sigma - sigma).abs() < 1e-9, "{newton:?} {mu} {sigma}");
    }

    #[test]
    fn nesting_and_ascent_on_random_data() {
        let cfg = FitConfig::default();
        for seed in 0..20 {
            for k in KernelFamily::ALL {
                let g = random_groups(seed, [30, 6, 5, 28], k, 0.4);
                let null = fit_null(&g, k).unwrap();
                let eq = fit_equal_scale(&g, k, &cfg).unwrap();
                let full = fit_profiled(&g, k, &cfg, ModelKind::Full, &[eq.params]).unwrap();
                assert!(null.loglik <= eq.loglik + 1e-6);
                assert!(eq.loglik <= full.loglik + 1e-6);
                let run = em_at_theta(&g, k, 0.37, ModelKind::Full, null.params, &cfg).unwrap();
                assert!(run.min_increment >= -1e-9, "{k} seed {seed}: {}", run.min_increment);
            }
        }
    }

    #[test]
    fn swap_maps_theta_hat_exactly() {
        let cfg = FitConfig::default();
        for seed in 0..5 {
            let g = random_groups(100 + seed, [25, 7, 4, 25], KernelFamily::Normal, 1.0);
            for model in [ModelKind::Full, ModelKind::EqualScale] {
                let a = fit_profiled(&g, KernelFamily::Normal, &cfg, model, &[]).unwrap();
                let b = fit_profiled(&g.swap_recombinants(), KernelFamily::Normal, &cfg, model, &[]).unwrap();
                assert_eq!(a.loglik, b.loglik);
                let grid = cfg.theta_grid();
                let k = grid.iter().position(|t| t.theta == b.params.theta).unwrap();
                assert_eq!(a.params.theta, grid[k].complement);
            }
        }
    }

    #[test]
    fn affine_equivariance_of_fits() {
        let cfg = FitConfig::default();
        let g = random_groups(9, [30, 8, 6, 30], KernelFamily::Logistic, 1.2);
        let (a, b) = (2.5, -7.0);
        for k in KernelFamily::ALL {
            let f = fit_full(&g, k, &cfg).unwrap();
            let h = fit_full(&g.affine(a, b), k, &cfg).unwrap();
            assert_eq!(f.params.theta, h.params.theta, "{k}");
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
            assert!(rel(h.params.comp1.mu, a * f.params.comp1.mu + b) < 1e-6);
            assert!(rel(h.params.comp2.sigma, a * f.params.comp2.sigma) < 1e-6);
        }
    }

    #[test]
    fn em_loglik_matches_direct_evaluation() {
        let cfg = FitConfig::default();
        let g = random_groups(5, [20, 5, 5, 20], KernelFamily::Normal, 1.0);
        for k in KernelFamily::ALL {
            let f = fit_full(&g, k, &cfg).unwrap();
            let direct = loglik(&g, k, &f.params).unwrap();
            assert!((f.loglik - direct).abs() < 1e-9 * direct.abs());
            assert_eq!(f.theta_profile.len(), 101);
        }
    }

    #[test]
    fn floor_flags_degenerate_anchor() {
        // group 1 constant: component 1 collapses onto the floor
        let g = groups(&[1.0, 1.0, 1.0], &[0.5, 2.0], &[1.5], &[0.0, 2.0, 3.0, -1.0]);
        let f = fit_full(&g, KernelFamily::Normal, &FitConfig::default()).unwrap();
        assert!(f.floor_hit);
        assert!(!f.converged);
        assert!(f.loglik.is_finite());
    }

    #[test]
    fn bad_config_is_rejected() {
        let g = groups(&[0.0, 1.0], &[], &[], &[0.5, 2.0]);
        let cfg = FitConfig { theta_grid_size: 1, ..FitConfig::default() };
        assert!(fit_full(&g, KernelFamily::Normal, &cfg).is_err());
    }
}
