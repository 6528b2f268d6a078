//! Non-regular-safe inference for the test-and-pool estimator: bound-based
//! adaptive confidence intervals (BACI) with either a fixed kappa*loglog(n)
//! threshold or a double-bootstrap-selected one, and the projection-based
//! alternative (PACI).
//!
//! All interval machinery works on bootstrap draws of the standardized pair
//! (W1, W2): per replicate, both samples are resampled with replacement,
//! (mu_A, mu_B) recomputed, and
//!   G_A = sqrt(n)(mu_A^(b) - mu_A),   G_B = sqrt(n)(mu_B^(b) - mu_A),
//!   W1  = sqrt(f_B) SigmaS^{-1/2} (K G_A + G_B),
//!   W2  = -sqrt(f_B) SigmaT^{-1/2} J_B (G_A - G_B),
//! so W2 fluctuates around mu2_hat = -SigmaT^{-1/2} eta_hat.

use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use crate::estimators::{estimate_mu_a, estimate_mu_b, estimate_pooled, pool_weights};
use crate::numkernel::{noncentral_chisq_cdf, SeedPlan, StreamDomain};
use crate::nuisance::{fit_nuisance, NuisanceFit};
use crate::tap::{eta_hat, test_statistic, TapEstimate, TapOptions};
use crate::varcomps::{VarComps, VarRoots};
use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    Wald,
    Baci,
    BaciF,
    Paci,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum VnMode {
    /// v_n = kappa * log log n with a fixed kappa (kappa = 1 is the BACI-F
    /// variant of the simulation tables).
    FixedLogLog { kappa: f64 },
    /// Double-bootstrap calibration over the kappa grid.
    DoubleBootstrap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaciConfig {
    pub alpha: f64,
    /// Nonregular-zone calibration parameter epsilon.
    pub epsilon: f64,
    pub vn_mode: VnMode,
    pub kappa_grid: Vec<f64>,
    /// First-order bootstrap size B for interval quantiles.
    pub bootstrap: usize,
    /// K': second-order sets spawned per first-order dataset in the v_n
    /// double bootstrap.
    pub second_order: usize,
    /// Number of first-order datasets entering the v_n coverage count.
    pub first_order: usize,
    /// Cap on first_order x second_order replicate solves.
    pub budget_cap: usize,
    pub refit_nuisance: bool,
    /// Contrast vector a; None means the first coordinate.
    pub contrast: Option<Vec<f64>>,
    /// PACI split (alpha_1, alpha_2); None means equal halves of alpha.
    pub alpha_split: Option<(f64, f64)>,
    /// Half-width of the mu2 sweep in the sup/inf bounds, on the unit-variance
    /// mu2 scale. The default spans the data-consistent region (~ the PACI
    /// mu2 confidence radius); widening it makes the bounds more conservative.
    pub mu2_halfwidth: f64,
    pub mu2_step: f64,
    pub max_drop_fraction: f64,
}

impl Default for BaciConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            epsilon: 0.05,
            vn_mode: VnMode::DoubleBootstrap,
            kappa_grid: vec![2.0, 4.0, 10.0, 20.0, 30.0],
            bootstrap: 500,
            second_order: 100,
            first_order: 100,
            budget_cap: 2_000_000,
            refit_nuisance: true,
            contrast: None,
            alpha_split: None,
            mu2_halfwidth: 2.25,
            mu2_step: 0.25,
            max_drop_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiReport {
    pub interval: Interval,
    pub vn: f64,
    pub kappa: Option<f64>,
    pub kappa_fallback: bool,
    pub pooled: bool,
    pub sup_branch: bool,
    pub dropped: usize,
    pub zone_upper: f64,
    pub zone_empty: bool,
}

/// Upper edge b* of the nonregular zone for mu2'mu2: the largest m with
/// P(W2'W2 >= c_gamma | mu2'mu2 = m) <= 1 - epsilon, found by bisection on
/// the monotone power function. b* = 0 (empty zone, flagged) when even the
/// central power exceeds 1 - epsilon.
pub fn nonregular_zone(c_gamma: f64, epsilon: f64, l: usize) -> Result<(f64, bool)> {
    if !(c_gamma > 0.0) {
        return Err(Error::Domain("nonregular_zone needs c_gamma > 0".into()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Domain("epsilon must lie in (0, 0.5)".into()));
    }
    let power = |m: f64| -> Result<f64> { Ok(1.0 - noncentral_chisq_cdf(c_gamma, l, m / 2.0)?) };
    let target = 1.0 - epsilon;
    if power(0.0)? > target {
        return Ok((0.0, true));
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut guard = 0;
    while power(hi)? <= target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Convergence("nonregular zone bracket blew up".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi.max(1.0) {
            break;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

/// Bootstrap draws of the standardized limit pair.
#[derive(Debug, Clone)]
pub struct LimitDraws {
    pub w1: Vec<DVector<f64>>,
    pub w2: Vec<DVector<f64>>,
    pub dropped: usize,
}

fn k_matrix(vc: &VarComps) -> Result<DMatrix<f64>> {
    let l = vc.dim();
    let ga = &vc.gamma - &vc.v_a;
    let inv = ga
        .lu()
        .solve(&DMatrix::identity(l, l))
        .ok_or_else(|| Error::Singular("Gamma - V_A in the W1 transform".into()))?;
    Ok((vc.gamma.transpose() - &vc.v_b) * inv)
}

struct Standardizer {
    k: DMatrix<f64>,
    sigma_s_root: DMatrix<f64>,
    sigma_t_root: DMatrix<f64>,
    jac_b: DMatrix<f64>,
    sqrt_f_b: f64,
}

impl Standardizer {
    fn new(vc: &VarComps, roots: &VarRoots) -> Result<Self> {
        Ok(Self {
            k: k_matrix(vc)?,
            sigma_s_root: roots.sigma_s.clone(),
            sigma_t_root: roots.sigma_t.clone(),
            jac_b: vc.jac_b.clone(),
            sqrt_f_b: vc.f_b.sqrt(),
        })
    }

    fn w1(&self, g_a: &DVector<f64>, g_b: &DVector<f64>) -> Result<DVector<f64>> {
        let v = (&self.k * g_a + g_b) * self.sqrt_f_b;
        self.sigma_s_root
            .clone()
            .lu()
            .solve(&v)
            .ok_or_else(|| Error::Singular("Sigma_S^{1/2}".into()))
    }

    fn w2(&self, g_a: &DVector<f64>, g_b: &DVector<f64>) -> Result<DVector<f64>> {
        let v = &self.jac_b * (g_a - g_b) * self.sqrt_f_b;
        Ok(-(self
            .sigma_t_root
            .clone()
            .lu()
            .solve(&v)
            .ok_or_else(|| Error::Singular("Sigma_T^{1/2}".into()))?))
    }
}

/// Draw B standardized pairs by resampling both samples, centered at the
/// original mu_A.
#[allow(clippy::too_many_arguments)]
fn limit_draws(
    data: &CombinedData,
    estimand: &Estimand,
    opts: &TapOptions,
    base_fit: &NuisanceFit,
    mu_a_center: &DVector<f64>,
    vc: &VarComps,
    roots: &VarRoots,
    b: usize,
    refit: bool,
    max_drop_fraction: f64,
    seed: &SeedPlan,
    domain: StreamDomain,
    subindex: u64,
) -> Result<LimitDraws> {
    let std = Standardizer::new(vc, roots)?;
    let sqrt_n = (data.n() as f64).sqrt();
    let results: Vec<Option<(DVector<f64>, DVector<f64>)>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = seed.stream2(domain, rep as u64, subindex);
            let sample = data.resample(&mut rng);
            let fit_store;
            let fit = if refit {
                match fit_nuisance(&sample, estimand, opts.strategy) {
                    Ok(f) => {
                        fit_store = f;
                        &fit_store
                    }
                    Err(_) => return None,
                }
            } else {
                base_fit
            };
            let mu_a_b = estimate_mu_a(&sample, estimand).ok()?;
            let mu_b_b = estimate_mu_b(&sample, estimand, fit).ok()?;
            let g_a = (&mu_a_b - mu_a_center) * sqrt_n;
            let g_b = (&mu_b_b - mu_a_center) * sqrt_n;
            let w1 = std.w1(&g_a, &g_b).ok()?;
            let w2 = std.w2(&g_a, &g_b).ok()?;
            Some((w1, w2))
        })
        .collect();

    let kept: Vec<(DVector<f64>, DVector<f64>)> = results.into_iter().flatten().collect();
    let dropped = b - kept.len();
    if (dropped as f64) > max_drop_fraction * b as f64 {
        return Err(Error::ReplicateFailures {
            dropped,
            total: b,
            limit_pct: max_drop_fraction * 100.0,
        });
    }
    let (w1, w2) = kept.into_iter().unzip();
    Ok(LimitDraws { w1, w2, dropped })
}

/// Type-7 (linear interpolation) quantile of an unsorted sample.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n == 1 {
        return v[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi.min(n - 1)] * frac
}

/// Grid of mu2 candidates: a line grid around mu2_hat for l = 1, a signed
/// ray through mu2_hat for l in {2, 3}, rejection above.
fn mu2_grid(mu2_hat: &DVector<f64>, halfwidth: f64, step: f64) -> Result<Vec<DVector<f64>>> {
    let l = mu2_hat.len();
    if l > 3 {
        return Err(Error::UnsupportedDimension(l));
    }
    let mut grid = Vec::new();
    if l == 1 {
        let center = mu2_hat[0];
        let mut t = -halfwidth;
        while t <= halfwidth + 1e-12 {
            grid.push(DVector::from_element(1, center + t));
            t += step;
        }
    } else {
        let norm = mu2_hat.norm();
        let dir = if norm > 1e-12 {
            mu2_hat / norm
        } else {
            let mut e = DVector::zeros(l);
            e[0] = 1.0;
            e
        };
        let mut t = -(norm + halfwidth);
        while t <= norm + halfwidth + 1e-12 {
            grid.push(&dir * t);
            t += step;
        }
    }
    Ok(grid)
}

struct BoundContext {
    /// a' Veff^{1/2} row.
    a_veff: RowDVector<f64>,
    /// a' (wA VAeff^{1/2} - wB VBeff^{1/2}) row for the tuned lambda.
    a_coef_pool: RowDVector<f64>,
    /// a' wB (VAeff^{1/2} + VBeff^{1/2}) row.
    a_coef_sup: RowDVector<f64>,
    c_gamma: f64,
}

impl BoundContext {
    fn new(a: &DVector<f64>, vc: &VarComps, roots: &VarRoots, lambda: f64, c_gamma: f64) -> Result<Self> {
        let l = vc.dim();
        let lambda_mat = DMatrix::identity(l, l) * lambda;
        let (omega_a, omega_b) = pool_weights(&lambda_mat, &vc.jac_a, &vc.jac_b)?;
        let at = a.transpose();
        Ok(Self {
            a_veff: (&at * &roots.v_eff).into(),
            a_coef_pool: (&at * (&omega_a * &roots.v_a_eff - &omega_b * &roots.v_b_eff)).into(),
            a_coef_sup: (&at * (&omega_b * (&roots.v_a_eff + &roots.v_b_eff))).into(),
            c_gamma,
        })
    }

    fn truncate(&self, w2: &DVector<f64>) -> f64 {
        if w2.dot(w2) >= self.c_gamma {
            self.a_coef_sup.tr_dot(w2)
        } else {
            0.0
        }
    }
}

/// Per-replicate upper and lower bound samples. In the regular branch the
/// two coincide (plain percentile draws of the limit law); in the sup branch
/// the nonregular component is replaced by its sup/inf over the mu2 grid.
#[allow(clippy::too_many_arguments)]
fn bound_samples(
    draws: &LimitDraws,
    ctx: &BoundContext,
    mu2_hat: &DVector<f64>,
    grid: &[DVector<f64>],
    sup_branch: bool,
) -> (Vec<f64>, Vec<f64>) {
    let c = ctx.c_gamma;
    let n_draws = draws.w1.len();
    let mut u = Vec::with_capacity(n_draws);
    let mut l = Vec::with_capacity(n_draws);

    // Bootstrap average of the truncated component, the plug-in for the
    // mu2 1{mu2'mu2 > c} center in the sup branch.
    let wbar_trunc: f64 = if sup_branch {
        draws.w2.iter().map(|w2| ctx.truncate(w2)).sum::<f64>() / n_draws as f64
    } else {
        0.0
    };

    for i in 0..n_draws {
        let w1 = &draws.w1[i];
        let w2 = &draws.w2[i];
        let core = ctx.a_veff.tr_dot(w1) + ctx.a_coef_pool.tr_dot(w2);
        if !sup_branch {
            let v = core + ctx.truncate(w2);
            u.push(v);
            l.push(v);
        } else {
            let noise = w2 - mu2_hat;
            let mut h_max = f64::NEG_INFINITY;
            let mut h_min = f64::INFINITY;
            for cand in grid {
                let shifted = cand + &noise;
                let trunc_shift = if shifted.dot(&shifted) >= c {
                    ctx.a_coef_sup.tr_dot(&shifted)
                } else {
                    0.0
                };
                let center = if cand.dot(cand) > c {
                    ctx.a_coef_sup.tr_dot(cand)
                } else {
                    0.0
                };
                let h = trunc_shift - center;
                h_max = h_max.max(h);
                h_min = h_min.min(h);
            }
            u.push(core + wbar_trunc + h_max);
            l.push(core + wbar_trunc + h_min);
        }
    }
    (u, l)
}

fn contrast_vector(config: &BaciConfig, l: usize) -> Result<DVector<f64>> {
    match &config.contrast {
        None => {
            let mut a = DVector::zeros(l);
            a[0] = 1.0;
            Ok(a)
        }
        Some(v) => {
            if v.len() != l {
                return Err(Error::DimensionMismatch(format!(
                    "contrast has length {}, estimand dimension is {l}",
                    v.len()
                )));
            }
            Ok(DVector::from_row_slice(v))
        }
    }
}

fn interval_from_bounds(
    point: f64,
    n: usize,
    alpha: f64,
    u: &[f64],
    l: &[f64],
    method: CiMethod,
) -> Interval {
    let sqrt_n = (n as f64).sqrt();
    let upper_q = quantile(u, 1.0 - alpha / 2.0);
    let lower_q = quantile(l, alpha / 2.0);
    let mut lo = point - upper_q / sqrt_n;
    let mut hi = point - lower_q / sqrt_n;
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    Interval {
        lower: lo,
        upper: hi,
        level: 1.0 - alpha,
        method,
    }
}

/// Wald interval for a regular estimator with asymptotic variance avar of
/// sqrt(n)(point - target).
pub fn wald_interval(point: f64, avar: f64, n: usize, alpha: f64) -> Interval {
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * (avar / n as f64).sqrt();
    Interval {
        lower: point - half,
        upper: point + half,
        level: 1.0 - alpha,
        method: CiMethod::Wald,
    }
}

fn mu2_hat_of(tap: &TapEstimate, roots: &VarRoots) -> Result<DVector<f64>> {
    Ok(-(roots
        .sigma_t
        .clone()
        .lu()
        .solve(&tap.eta)
        .ok_or_else(|| Error::Singular("Sigma_T^{1/2} for mu2_hat".into()))?))
}

/// Bootstrap draws of the standardized pair for the main interval stage;
/// exposed so several interval methods can share one set of draws.
pub fn prepare_limit_draws(
    data: &CombinedData,
    estimand: &Estimand,
    tap: &TapEstimate,
    opts: &TapOptions,
    config: &BaciConfig,
    seed: &SeedPlan,
) -> Result<LimitDraws> {
    let roots = tap.varcomps.roots()?;
    limit_draws(
        data,
        estimand,
        opts,
        &tap.fit,
        &tap.mu_a,
        &tap.varcomps,
        &roots,
        config.bootstrap,
        config.refit_nuisance,
        config.max_drop_fraction,
        seed,
        StreamDomain::CiBootstrap,
        0,
    )
}

/// Bound-based adaptive confidence interval for a'mu_g.
pub fn baci(
    data: &CombinedData,
    estimand: &Estimand,
    tap: &TapEstimate,
    opts: &TapOptions,
    config: &BaciConfig,
    seed: &SeedPlan,
) -> Result<CiReport> {
    let draws = prepare_limit_draws(data, estimand, tap, opts, config, seed)?;
    baci_with_draws(data, estimand, tap, opts, config, seed, &draws)
}

/// BACI on pre-drawn standardized pairs.
pub fn baci_with_draws(
    data: &CombinedData,
    estimand: &Estimand,
    tap: &TapEstimate,
    opts: &TapOptions,
    config: &BaciConfig,
    seed: &SeedPlan,
    draws: &LimitDraws,
) -> Result<CiReport> {
    if config.bootstrap < 200 {
        return Err(Error::Domain(format!(
            "BACI needs B >= 200 bootstrap replicates, got {}",
            config.bootstrap
        )));
    }
    let vc = &tap.varcomps;
    let roots = vc.roots()?;
    let l = vc.dim();
    let a = contrast_vector(config, l)?;
    let n = data.n();
    let loglog = (n as f64).ln().ln();

    let (vn, kappa, kappa_fallback, method) = match config.vn_mode {
        VnMode::FixedLogLog { kappa } => (kappa * loglog, Some(kappa), false, CiMethod::BaciF),
        VnMode::DoubleBootstrap => {
            let (vn, kappa, fallback) = select_vn_double_bootstrap(data, estimand, tap, opts, config, seed)?;
            (vn, Some(kappa), fallback, CiMethod::Baci)
        }
    };

    let mu2_hat = mu2_hat_of(tap, &roots)?;
    let sup_branch = tap.t_stat < vn;
    let ctx = BoundContext::new(&a, vc, &roots, tap.tuning.lambda, tap.tuning.c_gamma)?;
    let grid = if sup_branch {
        mu2_grid(&mu2_hat, config.mu2_halfwidth, config.mu2_step)?
    } else {
        Vec::new()
    };
    let (u, lo) = bound_samples(draws, &ctx, &mu2_hat, &grid, sup_branch);
    let point = a.dot(&tap.point);
    let interval = interval_from_bounds(point, n, config.alpha, &u, &lo, method);

    let (zone_upper, zone_empty) = if tap.tuning.c_gamma > 0.0 {
        nonregular_zone(tap.tuning.c_gamma, config.epsilon, l)?
    } else {
        (0.0, true)
    };

    Ok(CiReport {
        interval,
        vn,
        kappa,
        kappa_fallback,
        pooled: tap.pooled,
        sup_branch,
        dropped: draws.dropped,
        zone_upper,
        zone_empty,
    })
}

/// Projection-based adaptive confidence interval: union of per-mu2
/// percentile intervals of the plug-in limit law over a confidence region
/// for mu2, with a T >= v_n pretest collapsing the union to the single
/// interval at mu2_hat.
pub fn paci(
    data: &CombinedData,
    estimand: &Estimand,
    tap: &TapEstimate,
    opts: &TapOptions,
    config: &BaciConfig,
    seed: &SeedPlan,
) -> Result<CiReport> {
    let draws = prepare_limit_draws(data, estimand, tap, opts, config, seed)?;
    paci_with_draws(data, estimand, tap, config, &draws)
}

/// PACI on pre-drawn standardized pairs.
pub fn paci_with_draws(
    data: &CombinedData,
    _estimand: &Estimand,
    tap: &TapEstimate,
    config: &BaciConfig,
    draws: &LimitDraws,
) -> Result<CiReport> {
    if config.bootstrap < 200 {
        return Err(Error::Domain(format!(
            "PACI needs B >= 200 bootstrap replicates, got {}",
            config.bootstrap
        )));
    }
    let vc = &tap.varcomps;
    let roots = vc.roots()?;
    let l = vc.dim();
    let a = contrast_vector(config, l)?;
    let n = data.n();
    let loglog = (n as f64).ln().ln();
    let vn = match config.vn_mode {
        VnMode::FixedLogLog { kappa } => kappa * loglog,
        // PACI keeps the fixed threshold; the double bootstrap calibrates
        // the BACI branch test only.
        VnMode::DoubleBootstrap => loglog,
    };

    let (alpha1, alpha2) = config
        .alpha_split
        .unwrap_or((config.alpha / 2.0, config.alpha / 2.0));
    if (alpha1 + alpha2 - config.alpha).abs() > 1e-12 {
        return Err(Error::Config(
            "PACI alpha split must add up to alpha".into(),
        ));
    }

    let mu2_hat = mu2_hat_of(tap, &roots)?;
    let ctx = BoundContext::new(&a, vc, &roots, tap.tuning.lambda, tap.tuning.c_gamma)?;
    let point = a.dot(&tap.point);
    let c = tap.tuning.c_gamma;

    // Per-mu2 draws of the limit law: core with W2 shifted to mu2 + noise.
    let law_at = |mu2: &DVector<f64>| -> Vec<f64> {
        draws
            .w1
            .iter()
            .zip(draws.w2.iter())
            .map(|(w1, w2)| {
                let shifted = mu2 + (w2 - &mu2_hat);
                let trunc = if shifted.dot(&shifted) >= c {
                    ctx.a_coef_sup.tr_dot(&shifted)
                } else {
                    0.0
                };
                ctx.a_veff.tr_dot(w1) + ctx.a_coef_pool.tr_dot(&shifted) + trunc
            })
            .collect()
    };

    let reject_zone = tap.t_stat >= vn;
    let interval = if reject_zone {
        let vals = law_at(&mu2_hat);
        interval_from_bounds(point, n, config.alpha, &vals, &vals, CiMethod::Paci)
    } else {
        // Confidence region for mu2 (unit limiting variance per coordinate),
        // swept along the l = 1 line / the ray for l <= 3.
        let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - alpha2 / 2.0);
        let region = mu2_grid(&mu2_hat, z, config.mu2_step.min(z / 4.0))?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for mu2 in &region {
            let vals = law_at(mu2);
            let iv = interval_from_bounds(point, n, alpha1, &vals, &vals, CiMethod::Paci);
            lo = lo.min(iv.lower);
            hi = hi.max(iv.upper);
        }
        Interval {
            lower: lo,
            upper: hi,
            level: 1.0 - config.alpha,
            method: CiMethod::Paci,
        }
    };

    let (zone_upper, zone_empty) = if c > 0.0 {
        nonregular_zone(c, config.epsilon, l)?
    } else {
        (0.0, true)
    };

    Ok(CiReport {
        interval,
        vn,
        kappa: None,
        kappa_fallback: false,
        pooled: tap.pooled,
        sup_branch: !reject_zone,
        dropped: draws.dropped,
        zone_upper,
        zone_empty,
    })
}

/// Double-bootstrap selection of v_n: first-order resampled datasets each
/// spawn `second_order` inner sets; per kappa, the BACI built on the inner
/// sets must cover the first-order dataset's own design-weighted estimate.
/// The smallest adequate kappa wins; the max grid value is the flagged
/// fallback.
pub fn select_vn_double_bootstrap(
    data: &CombinedData,
    estimand: &Estimand,
    tap: &TapEstimate,
    opts: &TapOptions,
    config: &BaciConfig,
    seed: &SeedPlan,
) -> Result<(f64, f64, bool)> {
    if config.kappa_grid.is_empty() {
        return Err(Error::Config("kappa grid must be nonempty".into()));
    }
    if config.second_order < 50 {
        return Err(Error::Domain(format!(
            "double bootstrap needs B2 >= 50, got {}",
            config.second_order
        )));
    }
    let cost = config.first_order * config.second_order;
    if cost > config.budget_cap {
        return Err(Error::Budget {
            cost,
            cap: config.budget_cap,
        });
    }

    let vc = &tap.varcomps;
    let roots = vc.roots()?;
    let l = vc.dim();
    let a = contrast_vector(config, l)?;
    let n = data.n();
    let loglog = (n as f64).ln().ln();
    let mut kappas = config.kappa_grid.clone();
    kappas.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let per_dataset: Vec<Option<Vec<bool>>> = (0..config.first_order)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.stream2(StreamDomain::SecondOrderBootstrap, j as u64, 0);
            let d_j = data.resample(&mut rng);
            let fit_store;
            let fit = if config.refit_nuisance {
                match fit_nuisance(&d_j, estimand, opts.strategy) {
                    Ok(f) => {
                        fit_store = f;
                        &fit_store
                    }
                    Err(_) => return None,
                }
            } else {
                &tap.fit
            };
            let mu_a_j = estimate_mu_a(&d_j, estimand).ok()?;
            let eta_j = eta_hat(&d_j, estimand, fit, &mu_a_j).ok()?;
            let t_j = test_statistic(&eta_j, &vc.sigma_t).ok()?;
            let point_j = if t_j < tap.tuning.c_gamma {
                estimate_pooled(&d_j, estimand, fit, tap.tuning.lambda).ok()?
            } else {
                mu_a_j.clone()
            };
            let inner = limit_draws(
                &d_j,
                estimand,
                opts,
                fit,
                &mu_a_j,
                vc,
                &roots,
                config.second_order,
                config.refit_nuisance,
                1.0, // inner sets tolerate drops; the outer dataset is the unit
                seed,
                StreamDomain::SecondOrderBootstrap,
                1 + j as u64,
            )
            .ok()?;
            if inner.w1.is_empty() {
                return None;
            }
            let mu2_j = -(roots.sigma_t.clone().lu().solve(&eta_j)?);
            let ctx =
                BoundContext::new(&a, vc, &roots, tap.tuning.lambda, tap.tuning.c_gamma).ok()?;
            let grid = mu2_grid(&mu2_j, config.mu2_halfwidth, config.mu2_step).ok()?;
            let (u_reg, l_reg) = bound_samples(&inner, &ctx, &mu2_j, &grid, false);
            let (u_sup, l_sup) = bound_samples(&inner, &ctx, &mu2_j, &grid, true);
            let point_contrast = a.dot(&point_j);
            let truth = a.dot(&mu_a_j);
            let covered: Vec<bool> = kappas
                .iter()
                .map(|&kappa| {
                    let vn = kappa * loglog;
                    let iv = if t_j < vn {
                        interval_from_bounds(point_contrast, n, config.alpha, &u_sup, &l_sup, CiMethod::Baci)
                    } else {
                        interval_from_bounds(point_contrast, n, config.alpha, &u_reg, &l_reg, CiMethod::Baci)
                    };
                    iv.contains(truth)
                })
                .collect();
            Some(covered)
        })
        .collect();

    let usable: Vec<&Vec<bool>> = per_dataset.iter().flatten().collect();
    if usable.is_empty() {
        return Err(Error::Convergence(
            "all first-order datasets failed in the v_n double bootstrap".into(),
        ));
    }
    let total = usable.len() as f64;
    for (ki, &kappa) in kappas.iter().enumerate() {
        let covered = usable.iter().filter(|c| c[ki]).count() as f64;
        if covered / total > 1.0 - config.alpha {
            return Ok((kappa * loglog, kappa, false));
        }
    }
    let fallback = *kappas.last().unwrap();
    Ok((fallback * loglog, fallback, true))
}
