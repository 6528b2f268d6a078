//! The test-and-pool machinery: pretest statistic, the analytic bias/MSE
//! surface of the pooled-or-not estimator under local alternatives, the
//! data-adaptive tuning of (Lambda, c_gamma), and the final pipeline.
//!
//! The limit representation used throughout (W1, W2 independent normals with
//! identity covariance, means mu1 and mu2):
//!
//!   sqrt(n)(mu_tap - mu_g) ->
//!     Veff^{1/2} W1 + (wA VAeff^{1/2} - wB VBeff^{1/2}) W2 | W2'W2 <= c   w.p. xi
//!     Veff^{1/2} W1 +  VAeff^{1/2} W2                     | W2'W2  > c   w.p. 1-xi
//!
//! with mu1 = -SigmaS^{-1/2} J_B^{-1} eta, mu2 = -SigmaT^{-1/2} eta and
//! xi = F_l(c; mu2'mu2/2). The orientation of the W1 term is pinned by the
//! identity Veff^{1/2} mu1 + VAeff^{1/2} mu2 = 0, which forces the
//! never-pool surface to collapse to (bias, mse) = (0, V_A) for every
//! (Lambda, eta).

use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use crate::estimators::{
    estimate_mu_a, estimate_mu_b, estimate_pooled, phi_b_mean, pool_weights,
};
use crate::numkernel::{
    chisq_quantile, nelder_mead, noncentral_chisq_cdf, trunc_moments, NmOptions, SeedPlan,
    TruncRegion,
};
use crate::nuisance::{fit_nuisance, NuisanceFit, NuisanceStrategy};
use crate::varcomps::{estimate_varcomps, VarComps, VarianceEngine};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// eta-hat = sqrt(n_B) times the Hajek-normalized mean of Phi_B at mu_A.
pub fn eta_hat(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
    mu_a: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mean = phi_b_mean(data, estimand, fit, mu_a)?;
    Ok(mean * (data.n_b() as f64).sqrt())
}

/// T = eta' SigmaT^{-1} eta; asymptotically chi-square with l degrees of
/// freedom under comparability.
pub fn test_statistic(eta: &DVector<f64>, sigma_t: &DMatrix<f64>) -> Result<f64> {
    let solved = sigma_t
        .clone()
        .lu()
        .solve(eta)
        .ok_or_else(|| Error::Singular("Sigma_T in the pretest statistic".into()))?;
    let t = eta.dot(&solved);
    if !t.is_finite() || t < -1e-10 {
        return Err(Error::Singular(format!(
            "Sigma_T produced an invalid quadratic form ({t})"
        )));
    }
    Ok(t.max(0.0))
}

#[derive(Debug, Clone)]
pub struct LocalMeans {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub xi: f64,
}

/// Standardized local means mu1, mu2 and the pooling probability xi at a
/// given threshold.
pub fn local_means(eta: &DVector<f64>, vc: &VarComps, c_gamma: f64) -> Result<LocalMeans> {
    let roots = vc.roots()?;
    let l = eta.len();
    let jac_b_inv_eta = vc
        .jac_b
        .clone()
        .lu()
        .solve(eta)
        .ok_or_else(|| Error::Singular("E{dPhi_B/dmu} in local means".into()))?;
    let mu1 = -(roots
        .sigma_s
        .clone()
        .lu()
        .solve(&jac_b_inv_eta)
        .ok_or_else(|| Error::Singular("Sigma_S^{1/2} in local means".into()))?);
    let mu2 = -(roots
        .sigma_t
        .clone()
        .lu()
        .solve(eta)
        .ok_or_else(|| Error::Singular("Sigma_T^{1/2} in local means".into()))?);
    let xi = if c_gamma <= 0.0 {
        0.0
    } else {
        noncentral_chisq_cdf(c_gamma, l, 0.5 * mu2.dot(&mu2))?
    };
    Ok(LocalMeans { mu1, mu2, xi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    pub lambda: f64,
    pub c_gamma: f64,
}

/// The mixture decomposition behind the returned surface value, exposed so
/// tests can re-weld the pieces.
#[derive(Debug, Clone)]
pub struct MseParts {
    pub xi: f64,
    pub bias_pool: DVector<f64>,
    pub bias_reject: DVector<f64>,
    pub mse_pool: DMatrix<f64>,
    pub mse_reject: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MseSurface {
    pub bias: DVector<f64>,
    pub mse: DMatrix<f64>,
    pub parts: MseParts,
}

fn branch_moments(
    roots_v_eff: &DMatrix<f64>,
    coef: &DMatrix<f64>,
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    region: &TruncRegion,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let tm = trunc_moments(mu2, region)?;
    let l = mu1.len();
    let bias = roots_v_eff * mu1 + coef * &tm.mean;
    let cross = roots_v_eff * mu1 * tm.mean.transpose() * coef.transpose();
    let mse = roots_v_eff * (DMatrix::identity(l, l) + mu1 * mu1.transpose()) * roots_v_eff
        + coef * &tm.second_moment * coef.transpose()
        + &cross
        + cross.transpose();
    Ok((bias, mse))
}

/// General matrix form of the asymptotic bias and MSE of
/// sqrt(n)(mu_tap - mu_g), mixing the two truncated branches with weight xi.
/// Lambda is restricted to the scalar family lambda * I.
pub fn mse_surface_general(
    tuning: &TuningParams,
    eta: &DVector<f64>,
    vc: &VarComps,
) -> Result<MseSurface> {
    let l = eta.len();
    let (lambda, c) = (tuning.lambda, tuning.c_gamma);
    if !(lambda >= 0.0 && c >= 0.0) {
        return Err(Error::Domain(format!(
            "tuning parameters must be nonnegative, got ({lambda}, {c})"
        )));
    }
    let roots = vc.roots()?;

    // Never pooling: the estimator is mu_A itself, so the surface collapses
    // exactly.
    if c == 0.0 {
        let parts = MseParts {
            xi: 0.0,
            bias_pool: DVector::zeros(l),
            bias_reject: DVector::zeros(l),
            mse_pool: DMatrix::zeros(l, l),
            mse_reject: vc.v_a.clone(),
        };
        return Ok(MseSurface {
            bias: DVector::zeros(l),
            mse: vc.v_a.clone(),
            parts,
        });
    }

    let lm = local_means(eta, vc, c)?;
    let lambda_mat = DMatrix::identity(l, l) * lambda;
    let (omega_a, omega_b) = pool_weights(&lambda_mat, &vc.jac_a, &vc.jac_b)?;
    let coef_pool = &omega_a * &roots.v_a_eff - &omega_b * &roots.v_b_eff;
    let coef_reject = roots.v_a_eff.clone();

    let xi = lm.xi;
    let mut bias_pool = DVector::zeros(l);
    let mut mse_pool = DMatrix::zeros(l, l);
    if xi > 1e-12 {
        let region = TruncRegion::new(0.0, c)?;
        let (b, m) = branch_moments(&roots.v_eff, &coef_pool, &lm.mu1, &lm.mu2, &region)?;
        bias_pool = b;
        mse_pool = m;
    }
    let mut bias_reject = DVector::zeros(l);
    let mut mse_reject = DMatrix::zeros(l, l);
    if 1.0 - xi > 1e-12 {
        let region = TruncRegion::new(c, f64::INFINITY)?;
        let (b, m) = branch_moments(&roots.v_eff, &coef_reject, &lm.mu1, &lm.mu2, &region)?;
        bias_reject = b;
        mse_reject = m;
    }

    let bias = &bias_pool * xi + &bias_reject * (1.0 - xi);
    let mse = &mse_pool * xi + &mse_reject * (1.0 - xi);
    Ok(MseSurface {
        bias,
        mse,
        parts: MseParts {
            xi,
            bias_pool,
            bias_reject,
            mse_pool,
            mse_reject,
        },
    })
}

/// Scalar closed form of the same surface for l = 1 mean-type problems with
/// unit jacobians, written with the d0..d5 coefficients. Independent of the
/// matrix route: only chi-square CDF ratios enter. Requires the
/// efficiency-gain regime Gamma < min(V_A, V_B), where the square roots of
/// V_{A-eff} and V_{B-eff} carry their natural signs.
pub fn mse_surface_scalar(
    lambda: f64,
    c: f64,
    eta: f64,
    v_a: f64,
    v_b: f64,
    gamma: f64,
    f_b: f64,
) -> Result<(f64, f64)> {
    if !(lambda >= 0.0 && c >= 0.0) {
        return Err(Error::Domain("tuning parameters must be nonnegative".into()));
    }
    let s = v_a + v_b - 2.0 * gamma;
    if s <= 0.0 {
        return Err(Error::Diagnostics(
            "V_A + V_B - 2 Gamma must be positive".into(),
        ));
    }
    if !(gamma < v_a && gamma < v_b) {
        return Err(Error::Diagnostics(
            "closed form needs Gamma < min(V_A, V_B)".into(),
        ));
    }
    if c == 0.0 {
        return Ok((0.0, v_a));
    }
    let v_eff = (v_a * v_b - gamma * gamma) / s;
    let v_a_eff = (v_a - gamma) * (v_a - gamma) / s;
    let v_b_eff = (v_b - gamma) * (v_b - gamma) / s;
    let lambda_eff = (v_a - gamma) / (v_b - gamma);

    let mu1 = eta * (v_a - gamma) / (f_b * (v_a * v_b - gamma * gamma) * s).sqrt();
    let mu2 = -eta / (f_b * s).sqrt();
    let delta = 0.5 * mu2 * mu2;
    let f3 = noncentral_chisq_cdf(c, 3, delta)?;
    let f5 = noncentral_chisq_cdf(c, 5, delta)?;
    let g = f3 + mu2 * mu2 * f5;
    let one_plus = 1.0 + lambda;

    let d0 = lambda / (f_b.sqrt() * one_plus) * f3;
    let d1 = 1.0 + mu1 * mu1;
    let d2 = lambda / (one_plus * one_plus) * g * (lambda - 2.0 * lambda_eff);
    let d3 = 1.0 - f3 + mu2 * mu2 * (1.0 - f5) + g / (one_plus * one_plus);
    let d4 = -2.0 * lambda / one_plus * mu1 * mu2 * f3;
    let d5 = 2.0 * mu1 * mu2 * (1.0 - f3 + f3 / one_plus);

    let bias = eta * d0;
    let mse = v_eff * d1
        + v_b_eff * d2
        + v_a_eff * d3
        + v_eff.sqrt() * (v_b_eff.sqrt() * d4 + v_a_eff.sqrt() * d5);
    Ok((bias, mse))
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub lambda_max: f64,
    pub c_max: f64,
    pub nm: NmOptions,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            lambda_max: 50.0,
            c_max: 200.0,
            nm: NmOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub params: TuningParams,
    pub mse: f64,
    pub optimizer_converged: bool,
    /// Set when the optimum sits on the upper box edge (surface effectively
    /// flat beyond it).
    pub at_box_edge: bool,
}

fn surface_value(tuning: &TuningParams, eta: &DVector<f64>, vc: &VarComps) -> f64 {
    match mse_surface_general(tuning, eta, vc) {
        Ok(s) => s.mse.trace(),
        Err(_) => f64::INFINITY,
    }
}

/// Minimize mse(Lambda, c_gamma; eta) over the box [0, lambda_max] x
/// [0, c_max] via Nelder-Mead on (log(1+Lambda), log(1+c_gamma)), started
/// from (Lambda_eff, chi2_{l,0.95}) and from (0, 0).
pub fn tune(eta: &DVector<f64>, vc: &VarComps, opts: &TuneOptions) -> Result<TuneOutcome> {
    let l = eta.len();
    let lam_cap = opts.lambda_max;
    let c_cap = opts.c_max;

    let objective = |u: &DVector<f64>| -> f64 {
        let lam = u[0].exp() - 1.0;
        let c = u[1].exp() - 1.0;
        if !(lam.is_finite() && c.is_finite()) {
            return f64::INFINITY;
        }
        let mut penalty = 0.0;
        let lam_c = if lam < 0.0 {
            penalty += lam * lam;
            0.0
        } else if lam > lam_cap {
            penalty += (lam - lam_cap).powi(2);
            lam_cap
        } else {
            lam
        };
        let c_c = if c < 0.0 {
            penalty += c * c;
            0.0
        } else if c > c_cap {
            penalty += (c - c_cap).powi(2);
            c_cap
        } else {
            c
        };
        surface_value(
            &TuningParams {
                lambda: lam_c,
                c_gamma: c_c,
            },
            eta,
            vc,
        ) + penalty
    };

    let lam_eff_mean = (vc.lambda_eff.trace() / l as f64).clamp(0.0, lam_cap);
    let c_start = chisq_quantile(0.95, l)?;
    // Origin start first: when the surface is flat (never-pooling regime)
    // ties break toward the smallest tuning values.
    let starts = [
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![(1.0 + lam_eff_mean).ln(), (1.0 + c_start).ln()]),
    ];

    let mut best: Option<crate::numkernel::NmResult> = None;
    for s in &starts {
        let r = nelder_mead(&objective, s, &opts.nm);
        best = Some(match best {
            Some(b) if b.value <= r.value + 1e-12 => b,
            _ => r,
        });
    }
    let best = best.unwrap();
    let lambda = (best.x[0].exp() - 1.0).clamp(0.0, lam_cap);
    let c_gamma = (best.x[1].exp() - 1.0).clamp(0.0, c_cap);
    let at_box_edge = lambda >= lam_cap - 1e-9 || c_gamma >= c_cap - 1e-9;
    let params = TuningParams { lambda, c_gamma };
    Ok(TuneOutcome {
        mse: surface_value(&params, eta, vc),
        params,
        optimizer_converged: best.converged,
        at_box_edge,
    })
}

#[derive(Debug, Clone)]
pub enum TuneSpec {
    Adaptive(TuneOptions),
    Fixed(TuningParams),
}

impl Default for TuneSpec {
    fn default() -> Self {
        TuneSpec::Adaptive(TuneOptions::default())
    }
}

#[derive(Debug, Clone)]
pub struct TapOptions {
    pub strategy: NuisanceStrategy,
    pub variance: VarianceEngine,
    pub tuning: TuneSpec,
    pub seed: SeedPlan,
}

impl Default for TapOptions {
    fn default() -> Self {
        Self {
            strategy: NuisanceStrategy::PseudoMlOlsAb,
            variance: VarianceEngine::Plugin,
            tuning: TuneSpec::default(),
            seed: SeedPlan::new(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapEstimate {
    pub point: DVector<f64>,
    pub mu_a: DVector<f64>,
    pub mu_b: DVector<f64>,
    pub eta: DVector<f64>,
    pub t_stat: f64,
    /// True when T < c_gamma* and the samples were pooled.
    pub pooled: bool,
    pub tuning: TuningParams,
    pub optimizer_converged: bool,
    pub varcomps: VarComps,
    pub fit: NuisanceFit,
}

/// Full pipeline: nuisances, separate estimators, variance components,
/// pretest, tuning, and the pooled-or-not resolution. Pools only on strict
/// inequality T < c_gamma*.
pub fn estimate_tap(
    data: &CombinedData,
    estimand: &Estimand,
    opts: &TapOptions,
) -> Result<TapEstimate> {
    let fit = fit_nuisance(data, estimand, opts.strategy).map_err(|e| e.in_stage("nuisance"))?;
    let mu_a = estimate_mu_a(data, estimand).map_err(|e| e.in_stage("estimate-mu-a"))?;
    let mu_b = estimate_mu_b(data, estimand, &fit).map_err(|e| e.in_stage("estimate-mu-b"))?;
    let vc = estimate_varcomps(data, estimand, opts.strategy, &fit, &opts.variance, &opts.seed)
        .map_err(|e| e.in_stage("varcomps"))?;
    let eta = eta_hat(data, estimand, &fit, &mu_a).map_err(|e| e.in_stage("pretest"))?;
    let t_stat = test_statistic(&eta, &vc.sigma_t).map_err(|e| e.in_stage("pretest"))?;

    let (tuning, optimizer_converged) = match &opts.tuning {
        TuneSpec::Adaptive(topts) => {
            let out = tune(&eta, &vc, topts).map_err(|e| e.in_stage("tune"))?;
            (out.params, out.optimizer_converged)
        }
        TuneSpec::Fixed(params) => (*params, true),
    };

    let pooled = t_stat < tuning.c_gamma;
    let point = if pooled {
        estimate_pooled(data, estimand, &fit, tuning.lambda).map_err(|e| e.in_stage("pool"))?
    } else {
        mu_a.clone()
    };

    Ok(TapEstimate {
        point,
        mu_a,
        mu_b,
        eta,
        t_stat,
        pooled,
        tuning,
        optimizer_converged,
        varcomps: vc,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_vc(f_b: f64) -> VarComps {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        VarComps::derive(m(2.0), m(1.0), m(0.5), m(-1.0), m(-1.0), f_b).unwrap()
    }

    #[test]
    fn t_statistic_arithmetic() {
        let eta = DVector::from_element(1, 2.0);
        let sigma = DMatrix::from_element(1, 1, 4.0);
        assert!((test_statistic(&eta, &sigma).unwrap() - 1.0).abs() < 1e-14);
        let zero = DVector::from_element(1, 0.0);
        assert_eq!(test_statistic(&zero, &sigma).unwrap(), 0.0);
    }

    #[test]
    fn local_means_zero_eta() {
        let vc = toy_vc(0.5);
        let lm = local_means(&DVector::zeros(1), &vc, 3.84).unwrap();
        assert!(lm.mu1.norm() < 1e-14 && lm.mu2.norm() < 1e-14);
        // xi = F_1(3.84; 0) = gamma level ~ 0.95
        assert!((lm.xi - 0.95).abs() < 5e-4);
    }

    #[test]
    fn local_means_scalar_mu2_and_sign() {
        let vc = toy_vc(0.5);
        let eta = DVector::from_element(1, 1.5);
        let lm = local_means(&eta, &vc, 3.84).unwrap();
        let expect = -1.5 / (0.5_f64 * 2.0).sqrt();
        assert!((lm.mu2[0] - expect).abs() < 1e-12);
        assert!(lm.mu2[0] * eta[0] < 0.0);
    }

    #[test]
    fn never_pool_surface_is_exactly_va() {
        let vc = toy_vc(0.5);
        for &eta in &[0.0, 0.5, 1.5] {
            for &lam in &[0.0, 1.0, 3.0, 10.0] {
                let s = mse_surface_general(
                    &TuningParams {
                        lambda: lam,
                        c_gamma: 0.0,
                    },
                    &DVector::from_element(1, eta),
                    &vc,
                )
                .unwrap();
                assert_eq!(s.mse[(0, 0)], 2.0);
                assert_eq!(s.bias[0], 0.0);
                let (b, m) = mse_surface_scalar(lam, 0.0, eta, 2.0, 1.0, 0.5, 0.5).unwrap();
                assert_eq!(m, 2.0);
                assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn full_pool_limit_reaches_v_eff() {
        let vc = toy_vc(0.5);
        let s = mse_surface_general(
            &TuningParams {
                lambda: 3.0,
                c_gamma: 200.0,
            },
            &DVector::zeros(1),
            &vc,
        )
        .unwrap();
        assert!((s.mse[(0, 0)] - 0.875).abs() < 1e-9, "got {}", s.mse[(0, 0)]);
    }

    #[test]
    fn scalar_and_matrix_routes_agree() {
        let vc = toy_vc(0.5);
        for &eta in &[0.0, 0.5, 1.5] {
            for &lam in &[0.0, 0.7, 3.0, 8.0] {
                for &c in &[0.5, 3.84, 20.0] {
                    let g = mse_surface_general(
                        &TuningParams {
                            lambda: lam,
                            c_gamma: c,
                        },
                        &DVector::from_element(1, eta),
                        &vc,
                    )
                    .unwrap();
                    let (b, m) = mse_surface_scalar(lam, c, eta, 2.0, 1.0, 0.5, 0.5).unwrap();
                    assert!(
                        (g.mse[(0, 0)] - m).abs() < 1e-10,
                        "mse mismatch at ({lam},{c},{eta}): {} vs {m}",
                        g.mse[(0, 0)]
                    );
                    assert!(
                        (g.bias[0] - b).abs() < 1e-10,
                        "bias mismatch at ({lam},{c},{eta}): {} vs {b}",
                        g.bias[0]
                    );
                }
            }
        }
    }

    #[test]
    fn mixture_consistency() {
        let vc = toy_vc(0.5);
        let s = mse_surface_general(
            &TuningParams {
                lambda: 2.0,
                c_gamma: 5.0,
            },
            &DVector::from_element(1, 0.8),
            &vc,
        )
        .unwrap();
        let rebuilt = &s.parts.mse_pool * s.parts.xi + &s.parts.mse_reject * (1.0 - s.parts.xi);
        assert!((rebuilt[(0, 0)] - s.mse[(0, 0)]).abs() < 1e-14);
    }

    #[test]
    fn mse_nonincreasing_in_c_at_lambda_eff_null() {
        let vc = toy_vc(0.5);
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let c = i as f64 * 0.5;
            let s = mse_surface_general(
                &TuningParams {
                    lambda: 3.0,
                    c_gamma: c,
                },
                &DVector::zeros(1),
                &vc,
            )
            .unwrap();
            let v = s.mse[(0, 0)];
            assert!(v <= prev + 1e-12, "mse rose at c={c}: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn monte_carlo_oracle_for_the_limit_law() {
        // Simulate the limit representation directly and compare bias and
        // mse at a point where both branches matter.
        use rand::Rng;
        let vc = toy_vc(0.5);
        let eta = DVector::from_element(1, 0.9);
        let tket = TuningParams {
            lambda: 1.7,
            c_gamma: 3.0,
        };
        let s = mse_surface_general(&tket, &eta, &vc).unwrap();
        let lm = local_means(&eta, &vc, tket.c_gamma).unwrap();
        let roots = vc.roots().unwrap();
        let lmat = DMatrix::identity(1, 1) * tket.lambda;
        let (wa, wb) = pool_weights(&lmat, &vc.jac_a, &vc.jac_b).unwrap();
        let coef_pool = (&wa * &roots.v_a_eff - &wb * &roots.v_b_eff)[(0, 0)];
        let coef_rej = roots.v_a_eff[(0, 0)];
        let v_eff_rt = roots.v_eff[(0, 0)];

        let mut rng = crate::numkernel::SeedPlan::new(99).stream(
            crate::numkernel::StreamDomain::Oracle,
            0,
        );
        let n = 2_000_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let w1: f64 = lm.mu1[0] + rng.sample::<f64, _>(rand_distr::StandardNormal);
            let w2: f64 = lm.mu2[0] + rng.sample::<f64, _>(rand_distr::StandardNormal);
            let x = if w2 * w2 <= tket.c_gamma {
                v_eff_rt * w1 + coef_pool * w2
            } else {
                v_eff_rt * w1 + coef_rej * w2
            };
            sum += x;
            sumsq += x * x;
        }
        let mc_bias = sum / n as f64;
        let mc_mse = sumsq / n as f64;
        let se_bias = (mc_mse / n as f64).sqrt();
        assert!(
            (mc_bias - s.bias[0]).abs() < 4.0 * se_bias,
            "bias {} vs mc {mc_bias} (se {se_bias})",
            s.bias[0]
        );
        // mse of the mc mse estimate: rough bound via fourth moment ~ 3 mse^2
        let se_mse = (2.0 * mc_mse * mc_mse / n as f64).sqrt() * 2.0;
        assert!(
            (mc_mse - s.mse[(0, 0)]).abs() < 4.0 * se_mse,
            "mse {} vs mc {mc_mse}",
            s.mse[(0, 0)]
        );
    }

    #[test]
    fn tune_null_recovers_lambda_eff_plateau() {
        let vc = toy_vc(0.5);
        let out = tune(&DVector::zeros(1), &vc, &TuneOptions::default()).unwrap();
        assert!(
            (out.params.lambda - 3.0).abs() / 3.0 < 0.10,
            "lambda* = {}",
            out.params.lambda
        );
        assert!(out.mse <= 0.875 + 1e-6, "mse at optimum {}", out.mse);
    }

    #[test]
    fn tune_strong_violation_shrinks_both() {
        let vc = toy_vc(0.5);
        let out = tune(&DVector::from_element(1, 1.5), &vc, &TuneOptions::default()).unwrap();
        let at_origin = mse_surface_general(
            &TuningParams {
                lambda: 0.0,
                c_gamma: 0.0,
            },
            &DVector::from_element(1, 1.5),
            &vc,
        )
        .unwrap();
        assert!(out.mse <= at_origin.mse[(0, 0)] + 1e-8);
    }
}
