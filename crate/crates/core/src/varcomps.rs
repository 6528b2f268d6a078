//! Variance components (V_A, V_B, Gamma) and everything derived from them:
//! Sigma_T, Sigma_S, Lambda_eff and the efficient-variance split. Two
//! engines fill them: a with-replacement bootstrap over both samples, and a
//! closed-form influence-function plug-in for the mean family.

use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use crate::estimators::{self, estimate_mu_a, estimate_mu_b, fitted_pi_b, jac_a_hat, jac_b_hat};
use crate::numkernel::{nearest_psd, psd_sqrt, symmetrize, SeedPlan, StreamDomain};
use crate::nuisance::{fit_nuisance, NuisanceFit, NuisanceStrategy};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct VarComps {
    pub v_a: DMatrix<f64>,
    pub v_b: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub jac_a: DMatrix<f64>,
    pub jac_b: DMatrix<f64>,
    pub f_b: f64,
    pub sigma_t: DMatrix<f64>,
    pub sigma_s: DMatrix<f64>,
    pub lambda_eff: DMatrix<f64>,
    pub v_eff: DMatrix<f64>,
    pub v_a_eff: DMatrix<f64>,
    pub v_b_eff: DMatrix<f64>,
}

/// Flat serializable view for reports (scalar entries for l = 1, row-major
/// dumps otherwise).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarCompsReport {
    pub dim: usize,
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sigma_t: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub lambda_eff: Vec<f64>,
    pub v_eff: Vec<f64>,
    pub f_b: f64,
}

impl VarComps {
    /// Assemble the derived members from the raw blocks; clamps the joint
    /// covariance block onto the PSD cone first and enforces the
    /// Cauchy-Schwarz guard V_A + V_B - Gamma - Gamma' >= 0.
    pub fn derive(
        v_a: DMatrix<f64>,
        v_b: DMatrix<f64>,
        gamma: DMatrix<f64>,
        jac_a: DMatrix<f64>,
        jac_b: DMatrix<f64>,
        f_b: f64,
    ) -> Result<Self> {
        let l = v_a.nrows();
        if !(f_b > 0.0 && f_b < 1.0) {
            return Err(Error::Domain(format!("f_B must lie in (0,1), got {f_b}")));
        }

        // Joint block [[V_A, G], [G', V_B]]; clamp to PSD when bootstrap
        // noise pushed an eigenvalue slightly negative.
        let mut joint = DMatrix::zeros(2 * l, 2 * l);
        joint.view_mut((0, 0), (l, l)).copy_from(&v_a);
        joint.view_mut((0, l), (l, l)).copy_from(&gamma);
        joint.view_mut((l, 0), (l, l)).copy_from(&gamma.transpose());
        joint.view_mut((l, l), (l, l)).copy_from(&v_b);
        let eig_min = nalgebra::SymmetricEigen::new(symmetrize(&joint))
            .eigenvalues
            .min();
        let (v_a, v_b, gamma) = if eig_min < 0.0 {
            let fixed = nearest_psd(&joint);
            (
                fixed.view((0, 0), (l, l)).into(),
                fixed.view((l, l), (l, l)).into(),
                fixed.view((0, l), (l, l)).into(),
            )
        } else {
            (v_a, v_b, gamma)
        };

        let spread = &v_a + &v_b - &gamma - gamma.transpose();
        let spread_min = nalgebra::SymmetricEigen::new(symmetrize(&spread))
            .eigenvalues
            .min();
        if spread_min < -1e-10 * spread.norm().max(1.0) {
            return Err(Error::Diagnostics(format!(
                "Cauchy-Schwarz guard violated: min eig of V_A + V_B - Gamma - Gamma' is {spread_min:e}"
            )));
        }

        let vb_side = &v_b - gamma.transpose();
        let vb_inv = vb_side
            .clone()
            .lu()
            .solve(&DMatrix::identity(l, l))
            .ok_or_else(|| Error::Singular("V_B - Gamma' in Lambda_eff".into()))?;
        let jac_b_inv = jac_b
            .clone()
            .lu()
            .solve(&DMatrix::identity(l, l))
            .ok_or_else(|| Error::Singular("E{dPhi_B/dmu}".into()))?;
        let lambda_eff = &jac_a * (&v_a - &gamma) * vb_inv * &jac_b_inv;

        let (omega_a, omega_b) = estimators::pool_weights(&lambda_eff, &jac_a, &jac_b)?;
        let v_eff = symmetrize(
            &(&omega_a * &v_a * omega_a.transpose()
                + &omega_a * &gamma * omega_b.transpose()
                + &omega_b * gamma.transpose() * omega_a.transpose()
                + &omega_b * &v_b * omega_b.transpose()),
        );
        let v_a_eff = &v_a - &v_eff;
        let v_b_eff = &v_b - &v_eff;

        let sigma_t = symmetrize(&(&jac_b * &spread * jac_b.transpose() * f_b));

        // K = (Gamma' - V_B)(Gamma - V_A)^{-1}; Sigma_S = f_B var(K Z1 + Z2).
        let ga_side = &gamma - &v_a;
        let k = (gamma.transpose() - &v_b)
            * ga_side
                .clone()
                .lu()
                .solve(&DMatrix::identity(l, l))
                .ok_or_else(|| Error::Singular("Gamma - V_A in Sigma_S".into()))?;
        let sigma_s = symmetrize(
            &((&k * &v_a * k.transpose() + &k * &gamma + gamma.transpose() * k.transpose() + &v_b)
                * f_b),
        );

        Ok(Self {
            v_a,
            v_b,
            gamma,
            jac_a,
            jac_b,
            f_b,
            sigma_t,
            sigma_s,
            lambda_eff,
            v_eff,
            v_a_eff,
            v_b_eff,
        })
    }

    pub fn dim(&self) -> usize {
        self.v_a.nrows()
    }

    /// Asymptotic variance of the Lambda-pooled estimator (sandwich form).
    pub fn pooled_variance(&self, lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (omega_a, omega_b) = estimators::pool_weights(lambda, &self.jac_a, &self.jac_b)?;
        Ok(symmetrize(
            &(&omega_a * &self.v_a * omega_a.transpose()
                + &omega_a * &self.gamma * omega_b.transpose()
                + &omega_b * self.gamma.transpose() * omega_a.transpose()
                + &omega_b * &self.v_b * omega_b.transpose()),
        ))
    }

    /// Symmetric PSD square roots used all over the TAP machinery.
    pub fn roots(&self) -> Result<VarRoots> {
        Ok(VarRoots {
            v_eff: psd_sqrt(&self.v_eff)?,
            v_a_eff: psd_sqrt(&self.v_a_eff)?,
            v_b_eff: psd_sqrt(&self.v_b_eff)?,
            sigma_t: psd_sqrt(&self.sigma_t)?,
            sigma_s: psd_sqrt(&self.sigma_s)?,
        })
    }

    pub fn report(&self) -> VarCompsReport {
        let dump = |m: &DMatrix<f64>| m.iter().copied().collect::<Vec<_>>();
        VarCompsReport {
            dim: self.dim(),
            v_a: dump(&self.v_a),
            v_b: dump(&self.v_b),
            gamma: dump(&self.gamma),
            sigma_t: dump(&self.sigma_t),
            sigma_s: dump(&self.sigma_s),
            lambda_eff: dump(&self.lambda_eff),
            v_eff: dump(&self.v_eff),
            f_b: self.f_b,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarRoots {
    pub v_eff: DMatrix<f64>,
    pub v_a_eff: DMatrix<f64>,
    pub v_b_eff: DMatrix<f64>,
    pub sigma_t: DMatrix<f64>,
    pub sigma_s: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Refit the nuisance models inside each replicate (captures their
    /// uncertainty); false reproduces the replication algorithm verbatim,
    /// solving Phi_B at the full-data tau-hat.
    pub refit_nuisance: bool,
    pub max_drop_fraction: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: 500,
            refit_nuisance: true,
            max_drop_fraction: 0.02,
        }
    }
}

/// One bootstrap replicate pair (mu_A^(b), mu_B^(b)).
fn replicate_pair(
    data: &CombinedData,
    estimand: &Estimand,
    strategy: NuisanceStrategy,
    base_fit: &NuisanceFit,
    refit: bool,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let rep = data.resample(rng);
    let fit;
    let fit_ref = if refit {
        fit = fit_nuisance(&rep, estimand, strategy)?;
        &fit
    } else {
        base_fit
    };
    let mu_a = estimate_mu_a(&rep, estimand)?;
    let mu_b = estimate_mu_b(&rep, estimand, fit_ref)?;
    Ok((mu_a, mu_b))
}

/// Replication-based variance estimation: resample n_A rows of A and n_B
/// rows of B with replacement, recompute (mu_A, mu_B), and scale the sample
/// (co)variances of the replicates by n.
pub fn variance_bootstrap(
    data: &CombinedData,
    estimand: &Estimand,
    strategy: NuisanceStrategy,
    opts: &BootstrapOptions,
    seed: &SeedPlan,
) -> Result<VarComps> {
    if opts.replicates < 50 {
        return Err(Error::Domain(format!(
            "bootstrap needs K >= 50 replicates, got {}",
            opts.replicates
        )));
    }
    let base_fit = fit_nuisance(data, estimand, strategy)?;
    let k = opts.replicates;
    let pairs: Vec<Option<(DVector<f64>, DVector<f64>)>> = (0..k)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(StreamDomain::VarianceBootstrap, b as u64);
            replicate_pair(data, estimand, strategy, &base_fit, opts.refit_nuisance, &mut rng).ok()
        })
        .collect();

    let kept: Vec<&(DVector<f64>, DVector<f64>)> = pairs.iter().flatten().collect();
    let dropped = k - kept.len();
    if (dropped as f64) > opts.max_drop_fraction * k as f64 {
        return Err(Error::ReplicateFailures {
            dropped,
            total: k,
            limit_pct: opts.max_drop_fraction * 100.0,
        });
    }
    let kk = kept.len();
    let l = kept[0].0.len();
    let mut mean_a = DVector::<f64>::zeros(l);
    let mut mean_b = DVector::<f64>::zeros(l);
    for (a, b) in kept.iter() {
        mean_a += a;
        mean_b += b;
    }
    mean_a /= kk as f64;
    mean_b /= kk as f64;

    let n = data.n() as f64;
    let scale = n / (kk as f64 - 1.0);
    let mut v_a = DMatrix::<f64>::zeros(l, l);
    let mut v_b = DMatrix::<f64>::zeros(l, l);
    let mut gamma = DMatrix::<f64>::zeros(l, l);
    for (a, b) in kept.iter() {
        let da = a - &mean_a;
        let db = b - &mean_b;
        v_a += &da * da.transpose();
        v_b += &db * db.transpose();
        gamma += &da * db.transpose();
    }
    v_a *= scale;
    v_b *= scale;
    gamma *= scale;

    let jac_a = jac_a_hat(data, estimand);
    let jac_b = jac_b_hat(data, estimand, &base_fit)?;
    VarComps::derive(v_a, v_b, gamma, jac_a, jac_b, data.f_b())
}

/// Raw (V_A, V_B, Gamma) from the influence-function plug-in, before any
/// derivation of the pooled quantities.
pub fn plugin_components(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if matches!(estimand, Estimand::RegressionCoef) {
        return Err(Error::UnsupportedEstimand(
            "plug-in variance implements the mean family only; use the bootstrap".into(),
        ));
    }
    let pis = fitted_pi_b(data, fit)?;
    let p = data.dim();
    let n_hat = data.weight_sum();
    let n = data.n() as f64;
    let mu_a = estimate_mu_a(data, estimand)?[0];

    // h = N^{-1} sum (z - m), estimated by the Hajek average over A.
    let mut h = 0.0;
    for i in 0..data.n_a() {
        let z = estimand.outcome(data.prob.y[i]);
        h += data.prob.weights[i] * (z - fit.m(&data.prob.x.row(i)));
    }
    h /= n_hat;

    // b' = [N^{-1} sum (1-pi)(z - m - h) x'] [N^{-1} sum pi(1-pi) x x']^{-1},
    // both population sums estimated through the B sample at weight 1/pi.
    let mut num = DVector::<f64>::zeros(p);
    let mut den = DMatrix::<f64>::zeros(p, p);
    for i in 0..data.n_b() {
        let x = data.nonprob.x.row(i);
        let z = estimand.outcome(data.nonprob.y[i]);
        let m = fit.m(&x);
        let pi = pis[i];
        num.axpy((1.0 - pi) / pi * (z - m - h), &x.transpose(), 1.0);
        den.syger(1.0 - pi, &x.transpose(), &x.transpose(), 1.0);
    }
    num /= n_hat;
    den /= n_hat;
    // When pi_B ~ 1 everywhere the (1-pi) factors collapse both sides of the
    // correction and its natural limit is zero.
    let b_vec = if den.norm() < 1e-10 {
        DVector::zeros(p)
    } else {
        den.lu()
            .solve(&num)
            .ok_or_else(|| Error::Singular("plug-in correction Gram".into()))?
    };

    // m-bar = Hajek average of the fitted outcome model.
    let mut m_bar = 0.0;
    for i in 0..data.n_a() {
        m_bar += data.prob.weights[i] * fit.m(&data.prob.x.row(i));
    }
    m_bar /= n_hat;

    // Non-probability contribution: sum over B of (1 - pi) Delta^2.
    let mut vb_np = 0.0;
    for i in 0..data.n_b() {
        let x = data.nonprob.x.row(i);
        let z = estimand.outcome(data.nonprob.y[i]);
        let delta = (z - fit.m(&x) - h) / pis[i] - crate::nuisance::row_dot(&x, &b_vec);
        vb_np += (1.0 - pis[i]) * delta * delta;
    }

    // Probability-design contributions through t_i = pi_A x'b + m - m_bar.
    let mut v_a_sum = 0.0;
    let mut vb_p = 0.0;
    let mut gamma_sum = 0.0;
    for i in 0..data.n_a() {
        let x = data.prob.x.row(i);
        let d = data.prob.weights[i];
        let z = estimand.outcome(data.prob.y[i]);
        let t = crate::nuisance::row_dot(&x, &b_vec) / d + fit.m(&x) - m_bar;
        let ra = z - mu_a;
        v_a_sum += d * d * ra * ra;
        vb_p += d * d * t * t;
        gamma_sum += d * d * ra * t;
    }

    let scale = n / (n_hat * n_hat);
    let v_a = DMatrix::from_element(1, 1, scale * v_a_sum);
    let v_b = DMatrix::from_element(1, 1, scale * (vb_np + vb_p));
    let gamma = DMatrix::from_element(1, 1, scale * gamma_sum);
    Ok((v_a, v_b, gamma))
}

/// Closed-form influence-function plug-in for the mean family, including the
/// h_N, b and t_i correction terms that carry the nuisance-estimation
/// effect. Other estimands are directed to the bootstrap.
pub fn variance_plugin(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
) -> Result<VarComps> {
    let (v_a, v_b, gamma) = plugin_components(data, estimand, fit)?;
    let jac = DMatrix::from_element(1, 1, -1.0);
    VarComps::derive(v_a, v_b, gamma, jac.clone(), jac, data.f_b())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum VarianceEngine {
    Plugin,
    Bootstrap(BootstrapOptions),
}

/// Dispatch on the configured engine; the plug-in only covers the mean
/// family, everything else goes through the bootstrap.
pub fn estimate_varcomps(
    data: &CombinedData,
    estimand: &Estimand,
    strategy: NuisanceStrategy,
    fit: &NuisanceFit,
    engine: &VarianceEngine,
    seed: &SeedPlan,
) -> Result<VarComps> {
    match engine {
        VarianceEngine::Plugin => variance_plugin(data, estimand, fit),
        VarianceEngine::Bootstrap(opts) => variance_bootstrap(data, estimand, strategy, opts, seed),
    }
}
