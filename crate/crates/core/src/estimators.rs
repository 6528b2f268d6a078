//! Point estimators: the design-weighted mu_A, the doubly robust mu_B, the
//! naive B mean, and the Lambda-pooled combination.

use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use crate::nuisance::NuisanceFit;
use nalgebra::{DMatrix, DVector};

const PI_B_FLOOR: f64 = 1e-8;

/// Design-weighted Z-estimator from the probability sample. Closed form for
/// the mean family (Hajek ratio), weighted least squares for the regression
/// coefficient.
pub fn estimate_mu_a(data: &CombinedData, estimand: &Estimand) -> Result<DVector<f64>> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..data.n_a() {
                let d = data.prob.weights[i];
                num += d * estimand.outcome(data.prob.y[i]);
                den += d;
            }
            Ok(DVector::from_element(1, num / den))
        }
        Estimand::RegressionCoef => {
            let p = data.dim();
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                let d = data.prob.weights[i];
                xtx.syger(d, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(d * data.prob.y[i], &x.transpose(), 1.0);
            }
            xtx.lu()
                .solve(&xty)
                .ok_or_else(|| Error::Singular("design-weighted normal equations".into()))
        }
    }
}

/// Fitted propensities over sample B with the underflow guard.
pub(crate) fn fitted_pi_b(data: &CombinedData, fit: &NuisanceFit) -> Result<DVector<f64>> {
    let mut pis = DVector::zeros(data.n_b());
    for i in 0..data.n_b() {
        let pi = fit.pi_b(&data.nonprob.x.row(i));
        if pi < PI_B_FLOOR {
            return Err(Error::PropensityUnderflow { row: i, value: pi });
        }
        pis[i] = pi;
    }
    Ok(pis)
}

/// Doubly robust estimator from the combined samples, normalized by the
/// Hajek weight sum so it shares a scale with `estimate_mu_a`.
pub fn estimate_mu_b(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
) -> Result<DVector<f64>> {
    if !fit.converged {
        return Err(Error::Convergence(
            "nuisance fit did not converge; refusing to build mu_B".into(),
        ));
    }
    let pis = fitted_pi_b(data, fit)?;
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            let n_hat = data.weight_sum();
            let mut total = 0.0;
            for i in 0..data.n_b() {
                let z = estimand.outcome(data.nonprob.y[i]);
                let m = fit.m(&data.nonprob.x.row(i));
                total += (z - m) / pis[i];
            }
            for i in 0..data.n_a() {
                total += data.prob.weights[i] * fit.m(&data.prob.x.row(i));
            }
            Ok(DVector::from_element(1, total / n_hat))
        }
        Estimand::RegressionCoef => {
            let p = data.dim();
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                let w = data.prob.weights[i];
                xtx.syger(w, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(w * data.prob.y[i], &x.transpose(), 1.0);
            }
            for i in 0..data.n_b() {
                let x = data.nonprob.x.row(i);
                let w = 1.0 / pis[i];
                xtx.syger(w, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(w * data.nonprob.y[i], &x.transpose(), 1.0);
            }
            xtx.lu()
                .solve(&xty)
                .ok_or_else(|| Error::Singular("combined normal equations".into()))
        }
    }
}

/// Unadjusted sample mean of the non-probability sample (comparison row of
/// the study tables; biased under selection).
pub fn naive_mu_b_bar(data: &CombinedData, estimand: &Estimand) -> DVector<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            let s: f64 = (0..data.n_b())
                .map(|i| estimand.outcome(data.nonprob.y[i]))
                .sum();
            DVector::from_element(1, s / data.n_b() as f64)
        }
        Estimand::RegressionCoef => {
            let p = data.dim();
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            for i in 0..data.n_b() {
                let x = data.nonprob.x.row(i);
                xtx.syger(1.0, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(data.nonprob.y[i], &x.transpose(), 1.0);
            }
            xtx.lu().solve(&xty).expect("B-sample Gram invertible")
        }
    }
}

/// Pooling weights omega_A(Lambda), omega_B(Lambda) built from the expected
/// jacobians: omega_A = (J_A + Lambda J_B)^{-1} J_A and omega_B = I - omega_A.
pub fn pool_weights(
    lambda: &DMatrix<f64>,
    jac_a: &DMatrix<f64>,
    jac_b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let denom = jac_a + lambda * jac_b;
    let omega_a = denom
        .lu()
        .solve(jac_a)
        .ok_or_else(|| Error::Singular("J_A + Lambda J_B".into()))?;
    let l = omega_a.nrows();
    let omega_b = DMatrix::identity(l, l) - &omega_a;
    Ok((omega_a, omega_b))
}

/// Root of sum{Phi_A + lambda Phi_B} = 0 for scalar pooling weight lambda.
/// lambda = 0 returns `estimate_mu_a` bit for bit.
pub fn estimate_pooled(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return estimate_mu_a(data, estimand);
    }
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            // Phi_A-mean(mu) = mu_A - mu and Phi_B-mean(mu) = mu_B - mu under
            // the shared Hajek normalization, so the root is the omega-weighted
            // average.
            let mu_a = estimate_mu_a(data, estimand)?;
            let mu_b = estimate_mu_b(data, estimand, fit)?;
            Ok((mu_a + mu_b * lambda) / (1.0 + lambda))
        }
        Estimand::RegressionCoef => {
            let pis = fitted_pi_b(data, fit)?;
            let p = data.dim();
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                let w = data.prob.weights[i] * (1.0 + lambda);
                xtx.syger(w, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(w * data.prob.y[i], &x.transpose(), 1.0);
            }
            for i in 0..data.n_b() {
                let x = data.nonprob.x.row(i);
                let w = lambda / pis[i];
                xtx.syger(w, &x.transpose(), &x.transpose(), 1.0);
                xty.axpy(w * data.nonprob.y[i], &x.transpose(), 1.0);
            }
            xtx.lu()
                .solve(&xty)
                .ok_or_else(|| Error::Singular("pooled normal equations".into()))
        }
    }
}

/// Empirical jacobian of the Phi_A mean in mu, normalized by the Hajek
/// weight sum. Exactly -I for the mean family.
pub fn jac_a_hat(data: &CombinedData, estimand: &Estimand) -> DMatrix<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => DMatrix::from_element(1, 1, -1.0),
        Estimand::RegressionCoef => {
            let p = data.dim();
            let mut acc = DMatrix::<f64>::zeros(p, p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                acc.syger(-data.prob.weights[i], &x.transpose(), &x.transpose(), 1.0);
            }
            acc / data.weight_sum()
        }
    }
}

/// Empirical jacobian of the Phi_B mean in mu. Exactly -I for the mean
/// family by construction of the augmented form.
pub fn jac_b_hat(data: &CombinedData, estimand: &Estimand, fit: &NuisanceFit) -> Result<DMatrix<f64>> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => Ok(DMatrix::from_element(1, 1, -1.0)),
        Estimand::RegressionCoef => {
            let pis = fitted_pi_b(data, fit)?;
            let p = data.dim();
            let mut acc = DMatrix::<f64>::zeros(p, p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                acc.syger(-data.prob.weights[i], &x.transpose(), &x.transpose(), 1.0);
            }
            for i in 0..data.n_b() {
                let x = data.nonprob.x.row(i);
                acc.syger(-1.0 / pis[i], &x.transpose(), &x.transpose(), 1.0);
            }
            Ok(acc / data.weight_sum())
        }
    }
}

/// The Hajek-normalized mean of Phi_B at a given mu; feeds eta_hat and the
/// pretest statistic.
pub fn phi_b_mean(
    data: &CombinedData,
    estimand: &Estimand,
    fit: &NuisanceFit,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let pis = fitted_pi_b(data, fit)?;
    let n_hat = data.weight_sum();
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            let mut total = 0.0;
            for i in 0..data.n_b() {
                let z = estimand.outcome(data.nonprob.y[i]);
                total += (z - fit.m(&data.nonprob.x.row(i))) / pis[i];
            }
            for i in 0..data.n_a() {
                total += data.prob.weights[i] * fit.m(&data.prob.x.row(i));
            }
            Ok(DVector::from_element(1, total / n_hat - mu[0]))
        }
        Estimand::RegressionCoef => {
            let p = data.dim();
            let mut acc = DVector::<f64>::zeros(p);
            for i in 0..data.n_a() {
                let x = data.prob.x.row(i);
                let resid = data.prob.y[i] - crate::nuisance::row_dot(&x, mu);
                acc.axpy(data.prob.weights[i] * resid, &x.transpose(), 1.0);
            }
            for i in 0..data.n_b() {
                let x = data.nonprob.x.row(i);
                let resid = data.nonprob.y[i] - crate::nuisance::row_dot(&x, mu);
                acc.axpy(resid / pis[i], &x.transpose(), 1.0);
            }
            Ok(acc / n_hat)
        }
    }
}
