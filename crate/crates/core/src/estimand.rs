//! Target parameter family and its estimating functions.
//!
//! Phi_A is the design-weighted estimating function of the probability
//! sample; Phi_B the doubly robust augmented form that also draws on the
//! non-probability sample. Both are exposed row-level with analytic
//! Jacobians in mu; the estimators aggregate them.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "cutoff", rename_all = "kebab-case")]
pub enum Estimand {
    Mean,
    /// Population proportion of Y strictly below the cutoff.
    ProportionBelow(f64),
    RegressionCoef,
}

impl Estimand {
    /// Dimension l of the estimating function (p = covariate dimension
    /// including intercept).
    pub fn dim(&self, p: usize) -> usize {
        match self {
            Estimand::Mean | Estimand::ProportionBelow(_) => 1,
            Estimand::RegressionCoef => p,
        }
    }

    /// Outcome transform fed to the estimating functions: identity for the
    /// mean and regression cases, the strict indicator 1(y < c) otherwise.
    pub fn outcome(&self, y: f64) -> f64 {
        match self {
            Estimand::Mean | Estimand::RegressionCoef => y,
            Estimand::ProportionBelow(c) => {
                if y < *c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// True when the working outcome is binary, switching the outcome model
    /// to a logistic mean.
    pub fn binary_outcome(&self) -> bool {
        matches!(self, Estimand::ProportionBelow(_))
    }
}

/// Row-level Phi_A for a unit in sample A (delta_A = 1) with weight d.
pub fn phi_a(estimand: &Estimand, x: &RowDVector<f64>, y: f64, d: f64, mu: &DVector<f64>) -> DVector<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            DVector::from_element(1, d * (estimand.outcome(y) - mu[0]))
        }
        Estimand::RegressionCoef => {
            let resid = y - x.dot(&mu.transpose());
            x.transpose() * (d * resid)
        }
    }
}

/// d(Phi_A)/d(mu) for the same row.
pub fn phi_a_jac(estimand: &Estimand, x: &RowDVector<f64>, d: f64) -> DMatrix<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => DMatrix::from_element(1, 1, -d),
        Estimand::RegressionCoef => {
            let xc = x.transpose();
            -(&xc * x) * d
        }
    }
}

/// Row-level Phi_B. `pi_b` and `m` are the fitted propensity and outcome
/// model at x; `d` is the design weight (only read when delta_a).
/// For the mean family:  (delta_B/pi_B)(z - m) + delta_A d m - mu,
/// with z the working outcome. For the regression coefficient (individual-
/// level form): (delta_A d + delta_B/pi_B) x (y - x'mu).
#[allow(clippy::too_many_arguments)]
pub fn phi_b(
    estimand: &Estimand,
    x: &RowDVector<f64>,
    y: f64,
    delta_a: bool,
    delta_b: bool,
    d: f64,
    pi_b: f64,
    m: f64,
    mu: &DVector<f64>,
) -> DVector<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => {
            let z = estimand.outcome(y);
            let mut v = -mu[0];
            if delta_b {
                v += (z - m) / pi_b;
            }
            if delta_a {
                v += d * m;
            }
            DVector::from_element(1, v)
        }
        Estimand::RegressionCoef => {
            let mut w = 0.0;
            if delta_a {
                w += d;
            }
            if delta_b {
                w += 1.0 / pi_b;
            }
            let resid = y - x.dot(&mu.transpose());
            x.transpose() * (w * resid)
        }
    }
}

/// d(Phi_B)/d(mu) for the same row.
pub fn phi_b_jac(
    estimand: &Estimand,
    x: &RowDVector<f64>,
    delta_a: bool,
    delta_b: bool,
    d: f64,
    pi_b: f64,
) -> DMatrix<f64> {
    match estimand {
        Estimand::Mean | Estimand::ProportionBelow(_) => DMatrix::from_element(1, 1, -1.0),
        Estimand::RegressionCoef => {
            let mut w = 0.0;
            if delta_a {
                w += d;
            }
            if delta_b {
                w += 1.0 / pi_b;
            }
            let xc = x.transpose();
            -(&xc * x) * w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vals: &[f64]) -> RowDVector<f64> {
        RowDVector::from_row_slice(vals)
    }

    #[test]
    fn phi_a_mean_root_and_arithmetic() {
        let x = row(&[1.0]);
        let at_root = phi_a(&Estimand::Mean, &x, 2.0, 1.0, &DVector::from_element(1, 2.0));
        assert_eq!(at_root[0], 0.0);
        let v = phi_a(&Estimand::Mean, &x, 5.0, 3.0, &DVector::from_element(1, 1.0));
        assert_eq!(v[0], 12.0);
    }

    #[test]
    fn phi_a_regression_root_is_ols_on_exact_data() {
        // y = 1 + 2 x1 exactly on three points; the summed Phi_A root is the
        // OLS fit, which interpolates.
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let xs = [row(&[1.0, 0.0]), row(&[1.0, 1.0]), row(&[1.0, 2.0])];
        let ys = [1.0, 3.0, 5.0];
        let sum: DVector<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| phi_a(&Estimand::RegressionCoef, x, y, 1.0, &beta))
            .fold(DVector::zeros(2), |a, b| a + b);
        assert!(sum.norm() < 1e-12);
    }

    #[test]
    fn phi_b_perfect_outcome_model_telescopes() {
        // m == y pointwise: for a B-only row the residual vanishes and only
        // -mu remains; for an A row the d*m carry-through remains.
        let x = row(&[1.0]);
        let v = phi_b(
            &Estimand::Mean,
            &x,
            3.0,
            false,
            true,
            0.0,
            0.4,
            3.0,
            &DVector::from_element(1, 0.0),
        );
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn phi_b_arithmetic_case() {
        // delta_B=0, delta_A=1, d=2, m=1, mu=0 -> 2*1 - 0 = 2.
        let x = row(&[1.0]);
        let v = phi_b(
            &Estimand::Mean,
            &x,
            7.0,
            true,
            false,
            2.0,
            0.5,
            1.0,
            &DVector::from_element(1, 0.0),
        );
        assert_eq!(v[0], 2.0);
    }

    #[test]
    fn proportion_uses_strict_inequality() {
        let e = Estimand::ProportionBelow(2.0);
        assert_eq!(e.outcome(1.999), 1.0);
        assert_eq!(e.outcome(2.0), 0.0);
        assert_eq!(e.outcome(2.001), 0.0);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let x = row(&[1.0, 0.7, -0.3]);
        let mu = DVector::from_vec(vec![0.2, -0.1, 0.5]);
        let h = 1e-6;
        let jac = phi_b_jac(&Estimand::RegressionCoef, &x, true, true, 2.0, 0.3);
        for j in 0..3 {
            let mut up = mu.clone();
            up[j] += h;
            let mut dn = mu.clone();
            dn[j] -= h;
            let fu = phi_b(&Estimand::RegressionCoef, &x, 1.0, true, true, 2.0, 0.3, 0.0, &up);
            let fd = phi_b(&Estimand::RegressionCoef, &x, 1.0, true, true, 2.0, 0.3, 0.0, &dn);
            let fd_col = (fu - fd) / (2.0 * h);
            for i in 0..3 {
                assert!((jac[(i, j)] - fd_col[i]).abs() < 1e-6);
            }
        }
    }
}
