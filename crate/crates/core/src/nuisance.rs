//! Fitting the propensity model pi_B(x; alpha) and the outcome model
//! m(x; beta) under the three strategies the estimators accept.

use crate::data::CombinedData;
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 100;
const DIVERGENCE_NORM: f64 = 1e3;
const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceStrategy {
    /// Pseudo maximum likelihood for alpha, least squares on sample B for beta.
    PseudoMlOlsB,
    /// Pseudo maximum likelihood for alpha, least squares on both samples.
    PseudoMlOlsAb,
    /// Jointly solved calibration equations of Kim and Haziza.
    Kh,
}

impl std::str::FromStr for NuisanceStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo-ml-ols-b" => Ok(Self::PseudoMlOlsB),
            "pseudo-ml-ols-ab" => Ok(Self::PseudoMlOlsAb),
            "kh" => Ok(Self::Kh),
            other => Err(Error::Config(format!(
                "unknown nuisance strategy '{other}' (expected pseudo-ml-ols-b, pseudo-ml-ols-ab, kh)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub strategy: NuisanceStrategy,
    pub binary_outcome: bool,
    pub converged: bool,
    pub iterations: usize,
}

fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Dot product of a covariate row (matrix row view or owned row vector)
/// with a coefficient column.
pub(crate) fn row_dot<S>(x: &nalgebra::Matrix<f64, nalgebra::U1, nalgebra::Dyn, S>, v: &DVector<f64>) -> f64
where
    S: nalgebra::storage::Storage<f64, nalgebra::U1, nalgebra::Dyn>,
{
    let mut acc = 0.0;
    for j in 0..x.ncols() {
        acc += x[(0, j)] * v[j];
    }
    acc
}

impl NuisanceFit {
    /// Fitted selection propensity at a covariate row.
    pub fn pi_b<S>(&self, x: &nalgebra::Matrix<f64, nalgebra::U1, nalgebra::Dyn, S>) -> f64
    where
        S: nalgebra::storage::Storage<f64, nalgebra::U1, nalgebra::Dyn>,
    {
        expit(row_dot(x, &self.alpha))
    }

    /// Fitted outcome mean at a covariate row (linear, or logistic for
    /// binary working outcomes).
    pub fn m<S>(&self, x: &nalgebra::Matrix<f64, nalgebra::U1, nalgebra::Dyn, S>) -> f64
    where
        S: nalgebra::storage::Storage<f64, nalgebra::U1, nalgebra::Dyn>,
    {
        let lin = row_dot(x, &self.beta);
        if self.binary_outcome {
            expit(lin)
        } else {
            lin
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlsScope {
    BOnly,
    AAndB,
}

fn check_conditioning(data: &CombinedData) -> Result<()> {
    let p = data.dim();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut accumulate = |x: &DMatrix<f64>| {
        for i in 0..x.nrows() {
            for j in 0..p {
                let xj = x[(i, j)];
                for k in 0..p {
                    gram[(j, k)] += xj * x[(i, k)];
                }
            }
        }
    };
    accumulate(&data.prob.x);
    accumulate(&data.nonprob.x);
    let eig = nalgebra::SymmetricEigen::new(gram);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < COND_LIMIT) {
        return Err(Error::Collinear { cond });
    }
    Ok(())
}

/// Newton-Raphson root of the pseudo log-likelihood score
///   sum_B x - sum_A d pi_B(x; alpha) x = 0,
/// with step halving, starting from alpha = 0.
pub fn fit_propensity_pseudo_ml(data: &CombinedData) -> Result<(DVector<f64>, usize)> {
    check_conditioning(data)?;
    let p = data.dim();
    let n = data.n() as f64;

    // Sum over B of x is constant across iterations.
    let mut xb_sum = vec![0.0; p];
    for i in 0..data.n_b() {
        for j in 0..p {
            xb_sum[j] += data.nonprob.x[(i, j)];
        }
    }
    let score = |alpha: &DVector<f64>| -> DVector<f64> {
        let mut u = xb_sum.clone();
        for i in 0..data.n_a() {
            let mut lin = 0.0;
            for j in 0..p {
                lin += data.prob.x[(i, j)] * alpha[j];
            }
            let w = data.prob.weights[i] * expit(lin);
            for j in 0..p {
                u[j] -= w * data.prob.x[(i, j)];
            }
        }
        DVector::from_vec(u)
    };

    let mut alpha = DVector::zeros(p);
    let mut u = score(&alpha);
    for iter in 1..=MAX_ITER {
        if u.amax() < 1e-8 * n {
            return Ok((alpha, iter - 1));
        }
        let mut info = DMatrix::<f64>::zeros(p, p);
        for i in 0..data.n_a() {
            let mut lin = 0.0;
            for j in 0..p {
                lin += data.prob.x[(i, j)] * alpha[j];
            }
            let pi = expit(lin);
            let w = data.prob.weights[i] * pi * (1.0 - pi);
            for j in 0..p {
                let wj = w * data.prob.x[(i, j)];
                for k in 0..p {
                    info[(j, k)] += wj * data.prob.x[(i, k)];
                }
            }
        }
        let step = info
            .lu()
            .solve(&u)
            .ok_or_else(|| Error::Singular("pseudo-ML information matrix".into()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &alpha + &step * scale;
            let cu = score(&cand);
            if cu.norm() < u.norm() {
                alpha = cand;
                u = cu;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            alpha += &step * scale;
            u = score(&alpha);
        }
        if alpha.norm() > DIVERGENCE_NORM {
            return Err(Error::Convergence(format!(
                "pseudo-ML propensity fit diverged (||alpha|| = {:.3e}); possible separation",
                alpha.norm()
            )));
        }
    }
    Err(Error::Convergence(
        "pseudo-ML propensity fit hit the iteration cap".into(),
    ))
}

/// Least-squares (or logistic, for binary working outcomes) fit of the
/// outcome model over the requested scope.
pub fn fit_outcome(data: &CombinedData, estimand: &Estimand, scope: OlsScope) -> Result<DVector<f64>> {
    let p = data.dim();
    let include_a = scope == OlsScope::AAndB;
    let n_rows = data.n_b() + if include_a { data.n_a() } else { 0 };

    if !estimand.binary_outcome() {
        // Normal equations with a pivoted decomposition of the Gram matrix.
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut accumulate = |x: &DMatrix<f64>, y: &DVector<f64>| {
            for i in 0..x.nrows() {
                let z = estimand.outcome(y[i]);
                for j in 0..p {
                    let xj = x[(i, j)];
                    rhs[j] += xj * z;
                    for k in 0..p {
                        gram[(j, k)] += xj * x[(i, k)];
                    }
                }
            }
        };
        accumulate(&data.nonprob.x, &data.nonprob.y);
        if include_a {
            accumulate(&data.prob.x, &data.prob.y);
        }
        let qr = gram.clone().col_piv_qr();
        let rank = qr.r().rank(1e-10 * gram.norm().max(1.0));
        if rank < p {
            return Err(Error::Singular(format!(
                "outcome design matrix is rank deficient ({rank} < {p})"
            )));
        }
        return qr
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("outcome least-squares solve failed".into()));
    }

    // Logistic mean: Newton on sum x (z - expit(x beta)) = 0.
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..MAX_ITER {
        let mut u = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut accumulate = |x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, u: &mut DVector<f64>, info: &mut DMatrix<f64>| {
            for i in 0..x.nrows() {
                let mut lin = 0.0;
                for j in 0..p {
                    lin += x[(i, j)] * beta[j];
                }
                let m = expit(lin);
                let resid = estimand.outcome(y[i]) - m;
                let w = m * (1.0 - m);
                for j in 0..p {
                    let xj = x[(i, j)];
                    u[j] += xj * resid;
                    for k in 0..p {
                        info[(j, k)] += w * xj * x[(i, k)];
                    }
                }
            }
        };
        accumulate(&data.nonprob.x, &data.nonprob.y, &beta, &mut u, &mut info);
        if include_a {
            accumulate(&data.prob.x, &data.prob.y, &beta, &mut u, &mut info);
        }
        if u.amax() < 1e-10 * n_rows as f64 {
            return Ok(beta);
        }
        let step = info
            .lu()
            .solve(&u)
            .ok_or_else(|| Error::Singular("logistic outcome information matrix".into()))?;
        beta += step;
        if beta.norm() > DIVERGENCE_NORM {
            return Err(Error::Convergence("logistic outcome fit diverged".into()));
        }
    }
    Err(Error::Convergence(
        "logistic outcome fit hit the iteration cap".into(),
    ))
}

/// Joint Newton solve of the stacked calibration system
///   sum { delta_B / pi_B(x; alpha) - delta_A d } x = 0
///   sum delta_B { 1/pi_B(x; alpha) - 1 } x (z - m(x; beta)) = 0.
pub fn fit_kh_joint(data: &CombinedData, estimand: &Estimand) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    check_conditioning(data)?;
    let p = data.dim();
    let n = data.n() as f64;
    let binary = estimand.binary_outcome();

    let score = |alpha: &DVector<f64>, beta: &DVector<f64>| -> DVector<f64> {
        let mut u = DVector::zeros(2 * p);
        for i in 0..data.n_b() {
            let x = data.nonprob.x.row(i);
            let pi = expit(row_dot(&x, alpha));
            let inv = 1.0 / pi.max(1e-12);
            let lin = row_dot(&x, beta);
            let m = if binary { expit(lin) } else { lin };
            let z = estimand.outcome(data.nonprob.y[i]);
            let xc = x.transpose();
            u.rows_mut(0, p).axpy(inv, &xc, 1.0);
            u.rows_mut(p, p).axpy((inv - 1.0) * (z - m), &xc, 1.0);
        }
        for i in 0..data.n_a() {
            let x = data.prob.x.row(i);
            u.rows_mut(0, p)
                .axpy(-data.prob.weights[i], &x.transpose(), 1.0);
        }
        u
    };

    let mut alpha = DVector::zeros(p);
    let mut beta = fit_outcome(data, estimand, OlsScope::BOnly)?;
    let mut u = score(&alpha, &beta);
    for iter in 1..=MAX_ITER {
        if u.amax() < 1e-8 * n {
            return Ok((alpha, beta, iter - 1));
        }
        let mut j11 = DMatrix::<f64>::zeros(p, p);
        let mut j21 = DMatrix::<f64>::zeros(p, p);
        let mut j22 = DMatrix::<f64>::zeros(p, p);
        for i in 0..data.n_b() {
            let x = data.nonprob.x.row(i);
            let pi = expit(row_dot(&x, &alpha));
            let inv = 1.0 / pi.max(1e-12);
            let lin = row_dot(&x, &beta);
            let (m, mdot) = if binary {
                let e = expit(lin);
                (e, e * (1.0 - e))
            } else {
                (lin, 1.0)
            };
            let z = estimand.outcome(data.nonprob.y[i]);
            let xc = x.transpose();
            let outer = &xc * x;
            // d(1/pi)/d eta = -(1-pi)/pi with eta = x'alpha
            let dinv = -(1.0 - pi) * inv;
            j11 += &outer * dinv;
            j21 += &outer * (dinv * (z - m));
            j22 += &outer * (-(inv - 1.0) * mdot);
        }
        let mut jac = DMatrix::<f64>::zeros(2 * p, 2 * p);
        jac.view_mut((0, 0), (p, p)).copy_from(&j11);
        jac.view_mut((p, 0), (p, p)).copy_from(&j21);
        jac.view_mut((p, p), (p, p)).copy_from(&j22);
        let step = jac
            .lu()
            .solve(&u)
            .ok_or_else(|| Error::Singular("KH stacked Jacobian".into()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let ca = &alpha - step.rows(0, p) * scale;
            let cb = &beta - step.rows(p, p) * scale;
            let cu = score(&ca, &cb);
            if cu.norm() < u.norm() {
                alpha = ca;
                beta = cb;
                u = cu;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            alpha -= step.rows(0, p) * scale;
            beta -= step.rows(p, p) * scale;
            u = score(&alpha, &beta);
        }
        if alpha.norm() > DIVERGENCE_NORM || beta.norm() > 1e6 {
            return Err(Error::Convergence("KH joint fit diverged".into()));
        }
    }
    Err(Error::Convergence("KH joint fit hit the iteration cap".into()))
}

/// Fit both nuisance models under the requested strategy.
pub fn fit_nuisance(
    data: &CombinedData,
    estimand: &Estimand,
    strategy: NuisanceStrategy,
) -> Result<NuisanceFit> {
    let (alpha, beta, iterations) = match strategy {
        NuisanceStrategy::PseudoMlOlsB => {
            let (alpha, it) = fit_propensity_pseudo_ml(data)?;
            let beta = fit_outcome(data, estimand, OlsScope::BOnly)?;
            (alpha, beta, it)
        }
        NuisanceStrategy::PseudoMlOlsAb => {
            let (alpha, it) = fit_propensity_pseudo_ml(data)?;
            let beta = fit_outcome(data, estimand, OlsScope::AAndB)?;
            (alpha, beta, it)
        }
        NuisanceStrategy::Kh => {
            let (alpha, beta, it) = fit_kh_joint(data, estimand)?;
            (alpha, beta, it)
        }
    };
    Ok(NuisanceFit {
        alpha,
        beta,
        strategy,
        binary_outcome: estimand.binary_outcome(),
        converged: true,
        iterations,
    })
}
