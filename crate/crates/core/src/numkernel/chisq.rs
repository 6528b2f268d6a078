use crate::error::{Error, Result};
use statrs::function::gamma::{gamma_lr, ln_gamma};

const REL_TOL: f64 = 1e-14;
const MAX_TERMS: usize = 100_000;

/// Central chi-square CDF, P(X <= x) for X ~ chi2(df), via the regularized
/// lower incomplete gamma function.
pub fn chisq_cdf(x: f64, df: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chisq_cdf needs x >= 0, got {x}")));
    }
    if df < 1 {
        return Err(Error::Domain("chisq_cdf needs df >= 1".into()));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma_lr(df as f64 / 2.0, x / 2.0))
}

/// Noncentral chi-square CDF in the convention delta = mu'mu / 2, so that
/// F(x; df, delta) = P(|Z + mu|^2 <= x) for Z standard normal in R^df.
/// (The standard noncentrality is lambda = mu'mu = 2 delta.)
///
/// Series: F = sum_k Pois(k; delta) * chisq_cdf(x, df + 2k), summed outward
/// from the Poisson mode so large delta does not underflow. Truncated when
/// both the term and the Poisson tail bound drop below 1e-14 relative.
pub fn noncentral_chisq_cdf(x: f64, df: usize, delta: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "noncentral_chisq_cdf needs x >= 0, got {x}"
        )));
    }
    if df < 1 {
        return Err(Error::Domain("noncentral_chisq_cdf needs df >= 1".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!(
            "noncentral_chisq_cdf needs delta >= 0, got {delta}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return chisq_cdf(x, df);
    }

    let k0 = delta.floor() as usize;
    // Poisson(delta) weight at the mode, in log space.
    let ln_w0 = -delta + (k0 as f64) * delta.ln() - ln_gamma(k0 as f64 + 1.0);
    let w0 = ln_w0.exp();

    let mut sum = 0.0;
    let mut terms = 0usize;

    // Downward sweep k0, k0-1, ..., 0. Weights shrink by k/delta < 1 and the
    // cdf factor is bounded by 1, so the unsummed lower mass bounds the error.
    let mut w = w0;
    let mut k = k0;
    loop {
        let c = gamma_lr((df + 2 * k) as f64 / 2.0, x / 2.0);
        sum += w * c;
        terms += 1;
        if terms > MAX_TERMS {
            return Err(Error::SeriesDivergence { terms });
        }
        if k == 0 {
            break;
        }
        // Remaining weight below k is <= w * r/(1-r) with r = k/delta.
        let r = (k as f64 / delta).min(0.999_999);
        if w * r / (1.0 - r) < REL_TOL * sum.max(f64::MIN_POSITIVE) && w * c < REL_TOL * sum {
            break;
        }
        w *= k as f64 / delta;
        k -= 1;
    }

    // Upward sweep k0+1, k0+2, ... The cdf factor decreases in k, so the tail
    // contribution is bounded by (Poisson tail mass) * (current cdf factor).
    let mut w = w0;
    let mut k = k0;
    loop {
        k += 1;
        w *= delta / k as f64;
        let c = gamma_lr((df + 2 * k) as f64 / 2.0, x / 2.0);
        sum += w * c;
        terms += 1;
        if terms > MAX_TERMS {
            return Err(Error::SeriesDivergence { terms });
        }
        let r = delta / (k as f64 + 1.0);
        if r < 1.0 {
            let tail = w * r / (1.0 - r);
            if tail * c < REL_TOL * sum.max(f64::MIN_POSITIVE) && w * c < REL_TOL * sum {
                break;
            }
            if tail < f64::MIN_POSITIVE {
                break;
            }
        }
    }

    Ok(sum.min(1.0))
}

/// Inverse of `chisq_cdf` in x: bracketing by doubling, then bisection until
/// |cdf(x) - p| <= 1e-12 or the bracket collapses.
pub fn chisq_quantile(p: f64, df: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "chisq_quantile needs p in (0,1), got {p}"
        )));
    }
    if df < 1 {
        return Err(Error::Domain("chisq_quantile needs df >= 1".into()));
    }

    let mut lo = 0.0_f64;
    let mut hi = (df as f64).max(1.0);
    let mut guard = 0;
    while chisq_cdf(hi, df)? < p {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(Error::Convergence("chisq_quantile bracket blew up".into()));
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = chisq_cdf(mid, df)?;
        if (c - p).abs() <= 1e-12 {
            return Ok(mid);
        }
        if c < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_at_zero_is_zero() {
        assert_eq!(chisq_cdf(0.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn cdf_95th_quantile_df1() {
        // 3.84 is the 95th percentile of chi2_1.
        let p = chisq_cdf(3.84, 1).unwrap();
        assert!((p - 0.95).abs() < 5e-4, "got {p}");
    }

    #[test]
    fn cdf_matches_quadrature_df3() {
        // Simpson quadrature of the chi2_3 density on [0, 5], substituted
        // t = s^2 so the integrand is analytic at the origin.
        let k = 3.0_f64;
        let norm = 2.0_f64.powf(k / 2.0) * statrs::function::gamma::gamma(k / 2.0);
        let g = |s: f64| -> f64 {
            let t = s * s;
            2.0 * s * t.powf(k / 2.0 - 1.0) * (-t / 2.0).exp() / norm
        };
        let b = 5.0_f64.sqrt();
        let n = 100_000;
        let h = b / n as f64;
        let mut acc = g(0.0) + g(b);
        for i in 1..n {
            let s = i as f64 * h;
            acc += g(s) * if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        let quad = acc * h / 3.0;
        let cdf = chisq_cdf(5.0, 3).unwrap();
        assert!((cdf - quad).abs() <= 1e-10, "cdf {cdf} vs quad {quad}");
    }

    #[test]
    fn noncentral_zero_delta_collapses() {
        for &(x, df) in &[(0.5, 1usize), (3.84, 2), (10.0, 5)] {
            let a = noncentral_chisq_cdf(x, df, 0.0).unwrap();
            let b = chisq_cdf(x, df).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn noncentral_df1_matches_normal_reduction() {
        // P((Z + 0.5)^2 <= 3.84) = Phi(1.96 - 0.5) - Phi(-1.96 - 0.5),
        // with delta = mu^2/2 = 0.125.
        use statrs::distribution::{ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        let b = 3.84_f64.sqrt();
        let expect = n.cdf(b - 0.5) - n.cdf(-b - 0.5);
        let got = noncentral_chisq_cdf(3.84, 1, 0.125).unwrap();
        assert!((got - expect).abs() <= 1e-10, "got {got} expect {expect}");
    }

    #[test]
    fn noncentral_large_delta_stable() {
        // Far beyond exp(-delta) underflow territory; the mass of
        // |Z + mu|^2 around mu'mu = 2000 is nowhere near x = 100.
        let v = noncentral_chisq_cdf(100.0, 1, 1000.0).unwrap();
        assert!(v >= 0.0 && v < 1e-10, "got {v}");
        let w = noncentral_chisq_cdf(4000.0, 1, 1000.0).unwrap();
        assert!(w > 0.99, "got {w}");
    }

    #[test]
    fn noncentral_monotone_in_delta() {
        // Stochastic ordering: larger delta pushes mass right.
        let mut prev = 1.0;
        for i in 0..40 {
            let delta = i as f64 * 0.5;
            let v = noncentral_chisq_cdf(5.0, 2, delta).unwrap();
            assert!(v <= prev + 1e-12, "delta {delta}: {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn quantile_95_df1() {
        let q = chisq_quantile(0.95, 1).unwrap();
        assert!((q - 3.84).abs() < 0.01, "got {q}");
    }

    #[test]
    fn quantile_median_df2_is_2ln2() {
        // chi2_2 is Exp(1/2); its median is 2 ln 2.
        let q = chisq_quantile(0.5, 2).unwrap();
        assert!((q - 2.0 * std::f64::consts::LN_2).abs() < 1e-9, "got {q}");
    }

    #[test]
    fn quantile_round_trips() {
        for &(p, df) in &[(0.99, 5usize), (0.01, 1), (0.5, 7), (0.975, 3)] {
            let q = chisq_quantile(p, df).unwrap();
            let c = chisq_cdf(q, df).unwrap();
            assert!((c - p).abs() <= 1e-9, "p={p} df={df}: cdf(q)={c}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(chisq_cdf(-1.0, 1).is_err());
        assert!(chisq_cdf(1.0, 0).is_err());
        assert!(chisq_quantile(0.0, 1).is_err());
        assert!(chisq_quantile(1.0, 1).is_err());
        assert!(noncentral_chisq_cdf(1.0, 1, -0.1).is_err());
    }
}
