use crate::error::{Error, Result};
use crate::numkernel::chisq::noncentral_chisq_cdf;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const MASS_FLOOR: f64 = 1e-12;

/// Region a <= w'w <= b for the quadratic-form truncation of W2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncRegion {
    lower: f64,
    upper: f64,
}

impl TruncRegion {
    /// `upper` may be `f64::INFINITY`. Requires 0 <= lower < upper.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0) || !(upper > lower) {
            return Err(Error::Domain(format!(
                "truncation region needs 0 <= a < b, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }
}

/// Conditional moments of W2 ~ N(mu2, I) given a <= W2'W2 <= b.
#[derive(Debug, Clone)]
pub struct TruncMoments {
    pub mean: DVector<f64>,
    pub second_moment: DMatrix<f64>,
    pub mass: f64,
}

fn band(x_lo: f64, x_hi: f64, df: usize, delta: f64) -> Result<f64> {
    let hi = if x_hi.is_infinite() {
        1.0
    } else {
        noncentral_chisq_cdf(x_hi, df, delta)?
    };
    let lo = noncentral_chisq_cdf(x_lo, df, delta)?;
    Ok((hi - lo).max(0.0))
}

/// First and second conditional moments of the elliptically truncated normal,
/// from ratios of noncentral chi-square CDFs at df, df+2 and df+4:
///   E(W2 | .)     = mu2 * [F_{l+2}(b)-F_{l+2}(a)] / [F_l(b)-F_l(a)]
///   E(W2 W2' | .) = I * r2 + mu2 mu2' * r4,   r4 from the df+4 band.
pub fn trunc_moments(mu2: &DVector<f64>, region: &TruncRegion) -> Result<TruncMoments> {
    let l = mu2.len();
    if l == 0 {
        return Err(Error::Domain("trunc_moments needs a nonempty mu2".into()));
    }
    let delta = 0.5 * mu2.dot(mu2);
    let mass = band(region.lower, region.upper, l, delta)?;
    if mass <= MASS_FLOOR {
        return Err(Error::DegenerateRegion { mass });
    }
    let r2 = band(region.lower, region.upper, l + 2, delta)? / mass;
    let r4 = band(region.lower, region.upper, l + 4, delta)? / mass;

    let mean = mu2 * r2;
    let second_moment = DMatrix::identity(l, l) * r2 + mu2 * mu2.transpose() * r4;
    Ok(TruncMoments {
        mean,
        second_moment,
        mass,
    })
}

/// Rejection draw from N(mu2, I) conditioned on the region. Errors out when
/// the acceptance probability (the region mass) is below 1e-6.
pub fn sample_trunc_w2<R: Rng>(
    mu2: &DVector<f64>,
    region: &TruncRegion,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let l = mu2.len();
    let delta = 0.5 * mu2.dot(mu2);
    let accept = band(region.lower, region.upper, l, delta)?;
    if accept < 1e-6 {
        return Err(Error::Infeasible { accept });
    }
    let max_attempts = (200.0 / accept).ceil() as usize + 100;
    for _ in 0..max_attempts {
        let w = DVector::from_fn(l, |i, _| mu2[i] + rng.sample::<f64, _>(StandardNormal));
        if region.contains(w.dot(&w)) {
            return Ok(w);
        }
    }
    Err(Error::Infeasible { accept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn region_validation() {
        assert!(TruncRegion::new(-0.1, 1.0).is_err());
        assert!(TruncRegion::new(2.0, 1.0).is_err());
        assert!(TruncRegion::new(0.0, f64::INFINITY).is_ok());
    }

    #[test]
    fn untruncated_is_plain_normal() {
        let mu2 = DVector::from_vec(vec![0.0, 0.0]);
        let m = trunc_moments(&mu2, &TruncRegion::new(0.0, f64::INFINITY).unwrap()).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-12);
        assert!(m.mean.norm() < 1e-12);
        assert!((&m.second_moment - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn central_band_second_moment_ratio() {
        // mu2 = 0, l = 1, region [0, 3.84]: E(W^2 | .) = F_3(3.84)/F_1(3.84).
        use crate::numkernel::chisq::chisq_cdf;
        let mu2 = DVector::from_vec(vec![0.0]);
        let m = trunc_moments(&mu2, &TruncRegion::new(0.0, 3.84).unwrap()).unwrap();
        let expect = chisq_cdf(3.84, 3).unwrap() / chisq_cdf(3.84, 1).unwrap();
        assert!((m.second_moment[(0, 0)] - expect).abs() < 1e-12);
        assert!((expect - 0.759).abs() < 5e-3, "sanity on the 0.759 figure");
    }

    #[test]
    fn complementary_masses_sum_to_one() {
        let mu2 = DVector::from_vec(vec![0.7, -0.2]);
        let c = 2.5;
        let lo = trunc_moments(&mu2, &TruncRegion::new(0.0, c).unwrap()).unwrap();
        let hi = trunc_moments(&mu2, &TruncRegion::new(c, f64::INFINITY).unwrap()).unwrap();
        assert!((lo.mass + hi.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn law_of_total_expectation() {
        let mu2 = DVector::from_vec(vec![0.9]);
        let c = 3.84;
        let lo = trunc_moments(&mu2, &TruncRegion::new(0.0, c).unwrap()).unwrap();
        let hi = trunc_moments(&mu2, &TruncRegion::new(c, f64::INFINITY).unwrap()).unwrap();
        let total = &lo.mean * lo.mass + &hi.mean * hi.mass;
        assert!((total - &mu2).norm() < 1e-10);
    }

    #[test]
    fn rejection_draws_respect_region() {
        let mu2 = DVector::from_vec(vec![0.0]);
        let region = TruncRegion::new(3.84, f64::INFINITY).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let w = sample_trunc_w2(&mu2, &region, &mut rng).unwrap();
            assert!(w[0].abs() >= 3.84_f64.sqrt() - 1e-12);
        }
    }

    #[test]
    fn sampler_mean_matches_moments() {
        let mu2 = DVector::from_vec(vec![1.5]);
        let region = TruncRegion::new(3.84, f64::INFINITY).unwrap();
        let m = trunc_moments(&mu2, &region).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let w = sample_trunc_w2(&mu2, &region, &mut rng).unwrap()[0];
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - m.mean[0]).abs() < 4.0 * se,
            "mean {mean} vs {} (se {se})",
            m.mean[0]
        );
    }

    #[test]
    fn degenerate_region_errors() {
        // mu'mu = 200 puts essentially no mass on [0, 0.01].
        let mu2 = DVector::from_vec(vec![200.0_f64.sqrt()]);
        let err = trunc_moments(&mu2, &TruncRegion::new(0.0, 0.01).unwrap());
        assert!(matches!(err, Err(Error::DegenerateRegion { .. })));
    }
}
