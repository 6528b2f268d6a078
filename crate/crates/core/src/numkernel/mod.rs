//! Numeric kernels shared by the whole crate: chi-square CDF machinery in the
//! paper-free noncentrality convention delta = mu'mu/2, truncated-normal
//! moments, PSD matrix utilities, a multi-start Nelder-Mead simplex, and
//! reproducible per-replicate random streams.

mod chisq;
mod neldermead;
mod psd;
mod seed;
mod truncnorm;

pub use chisq::{chisq_cdf, chisq_quantile, noncentral_chisq_cdf};
pub use neldermead::{nelder_mead, NmOptions, NmResult};
pub use psd::{nearest_psd, psd_sqrt, symmetrize};
pub use seed::{SeedPlan, StreamDomain};
pub use truncnorm::{sample_trunc_w2, trunc_moments, TruncMoments, TruncRegion};
