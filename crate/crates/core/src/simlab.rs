//! Monte Carlo lab: synthetic populations, Bernoulli two-sample draws with
//! calibrated inclusion intercepts, the estimator/CI battery over
//! replicates, and the analytic toy surface table.

use crate::aci::{baci_with_draws, paci_with_draws, prepare_limit_draws, wald_interval, BaciConfig, CiMethod, VnMode};
use crate::data::{CombinedData, FinitePopulation, NonProbabilitySample, ProbabilitySample};
use crate::error::{Error, Result};
use crate::estimand::Estimand;
use crate::estimators::{estimate_mu_a, estimate_mu_b, estimate_pooled, naive_mu_b_bar};
use crate::numkernel::{SeedPlan, StreamDomain};
use crate::nuisance::NuisanceStrategy;
use crate::tap::{estimate_tap, mse_surface_scalar, TapOptions, TuneSpec, TuningParams};
use crate::varcomps::VarianceEngine;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_size: usize,
    pub target_n_a: usize,
    pub target_n_b: usize,
    /// Violation strength b of the comparability assumption.
    pub violation: f64,
    pub replicates: usize,
    pub seed: u64,
    pub strategies: Vec<NuisanceStrategy>,
    pub variance: VarianceEngine,
    /// Run the confidence-interval battery (expensive).
    pub run_cis: bool,
    pub ci: BaciConfig,
    /// Fraction of replicate failures tolerated before the study errors out.
    pub max_failure_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            population_size: 20_000,
            target_n_a: 600,
            target_n_b: 5000,
            violation: 0.0,
            replicates: 500,
            seed: 20240501,
            strategies: vec![NuisanceStrategy::PseudoMlOlsAb],
            variance: VarianceEngine::Plugin,
            run_cis: false,
            ci: BaciConfig::default(),
            max_failure_fraction: 0.02,
        }
    }
}

impl SimConfig {
    /// Paper-scale preset: N = 1e5, R = 2000, bootstrap sizes 2000.
    pub fn paper_scale(mut self) -> Self {
        self.population_size = 100_000;
        self.replicates = 2000;
        self.ci.bootstrap = 2000;
        self.ci.second_order = 100;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::EmptyStudy("replicates must be positive".into()));
        }
        if self.population_size < 1000 {
            return Err(Error::Domain("population size must be >= 1000".into()));
        }
        if self.population_size < 2 * (self.target_n_a + self.target_n_b) {
            return Err(Error::Domain(
                "population must be at least 2x the combined target sample size".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(Error::EmptyStudy("estimator strategy set is empty".into()));
        }
        Ok(())
    }
}

/// Y = 1 + X1 + X2 + u + u^2 + eps with X1 ~ N(0,1), X2 ~ N(1,1),
/// u, eps ~ N(0,1); covariates carry an intercept column, u stays latent.
pub fn generate_population<R: Rng>(n: usize, rng: &mut R) -> FinitePopulation {
    let mut x = DMatrix::zeros(n, 3);
    let mut y = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    for i in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = 1.0 + rng.sample::<f64, _>(StandardNormal);
        let ui: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = x1;
        x[(i, 2)] = x2;
        u[i] = ui;
        y[i] = 1.0 + x1 + x2 + ui + ui * ui + eps;
    }
    FinitePopulation::new(x, y, u)
}

fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Monotone bisection for the intercept nu making the expected Bernoulli
/// sample size hit the target within 1%.
fn calibrate_intercept(linear: &[f64], target: f64) -> Result<f64> {
    let expected = |nu: f64| -> f64 { linear.iter().map(|&t| expit(nu + t)).sum() };
    let mut lo = -40.0;
    let mut hi = 10.0;
    if expected(lo) > target || expected(hi) < target {
        return Err(Error::Domain(format!(
            "target sample size {target} infeasible for this population"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e = expected(mid);
        if (e - target).abs() <= 0.01 * target {
            return Ok(mid);
        }
        if e < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bernoulli sampling of both samples:
///   logit pi_A = nu_A + .2 X1 + .1 X2
///   logit pi_B = nu_B + .1 X1 + .2 X2 + .5 b u / sqrt(target_n_B)
/// with intercepts calibrated to the targets on the realized population.
pub fn draw_samples<R: Rng>(
    pop: &FinitePopulation,
    config: &SimConfig,
    rng: &mut R,
) -> Result<CombinedData> {
    let n = pop.size();
    let u = pop.latent();
    let lin_a: Vec<f64> = (0..n)
        .map(|i| 0.2 * pop.x[(i, 1)] + 0.1 * pop.x[(i, 2)])
        .collect();
    let scale_b = 0.5 * config.violation / (config.target_n_b as f64).sqrt();
    let lin_b: Vec<f64> = (0..n)
        .map(|i| 0.1 * pop.x[(i, 1)] + 0.2 * pop.x[(i, 2)] + scale_b * u[i])
        .collect();
    let nu_a = calibrate_intercept(&lin_a, config.target_n_a as f64)?;
    let nu_b = calibrate_intercept(&lin_b, config.target_n_b as f64)?;

    let mut ax = Vec::new();
    let mut ay = Vec::new();
    let mut aw = Vec::new();
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for i in 0..n {
        let pi_a = expit(nu_a + lin_a[i]);
        if rng.gen::<f64>() < pi_a {
            ax.extend_from_slice(&[1.0, pop.x[(i, 1)], pop.x[(i, 2)]]);
            ay.push(pop.y[i]);
            aw.push(1.0 / pi_a);
        }
        let pi_b = expit(nu_b + lin_b[i]);
        if rng.gen::<f64>() < pi_b {
            bx.extend_from_slice(&[1.0, pop.x[(i, 1)], pop.x[(i, 2)]]);
            by.push(pop.y[i]);
        }
    }
    if ay.is_empty() || by.is_empty() {
        return Err(Error::Domain("a drawn sample came out empty".into()));
    }
    let n_a = ay.len();
    let n_b = by.len();
    CombinedData::new(
        ProbabilitySample {
            x: DMatrix::from_row_slice(n_a, 3, &ax),
            y: DVector::from_vec(ay),
            weights: DVector::from_vec(aw),
        },
        NonProbabilitySample {
            x: DMatrix::from_row_slice(n_b, 3, &bx),
            y: DVector::from_vec(by),
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiSummary {
    pub name: String,
    pub method: CiMethod,
    pub coverage: f64,
    pub mean_width: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub violation: f64,
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failures: usize,
    pub estimators: Vec<EstimatorSummary>,
    pub cis: Vec<CiSummary>,
    pub pooling_rate: f64,
    pub mean_lambda: f64,
    pub mean_c_gamma: f64,
    pub mean_t_stat: f64,
}

#[derive(Debug, Clone)]
struct ReplicateRecord {
    truth: f64,
    estimates: Vec<(String, f64)>,
    intervals: Vec<(String, CiMethod, f64, f64)>,
    pooled: bool,
    lambda: f64,
    c_gamma: f64,
    t_stat: f64,
}

fn strategy_tag(s: NuisanceStrategy) -> &'static str {
    match s {
        NuisanceStrategy::PseudoMlOlsAb => "",
        NuisanceStrategy::PseudoMlOlsB => ":B",
        NuisanceStrategy::Kh => ":KH",
    }
}

fn run_replicate(config: &SimConfig, plan: &SeedPlan, rep: u64) -> Result<ReplicateRecord> {
    let estimand = Estimand::Mean;
    let mut pop_rng = plan.stream(StreamDomain::Population, rep);
    let pop = generate_population(config.population_size, &mut pop_rng);
    let mut draw_rng = plan.stream(StreamDomain::SampleDraw, rep);
    let data = draw_samples(&pop, config, &mut draw_rng)?;
    let truth = pop.mu_g(&estimand)[0];
    let rep_plan = plan.child(rep);

    let mut estimates = Vec::new();
    let mut intervals = Vec::new();

    let mu_a = estimate_mu_a(&data, &estimand)?;
    estimates.push(("mu_A".to_string(), mu_a[0]));
    estimates.push(("mu_B_bar".to_string(), naive_mu_b_bar(&data, &estimand)[0]));

    let mut pooled_flag = false;
    let mut lambda = 0.0;
    let mut c_gamma = 0.0;
    let mut t_stat = 0.0;

    for (si, &strategy) in config.strategies.iter().enumerate() {
        let tag = strategy_tag(strategy);
        let opts = TapOptions {
            strategy,
            variance: config.variance,
            tuning: TuneSpec::default(),
            seed: rep_plan,
        };
        let tap = estimate_tap(&data, &estimand, &opts)?;
        if si == 0 {
            let fit = &tap.fit;
            estimates.push((format!("mu_bc{tag}"), estimate_mu_b(&data, &estimand, fit)?[0]));
            pooled_flag = tap.pooled;
            lambda = tap.tuning.lambda;
            c_gamma = tap.tuning.c_gamma;
            t_stat = tap.t_stat;
        }
        let lambda_eff = tap.varcomps.lambda_eff[(0, 0)].max(0.0);
        let mu_eff = estimate_pooled(&data, &estimand, &tap.fit, lambda_eff)?;
        estimates.push((format!("mu_eff{tag}"), mu_eff[0]));
        estimates.push((format!("mu_tap{tag}"), tap.point[0]));

        if config.run_cis && si == 0 {
            let n = data.n();
            let alpha = config.ci.alpha;
            intervals.push({
                let iv = wald_interval(mu_a[0], tap.varcomps.v_a[(0, 0)], n, alpha);
                ("mu_A".to_string(), CiMethod::Wald, iv.lower, iv.upper)
            });
            intervals.push({
                let mu_bc = estimate_mu_b(&data, &estimand, &tap.fit)?;
                let iv = wald_interval(mu_bc[0], tap.varcomps.v_b[(0, 0)], n, alpha);
                ("mu_bc".to_string(), CiMethod::Wald, iv.lower, iv.upper)
            });
            intervals.push({
                let iv = wald_interval(mu_eff[0], tap.varcomps.v_eff[(0, 0)], n, alpha);
                ("mu_eff".to_string(), CiMethod::Wald, iv.lower, iv.upper)
            });

            // One set of limit draws feeds all three adaptive methods.
            let draws = prepare_limit_draws(&data, &estimand, &tap, &opts, &config.ci, &rep_plan)?;

            let mut cfg_adaptive = config.ci.clone();
            cfg_adaptive.vn_mode = VnMode::DoubleBootstrap;
            let r = baci_with_draws(&data, &estimand, &tap, &opts, &cfg_adaptive, &rep_plan, &draws)?;
            intervals.push((
                "mu_tap".to_string(),
                CiMethod::Baci,
                r.interval.lower,
                r.interval.upper,
            ));

            let mut cfg_fixed = config.ci.clone();
            cfg_fixed.vn_mode = VnMode::FixedLogLog { kappa: 1.0 };
            let rf = baci_with_draws(&data, &estimand, &tap, &opts, &cfg_fixed, &rep_plan, &draws)?;
            intervals.push((
                "mu_tap".to_string(),
                CiMethod::BaciF,
                rf.interval.lower,
                rf.interval.upper,
            ));

            let rp = paci_with_draws(&data, &estimand, &tap, &cfg_fixed, &draws)?;
            intervals.push((
                "mu_tap".to_string(),
                CiMethod::Paci,
                rp.interval.lower,
                rp.interval.upper,
            ));
        }
    }

    Ok(ReplicateRecord {
        truth,
        estimates,
        intervals,
        pooled: pooled_flag,
        lambda,
        c_gamma,
        t_stat,
    })
}

/// Run the full study: R independent replicates of generate -> draw ->
/// estimate battery (-> CI battery), summarized against each replicate's
/// own finite-population truth.
pub fn run_study(config: &SimConfig) -> Result<StudySummary> {
    config.validate()?;
    let plan = SeedPlan::new(config.seed);
    let records: Vec<Option<ReplicateRecord>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|rep| run_replicate(config, &plan, rep).ok())
        .collect();

    let used: Vec<&ReplicateRecord> = records.iter().flatten().collect();
    let failures = config.replicates - used.len();
    if (failures as f64) > config.max_failure_fraction * config.replicates as f64 {
        return Err(Error::ReplicateFailures {
            dropped: failures,
            total: config.replicates,
            limit_pct: config.max_failure_fraction * 100.0,
        });
    }
    if used.is_empty() {
        return Err(Error::EmptyStudy("no replicate survived".into()));
    }

    // Per-estimator moments against per-replicate truth.
    let mut names: Vec<String> = Vec::new();
    for r in &used {
        for (name, _) in &r.estimates {
            if !names.iter().any(|n| n == name) {
                names.push(name.clone());
            }
        }
    }
    let mut estimators = Vec::new();
    for name in &names {
        let errs: Vec<f64> = used
            .iter()
            .filter_map(|r| {
                r.estimates
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| v - r.truth)
            })
            .collect();
        let k = errs.len() as f64;
        let bias = errs.iter().sum::<f64>() / k;
        let variance = errs.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / (k - 1.0);
        estimators.push(EstimatorSummary {
            name: name.clone(),
            bias,
            variance,
            mse: variance + bias * bias,
            replicates: errs.len(),
        });
    }

    let mut cis = Vec::new();
    let mut ci_keys: Vec<(String, CiMethod)> = Vec::new();
    for r in &used {
        for (name, method, _, _) in &r.intervals {
            if !ci_keys.iter().any(|(n, m)| n == name && m == method) {
                ci_keys.push((name.clone(), *method));
            }
        }
    }
    for (name, method) in &ci_keys {
        let mut covered = 0usize;
        let mut width = 0.0;
        let mut count = 0usize;
        for r in &used {
            if let Some((_, _, lo, hi)) = r
                .intervals
                .iter()
                .find(|(n, m, _, _)| n == name && m == method)
            {
                count += 1;
                width += hi - lo;
                if r.truth >= *lo && r.truth <= *hi {
                    covered += 1;
                }
            }
        }
        cis.push(CiSummary {
            name: name.clone(),
            method: *method,
            coverage: covered as f64 / count as f64,
            mean_width: width / count as f64,
            replicates: count,
        });
    }

    let k = used.len() as f64;
    Ok(StudySummary {
        violation: config.violation,
        replicates_requested: config.replicates,
        replicates_used: used.len(),
        failures,
        estimators,
        cis,
        pooling_rate: used.iter().filter(|r| r.pooled).count() as f64 / k,
        mean_lambda: used.iter().map(|r| r.lambda).sum::<f64>() / k,
        mean_c_gamma: used.iter().map(|r| r.c_gamma).sum::<f64>() / k,
        mean_t_stat: used.iter().map(|r| r.t_stat).sum::<f64>() / k,
    })
}

// ---------------------------------------------------------------------------
// Toy surface table

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToyRow {
    pub lambda: f64,
    pub c_gamma: f64,
    pub eta: f64,
    pub bias: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyGrid {
    pub v_a: f64,
    pub v_b: f64,
    pub gamma: f64,
    pub f_b: f64,
    pub etas: Vec<f64>,
    pub lambda_max: f64,
    pub c_max: f64,
    pub lambda_steps: usize,
    pub c_steps: usize,
}

impl Default for ToyGrid {
    fn default() -> Self {
        Self {
            v_a: 2.0,
            v_b: 1.0,
            gamma: 0.5,
            f_b: 0.5,
            etas: vec![0.0, 0.5, 1.5],
            lambda_max: 10.0,
            c_max: 50.0,
            lambda_steps: 50,
            c_steps: 50,
        }
    }
}

/// Tabulate the closed-form surface on the analytic toy variance components.
pub fn toy_surface(grid: &ToyGrid) -> Result<Vec<ToyRow>> {
    let mut rows = Vec::new();
    for &eta in &grid.etas {
        for i in 0..=grid.lambda_steps {
            let lambda = grid.lambda_max * i as f64 / grid.lambda_steps as f64;
            for j in 0..=grid.c_steps {
                let c = grid.c_max * j as f64 / grid.c_steps as f64;
                let (bias, mse) =
                    mse_surface_scalar(lambda, c, eta, grid.v_a, grid.v_b, grid.gamma, grid.f_b)?;
                rows.push(ToyRow {
                    lambda,
                    c_gamma: c,
                    eta,
                    bias,
                    mse,
                });
            }
        }
    }
    Ok(rows)
}

/// Fixed tuning used when a config pins (Lambda, c_gamma) by hand.
pub fn fixed_tuning(lambda: f64, c_gamma: f64) -> TuneSpec {
    TuneSpec::Fixed(TuningParams { lambda, c_gamma })
}
