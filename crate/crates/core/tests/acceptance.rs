//! Acceptance suite: one test per exit criterion, each printing a PASS line
//! (visible under `cargo test --test acceptance -- --nocapture`). Gates and
//! tolerances are pinned in code; runtime budgets are asserted as stated.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::time::Instant;
use tap_core::aci::{BaciConfig, CiMethod, VnMode};
use tap_core::estimand::Estimand;
use tap_core::estimators::{estimate_mu_a, pool_weights};
use tap_core::numkernel::{
    chisq_quantile, noncentral_chisq_cdf, sample_trunc_w2, trunc_moments, SeedPlan, StreamDomain,
    TruncRegion,
};
use tap_core::nuisance::{fit_nuisance, NuisanceStrategy};
use tap_core::simlab::{draw_samples, generate_population, run_study, SimConfig};
use tap_core::tap::{
    eta_hat, mse_surface_general, mse_surface_scalar, test_statistic, tune, TuneOptions,
    TuningParams,
};
use tap_core::varcomps::{variance_bootstrap, variance_plugin, BootstrapOptions, VarComps};

fn toy_varcomps() -> VarComps {
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    VarComps::derive(m(2.0), m(1.0), m(0.5), m(-1.0), m(-1.0), 0.5).unwrap()
}

fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

#[test]
fn criterion_1_special_function_oracles() {
    let t0 = Instant::now();
    let plan = SeedPlan::new(0xacce_0001);

    // Normal-CDF reduction at l = 1: F(x; 1, delta) = Phi(sqrt(x) - mu) -
    // Phi(-sqrt(x) - mu) with mu = sqrt(2 delta), to 1e-10.
    for &delta in &[0.0f64, 0.125, 1.125, 5.0] {
        let mu = (2.0 * delta).sqrt();
        for &x in &[0.5, 1.0, 3.84, 10.0, 25.0] {
            let direct = noncentral_chisq_cdf(x, 1, delta).unwrap();
            let reduction = normal_cdf(x.sqrt() - mu) - normal_cdf(-x.sqrt() - mu);
            assert!(
                (direct - reduction).abs() <= 1e-10,
                "normal reduction mismatch at x={x}, delta={delta}: {direct} vs {reduction}"
            );
        }
    }

    // Monte Carlo oracle over 1e7 draws of |N(mu, I_df)|^2, all df x delta.
    let n = 10_000_000usize;
    for df in 1..=5usize {
        for (di, &delta) in [0.0f64, 0.125, 1.125, 5.0].iter().enumerate() {
            let mut rng = plan.stream(StreamDomain::Oracle, (df * 10 + di) as u64);
            let mu = (2.0 * delta).sqrt();
            let x = df as f64 + 2.0 * delta + 1.0; // a point with mass on both sides
            let mut hits = 0usize;
            for _ in 0..n {
                let mut q = 0.0;
                let first: f64 = mu + rng.sample::<f64, _>(StandardNormal);
                q += first * first;
                for _ in 1..df {
                    let z: f64 = rng.sample(StandardNormal);
                    q += z * z;
                }
                if q <= x {
                    hits += 1;
                }
            }
            let p_mc = hits as f64 / n as f64;
            let se = (p_mc * (1.0 - p_mc) / n as f64).sqrt();
            let p = noncentral_chisq_cdf(x, df, delta).unwrap();
            assert!(
                (p - p_mc).abs() <= 3.0 * se,
                "df={df} delta={delta}: cdf {p} vs mc {p_mc} (se {se})"
            );
        }
    }

    // Truncated moments vs rejection sampling, 1e6 draws, 3 SE.
    let n = 1_000_000usize;
    for (mi, &mu) in [0.0, 0.5, 1.5].iter().enumerate() {
        for (ri, region) in [
            TruncRegion::new(0.0, 3.84).unwrap(),
            TruncRegion::new(3.84, f64::INFINITY).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let mu2 = DVector::from_element(1, mu);
            let tm = trunc_moments(&mu2, region).unwrap();
            let mut rng = plan.stream(StreamDomain::Oracle, 100 + (mi * 10 + ri) as u64);
            let mut kept = 0usize;
            let mut total = 0usize;
            let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
            while kept < n {
                total += 1;
                let w: f64 = mu + rng.sample::<f64, _>(StandardNormal);
                if region.contains(w * w) {
                    kept += 1;
                    s1 += w;
                    s2 += w * w;
                    s4 += w * w * w * w;
                }
            }
            let mean = s1 / n as f64;
            let m2 = s2 / n as f64;
            let se_mean = ((m2 - mean * mean) / n as f64).sqrt();
            let se_m2 = ((s4 / n as f64 - m2 * m2) / n as f64).sqrt();
            assert!(
                (mean - tm.mean[0]).abs() <= 3.0 * se_mean,
                "mu={mu} region {ri}: mean {mean} vs {} (se {se_mean})",
                tm.mean[0]
            );
            assert!(
                (m2 - tm.second_moment[(0, 0)]).abs() <= 3.0 * se_m2,
                "mu={mu} region {ri}: m2 {m2} vs {} (se {se_m2})",
                tm.second_moment[(0, 0)]
            );
            let acc = kept as f64 / total as f64;
            let se_acc = (acc * (1.0 - acc) / total as f64).sqrt();
            assert!(
                (acc - tm.mass).abs() <= 3.0 * se_acc,
                "mu={mu} region {ri}: mass {acc} vs {} (se {se_acc})",
                tm.mass
            );
        }
    }

    // The rejection sampler itself respects the moments (spot check).
    let mu2 = DVector::from_element(1, 1.5);
    let region = TruncRegion::new(3.84, f64::INFINITY).unwrap();
    let tm = trunc_moments(&mu2, &region).unwrap();
    let mut rng = plan.stream(StreamDomain::Oracle, 999);
    let k = 100_000;
    let mut s1 = 0.0;
    for _ in 0..k {
        s1 += sample_trunc_w2(&mu2, &region, &mut rng).unwrap()[0];
    }
    let mean = s1 / k as f64;
    let sd = (tm.second_moment[(0, 0)] - tm.mean[0] * tm.mean[0]).sqrt();
    assert!((mean - tm.mean[0]).abs() <= 4.0 * sd / (k as f64).sqrt());

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 1 runtime {elapsed:?}");
    eprintln!("ACCEPTANCE 1 (special-function oracles): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_2_mse_formula_equivalence() {
    let t0 = Instant::now();
    let vc = toy_varcomps();
    let mut worst = 0.0_f64;
    for ei in 0..3 {
        let eta = [0.0, 0.5, 1.5][ei];
        for i in 0..20 {
            let lambda = 10.0 * i as f64 / 19.0;
            for j in 0..20 {
                let c = 50.0 * j as f64 / 19.0;
                let g = mse_surface_general(
                    &TuningParams {
                        lambda,
                        c_gamma: c,
                    },
                    &DVector::from_element(1, eta),
                    &vc,
                )
                .unwrap();
                let (bias, mse) = mse_surface_scalar(lambda, c, eta, 2.0, 1.0, 0.5, 0.5).unwrap();
                worst = worst
                    .max((g.mse[(0, 0)] - mse).abs())
                    .max((g.bias[0] - bias).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "max route discrepancy {worst:e}");

    // Limits: full pooling at Lambda_eff reaches V_eff; never pooling pins V_A.
    let (_, mse_inf) = mse_surface_scalar(3.0, 5e3, 0.0, 2.0, 1.0, 0.5, 0.5).unwrap();
    assert!((mse_inf - 0.875).abs() <= 1e-9, "limit mse {mse_inf}");
    for &(lambda, eta) in &[(0.0, 0.0), (3.0, 0.5), (7.5, 1.5)] {
        let (b, m) = mse_surface_scalar(lambda, 0.0, eta, 2.0, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(b, 0.0);
        let g = mse_surface_general(
            &TuningParams {
                lambda,
                c_gamma: 0.0,
            },
            &DVector::from_element(1, eta),
            &vc,
        )
        .unwrap();
        assert_eq!(g.mse[(0, 0)], 2.0);
    }

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 2 runtime {elapsed:?}");
    eprintln!(
        "ACCEPTANCE 2 (MSE-formula equivalence, max |diff| = {worst:.2e}): PASS in {elapsed:.2?}"
    );
}

#[test]
fn criterion_3_tuning_vs_grid_oracle() {
    let t0 = Instant::now();
    let vc = toy_varcomps();
    for &eta in &[0.0, 0.5, 1.5] {
        let eta_v = DVector::from_element(1, eta);
        // 200 x 200 grid over Lambda in [0, 10], c in [0, 50].
        let mut grid_min = f64::INFINITY;
        for i in 0..200 {
            let lambda = 10.0 * i as f64 / 199.0;
            for j in 0..200 {
                let c = 50.0 * j as f64 / 199.0;
                let (_, mse) = mse_surface_scalar(lambda, c, eta, 2.0, 1.0, 0.5, 0.5).unwrap();
                grid_min = grid_min.min(mse);
            }
        }
        let out = tune(&eta_v, &vc, &TuneOptions::default()).unwrap();
        assert!(
            out.mse <= grid_min + 1e-9,
            "eta={eta}: tuned mse {} exceeds grid minimum {grid_min}",
            out.mse
        );
        if eta == 0.0 {
            assert!(
                (out.params.lambda - 3.0).abs() / 3.0 <= 0.10,
                "eta=0: lambda* = {}",
                out.params.lambda
            );
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 3 runtime {elapsed:?}");
    eprintln!("ACCEPTANCE 3 (tuning vs 200x200 grid): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_4_null_distribution_of_t() {
    let t0 = Instant::now();
    let reps = 2000;
    let cfg = SimConfig::default();
    let plan = SeedPlan::new(0xacce_0004);
    let estimand = Estimand::Mean;

    let mut ts = Vec::with_capacity(reps);
    for r in 0..reps {
        let pop = generate_population(
            cfg.population_size,
            &mut plan.stream(StreamDomain::Population, r as u64),
        );
        let data = draw_samples(&pop, &cfg, &mut plan.stream(StreamDomain::SampleDraw, r as u64))
            .unwrap();
        let fit = fit_nuisance(&data, &estimand, NuisanceStrategy::PseudoMlOlsAb).unwrap();
        let mu_a = estimate_mu_a(&data, &estimand).unwrap();
        let vc = variance_plugin(&data, &estimand, &fit).unwrap();
        let eta = eta_hat(&data, &estimand, &fit, &mu_a).unwrap();
        ts.push(test_statistic(&eta, &vc.sigma_t).unwrap());
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Kolmogorov-Smirnov distance against chi-square with 1 df.
    let mut d = 0.0_f64;
    for (i, &t) in ts.iter().enumerate() {
        let f = tap_core::numkernel::chisq_cdf(t, 1).unwrap();
        let lo = i as f64 / reps as f64;
        let hi = (i + 1) as f64 / reps as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    // 99th percentile of the Kolmogorov distribution: 1.628 / sqrt(n).
    let crit = 1.628 / (reps as f64).sqrt();
    assert!(
        d <= crit,
        "KS distance {d:.4} exceeds the 1% critical value {crit:.4}"
    );

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 600, "criterion 4 runtime {elapsed:?}");
    eprintln!(
        "ACCEPTANCE 4 (null law of T, KS = {d:.4} < {crit:.4}): PASS in {elapsed:.2?}"
    );
}

fn summary_of(s: &tap_core::simlab::StudySummary, name: &str) -> (f64, f64, f64) {
    let e = s
        .estimators
        .iter()
        .find(|e| e.name == name)
        .unwrap_or_else(|| panic!("estimator {name} missing"));
    (e.bias, e.variance, e.mse)
}

#[test]
fn criterion_5_table1_desk_replication() {
    let t0 = Instant::now();
    let mut pooling = Vec::new();
    let mut ratios = Vec::new();
    for &b in &[0.0, 10.0, 100.0] {
        let cfg = SimConfig {
            violation: b,
            replicates: 500,
            seed: 0xacce_0005,
            ..SimConfig::default()
        };
        let s = run_study(&cfg).unwrap();
        let (bias_a, var_a, mse_a) = summary_of(&s, "mu_A");
        let (bias_bc, _, _) = summary_of(&s, "mu_bc");
        let (_, _, mse_tap) = summary_of(&s, "mu_tap");
        let se_a = (var_a / s.replicates_used as f64).sqrt();
        // (i) design consistency of mu_A in every scenario.
        assert!(
            bias_a.abs() <= 3.0 * se_a,
            "b={b}: bias(mu_A) = {bias_a} vs 3 SE = {}",
            3.0 * se_a
        );
        pooling.push(s.pooling_rate);
        ratios.push(mse_tap / mse_a);
        eprintln!(
            "  b={b}: pooling {:.3}, mse(tap)/mse(A) = {:.3}, bias(bc) = {:.4}",
            s.pooling_rate,
            mse_tap / mse_a,
            bias_bc
        );
        if b == 0.0 {
            // (ii) efficiency gain under comparability.
            let r = mse_tap / mse_a;
            assert!((0.55..=0.95).contains(&r), "b=0 MSE ratio {r}");
        }
        if b == 100.0 {
            // (iii) selection bias of the uncorrected pooled estimator and
            // the protective fallback of the pretest.
            assert!(bias_bc > 0.5, "b=100 bias(mu_bc) = {bias_bc}");
            let r = mse_tap / mse_a;
            assert!((0.9..=1.1).contains(&r), "b=100 MSE ratio {r}");
        }
    }
    // (iv) pooling proportion decreasing in b, and ~0 under strong violation.
    assert!(
        pooling[0] > pooling[1] && pooling[1] > pooling[2],
        "pooling not decreasing: {pooling:?}"
    );
    assert!(pooling[2] < 0.05, "b=100 pooling {}", pooling[2]);

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 900, "criterion 5 runtime {elapsed:?}");
    eprintln!(
        "ACCEPTANCE 5 (Table-1 desk replication, pooling {:?}): PASS in {elapsed:.2?}",
        pooling
    );
}

#[test]
fn criterion_6_table2_desk_replication() {
    let t0 = Instant::now();
    let ci = BaciConfig {
        bootstrap: 500,
        second_order: 50,
        first_order: 20,
        vn_mode: VnMode::DoubleBootstrap,
        ..BaciConfig::default()
    };
    for &b in &[0.0, 100.0] {
        let cfg = SimConfig {
            violation: b,
            replicates: 300,
            run_cis: true,
            ci: ci.clone(),
            seed: 0xacce_0006,
            ..SimConfig::default()
        };
        let s = run_study(&cfg).unwrap();
        let find = |name: &str, method: CiMethod| {
            s.cis
                .iter()
                .find(|c| c.name == name && c.method == method)
                .unwrap_or_else(|| panic!("missing CI {name}/{method:?}"))
        };
        let baci = find("mu_tap", CiMethod::Baci);
        let paci = find("mu_tap", CiMethod::Paci);
        let wald_a = find("mu_A", CiMethod::Wald);
        eprintln!(
            "  b={b}: BACI cover {:.3} width {:.4}; PACI cover {:.3}; Wald(mu_A) width {:.4}",
            baci.coverage, baci.mean_width, paci.coverage, wald_a.mean_width
        );
        assert!(
            (0.90..=0.98).contains(&baci.coverage),
            "b={b}: BACI coverage {}",
            baci.coverage
        );
        assert!(
            paci.coverage >= baci.coverage,
            "b={b}: PACI {} < BACI {}",
            paci.coverage,
            baci.coverage
        );
        if b == 100.0 {
            let rel = (baci.mean_width - wald_a.mean_width).abs() / wald_a.mean_width;
            assert!(rel <= 0.05, "b=100 BACI width off Wald by {rel:.3}");
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 3600, "criterion 6 runtime {elapsed:?}");
    eprintln!("ACCEPTANCE 6 (Table-2 desk replication): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_7_algebraic_invariants() {
    let t0 = Instant::now();

    // omega_A + omega_B = I over random Lambda and jacobians.
    let mut rng = SeedPlan::new(0xacce_0007).stream(StreamDomain::Oracle, 0);
    for _ in 0..100 {
        let lambda = DMatrix::from_element(1, 1, rng.gen_range(0.0..20.0));
        let ja = DMatrix::from_element(1, 1, -rng.gen_range(0.2..3.0));
        let jb = DMatrix::from_element(1, 1, -rng.gen_range(0.2..3.0));
        let (wa, wb) = pool_weights(&lambda, &ja, &jb).unwrap();
        assert!((wa[(0, 0)] + wb[(0, 0)] - 1.0).abs() <= 1e-10);
    }

    // pooled(Lambda = 0) == mu_A bitwise on a study draw.
    let cfg = SimConfig::default();
    let plan = SeedPlan::new(0xacce_0017);
    let pop = generate_population(cfg.population_size, &mut plan.stream(StreamDomain::Population, 0));
    let data = draw_samples(&pop, &cfg, &mut plan.stream(StreamDomain::SampleDraw, 0)).unwrap();
    let fit = fit_nuisance(&data, &Estimand::Mean, NuisanceStrategy::PseudoMlOlsAb).unwrap();
    let mu_a = estimate_mu_a(&data, &Estimand::Mean).unwrap();
    let pooled0 =
        tap_core::estimators::estimate_pooled(&data, &Estimand::Mean, &fit, 0.0).unwrap();
    assert_eq!(mu_a[0].to_bits(), pooled0[0].to_bits());

    // Scalar V_eff two-form identity and Sigma_T reduction on the toy.
    let vc = toy_varcomps();
    let (v_a, v_b, g): (f64, f64, f64) = (2.0, 1.0, 0.5);
    let f1 = (v_a * v_b - g * g) / (v_a + v_b - 2.0 * g);
    let f2 = v_a - (v_a - g) * (v_a - g) / (v_a + v_b - 2.0 * g);
    assert!((f1 - f2).abs() <= 1e-12);
    assert!((vc.v_eff[(0, 0)] - f1).abs() <= 1e-12);
    assert!((vc.sigma_t[(0, 0)] - 0.5 * (v_a + v_b - 2.0 * g)).abs() <= 1e-12);

    // Cauchy-Schwarz guard on a real bootstrap output.
    let boot = variance_bootstrap(
        &data,
        &Estimand::Mean,
        NuisanceStrategy::PseudoMlOlsAb,
        &BootstrapOptions {
            replicates: 200,
            refit_nuisance: true,
            max_drop_fraction: 0.02,
        },
        &plan,
    )
    .unwrap();
    let spread = boot.v_a[(0, 0)] + boot.v_b[(0, 0)] - 2.0 * boot.gamma[(0, 0)];
    assert!(spread >= -1e-10, "Cauchy-Schwarz spread {spread}");

    // Summary identity mse = var + bias^2 on a small study.
    let s = run_study(&SimConfig {
        replicates: 20,
        seed: 0xacce_0027,
        ..SimConfig::default()
    })
    .unwrap();
    for e in &s.estimators {
        assert!(
            (e.mse - (e.variance + e.bias * e.bias)).abs() <= 1e-12,
            "summary identity broken for {}",
            e.name
        );
    }

    // Quantile check used by the fixed-threshold discussion.
    assert!((chisq_quantile(0.95, 1).unwrap() - 3.84).abs() < 0.01);

    let elapsed = t0.elapsed();
    eprintln!("ACCEPTANCE 7 (algebraic invariants): PASS in {elapsed:.2?}");
}

#[test]
fn criterion_8_determinism_across_thread_counts() {
    let t0 = Instant::now();
    let cfg = SimConfig {
        population_size: 4000,
        target_n_a: 120,
        target_n_b: 800,
        replicates: 12,
        seed: 0xacce_0008,
        variance: tap_core::varcomps::VarianceEngine::Bootstrap(BootstrapOptions {
            replicates: 60,
            refit_nuisance: true,
            max_drop_fraction: 0.05,
        }),
        ..SimConfig::default()
    };
    let run_with = |threads: usize| -> String {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let summary = pool.install(|| run_study(&cfg).unwrap());
        serde_json::to_string(&summary).unwrap()
    };
    let one = run_with(1);
    let two = run_with(2);
    let four = run_with(4);
    assert_eq!(one, two, "1-thread vs 2-thread outputs differ");
    assert_eq!(one, four, "1-thread vs 4-thread outputs differ");
    let repeat = run_with(2);
    assert_eq!(two, repeat, "same-seed rerun differs");

    let elapsed = t0.elapsed();
    eprintln!("ACCEPTANCE 8 (determinism across thread counts): PASS in {elapsed:.2?}");
}
