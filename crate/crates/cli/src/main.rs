//! `tap` — combine a probability sample with a non-probability sample via
//! test-and-pool estimation, run the Monte Carlo study, or dump the analytic
//! tuning surface.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use tap_core::aci::{baci, paci, wald_interval, BaciConfig, CiMethod, VnMode};
use tap_core::config::{parse_bool, parse_f64, parse_u64, parse_usize, ConfigMap};
use tap_core::data::{load_samples, CsvSchema};
use tap_core::estimand::Estimand;
use tap_core::numkernel::SeedPlan;
use tap_core::nuisance::NuisanceStrategy;
use tap_core::report::{study_csv, study_text, toy_csv, EstimateReport, InputEcho};
use tap_core::simlab::{run_study, toy_surface, SimConfig, ToyGrid};
use tap_core::tap::{estimate_tap, TapOptions, TuneOptions, TuneSpec, TuningParams};
use tap_core::varcomps::{BootstrapOptions, VarianceEngine};

#[derive(Parser)]
#[command(name = "tap", version, about = "Test-and-pool estimation for combined samples")]
struct Cli {
    /// Worker threads for replicate-level parallelism (wall time only;
    /// outputs are identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Configuration file (flat key = value sections; flags override it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on two CSV files and write a report.
    Estimate(EstimateArgs),
    /// Monte Carlo study over replicated synthetic populations.
    Simulate(SimulateArgs),
    /// Tabulate the analytic MSE surface of the toy setup as CSV.
    ToySurface(ToyArgs),
    /// Re-run confidence intervals on a saved estimate report.
    Ci(CiArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Probability-sample CSV (needs the weight column).
    #[arg(long)]
    prob: Option<PathBuf>,
    /// Non-probability-sample CSV.
    #[arg(long)]
    nonprob: Option<PathBuf>,
    /// Comma-separated covariate column names.
    #[arg(long)]
    covariates: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    /// mean | proportion-below | regression
    #[arg(long)]
    estimand: Option<String>,
    /// Cutoff for proportion-below.
    #[arg(long)]
    cutoff: Option<f64>,
    /// pseudo-ml-ols-b | pseudo-ml-ols-ab | kh
    #[arg(long)]
    strategy: Option<String>,
    /// plugin | bootstrap
    #[arg(long)]
    variance: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Force a fixed pooling weight Lambda (skips tuning when both fixed).
    #[arg(long)]
    lambda: Option<f64>,
    /// Force a fixed pretest threshold c_gamma.
    #[arg(long)]
    c_gamma: Option<f64>,
    /// Comma-separated interval methods: wald,baci,baci-f,paci
    #[arg(long)]
    ci_methods: Option<String>,
    /// Machine-readable report path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Violation strength b.
    #[arg(long)]
    scenario: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// desk | paper
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also run the confidence-interval battery.
    #[arg(long)]
    cis: bool,
    /// Output directory for summary.csv and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    f_b: Option<f64>,
    /// Comma-separated eta values.
    #[arg(long)]
    etas: Option<String>,
    #[arg(long)]
    lambda_steps: Option<usize>,
    #[arg(long)]
    c_steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CiArgs {
    /// Saved estimate report (from `tap estimate --out`).
    #[arg(long)]
    estimate: PathBuf,
    /// Comma-separated interval methods: wald,baci,baci-f,paci
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            std::process::exit(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let result = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(result);
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file_cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::default(),
    };
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args, &file_cfg),
        Command::Simulate(args) => cmd_simulate(args, &file_cfg),
        Command::ToySurface(args) => cmd_toy_surface(args, &file_cfg),
        Command::Ci(args) => cmd_ci(args, &file_cfg),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

const DATA_KEYS: &[&str] = &["prob", "nonprob", "covariates", "outcome", "weight", "delimiter"];
const ESTIMATE_KEYS: &[&str] = &[
    "estimand", "cutoff", "strategy", "variance", "bootstrap-k", "refit-nuisance", "seed",
    "lambda", "c-gamma", "lambda-max", "c-max",
];
const CI_KEYS: &[&str] = &[
    "methods", "alpha", "epsilon", "b", "b2", "first-order", "kappa-grid", "vn-kappa",
    "budget-cap", "mu2-halfwidth", "mu2-step", "refit-nuisance",
];
const SIMULATE_KEYS: &[&str] = &[
    "scenario", "replicates", "scale", "seed", "cis", "population", "target-na", "target-nb",
    "strategies", "variance", "bootstrap-k",
];
const TOY_KEYS: &[&str] = &[
    "v-a", "v-b", "gamma", "f-b", "etas", "lambda-max", "c-max", "lambda-steps", "c-steps",
];

fn parse_estimand(kind: &str, cutoff: Option<f64>) -> anyhow::Result<Estimand> {
    match kind {
        "mean" => Ok(Estimand::Mean),
        "proportion-below" => {
            let c = cutoff.ok_or_else(|| anyhow!("proportion-below needs --cutoff"))?;
            Ok(Estimand::ProportionBelow(c))
        }
        "regression" => Ok(Estimand::RegressionCoef),
        other => bail!("unknown estimand '{other}' (mean, proportion-below, regression)"),
    }
}

fn parse_methods(s: &str) -> anyhow::Result<Vec<CiMethod>> {
    split_list(s)
        .iter()
        .map(|m| match m.as_str() {
            "wald" => Ok(CiMethod::Wald),
            "baci" => Ok(CiMethod::Baci),
            "baci-f" => Ok(CiMethod::BaciF),
            "paci" => Ok(CiMethod::Paci),
            other => Err(anyhow!("unknown interval method '{other}'")),
        })
        .collect()
}

fn ci_config_from(file_cfg: &ConfigMap) -> anyhow::Result<BaciConfig> {
    let sec = file_cfg.checked_section("ci", CI_KEYS)?;
    let mut cfg = BaciConfig::default();
    if let Some(v) = parse_f64(&sec, "alpha")? {
        cfg.alpha = v;
    }
    if let Some(v) = parse_f64(&sec, "epsilon")? {
        cfg.epsilon = v;
    }
    if let Some(v) = parse_usize(&sec, "b")? {
        cfg.bootstrap = v;
    }
    if let Some(v) = parse_usize(&sec, "b2")? {
        cfg.second_order = v;
    }
    if let Some(v) = parse_usize(&sec, "first-order")? {
        cfg.first_order = v;
    }
    if let Some(v) = parse_usize(&sec, "budget-cap")? {
        cfg.budget_cap = v;
    }
    if let Some(v) = parse_f64(&sec, "mu2-halfwidth")? {
        cfg.mu2_halfwidth = v;
    }
    if let Some(v) = parse_f64(&sec, "mu2-step")? {
        cfg.mu2_step = v;
    }
    if let Some(v) = parse_bool(&sec, "refit-nuisance")? {
        cfg.refit_nuisance = v;
    }
    if let Some(grid) = sec.get("kappa-grid") {
        cfg.kappa_grid = split_list(grid)
            .iter()
            .map(|k| k.parse::<f64>().map_err(|_| anyhow!("bad kappa '{k}'")))
            .collect::<anyhow::Result<Vec<f64>>>()?;
    }
    Ok(cfg)
}

struct EstimateSetup {
    prob: PathBuf,
    nonprob: PathBuf,
    schema: CsvSchema,
    estimand: Estimand,
    strategy: NuisanceStrategy,
    variance: VarianceEngine,
    seed: u64,
    tuning: TuneSpec,
    methods: Vec<CiMethod>,
}

fn estimate_setup(args: &EstimateArgs, file_cfg: &ConfigMap) -> anyhow::Result<EstimateSetup> {
    let data_sec = file_cfg.checked_section("data", DATA_KEYS)?;
    let est_sec = file_cfg.checked_section("estimate", ESTIMATE_KEYS)?;
    let ci_sec = file_cfg.checked_section("ci", CI_KEYS)?;

    let prob = args
        .prob
        .clone()
        .or_else(|| data_sec.get("prob").map(PathBuf::from))
        .ok_or_else(|| anyhow!("missing probability-sample path (--prob or [data] prob)"))?;
    let nonprob = args
        .nonprob
        .clone()
        .or_else(|| data_sec.get("nonprob").map(PathBuf::from))
        .ok_or_else(|| anyhow!("missing non-probability-sample path (--nonprob or [data] nonprob)"))?;
    let covariates = args
        .covariates
        .clone()
        .or_else(|| data_sec.get("covariates").cloned())
        .ok_or_else(|| anyhow!("missing covariate list (--covariates or [data] covariates)"))?;
    let outcome = args
        .outcome
        .clone()
        .or_else(|| data_sec.get("outcome").cloned())
        .ok_or_else(|| anyhow!("missing outcome column (--outcome or [data] outcome)"))?;
    let weight = args
        .weight
        .clone()
        .or_else(|| data_sec.get("weight").cloned())
        .ok_or_else(|| anyhow!("missing weight column (--weight or [data] weight)"))?;
    let mut schema = CsvSchema::new(split_list(&covariates), &outcome, Some(&weight));
    if let Some(d) = data_sec.get("delimiter") {
        let mut chars = d.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            bail!("delimiter must be a single character");
        };
        schema.delimiter = c;
    }

    let kind = args
        .estimand
        .clone()
        .or_else(|| est_sec.get("estimand").cloned())
        .unwrap_or_else(|| "mean".to_string());
    let cutoff = match args.cutoff {
        Some(c) => Some(c),
        None => parse_f64(&est_sec, "cutoff")?,
    };
    let estimand = parse_estimand(&kind, cutoff)?;

    let strategy: NuisanceStrategy = args
        .strategy
        .clone()
        .or_else(|| est_sec.get("strategy").cloned())
        .unwrap_or_else(|| "pseudo-ml-ols-ab".to_string())
        .parse()?;

    // The influence-function plug-in covers the mean family; the regression
    // estimand defaults to the bootstrap engine.
    let default_engine = if matches!(estimand, Estimand::RegressionCoef) {
        "bootstrap"
    } else {
        "plugin"
    };
    let variance = match args
        .variance
        .clone()
        .or_else(|| est_sec.get("variance").cloned())
        .unwrap_or_else(|| default_engine.to_string())
        .as_str()
    {
        "plugin" => VarianceEngine::Plugin,
        "bootstrap" => {
            let mut opts = BootstrapOptions::default();
            if let Some(k) = parse_usize(&est_sec, "bootstrap-k")? {
                opts.replicates = k;
            }
            if let Some(r) = parse_bool(&est_sec, "refit-nuisance")? {
                opts.refit_nuisance = r;
            }
            VarianceEngine::Bootstrap(opts)
        }
        other => bail!("unknown variance engine '{other}' (plugin, bootstrap)"),
    };

    let seed = match args.seed {
        Some(s) => s,
        None => parse_u64(&est_sec, "seed")?.unwrap_or(0),
    };

    let lambda = match args.lambda {
        Some(v) => Some(v),
        None => parse_f64(&est_sec, "lambda")?,
    };
    let c_gamma = match args.c_gamma {
        Some(v) => Some(v),
        None => parse_f64(&est_sec, "c-gamma")?,
    };
    let tuning = match (lambda, c_gamma) {
        (Some(l), Some(c)) => TuneSpec::Fixed(TuningParams {
            lambda: l,
            c_gamma: c,
        }),
        (Some(l), None) => TuneSpec::Fixed(TuningParams {
            lambda: l,
            c_gamma: 0.0,
        }),
        (None, _) => {
            let mut topts = TuneOptions::default();
            if let Some(v) = parse_f64(&est_sec, "lambda-max")? {
                topts.lambda_max = v;
            }
            if let Some(v) = parse_f64(&est_sec, "c-max")? {
                topts.c_max = v;
            }
            TuneSpec::Adaptive(topts)
        }
    };

    let methods = match args
        .ci_methods
        .clone()
        .or_else(|| ci_sec.get("methods").cloned())
    {
        Some(m) => parse_methods(&m)?,
        None => Vec::new(),
    };

    Ok(EstimateSetup {
        prob,
        nonprob,
        schema,
        estimand,
        strategy,
        variance,
        seed,
        tuning,
        methods,
    })
}

fn strategy_name(s: NuisanceStrategy) -> &'static str {
    match s {
        NuisanceStrategy::PseudoMlOlsB => "pseudo-ml-ols-b",
        NuisanceStrategy::PseudoMlOlsAb => "pseudo-ml-ols-ab",
        NuisanceStrategy::Kh => "kh",
    }
}

fn run_estimate_pipeline(setup: &EstimateSetup, ci_cfg: &BaciConfig) -> anyhow::Result<EstimateReport> {
    let data = load_samples(&setup.prob, &setup.nonprob, &setup.schema)?;
    let opts = TapOptions {
        strategy: setup.strategy,
        variance: setup.variance,
        tuning: setup.tuning.clone(),
        seed: SeedPlan::new(setup.seed),
    };
    let tap = estimate_tap(&data, &setup.estimand, &opts)?;

    let (kind, cutoff) = match setup.estimand {
        Estimand::Mean => ("mean", None),
        Estimand::ProportionBelow(c) => ("proportion-below", Some(c)),
        Estimand::RegressionCoef => ("regression", None),
    };
    let mut report = EstimateReport::from_tap(
        &tap,
        setup.seed,
        InputEcho {
            prob_path: setup.prob.display().to_string(),
            nonprob_path: setup.nonprob.display().to_string(),
            covariates: setup.schema.covariates.clone(),
            outcome: setup.schema.outcome.clone(),
            weight: setup.schema.weight.clone().unwrap_or_default(),
            estimand: kind.to_string(),
            cutoff,
            strategy: strategy_name(setup.strategy).to_string(),
            variance: match setup.variance {
                VarianceEngine::Plugin => "plugin".to_string(),
                VarianceEngine::Bootstrap(o) => format!("bootstrap:{}", o.replicates),
            },
        },
    );

    let seed_plan = SeedPlan::new(setup.seed);
    for method in &setup.methods {
        match method {
            CiMethod::Wald => {
                let iv = wald_interval(
                    tap.mu_a[0],
                    tap.varcomps.v_a[(0, 0)],
                    data.n(),
                    ci_cfg.alpha,
                );
                report.intervals.push(tap_core::report::IntervalReport {
                    target: "mu_A".into(),
                    method: "wald".into(),
                    lower: iv.lower,
                    upper: iv.upper,
                    level: iv.level,
                    vn: None,
                    kappa: None,
                    kappa_fallback: None,
                    pooled: None,
                    replicates_dropped: None,
                });
            }
            CiMethod::Baci => {
                let mut cfg = ci_cfg.clone();
                cfg.vn_mode = VnMode::DoubleBootstrap;
                let r = baci(&data, &setup.estimand, &tap, &opts, &cfg, &seed_plan)?;
                report.push_interval("mu_tap", &r);
            }
            CiMethod::BaciF => {
                let mut cfg = ci_cfg.clone();
                cfg.vn_mode = VnMode::FixedLogLog { kappa: 1.0 };
                let r = baci(&data, &setup.estimand, &tap, &opts, &cfg, &seed_plan)?;
                report.push_interval("mu_tap", &r);
            }
            CiMethod::Paci => {
                let mut cfg = ci_cfg.clone();
                cfg.vn_mode = VnMode::FixedLogLog { kappa: 1.0 };
                let r = paci(&data, &setup.estimand, &tap, &opts, &cfg, &seed_plan)?;
                report.push_interval("mu_tap", &r);
            }
        }
    }
    Ok(report)
}

fn emit_report(report: &EstimateReport, out: Option<&Path>) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => {
            std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
        }
        None => println!("{json}"),
    }
    eprintln!(
        "point = {:?}  T = {:.4}  pooled = {}  (lambda* = {:.4}, c_gamma* = {:.4})",
        report.point, report.t_statistic, report.pooled, report.tuning.lambda, report.tuning.c_gamma
    );
    for iv in &report.intervals {
        eprintln!(
            "{:<8} {:<7} [{:.6}, {:.6}]  level {:.2}",
            iv.target, iv.method, iv.lower, iv.upper, iv.level
        );
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs, file_cfg: &ConfigMap) -> anyhow::Result<()> {
    let setup = estimate_setup(&args, file_cfg)?;
    let ci_cfg = ci_config_from(file_cfg)?;
    let report = run_estimate_pipeline(&setup, &ci_cfg)?;
    emit_report(&report, args.out.as_deref())
}

fn cmd_simulate(args: SimulateArgs, file_cfg: &ConfigMap) -> anyhow::Result<()> {
    let sec = file_cfg.checked_section("simulate", SIMULATE_KEYS)?;
    let mut cfg = SimConfig::default();
    cfg.ci = ci_config_from(file_cfg)?;

    if let Some(v) = parse_f64(&sec, "scenario")? {
        cfg.violation = v;
    }
    if let Some(v) = args.scenario {
        cfg.violation = v;
    }
    if let Some(v) = parse_usize(&sec, "replicates")? {
        cfg.replicates = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if cfg.replicates == 0 {
        eprintln!("error: --replicates must be positive");
        std::process::exit(2);
    }
    if let Some(v) = parse_usize(&sec, "population")? {
        cfg.population_size = v;
    }
    if let Some(v) = parse_usize(&sec, "target-na")? {
        cfg.target_n_a = v;
    }
    if let Some(v) = parse_usize(&sec, "target-nb")? {
        cfg.target_n_b = v;
    }
    if let Some(v) = parse_u64(&sec, "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(names) = sec.get("strategies") {
        cfg.strategies = split_list(names)
            .iter()
            .map(|s| s.parse::<NuisanceStrategy>().map_err(anyhow::Error::from))
            .collect::<anyhow::Result<Vec<_>>>()?;
    }
    if let Some(v) = parse_bool(&sec, "cis")? {
        cfg.run_cis = v;
    }
    if args.cis {
        cfg.run_cis = true;
    }
    let scale = args
        .scale
        .clone()
        .or_else(|| sec.get("scale").cloned())
        .unwrap_or_else(|| "desk".to_string());
    match scale.as_str() {
        "desk" => {}
        "paper" => cfg = cfg.paper_scale(),
        other => bail!("unknown scale '{other}' (desk, paper)"),
    }

    let summary = run_study(&cfg)?;
    let csv = study_csv(&summary);
    let text = study_text(&summary);
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.csv"), &csv)?;
        std::fs::write(dir.join("summary.txt"), &text)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    } else {
        print!("{csv}");
    }
    eprint!("{text}");
    Ok(())
}

fn cmd_toy_surface(args: ToyArgs, file_cfg: &ConfigMap) -> anyhow::Result<()> {
    let sec = file_cfg.checked_section("toy-surface", TOY_KEYS)?;
    let mut grid = ToyGrid::default();
    if let Some(v) = parse_f64(&sec, "v-a")? {
        grid.v_a = v;
    }
    if let Some(v) = parse_f64(&sec, "v-b")? {
        grid.v_b = v;
    }
    if let Some(v) = parse_f64(&sec, "gamma")? {
        grid.gamma = v;
    }
    if let Some(v) = parse_f64(&sec, "f-b")? {
        grid.f_b = v;
    }
    if let Some(v) = args.f_b {
        grid.f_b = v;
    }
    if let Some(v) = parse_f64(&sec, "lambda-max")? {
        grid.lambda_max = v;
    }
    if let Some(v) = parse_f64(&sec, "c-max")? {
        grid.c_max = v;
    }
    if let Some(v) = parse_usize(&sec, "lambda-steps")? {
        grid.lambda_steps = v;
    }
    if let Some(v) = args.lambda_steps {
        grid.lambda_steps = v;
    }
    if let Some(v) = parse_usize(&sec, "c-steps")? {
        grid.c_steps = v;
    }
    if let Some(v) = args.c_steps {
        grid.c_steps = v;
    }
    let etas = args.etas.clone().or_else(|| sec.get("etas").cloned());
    if let Some(e) = etas {
        grid.etas = split_list(&e)
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| anyhow!("bad eta '{v}'")))
            .collect::<anyhow::Result<Vec<f64>>>()?;
    }
    let rows = toy_surface(&grid)?;
    let csv = toy_csv(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_ci(args: CiArgs, file_cfg: &ConfigMap) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.estimate)
        .with_context(|| format!("reading {}", args.estimate.display()))?;
    let saved: EstimateReport = serde_json::from_str(&text).context("parsing saved estimate")?;

    let estimand = parse_estimand(&saved.inputs.estimand, saved.inputs.cutoff)?;
    let setup = EstimateSetup {
        prob: PathBuf::from(&saved.inputs.prob_path),
        nonprob: PathBuf::from(&saved.inputs.nonprob_path),
        schema: CsvSchema::new(
            saved.inputs.covariates.clone(),
            &saved.inputs.outcome,
            Some(&saved.inputs.weight),
        ),
        estimand,
        strategy: saved.inputs.strategy.parse()?,
        variance: match saved.inputs.variance.split(':').collect::<Vec<_>>().as_slice() {
            ["plugin"] | [""] => VarianceEngine::Plugin,
            ["bootstrap", k] => VarianceEngine::Bootstrap(BootstrapOptions {
                replicates: k.parse().unwrap_or(500),
                ..BootstrapOptions::default()
            }),
            other => bail!("unrecognized variance echo '{:?}' in saved estimate", other),
        },
        seed: args.seed.unwrap_or(saved.seed),
        // Hold the saved tuning fixed: this command re-runs intervals only.
        tuning: TuneSpec::Fixed(saved.tuning),
        methods: parse_methods(&args.methods.clone().unwrap_or_else(|| "baci-f".into()))?,
    };
    let ci_cfg = ci_config_from(file_cfg)?;
    let report = run_estimate_pipeline(&setup, &ci_cfg)?;
    emit_report(&report, args.out.as_deref())
}
