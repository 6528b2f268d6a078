//! Machine-readable report types emitted by the CLI (stable JSON schema)
//! and the text-table rendering with the x1e-3 display convention.

use crate::aci::CiReport;
use crate::simlab::StudySummary;
use crate::tap::{TapEstimate, TuningParams};
use crate::varcomps::VarCompsReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub t_statistic: f64,
    pub pooled: bool,
    pub tuning: TuningParams,
    pub optimizer_converged: bool,
    pub varcomps: VarCompsReport,
    pub intervals: Vec<IntervalReport>,
    pub seed: u64,
    pub inputs: InputEcho,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalReport {
    pub target: String,
    pub method: String,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub vn: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_fallback: Option<bool>,
    pub pooled: Option<bool>,
    pub replicates_dropped: Option<usize>,
}

/// Echo of the inputs so a saved estimate can be re-run (the `ci` command).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputEcho {
    pub prob_path: String,
    pub nonprob_path: String,
    pub covariates: Vec<String>,
    pub outcome: String,
    pub weight: String,
    pub estimand: String,
    pub cutoff: Option<f64>,
    pub strategy: String,
    pub variance: String,
}

impl EstimateReport {
    pub fn from_tap(tap: &TapEstimate, seed: u64, inputs: InputEcho) -> Self {
        Self {
            point: tap.point.iter().copied().collect(),
            mu_a: tap.mu_a.iter().copied().collect(),
            mu_b: tap.mu_b.iter().copied().collect(),
            eta_hat: tap.eta.iter().copied().collect(),
            t_statistic: tap.t_stat,
            pooled: tap.pooled,
            tuning: tap.tuning,
            optimizer_converged: tap.optimizer_converged,
            varcomps: tap.varcomps.report(),
            intervals: Vec::new(),
            seed,
            inputs,
        }
    }

    pub fn push_interval(&mut self, target: &str, ci: &CiReport) {
        self.intervals.push(IntervalReport {
            target: target.to_string(),
            method: match ci.interval.method {
                crate::aci::CiMethod::Wald => "wald",
                crate::aci::CiMethod::Baci => "baci",
                crate::aci::CiMethod::BaciF => "baci-f",
                crate::aci::CiMethod::Paci => "paci",
            }
            .to_string(),
            lower: ci.interval.lower,
            upper: ci.interval.upper,
            level: ci.interval.level,
            vn: Some(ci.vn),
            kappa: ci.kappa,
            kappa_fallback: Some(ci.kappa_fallback),
            pooled: Some(ci.pooled),
            replicates_dropped: Some(ci.dropped),
        });
    }
}

/// Study summary as CSV: one row per estimator, then one per interval.
pub fn study_csv(s: &StudySummary) -> String {
    let mut out = String::from("kind,name,method,violation,bias,variance,mse,coverage,mean_width,replicates\n");
    for e in &s.estimators {
        out.push_str(&format!(
            "estimator,{},,{},{:.10e},{:.10e},{:.10e},,,{}\n",
            e.name, s.violation, e.bias, e.variance, e.mse, e.replicates
        ));
    }
    for c in &s.cis {
        out.push_str(&format!(
            "ci,{},{},{},,,,{:.6},{:.10e},{}\n",
            c.name,
            match c.method {
                crate::aci::CiMethod::Wald => "wald",
                crate::aci::CiMethod::Baci => "baci",
                crate::aci::CiMethod::BaciF => "baci-f",
                crate::aci::CiMethod::Paci => "paci",
            },
            s.violation,
            c.coverage,
            c.mean_width,
            c.replicates
        ));
    }
    out
}

/// Plain-text table mirroring the simulation-table layout, values in the
/// x1e-3 convention.
pub fn study_text(s: &StudySummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "study: violation b = {}, replicates = {} (failures {})\n",
        s.violation, s.replicates_used, s.failures
    ));
    out.push_str(&format!(
        "pooling rate = {:.3}, mean lambda* = {:.3}, mean c_gamma* = {:.3}, mean T = {:.3}\n\n",
        s.pooling_rate, s.mean_lambda, s.mean_c_gamma, s.mean_t_stat
    ));
    out.push_str(&format!(
        "{:<12} {:>12} {:>12} {:>12}   (x 1e-3)\n",
        "estimator", "bias", "var", "MSE"
    ));
    for e in &s.estimators {
        out.push_str(&format!(
            "{:<12} {:>12.1} {:>12.1} {:>12.1}\n",
            e.name,
            e.bias * 1e3,
            e.variance * 1e3,
            e.mse * 1e3
        ));
    }
    if !s.cis.is_empty() {
        out.push_str(&format!(
            "\n{:<12} {:<8} {:>10} {:>12}   (width x 1e-3)\n",
            "target", "method", "coverage", "width"
        ));
        for c in &s.cis {
            out.push_str(&format!(
                "{:<12} {:<8} {:>10.3} {:>12.1}\n",
                c.name,
                match c.method {
                    crate::aci::CiMethod::Wald => "wald",
                    crate::aci::CiMethod::Baci => "baci",
                    crate::aci::CiMethod::BaciF => "baci-f",
                    crate::aci::CiMethod::Paci => "paci",
                },
                c.coverage,
                c.mean_width * 1e3
            ));
        }
    }
    out
}

/// Toy-surface rows as plot-ready CSV.
pub fn toy_csv(rows: &[crate::simlab::ToyRow]) -> String {
    let mut out = String::from("lambda,c_gamma,eta,bias,mse\n");
    for r in rows {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.10e},{:.10e}\n",
            r.lambda, r.c_gamma, r.eta, r.bias, r.mse
        ));
    }
    out
}
