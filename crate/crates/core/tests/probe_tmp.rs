use tap_core::aci::{BaciConfig, CiMethod, VnMode};
use tap_core::simlab::{run_study, SimConfig};

#[test]
fn probe_halfwidth_sweep() {
    for hw in [2.75_f64, 3.25, 4.0] {
        for seed in [11_u64, 22] {
            let ci = BaciConfig {
                bootstrap: 500,
                second_order: 50,
                first_order: 20,
                mu2_halfwidth: hw,
                vn_mode: VnMode::DoubleBootstrap,
                ..BaciConfig::default()
            };
            let cfg = SimConfig {
                replicates: 150,
                violation: 0.0,
                run_cis: true,
                ci,
                seed,
                ..SimConfig::default()
            };
            let s = run_study(&cfg).unwrap();
            let baci = s.cis.iter().find(|c| c.name == "mu_tap" && c.method == CiMethod::Baci).unwrap();
            let wald = s.cis.iter().find(|c| c.name == "mu_A" && c.method == CiMethod::Wald).unwrap();
            eprintln!(
                "hw={hw} seed={seed}: BACI cover {:.3} width {:.4} (wald {:.4})",
                baci.coverage, baci.mean_width, wald.mean_width
            );
        }
    }
}
