use owc_core::compute_r_max;
use owc_core::config::parse_config;
use owc_core::oracle::{brute_force, compare_with_pipeline, OracleGrids};

const TINY: &str = include_str!("../../../scenarios/tiny.cfg");
const GRIDS: &str = include_str!("../../../scenarios/tiny_grids.toml");

#[test]
fn bundled_grids_fit_the_guard() {
    let cfg = parse_config(TINY).unwrap();
    let grids = OracleGrids::from_toml(GRIDS).unwrap();
    assert_eq!(grids.size(&cfg.scenario), 5u128.pow(2) * 2u128.pow(4) * 5u128.pow(4) * 12);
}

#[test]
fn pipeline_within_five_percent_of_grid_optimum() {
    let cfg = parse_config(TINY).unwrap();
    let grids = OracleGrids::from_toml(GRIDS).unwrap();
    let r_max = compute_r_max(&cfg.scenario, &cfg.solver).unwrap();
    for alpha in [0.3, 0.5, 0.7] {
        let c = compare_with_pipeline(&cfg.scenario, &grids, alpha * r_max, &cfg.solver).unwrap();
        assert!(c.solver_violation <= 1e-6, "alpha {alpha}: violation {}", c.solver_violation);
        assert!(c.ratio <= 1.05, "alpha {alpha}: ratio {}", c.ratio);
        assert!(c.within_band());
    }
}

#[test]
fn oracle_answer_is_feasible_under_exact_metrics() {
    let cfg = parse_config(TINY).unwrap();
    let grids = OracleGrids::from_toml(GRIDS).unwrap();
    let eps = 3.0;
    let r = brute_force(&cfg.scenario, &grids, eps).unwrap();
    assert!(r.metrics.r_tot_bits >= eps);
    assert!(r.metrics.min_rate() >= cfg.scenario.r_min);
}

#[test]
fn band_verdict_follows_ratio_and_feasibility() {
    let cfg = parse_config(TINY).unwrap();
    let grids = OracleGrids::from_toml(GRIDS).unwrap();
    let mut c = compare_with_pipeline(&cfg.scenario, &grids, 2.0, &cfg.solver).unwrap();
    assert!(c.within_band());
    c.ratio = 1.06;
    assert!(!c.within_band());
    c.ratio = 1.0;
    c.solver_violation = 1e-3;
    assert!(!c.within_band());
}
