use tclreach::reachhold::{inner_boundary, FleetModel, ReachHoldSet};
use tclreach::scenario::ScenarioConfig;
use tclreach::validation::{inner_point_for_duration, step_response, validate_inner_block, warm_fleet};

fn rmse(a: &[f64], b: &[f64], p_on: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt() / p_on
}

#[test]
fn agreement_improves_with_fleet_size() {
    let mut means = Vec::new();
    for n in [100, 1000, 10000] {
        let mut cfg = ScenarioConfig::with_seeds(1, 0, 0);
        cfg.fleet.n_units = n;
        cfg.fleet.heterogeneity = 0.0;
        let model = FleetModel::build(&cfg.model_spec(false).unwrap()).unwrap();
        let mut total = 0.0;
        for seed in 0..4 {
            let mut setup = cfg.micro_setup();
            setup.fleet.seed = 100 + seed;
            let units = warm_fleet(&setup, cfg.dt_h()).unwrap();
            let (markov, micro) = step_response(&model, &units, 480).unwrap();
            total += rmse(&markov, &micro, model.p_on());
        }
        means.push(total / 4.0);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0] + 1e-3), "{means:?}");
}

#[test]
fn validation_artifacts_are_written() {
    let cfg = ScenarioConfig::with_seeds(1, 2, 3);
    let model = FleetModel::build(&cfg.model_spec(false).unwrap()).unwrap();
    let setup = cfg.micro_setup();
    let units = warm_fleet(&setup, cfg.dt_h()).unwrap();
    let point = inner_point_for_duration(&model, 60, cfg.horizon).unwrap();
    let run = validate_inner_block(&model, &setup, &units, &point, 120).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run.write(dir.path(), "block").unwrap();
    let csv = std::fs::read_to_string(dir.path().join("block.csv")).unwrap();
    assert!(csv.starts_with("step,markov_kW,micro_kW\n"));
    assert_eq!(csv.lines().count(), 122);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("block.json")).unwrap()).unwrap();
    for key in ["rmse", "max_abs_dev", "hold_satisfied_fraction", "shortfall_events"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn frontier_files_round_trip() {
    let cfg = ScenarioConfig::with_seeds(1, 2, 3);
    let model = FleetModel::build(&cfg.model_spec(false).unwrap()).unwrap();
    let set = inner_boundary(&model, &model.p_grid(10), cfg.horizon).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = set.write(dir.path(), "inner").unwrap();
    let back = ReachHoldSet::read(&path).unwrap();
    assert_eq!(back, set);
}
