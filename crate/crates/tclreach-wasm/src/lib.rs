//! Browser bindings over a coarse fleet model (60 bins, 500 samples per column).

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tclreach::aggregation::combine;
use tclreach::reachhold::{inner_boundary, sweep_setpoint, ControlPlan, FleetModel, ReachHoldPoint, ReachHoldSet};
use tclreach::scenario::ScenarioConfig;

const P_POINTS: usize = 24;

#[derive(Serialize)]
struct Point {
    hours: f64,
    kw: f64,
}

#[derive(Serialize)]
struct Frontier {
    t_set_new: f64,
    p_nom: f64,
    points: Vec<Point>,
}

#[derive(Serialize)]
struct Response {
    p_nom: f64,
    dt_hours: f64,
    power: Vec<f64>,
}

#[derive(Serialize)]
struct Aggregate {
    a: Frontier,
    b: Frontier,
    exclusive: Vec<Point>,
    simultaneous: Vec<Point>,
    consecutive: Vec<Point>,
    union: Vec<Point>,
}

fn config(units: u32) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::with_seeds(1, 2, 3);
    cfg.grid.n = 60;
    cfg.estimation.n_samples = 500;
    cfg.fleet.n_units = units.max(1) as usize;
    cfg
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn points(boundary: &[ReachHoldPoint], dt_h: f64) -> Vec<Point> {
    boundary.iter().map(|p| Point { hours: p.t_hold as f64 * dt_h, kw: p.p_hold }).collect()
}

fn frontier(set: &ReachHoldSet) -> Frontier {
    Frontier { t_set_new: set.regime.t_set_new, p_nom: set.p_nom, points: points(&set.boundary, set.regime.dt_h) }
}

/// Inner reach-and-hold frontiers of one fleet, one per new setpoint. Returns JSON.
#[wasm_bindgen]
pub fn setpoint_frontiers(setpoints: &[f64], units: u32) -> Result<String, JsError> {
    let spec = config(units).model_spec(false).map_err(js)?;
    let sets = sweep_setpoint(&spec, setpoints, P_POINTS).map_err(js)?;
    serde_json::to_string(&sets.iter().map(frontier).collect::<Vec<_>>()).map_err(js)
}

/// Aggregate power after moving `fraction` of every bin to the new setpoint at t = 0. Returns JSON.
#[wasm_bindgen]
pub fn partial_response(fraction: f64, t_set_new: f64, hours: f64, units: u32) -> Result<String, JsError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(JsError::new("fraction must lie in [0, 1]"));
    }
    let mut cfg = config(units);
    cfg.t_set_new = t_set_new;
    let model = FleetModel::build(&cfg.model_spec(false).map_err(js)?).map_err(js)?;
    let plan = ControlPlan::Proportional { alpha: vec![fraction], x0: model.x0.clone() };
    let power = model.propagate(&plan, cfg.steps(hours)).map_err(js)?;
    serde_json::to_string(&Response { p_nom: model.p_nom, dt_hours: cfg.dt_h(), power }).map_err(js)
}

/// Two fleets with their own size and new setpoint, combined four ways. Returns JSON.
#[wasm_bindgen]
pub fn aggregate_fleets(units_a: u32, t_new_a: f64, units_b: u32, t_new_b: f64) -> Result<String, JsError> {
    let inner = |units: u32, t_new: f64| -> Result<ReachHoldSet, JsError> {
        let mut cfg = config(units);
        cfg.t_set_new = t_new;
        let model = FleetModel::build(&cfg.model_spec(false).map_err(js)?).map_err(js)?;
        inner_boundary(&model, &model.p_grid(P_POINTS), cfg.horizon).map_err(js)
    };
    let (a, b) = (inner(units_a, t_new_a)?, inner(units_b, t_new_b)?);
    let c = combine(&a, &b).map_err(js)?;
    let dt = a.regime.dt_h;
    serde_json::to_string(&Aggregate {
        a: frontier(&a),
        b: frontier(&b),
        exclusive: points(&c.exclusive, dt),
        simultaneous: points(&c.simultaneous, dt),
        consecutive: points(&c.consecutive, dt),
        union: points(&c.union, dt),
    })
    .map_err(js)
}
