//! Invariant suite run by `tclreach selfcheck` and the acceptance tests.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::etp::{sample_fleet, simulate_fleet, FleetSpec};
use crate::markov::{stationary_distribution, step_population, PopulationState};
use crate::reachhold::{inner_boundary, inner_point, nominal_matrix, FleetModel};
use crate::validation::discretize_plan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64, detail: String) -> Self {
        Self { name: name.into(), passed: value <= limit, value, limit, detail }
    }
}

/// Random admissible plan step: a uniform fraction of each state, scaled so at
/// most `share` of the remaining population moves.
fn random_u(rng: &mut ChaCha8Rng, x: &Array1<f64>, share: f64) -> Array1<f64> {
    x.mapv(|v| v * share * rng.gen::<f64>())
}

pub fn column_stochasticity(model: &FleetModel) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for m in [Some(&model.a), Some(&model.a_a), model.a_out.as_ref()].into_iter().flatten() {
        worst = worst.max(m.stochasticity_error()?);
    }
    Ok(Check::at_most("column_stochasticity", worst, 1e-12, "max |1ᵀA − 1ᵀ| over A, A_a, A_out".into()))
}

pub fn mass_conservation(model: &FleetModel, steps: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PopulationState::from_stationary(&model.x0);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let share = rng.gen::<f64>();
        let u = random_u(&mut rng, &state.x, share);
        state = step_population(&state, &u, &model.a, &model.a_a)?;
        worst = worst.max((state.mass() - 1.0).abs());
    }
    Ok(Check::at_most("mass_conservation", worst, 1e-12, format!("{steps} random admissible steps")))
}

pub fn stationarity(model: &FleetModel) -> Result<Check> {
    let r = (model.a.apply(&model.x0) - &model.x0).mapv(f64::abs).sum();
    Ok(Check::at_most(
        "stationarity_residual",
        r,
        1e-10,
        format!("‖A x0 − x0‖₁ after {} iterations, unique = {}", model.stationary.iterations, model.stationary.unique),
    ))
}

pub fn frontier_monotone(model: &FleetModel, p_points: usize) -> Result<Check> {
    let set = inner_boundary(model, &model.p_grid(p_points), model.horizon());
    let (passed, detail) = match &set {
        Ok(s) => (true, format!("{} inner points", s.boundary.len())),
        Err(e) => (false, e.to_string()),
    };
    Ok(Check { name: "frontier_monotone".into(), passed, value: passed as u8 as f64, limit: 1.0, detail })
}

/// Worst cumulative unit gap of discretized inner plans, against the 2N bound.
pub fn discretization_fidelity(model: &FleetModel, n_units: usize, p_points: usize) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for p in model.p_grid(p_points) {
        let point = inner_point(model, p, model.horizon())?;
        let plan = point.plan(&model.x0);
        let d = discretize_plan(&plan, n_units)?;
        worst = worst.max(d.max_cumulative_gap(&plan, n_units));
    }
    let limit = model.x0.len() as f64;
    Ok(Check::at_most("discretization_fidelity", worst, limit, format!("{n_units} units, {p_points} inner plans")))
}

/// Re-estimates the nominal chain and re-runs a fleet with the same seeds.
pub fn determinism(model: &FleetModel, fleet: &FleetSpec, steps: usize) -> Result<Check> {
    let again = nominal_matrix(&model.spec)?;
    let same_a = again.entries == model.a.entries;
    let same_x = stationary_distribution(&again)?.x == model.stationary.x;
    let run = || -> Result<Vec<f64>> {
        let units = sample_fleet(fleet)?;
        Ok(simulate_fleet(&units, fleet.t_amb, fleet.deadband, model.regime().dt_h, steps, &[], false)?.power)
    };
    let same_fleet = run()? == run()?;
    let passed = same_a && same_x && same_fleet;
    Ok(Check {
        name: "determinism".into(),
        passed,
        value: passed as u8 as f64,
        limit: 1.0,
        detail: format!("matrix {same_a}, stationary {same_x}, fleet trace {same_fleet}"),
    })
}

pub fn run_all(model: &FleetModel, fleet: &FleetSpec, p_points: usize) -> Result<Vec<Check>> {
    Ok(vec![
        column_stochasticity(model)?,
        mass_conservation(model, 500, fleet.seed)?,
        stationarity(model)?,
        frontier_monotone(model, p_points)?,
        discretization_fidelity(model, fleet.n_units, p_points.min(10))?,
        determinism(model, fleet, 120)?,
    ])
}
