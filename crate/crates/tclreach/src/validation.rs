//! Applying Markov control plans to the agent-based fleet.
//!
//! Fractional plans become integer unit counts through floor-with-carry, units
//! are drawn at random inside each bin, and the resulting micro trace is scored
//! against the Markov prediction.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::etp::{sample_fleet, simulate_fleet, FleetSim, FleetSpec, SetpointChange, Unit};
use crate::markov::BinGrid;
use crate::reachhold::{inner_point, ControlPlan, FleetModel, InnerPoint};

/// Guard added before flooring so that exact integers survive rounding.
const FLOOR_GUARD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedPlan {
    /// Units to actuate per step and state.
    pub counts: Vec<Vec<u64>>,
    /// Carried fractional error entering each step.
    pub carry: Vec<Vec<f64>>,
    /// Σ n_units·u over the plan.
    pub target_total: f64,
    /// Units the uncorrected recursion e[k+1] = u[k] − û[k] would actuate.
    pub literal_total: u64,
}

impl DiscretizedPlan {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Largest |Σ_{n≤k} 1ᵀû[n] − n_units Σ_{n≤k} 1ᵀu[n]| over k.
    pub fn max_cumulative_gap(&self, plan: &ControlPlan, n_units: usize) -> f64 {
        let dim = self.counts.first().map_or(0, Vec::len);
        let (mut got, mut want, mut worst) = (0.0, 0.0, 0.0f64);
        for (k, row) in self.counts.iter().enumerate() {
            got += row.iter().sum::<u64>() as f64;
            want += n_units as f64 * plan.u(k, dim).sum();
            worst = worst.max((got - want).abs());
        }
        worst
    }
}

/// `û[k] = ⌊n·u[k] + e[k]⌋` with `e[k+1] = n·u[k] + e[k] − û[k]` and `e[0] = 0`.
pub fn discretize_plan(plan: &ControlPlan, n_units: usize) -> Result<DiscretizedPlan> {
    if n_units == 0 {
        return invalid("discretize_plan: fleet has no units");
    }
    let dim = plan.dim().unwrap_or(0);
    let n = n_units as f64;
    let mut e = vec![0.0; dim];
    let mut e_lit = vec![0.0; dim];
    let mut out = DiscretizedPlan { counts: Vec::new(), carry: Vec::new(), target_total: 0.0, literal_total: 0 };
    for k in 0..plan.len() {
        let u = plan.u(k, dim);
        if u.iter().any(|v| !v.is_finite() || *v < -FLOOR_GUARD) {
            return invalid(format!("plan step {k} has a negative or non-finite entry"));
        }
        out.carry.push(e.clone());
        let mut row = Vec::with_capacity(dim);
        for i in 0..dim {
            let target = n * u[i].max(0.0);
            let uh = (target + e[i] + FLOOR_GUARD).floor().max(0.0);
            e[i] += target - uh;
            row.push(uh as u64);
            out.target_total += target;

            let lit = (target + e_lit[i] + FLOOR_GUARD).floor().max(0.0);
            e_lit[i] = u[i] - lit;
            out.literal_total += lit as u64;
        }
        out.counts.push(row);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub step: usize,
    pub state: usize,
    pub requested: u64,
    pub available: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MicroRun {
    /// Aggregate power at steps 0..=horizon (kW).
    pub power: Vec<f64>,
    pub requested: u64,
    pub actuated: u64,
    pub shortfalls: Vec<Shortfall>,
    /// Step at which each unit was actuated.
    pub actuated_at: Vec<Option<usize>>,
}

impl MicroRun {
    pub fn missing(&self) -> u64 {
        self.requested - self.actuated
    }

    /// More than 5% of requested actuations could not be carried out.
    pub fn degraded(&self) -> bool {
        self.missing() as f64 > 0.05 * self.requested as f64
    }
}

/// Runs the fleet for `horizon` steps, moving `plan.counts[k][i]` not yet
/// actuated units found in state `i` at step `k` to `t_set_new`.
#[allow(clippy::too_many_arguments)]
pub fn apply_plan_micro(
    units: &[Unit],
    grid: &BinGrid,
    plan: &DiscretizedPlan,
    t_set_new: f64,
    t_amb: f64,
    deadband: f64,
    dt_h: f64,
    horizon: usize,
    seed: u64,
) -> Result<MicroRun> {
    if plan.counts.iter().any(|r| r.len() != grid.dim()) {
        return invalid("plan dimension differs from the bin grid");
    }
    let mut sim = FleetSim::new(units, t_amb, deadband, dt_h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = MicroRun {
        power: Vec::with_capacity(horizon + 1),
        requested: 0,
        actuated: 0,
        shortfalls: Vec::new(),
        actuated_at: vec![None; units.len()],
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); grid.dim()];
    for k in 0..=horizon {
        run.power.push(sim.power());
        if let Some(row) = plan.counts.get(k).filter(|r| r.iter().any(|&c| c > 0)) {
            members.iter_mut().for_each(Vec::clear);
            for (j, s) in sim.states().iter().enumerate() {
                if run.actuated_at[j].is_none() {
                    members[grid.index(s.t_a, s.on)].push(j);
                }
            }
            for (i, &want) in row.iter().enumerate() {
                if want == 0 {
                    continue;
                }
                let pool = &members[i];
                let take = (want as usize).min(pool.len());
                run.requested += want;
                if take < want as usize {
                    run.shortfalls.push(Shortfall { step: k, state: i, requested: want, available: pool.len() as u64 });
                }
                for pick in sample(&mut rng, pool.len(), take) {
                    let unit = pool[pick];
                    sim.set_setpoint(unit, t_set_new);
                    run.actuated_at[unit] = Some(k);
                }
                run.actuated += take as u64;
            }
        }
        if k < horizon {
            sim.step();
        }
    }
    Ok(run)
}

/// Runs `units` for `steps` steps at their current setpoints and returns the final states.
pub fn warm_up(units: &[Unit], t_amb: f64, deadband: f64, dt_h: f64, steps: usize) -> Result<Vec<Unit>> {
    let mut sim = FleetSim::new(units, t_amb, deadband, dt_h)?;
    for _ in 0..steps {
        sim.step();
    }
    Ok(units.iter().zip(sim.states()).map(|(u, s)| Unit { params: u.params, state: *s }).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldTarget {
    pub p_hold: f64,
    pub t_hold: usize,
    /// Allowed shortfall below `p_hold` (kW).
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    /// Root-mean-square difference over the trace, as a fraction of P_ON.
    pub rmse: f64,
    /// Largest absolute difference, as a fraction of P_ON.
    pub max_abs_dev: f64,
    /// Share of steps 1..=T_hold with micro ΔP ≥ P_hold − tol.
    pub hold_satisfied_fraction: f64,
}

/// Scores a micro trace against the Markov trace. Micro ΔP is measured from
/// `micro_reference`, the same fleet run without actuation.
pub fn compare_traces(
    markov: &[f64],
    micro: &[f64],
    micro_reference: &[f64],
    hold: &HoldTarget,
    p_on: f64,
) -> Result<TraceComparison> {
    if markov.len() != micro.len() || micro.len() != micro_reference.len() {
        return invalid(format!(
            "trace lengths differ: markov {}, micro {}, reference {}",
            markov.len(),
            micro.len(),
            micro_reference.len()
        ));
    }
    if markov.is_empty() {
        return invalid("empty traces");
    }
    if !(p_on > 0.0) {
        return Err(Error::InvalidConfiguration("P_ON must be positive".into()));
    }
    let sq: f64 = markov.iter().zip(micro).map(|(a, b)| (a - b).powi(2)).sum();
    let max = markov.iter().zip(micro).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let last = hold.t_hold.min(micro.len() - 1);
    let ok = (1..=last).filter(|&k| micro_reference[k] - micro[k] >= hold.p_hold - hold.tol).count();
    Ok(TraceComparison {
        rmse: (sq / markov.len() as f64).sqrt() / p_on,
        max_abs_dev: max / p_on,
        hold_satisfied_fraction: if last == 0 { 1.0 } else { ok as f64 / last as f64 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rmse: f64,
    pub max_abs_dev: f64,
    pub hold_satisfied_fraction: f64,
    pub shortfall_events: usize,
    pub p_hold: f64,
    pub t_hold: usize,
    pub tol: f64,
    pub n_units: usize,
    pub requested_units: u64,
    pub actuated_units: u64,
    pub literal_carry_units: u64,
    pub degraded: bool,
}

/// Paired traces and their report for one actuation block.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRun {
    pub report: ValidationReport,
    pub markov: Vec<f64>,
    pub micro: Vec<f64>,
    pub reference: Vec<f64>,
}

impl ValidationRun {
    /// Writes `<stem>.json` and `<stem>.csv` (`step,markov_kW,micro_kW`) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&self.report)? + "\n")?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(out, "step,markov_kW,micro_kW")?;
        for (k, (m, u)) in self.markov.iter().zip(&self.micro).enumerate() {
            writeln!(out, "{k},{m},{u}")?;
        }
        out.flush().map_err(Error::from)
    }
}

/// Settings shared by validation blocks on one fleet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroSetup {
    pub fleet: FleetSpec,
    pub warmup_steps: usize,
    /// Seed for unit selection inside bins.
    pub selection_seed: u64,
    /// Hold tolerance as a fraction of the fleet's P_ON.
    pub tol_frac: f64,
}

/// Samples and warms up the micro fleet described by `setup`.
pub fn warm_fleet(setup: &MicroSetup, dt_h: f64) -> Result<Vec<Unit>> {
    let f = &setup.fleet;
    warm_up(&sample_fleet(f)?, f.t_amb, f.deadband, dt_h, setup.warmup_steps)
}

/// Applies the inner plan for `p_hold` to a warmed fleet and scores it over `horizon` steps.
pub fn validate_inner_block(
    model: &FleetModel,
    setup: &MicroSetup,
    units: &[Unit],
    point: &InnerPoint,
    horizon: usize,
) -> Result<ValidationRun> {
    let r = model.regime();
    let f = &setup.fleet;
    if (f.capacity() - model.p_on()).abs() > 1e-9 * model.p_on() {
        return Err(Error::InvalidConfiguration(format!(
            "fleet capacity {} differs from model P_ON {}",
            f.capacity(),
            model.p_on()
        )));
    }
    let plan = point.plan(&model.x0);
    let discrete = discretize_plan(&plan, units.len())?;
    let markov = model.propagate(&plan, horizon)?;
    let reference = simulate_fleet(units, r.t_amb, r.deadband, r.dt_h, horizon, &[], false)?.power;
    let micro = apply_plan_micro(
        units,
        &r.grid,
        &discrete,
        r.t_set_new,
        r.t_amb,
        r.deadband,
        r.dt_h,
        horizon,
        setup.selection_seed,
    )?;
    let hold =
        HoldTarget { p_hold: point.p_hold, t_hold: point.t_hold.min(horizon), tol: setup.tol_frac * model.p_on() };
    let cmp = compare_traces(&markov, &micro.power, &reference, &hold, model.p_on())?;
    Ok(ValidationRun {
        report: ValidationReport {
            rmse: cmp.rmse,
            max_abs_dev: cmp.max_abs_dev,
            hold_satisfied_fraction: cmp.hold_satisfied_fraction,
            shortfall_events: micro.shortfalls.len(),
            p_hold: hold.p_hold,
            t_hold: hold.t_hold,
            tol: hold.tol,
            n_units: units.len(),
            requested_units: micro.requested,
            actuated_units: micro.actuated,
            literal_carry_units: discrete.literal_total,
            degraded: micro.degraded(),
        },
        markov,
        micro: micro.power,
        reference,
    })
}

/// Largest P_hold (to within `1e-6·P_nom`) whose inner hold lasts at least `steps`.
pub fn inner_point_for_duration(model: &FleetModel, steps: usize, t_max: usize) -> Result<InnerPoint> {
    if steps > t_max {
        return invalid(format!("hold of {steps} steps exceeds T_max {t_max}"));
    }
    let top = inner_point(model, model.p_nom, t_max)?;
    if top.t_hold >= steps {
        return Ok(top);
    }
    let (mut lo, mut hi) = (0.0, model.p_nom);
    while hi - lo > 1e-6 * model.p_nom {
        let mid = 0.5 * (lo + hi);
        if inner_point(model, mid, t_max)?.t_hold >= steps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    inner_point(model, lo, t_max)
}

/// Step response of the whole fleet moved to `t_set_new` at k = 0: Markov and micro traces.
pub fn step_response(model: &FleetModel, units: &[Unit], horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = model.regime();
    let plan = ControlPlan::Proportional { alpha: vec![1.0], x0: model.x0.clone() };
    let markov = model.propagate(&plan, horizon)?;
    let all: Vec<SetpointChange> =
        (0..units.len()).map(|unit| SetpointChange { step: 0, unit, t_set: r.t_set_new }).collect();
    let micro = simulate_fleet(units, r.t_amb, r.deadband, r.dt_h, horizon, &all, false)?.power;
    Ok((markov, micro))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::etp::TclParams;
    use ndarray::Array1;

    fn single_bin_plan(per_step: &[f64], dim: usize, bin: usize) -> ControlPlan {
        ControlPlan::PerBin(
            per_step
                .iter()
                .map(|&v| {
                    let mut u = Array1::zeros(dim);
                    u[bin] = v;
                    u
                })
                .collect(),
        )
    }

    #[test]
    fn integer_multiples_are_exact() {
        let n = 50;
        let plan = single_bin_plan(&[3.0 / 50.0, 0.0, 7.0 / 50.0, 1.0 / 50.0], 4, 2);
        let d = discretize_plan(&plan, n).unwrap();
        let got: Vec<u64> = d.counts.iter().map(|r| r[2]).collect();
        assert_eq!(got, vec![3, 0, 7, 1]);
        assert!(d.carry.iter().flatten().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn carry_pattern_for_fractional_rate() {
        // U = 0.4 per step: carries 0, .4, .8, .2, .6, 0 give 0,0,1,0,1 per period of 5.
        let n = 100;
        let plan = single_bin_plan(&[0.004; 10], 3, 1);
        let d = discretize_plan(&plan, n).unwrap();
        let got: Vec<u64> = d.counts.iter().map(|r| r[1]).collect();
        assert_eq!(got, vec![0, 0, 1, 0, 1, 0, 0, 1, 0, 1]);
        let mut sum = 0.0;
        for (k, c) in got.iter().enumerate() {
            sum += *c as f64;
            assert!((sum - 0.4 * (k + 1) as f64).abs() < 1.0);
        }
        assert!(d.max_cumulative_gap(&plan, n) < 1.0);
    }

    #[test]
    fn totals_stay_within_budget() {
        let x0 = Array1::from(vec![0.1, 0.2, 0.3, 0.4]);
        let plan = ControlPlan::Proportional { alpha: vec![0.33, 0.33, 0.34], x0 };
        let d = discretize_plan(&plan, 37).unwrap();
        assert!(d.total() <= 37);
        assert!(d.max_cumulative_gap(&plan, 37) <= 8.0);
        assert!(discretize_plan(&plan, 0).is_err());
    }

    #[test]
    fn compare_trace_oracles() {
        let a = vec![10.0, 8.0, 6.0, 7.0];
        let hold = HoldTarget { p_hold: 0.0, t_hold: 3, tol: 0.0 };
        let c = compare_traces(&a, &a, &a, &hold, 10.0).unwrap();
        assert_eq!(c.rmse, 0.0);
        assert_eq!(c.hold_satisfied_fraction, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 2.5).collect();
        let c = compare_traces(&a, &b, &a, &hold, 10.0).unwrap();
        assert!((c.max_abs_dev - 0.25).abs() < 1e-15);
        assert!((c.rmse - 0.25).abs() < 1e-15);
        assert!(matches!(compare_traces(&a, &b[..3], &a, &hold, 10.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hold_fraction_counts_steps_after_start() {
        let reference = vec![10.0; 5];
        let micro = vec![10.0, 5.0, 5.0, 9.0, 5.0];
        let hold = HoldTarget { p_hold: 5.0, t_hold: 4, tol: 0.5 };
        let c = compare_traces(&micro, &micro, &reference, &hold, 10.0).unwrap();
        assert_eq!(c.hold_satisfied_fraction, 0.75);
    }

    fn small_fleet(n: usize) -> (Vec<Unit>, BinGrid) {
        let spec = FleetSpec {
            n_units: n,
            nominal: TclParams::default(),
            heterogeneity: 0.0,
            deadband: 1.0,
            t_amb: 32.0,
            t_set: 20.0,
            seed: 3,
        };
        let units = warm_up(&sample_fleet(&spec).unwrap(), 32.0, 1.0, 1.0 / 60.0, 60).unwrap();
        (units, BinGrid::new(18.0, 24.0, 24).unwrap())
    }

    #[test]
    fn empty_plan_reproduces_baseline() {
        let (units, grid) = small_fleet(200);
        let plan = DiscretizedPlan {
            counts: vec![vec![0; grid.dim()]; 5],
            carry: vec![],
            target_total: 0.0,
            literal_total: 0,
        };
        let run = apply_plan_micro(&units, &grid, &plan, 22.0, 32.0, 1.0, 1.0 / 60.0, 90, 1).unwrap();
        let base = simulate_fleet(&units, 32.0, 1.0, 1.0 / 60.0, 90, &[], false).unwrap().power;
        assert_eq!(run.power, base);
        assert_eq!(run.requested, 0);
    }

    #[test]
    fn actuating_everything_sheds_load_once_per_unit() {
        let (units, grid) = small_fleet(300);
        let mut row = vec![0u64; grid.dim()];
        for u in &units {
            row[grid.index(u.state.t_a, u.state.on)] += 1;
        }
        // Ask for the same units again one step later: nobody is left to select.
        let plan =
            DiscretizedPlan { counts: vec![row.clone(), row], carry: vec![], target_total: 0.0, literal_total: 0 };
        let run = apply_plan_micro(&units, &grid, &plan, 22.0, 32.0, 1.0, 1.0 / 60.0, 20, 9).unwrap();
        assert_eq!(run.actuated, 300);
        assert!(run.actuated_at.iter().all(|a| *a == Some(0)));
        assert!(run.shortfalls.iter().all(|s| s.step == 1 && s.available == 0));
        assert!(run.degraded());
        assert!(run.power[5..].iter().all(|&p| p <= 1e-9), "{:?}", &run.power[..10]);
    }

    #[test]
    fn selection_is_seeded() {
        let (units, grid) = small_fleet(200);
        let mut row = vec![0u64; grid.dim()];
        let on_bin = units.iter().find(|u| u.state.on).unwrap().state;
        row[grid.index(on_bin.t_a, true)] = 1;
        let plan = DiscretizedPlan { counts: vec![row], carry: vec![], target_total: 0.0, literal_total: 0 };
        let go = |seed| apply_plan_micro(&units, &grid, &plan, 22.0, 32.0, 1.0, 1.0 / 60.0, 30, seed).unwrap();
        assert_eq!(go(4), go(4));
    }
}
