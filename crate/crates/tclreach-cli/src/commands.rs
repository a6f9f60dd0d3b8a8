use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tclreach::aggregation::{combine, combine_all, query_p_at_t};
use tclreach::etp::{simulate_fleet, write_state_trace, SetpointChange};
use tclreach::reachhold::{
    exact_boundary, inner_boundary, outer_boundary, precool_compare, sweep_setpoint, t_grid, FleetModel, Method,
    ReachHoldSet, LP_SIZE_CAP,
};
use tclreach::scenario::ScenarioConfig;
use tclreach::selfcheck;
use tclreach::validation::{inner_point_for_duration, step_response, validate_inner_block, warm_fleet};
use tclreach::Error;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation degraded: {0}")]
    Degraded(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Degraded(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure(_) | Error::ConstraintViolation { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Preset {
    /// Parses `figN` and checks that it belongs to `command`.
    pub fn parse(name: &str, command: &str) -> Result<Self, Failure> {
        let (preset, owner) = match name {
            "fig2" => (Preset::Fig2, "validate"),
            "fig4" => (Preset::Fig4, "reachhold"),
            "fig5" => (Preset::Fig5, "sweep-setpoint"),
            "fig6" => (Preset::Fig6, "sweep-precool"),
            "fig7" => (Preset::Fig7, "validate"),
            other => return Err(Failure::Config(format!("unknown preset {other:?}"))),
        };
        if owner != command {
            return Err(Failure::Config(format!("preset {name} belongs to `{owner}`, not `{command}`")));
        }
        Ok(preset)
    }

    fn prefix(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2_",
            Preset::Fig4 => "fig4_",
            Preset::Fig5 => "fig5_",
            Preset::Fig6 => "fig6_",
            Preset::Fig7 => "fig7_",
        }
    }
}

pub struct Run {
    cfg: ScenarioConfig,
    out: PathBuf,
    methods: Vec<Method>,
    preset: Option<Preset>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

impl Run {
    pub fn prepare(
        config: &Path,
        out: PathBuf,
        methods: &[String],
        preset: Option<Preset>,
        seed_override: Option<u64>,
    ) -> Result<Self, Failure> {
        let mut cfg = ScenarioConfig::load(config)?;
        if let Some(seed) = seed_override {
            cfg.override_seeds(seed);
        }
        let mut parsed: Vec<Method> = Vec::new();
        for m in methods {
            let m: Method = m.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
            if !parsed.contains(&m) {
                parsed.push(m);
            }
        }
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("config.effective.json"), cfg.to_json()?)?;
        Ok(Self { cfg, out, methods: parsed, preset })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(format!("{}{name}", self.preset.map_or("", Preset::prefix)))
    }

    fn stem(&self, name: &str) -> String {
        format!("{}{name}", self.preset.map_or("", Preset::prefix))
    }

    fn model(&self, with_outer: bool) -> Result<FleetModel, Failure> {
        let t = Instant::now();
        let m = FleetModel::build(&self.cfg.model_spec(with_outer)?)?;
        eprintln!(
            "model: {} states, P_nom {:.3} kW, stationary residual {:.2e} after {} iterations ({:.1} s)",
            m.x0.len(),
            m.p_nom,
            m.stationary.residual,
            m.stationary.iterations,
            t.elapsed().as_secs_f64()
        );
        Ok(m)
    }

    pub fn build_model(&self) -> Result<(), Failure> {
        let with_outer = self.methods.contains(&Method::Outer);
        let m = self.model(with_outer)?;
        m.a.write_csv(&self.path("A.csv"))?;
        m.a_a.write_csv(&self.path("A_a.csv"))?;
        if let Some(a_out) = &m.a_out {
            a_out.write_csv(&self.path("A_out.csv"))?;
        }
        let grid = m.regime().grid;
        let mut f = std::io::BufWriter::new(std::fs::File::create(self.path("x0.csv"))?);
        writeln!(f, "state,mode,T_low,T_high,x0")?;
        for (i, x) in m.x0.iter().enumerate() {
            let b = i % grid.n;
            let mode = if grid.is_on(i) { "on" } else { "off" };
            writeln!(f, "{i},{mode},{},{},{x}", grid.lower_edge(b), grid.lower_edge(b) + grid.width())?;
        }
        f.flush()?;
        write_json(
            &self.path("model.json"),
            &serde_json::json!({
                "p_nom_kW": m.p_nom,
                "p_on_kW": m.p_on(),
                "states": m.x0.len(),
                "stationary_residual": m.stationary.residual,
                "stationary_iterations": m.stationary.iterations,
                "stationary_unique": m.stationary.unique,
                "stochasticity_error": m.a.stochasticity_error()?,
            }),
        )?;
        println!("P_nom = {:.3} kW of P_ON = {:.1} kW", m.p_nom, m.p_on());
        Ok(())
    }

    pub fn reachhold(&self) -> Result<(), Failure> {
        let m = self.model(self.methods.contains(&Method::Outer))?;
        let cfg = &self.cfg;
        let mut sets: BTreeMap<String, ReachHoldSet> = BTreeMap::new();
        for &method in &self.methods {
            let t = Instant::now();
            let set = match method {
                Method::Inner => inner_boundary(&m, &m.p_grid(cfg.p_hold_points), cfg.horizon)?,
                Method::Outer => {
                    let set = outer_boundary(&m, &t_grid(cfg.horizon, cfg.t_hold_points))?;
                    if let Some(c) = &set.condition {
                        write_json(&self.path("condition.json"), c)?;
                        println!(
                            "outer condition: {} (min margin {:.3} kW at m = {}, {} violations)",
                            if c.holds { "verified" } else { "UNVERIFIED" },
                            c.worst_margin,
                            c.worst_m,
                            c.violations
                        );
                    }
                    set
                }
                Method::Exact => {
                    let dim = m.x0.len();
                    let limit = cfg.exact_max_vars.min(LP_SIZE_CAP);
                    let grid: Vec<usize> = t_grid(cfg.horizon, cfg.t_hold_points.max(cfg.horizon))
                        .into_iter()
                        .filter(|&t| t * dim <= limit)
                        .collect();
                    let grid = thin(&grid, cfg.t_hold_points);
                    if grid.is_empty() {
                        return Err(Failure::Config(format!(
                            "exact LP needs T_hold·2N ≤ {limit}; 2N = {dim} leaves no hold length"
                        )));
                    }
                    exact_boundary(&m, &grid)?
                }
            };
            eprintln!("{method}: {} frontier points ({:.1} s)", set.boundary.len(), t.elapsed().as_secs_f64());
            set.write(&self.out, &self.stem(&method.to_string()))?;
            sets.insert(method.to_string(), set);
        }
        let mut checks = serde_json::Map::new();
        checks.insert("p_nom_kW".into(), m.p_nom.into());
        if let (Some(inner), Some(outer)) = (sets.get("inner"), sets.get("outer")) {
            let ok = sandwiched(inner, outer);
            checks.insert("inner_below_outer".into(), ok.into());
            println!("inner <= outer at every outer T_hold: {ok}");
        }
        if let (Some(inner), Some(exact)) = (sets.get("inner"), sets.get("exact")) {
            let ok = sandwiched(inner, exact);
            checks.insert("inner_below_exact".into(), ok.into());
            println!("inner <= exact at every exact T_hold: {ok}");
        }
        write_json(&self.path("reachhold.json"), &checks)?;
        Ok(())
    }

    pub fn aggregate(&self, mut inputs: Vec<PathBuf>) -> Result<(), Failure> {
        if inputs.is_empty() {
            inputs = self.cfg.aggregate.inputs.clone();
        }
        if inputs.len() < 2 {
            return Err(Failure::Config("aggregate needs at least two frontier CSVs".into()));
        }
        let sets = inputs
            .iter()
            .map(|p| ReachHoldSet::read(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        if sets.len() == 2 {
            let c = combine(&sets[0], &sets[1])?;
            c.write_csv(&self.path("combined.csv"))?;
            c.union_set().write(&self.out, &self.stem("union"))?;
            println!(
                "combined: {} exclusive, {} simultaneous, {} consecutive, {} union points",
                c.exclusive.len(),
                c.simultaneous.len(),
                c.consecutive.len(),
                c.union.len()
            );
        } else {
            let u = combine_all(&sets)?;
            u.write(&self.out, &self.stem("union"))?;
            println!("union of {} sets: {} points", sets.len(), u.boundary.len());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let cfg = &self.cfg;
        let m = self.model(false)?;
        let setup = cfg.micro_setup();
        let units = warm_fleet(&setup, cfg.dt_h())?;
        let mut degraded = Vec::new();
        if self.preset != Some(Preset::Fig7) {
            let horizon = cfg.steps(cfg.validation.response_hours);
            let (markov, micro) = step_response(&m, &units, horizon)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(self.path("step_response.csv"))?);
            writeln!(f, "step,markov_kW,micro_kW")?;
            for (k, (a, b)) in markov.iter().zip(&micro).enumerate() {
                writeln!(f, "{k},{a},{b}")?;
            }
            f.flush()?;
            let rmse = (markov.iter().zip(&micro).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / markov.len() as f64)
                .sqrt()
                / m.p_on();
            write_json(
                &self.path("step_response.json"),
                &serde_json::json!({ "rmse": rmse, "p_nom_kW": m.p_nom, "p_on_kW": m.p_on(), "steps": horizon }),
            )?;
            let traced = cfg.validation.traced_units.min(units.len());
            if traced > 0 {
                let r = m.regime();
                let changes: Vec<SetpointChange> =
                    (0..traced).map(|unit| SetpointChange { step: 0, unit, t_set: r.t_set_new }).collect();
                let trace = simulate_fleet(&units[..traced], r.t_amb, r.deadband, r.dt_h, horizon, &changes, true)?;
                write_state_trace(&self.path("step_states.csv"), trace.states.as_deref().unwrap_or_default())?;
            }
            println!("step response: RMSE {rmse:.4} of P_ON over {horizon} steps");
        }
        if self.preset != Some(Preset::Fig2) {
            for &hours in &cfg.validation.hold_hours {
                let point = inner_point_for_duration(&m, cfg.steps(hours), cfg.horizon)?;
                let run = validate_inner_block(&m, &setup, &units, &point, cfg.horizon)?;
                let r = &run.report;
                run.write(&self.out, &self.stem(&format!("block_{hours}h")))?;
                println!(
                    "{hours} h block: P_hold {:.1} kW, T_hold {} steps, hold fraction {:.3}, RMSE {:.4}, {} of {} units actuated{}",
                    r.p_hold,
                    r.t_hold,
                    r.hold_satisfied_fraction,
                    r.rmse,
                    r.actuated_units,
                    r.requested_units,
                    if r.degraded { " (degraded)" } else { "" }
                );
                if r.degraded {
                    degraded
                        .push(format!("{hours} h block actuated {} of {} units", r.actuated_units, r.requested_units));
                }
            }
        }
        if degraded.is_empty() {
            Ok(())
        } else {
            Err(Failure::Degraded(degraded.join("; ")))
        }
    }

    pub fn sweep_setpoint(&self) -> Result<(), Failure> {
        let cfg = &self.cfg;
        let sets = sweep_setpoint(&cfg.model_spec(false)?, &cfg.sweep.setpoints, cfg.p_hold_points)?;
        for (t, set) in cfg.sweep.setpoints.iter().zip(&sets) {
            set.write(&self.out, &self.stem(&format!("setpoint_{t:.1}")))?;
        }
        let monotone = (0..sets[0].boundary.len()).all(|i| {
            let p = sets[0].boundary[i].p_hold;
            let ts: Vec<usize> =
                sets.iter().filter_map(|s| s.boundary.iter().find(|q| q.p_hold == p).map(|q| q.t_hold)).collect();
            ts.len() == sets.len() && ts.windows(2).all(|w| w[0] <= w[1])
        });
        write_json(
            &self.path("sweep_setpoint.json"),
            &serde_json::json!({ "setpoints": cfg.sweep.setpoints, "t_hold_monotone": monotone }),
        )?;
        println!("T_hold monotone across setpoints {:?}: {monotone}", cfg.sweep.setpoints);
        Ok(())
    }

    pub fn sweep_precool(&self) -> Result<(), Failure> {
        let cfg = &self.cfg;
        let c = precool_compare(&cfg.model_spec(false)?, cfg.sweep.precool_t_set, cfg.p_hold_points)?;
        c.baseline.write(&self.out, &self.stem("baseline"))?;
        c.precooled.write(&self.out, &self.stem("precooled"))?;
        write_json(
            &self.path("precool.json"),
            &serde_json::json!({
                "baseline_t_set": cfg.t_set,
                "precooled_t_set": cfg.sweep.precool_t_set,
                "baseline_p_nom_kW": c.baseline.p_nom,
                "precooled_p_nom_kW": c.precooled.p_nom,
                "dominates": c.dominates,
            }),
        )?;
        println!(
            "P_nom {:.1} -> {:.1} kW, pre-cooled frontier dominates: {}",
            c.baseline.p_nom, c.precooled.p_nom, c.dominates
        );
        Ok(())
    }

    pub fn selfcheck(&self) -> Result<(), Failure> {
        let m = self.model(true)?;
        let checks = selfcheck::run_all(&m, &self.cfg.fleet_spec(), self.cfg.p_hold_points)?;
        write_json(&self.path("selfcheck.json"), &checks)?;
        for c in &checks {
            println!(
                "{:<24} {}  {:.3e} (limit {:.1e})  {}",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.value,
                c.limit,
                c.detail
            );
        }
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Numerical(format!("invariants failed: {}", failed.join(", "))))
        }
    }
}

/// Every `lower` value at an `upper` hold length is at most the upper value.
fn sandwiched(lower: &ReachHoldSet, upper: &ReachHoldSet) -> bool {
    let tol = 1e-6 * upper.p_on;
    upper.boundary.iter().all(|q| query_p_at_t(&lower.boundary, q.t_hold) <= q.p_hold + tol)
}

/// At most `points` values spread evenly over `grid`, always keeping its last value.
fn thin(grid: &[usize], points: usize) -> Vec<usize> {
    if grid.len() <= points || points == 0 {
        return grid.to_vec();
    }
    let mut out: Vec<usize> = (0..points).map(|i| grid[i * (grid.len() - 1) / (points - 1).max(1)]).collect();
    out.dedup();
    out
}
