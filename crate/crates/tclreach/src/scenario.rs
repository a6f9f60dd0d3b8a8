//! JSON scenario configuration.
//!
//! Every field except the seeds has a default; a config that omits a seed is
//! rejected at load time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etp::{FleetSpec, TclParams};
use crate::markov::{BinGrid, Estimation};
use crate::reachhold::{ModelSpec, Regime};
use crate::validation::MicroSetup;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t_min: 18.0, t_max: 24.0, n: 120 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    #[serde(default = "default_units")]
    pub n_units: usize,
    /// Relative half-width of the uniform parameter spread.
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// Seed for sampling unit parameters and initial states.
    pub seed: u64,
    /// Seed for choosing units inside a bin when applying a plan.
    pub selection_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_setpoints")]
    pub setpoints: Vec<f64>,
    /// Starting setpoint of the pre-cooled fleet.
    #[serde(default = "default_precool")]
    pub precool_t_set: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { setpoints: default_setpoints(), precool_t_set: default_precool() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Target hold durations for the validation blocks (hours).
    #[serde(default = "default_hold_hours")]
    pub hold_hours: Vec<f64>,
    /// Hold tolerance as a fraction of P_ON.
    #[serde(default = "default_tol")]
    pub tol_frac: f64,
    /// Length of the step-response comparison (hours).
    #[serde(default = "default_response_hours")]
    pub response_hours: f64,
    /// Units whose states are written for the step response.
    #[serde(default = "default_traced")]
    pub traced_units: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            hold_hours: default_hold_hours(),
            tol_frac: default_tol(),
            response_hours: default_response_hours(),
            traced_units: default_traced(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateConfig {
    /// Frontier CSVs written by `reachhold`, combined left to right.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub tcl: TclParams,
    pub fleet: FleetConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_dt_minutes")]
    pub dt_minutes: f64,
    #[serde(default = "default_t_set")]
    pub t_set: f64,
    #[serde(default = "default_t_set_new")]
    pub t_set_new: f64,
    #[serde(default = "default_deadband")]
    pub deadband: f64,
    #[serde(default = "default_t_amb")]
    pub t_amb: f64,
    /// Longest hold considered (steps).
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_p_points")]
    pub p_hold_points: usize,
    #[serde(default = "default_t_points")]
    pub t_hold_points: usize,
    /// Largest `T_hold · 2N` the exact LP is attempted for.
    #[serde(default = "default_exact_vars")]
    pub exact_max_vars: usize,
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub aggregate: AggregateConfig,
}

fn default_samples() -> usize {
    2000
}
fn default_units() -> usize {
    1000
}
fn default_heterogeneity() -> f64 {
    0.1
}
fn default_warmup() -> usize {
    240
}
fn default_setpoints() -> Vec<f64> {
    vec![21.0, 21.5, 22.0]
}
fn default_precool() -> f64 {
    19.0
}
fn default_hold_hours() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_tol() -> f64 {
    0.05
}
fn default_response_hours() -> f64 {
    8.0
}
fn default_traced() -> usize {
    20
}
fn default_dt_minutes() -> f64 {
    1.0
}
fn default_t_set() -> f64 {
    20.0
}
fn default_t_set_new() -> f64 {
    22.0
}
fn default_deadband() -> f64 {
    1.0
}
fn default_t_amb() -> f64 {
    32.0
}
fn default_horizon() -> usize {
    600
}
fn default_p_points() -> usize {
    50
}
fn default_t_points() -> usize {
    12
}
fn default_exact_vars() -> usize {
    2400
}

impl ScenarioConfig {
    /// The shipped defaults with the given seeds.
    pub fn with_seeds(estimation_seed: u64, fleet_seed: u64, selection_seed: u64) -> Self {
        Self {
            tcl: TclParams::default(),
            fleet: FleetConfig {
                n_units: default_units(),
                heterogeneity: default_heterogeneity(),
                warmup_steps: default_warmup(),
                seed: fleet_seed,
                selection_seed,
            },
            grid: GridConfig::default(),
            dt_minutes: default_dt_minutes(),
            t_set: default_t_set(),
            t_set_new: default_t_set_new(),
            deadband: default_deadband(),
            t_amb: default_t_amb(),
            horizon: default_horizon(),
            p_hold_points: default_p_points(),
            t_hold_points: default_t_points(),
            exact_max_vars: default_exact_vars(),
            estimation: EstimationConfig { n_samples: default_samples(), seed: estimation_seed },
            sweep: SweepConfig::default(),
            validation: ValidationConfig::default(),
            aggregate: AggregateConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfiguration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON of the effective configuration.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Replaces every seed with `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.estimation.seed = seed;
        self.fleet.seed = seed;
        self.fleet.selection_seed = seed;
    }

    pub fn dt_h(&self) -> f64 {
        self.dt_minutes / 60.0
    }

    pub fn bin_grid(&self) -> Result<BinGrid> {
        BinGrid::new(self.grid.t_min, self.grid.t_max, self.grid.n)
            .map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    pub fn regime(&self) -> Result<Regime> {
        Ok(Regime {
            t_set: self.t_set,
            t_set_new: self.t_set_new,
            deadband: self.deadband,
            t_amb: self.t_amb,
            dt_h: self.dt_h(),
            grid: self.bin_grid()?,
        })
    }

    pub fn fleet_spec(&self) -> FleetSpec {
        FleetSpec {
            n_units: self.fleet.n_units,
            nominal: self.tcl,
            heterogeneity: self.fleet.heterogeneity,
            deadband: self.deadband,
            t_amb: self.t_amb,
            t_set: self.t_set,
            seed: self.fleet.seed,
        }
    }

    pub fn micro_setup(&self) -> MicroSetup {
        MicroSetup {
            fleet: self.fleet_spec(),
            warmup_steps: self.fleet.warmup_steps,
            selection_seed: self.fleet.selection_seed,
            tol_frac: self.validation.tol_frac,
        }
    }

    /// Model of the configured fleet; the Markov chain uses the nominal parameters.
    pub fn model_spec(&self, with_outer: bool) -> Result<ModelSpec> {
        Ok(ModelSpec {
            params: self.tcl,
            regime: self.regime()?,
            p_on: self.fleet_spec().capacity(),
            estimation: Estimation { n_samples: self.estimation.n_samples, seed: self.estimation.seed },
            horizon: self.horizon,
            with_outer,
        })
    }

    /// Steps closest to `hours`.
    pub fn steps(&self, hours: f64) -> usize {
        (hours / self.dt_h()).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        self.tcl.validate().map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        self.fleet_spec().validate().map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        if !(self.dt_minutes > 0.0) || !self.dt_minutes.is_finite() {
            return bad(format!("dt_minutes must be positive, got {}", self.dt_minutes));
        }
        if self.horizon == 0 || self.p_hold_points == 0 || self.t_hold_points == 0 || self.estimation.n_samples == 0 {
            return bad("horizon, p_hold_points, t_hold_points and n_samples must be positive".into());
        }
        let r = self.regime()?;
        r.validate()?;
        let grid = r.grid;
        for &t in &self.sweep.setpoints {
            grid.check_deadband(t, self.deadband)?;
        }
        grid.check_deadband(self.sweep.precool_t_set, self.deadband)?;
        let v = &self.validation;
        if !(v.tol_frac >= 0.0) || v.hold_hours.iter().any(|h| !(*h > 0.0)) || !(v.response_hours > 0.0) {
            return bad("validation hold_hours and response_hours must be positive and tol_frac nonnegative".into());
        }
        if let Some(h) = v.hold_hours.iter().find(|&&h| self.steps(h) > self.horizon) {
            return bad(format!("hold of {h} h exceeds the horizon of {} steps", self.horizon));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"fleet": {"seed": 5, "selection_seed": 6}, "estimation": {"seed": 7}}"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c, ScenarioConfig::with_seeds(7, 5, 6));
        assert_eq!(c.model_spec(false).unwrap().p_on, 3000.0);
    }

    #[test]
    fn missing_seed_is_a_load_error() {
        for text in [
            r#"{"fleet": {"seed": 5, "selection_seed": 6}, "estimation": {}}"#,
            r#"{"fleet": {"seed": 5}, "estimation": {"seed": 7}}"#,
            r#"{"estimation": {"seed": 7}}"#,
        ] {
            assert!(matches!(ScenarioConfig::from_json(text), Err(Error::InvalidConfiguration(_))), "{text}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = ScenarioConfig::from_json(MINIMAL).unwrap();
        c.override_seeds(99);
        let back = ScenarioConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.fleet.selection_seed, 99);
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            r#""deadband": 10.0"#,
            r#""tcl": {"c_a": -1.0}"#,
            r#""unknown": 1"#,
            r#""sweep": {"setpoints": [30.0]}"#,
            r#""validation": {"hold_hours": [11.0]}"#,
        ];
        for extra in cases {
            let text =
                format!(r#"{{"fleet": {{"seed": 5, "selection_seed": 6}}, "estimation": {{"seed": 7}}, {extra}}}"#);
            assert!(matches!(ScenarioConfig::from_json(&text), Err(Error::InvalidConfiguration(_))), "{extra}");
        }
    }
}
