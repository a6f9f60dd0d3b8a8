//! Second-order equivalent thermal parameter (ETP) model of a single cooling TCL
//! and an agent-based fleet simulator built on it.
//!
//! Temperatures are in °C, capacities in kWh/°C, conductances in kW/°C, heat
//! flows and power in kW, and time in hours.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TclParams {
    /// Air thermal mass (kWh/°C).
    pub c_a: f64,
    /// Solid mass thermal mass (kWh/°C).
    pub c_m: f64,
    /// Envelope conductance (kW/°C).
    pub u_a: f64,
    /// Air to mass conductance (kW/°C).
    pub h_m: f64,
    /// Net heat gain to the air while the compressor runs (kW, negative when cooling).
    pub q_a_on: f64,
    /// Net heat gain to the air while the compressor is off (kW).
    pub q_a_off: f64,
    /// Heat flux into the solid mass (kW).
    pub q_m: f64,
    /// Electrical draw while ON (kW).
    pub p_rate: f64,
}

impl Default for TclParams {
    fn default() -> Self {
        Self { c_a: 3.6, c_m: 0.4, u_a: 0.2, h_m: 20.0, q_a_on: -10.0, q_a_off: 0.0, q_m: 0.0, p_rate: 3.0 }
    }
}

impl TclParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c_a, self.c_m, self.u_a, self.h_m, self.q_a_on, self.q_a_off, self.q_m, self.p_rate];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("TCL parameters must be finite");
        }
        if self.c_a <= 0.0 || self.c_m <= 0.0 || self.u_a <= 0.0 || self.h_m <= 0.0 || self.p_rate <= 0.0 {
            return invalid("C_a, C_m, U_a, H_m and P_rate must be positive");
        }
        if self.q_a_on >= self.q_a_off {
            return invalid("a cooling TCL needs Q_a_on < Q_a_off");
        }
        Ok(())
    }

    /// Long-run ON fraction from the whole-house energy balance at air temperature `t_set`.
    pub fn nominal_duty(&self, t_set: f64, t_amb: f64) -> f64 {
        let gain = self.u_a * (t_amb - t_set) + self.q_a_off + self.q_m;
        (gain / (self.q_a_off - self.q_a_on)).clamp(0.0, 1.0)
    }

    /// Mass temperature in quasi-steady state with the air node.
    pub fn quasi_steady_mass(&self, t_a: f64) -> f64 {
        t_a + self.q_m / self.h_m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TclState {
    pub t_a: f64,
    pub t_m: f64,
    pub on: bool,
    pub t_set: f64,
}

impl TclState {
    fn is_finite(&self) -> bool {
        self.t_a.is_finite() && self.t_m.is_finite() && self.t_set.is_finite()
    }
}

type Mat2 = [[f64; 2]; 2];

/// `exp(m t)` for a 2×2 real matrix via the spectral shift `m = aI + (m - aI)`.
pub fn expm2(m: Mat2, t: f64) -> Mat2 {
    let a = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = a * a - det;
    let k = [[m[0][0] - a, m[0][1]], [m[1][0], m[1][1] - a]];
    let (c0, c1) = if disc > 0.0 {
        let s = disc.sqrt();
        let e1 = ((a + s) * t).exp();
        let e2 = ((a - s) * t).exp();
        let st = s * t;
        let c1 = if st < 1e-4 { (a * t).exp() * t * (1.0 + st * st / 6.0) } else { (e1 - e2) / (2.0 * s) };
        (0.5 * (e1 + e2), c1)
    } else if disc < 0.0 {
        let w = (-disc).sqrt();
        let ea = (a * t).exp();
        (ea * (w * t).cos(), ea * (w * t).sin() / w)
    } else {
        let ea = (a * t).exp();
        (ea, ea * t)
    };
    [[c0 + c1 * k[0][0], c1 * k[0][1]], [c1 * k[1][0], c0 + c1 * k[1][1]]]
}

/// Exact one-step map `y -> y* + exp(M dt)(y - y*)` for each compressor mode.
#[derive(Clone, Copy, Debug)]
pub struct Propagator {
    exp: [Mat2; 2],
    fixed: [[f64; 2]; 2],
}

impl Propagator {
    pub fn new(params: &TclParams, t_amb: f64, dt_h: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_h > 0.0) || !dt_h.is_finite() || !t_amb.is_finite() {
            return invalid("dt must be positive and T_amb finite");
        }
        let m = [
            [-(params.u_a + params.h_m) / params.c_a, params.h_m / params.c_a],
            [params.h_m / params.c_m, -params.h_m / params.c_m],
        ];
        let e = expm2(m, dt_h);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let mut fixed = [[0.0; 2]; 2];
        for (mode, q_a) in [params.q_a_off, params.q_a_on].into_iter().enumerate() {
            let b = [(params.u_a * t_amb + q_a) / params.c_a, params.q_m / params.c_m];
            // y* = -M^{-1} b
            fixed[mode] = [-(m[1][1] * b[0] - m[0][1] * b[1]) / det, -(-m[1][0] * b[0] + m[0][0] * b[1]) / det];
        }
        Ok(Self { exp: [e, e], fixed })
    }

    /// Advance `(T_a, T_m)` with the mode held fixed.
    pub fn advance(&self, t_a: f64, t_m: f64, on: bool) -> (f64, f64) {
        let mode = on as usize;
        let e = &self.exp[mode];
        let y = self.fixed[mode];
        let d0 = t_a - y[0];
        let d1 = t_m - y[1];
        (y[0] + e[0][0] * d0 + e[0][1] * d1, y[1] + e[1][0] * d0 + e[1][1] * d1)
    }

    /// One full step: integrate, then apply the thermostat once.
    pub fn step(&self, state: &TclState, deadband: f64) -> TclState {
        let (t_a, t_m) = self.advance(state.t_a, state.t_m, state.on);
        TclState { t_a, t_m, on: thermostat(state.on, t_a, state.t_set, deadband), t_set: state.t_set }
    }
}

/// Hysteresis of a cooling thermostat.
pub fn thermostat(on: bool, t_a: f64, t_set: f64, deadband: f64) -> bool {
    if t_a >= t_set + 0.5 * deadband {
        true
    } else if t_a <= t_set - 0.5 * deadband {
        false
    } else {
        on
    }
}

pub fn step_tcl(state: &TclState, params: &TclParams, t_amb: f64, deadband: f64, dt_h: f64) -> Result<TclState> {
    if !state.is_finite() {
        return invalid("non-finite TCL state");
    }
    if !(deadband > 0.0) {
        return invalid("deadband must be positive");
    }
    Ok(Propagator::new(params, t_amb, dt_h)?.step(state, deadband))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub n_units: usize,
    pub nominal: TclParams,
    /// Relative half-width of the uniform perturbation applied to every parameter.
    pub heterogeneity: f64,
    pub deadband: f64,
    pub t_amb: f64,
    /// Setpoint every unit starts at.
    pub t_set: f64,
    pub seed: u64,
}

impl FleetSpec {
    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        if self.n_units == 0 {
            return invalid("fleet needs at least one unit");
        }
        if !(0.0..1.0).contains(&self.heterogeneity) {
            return invalid("heterogeneity must lie in [0, 1)");
        }
        if !(self.deadband > 0.0) {
            return invalid("deadband must be positive");
        }
        if !self.t_amb.is_finite() || !self.t_set.is_finite() {
            return invalid("T_amb and T_set must be finite");
        }
        Ok(())
    }

    /// Installed capacity Σ P_rate of the nominal fleet (kW).
    pub fn capacity(&self) -> f64 {
        self.n_units as f64 * self.nominal.p_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unit {
    pub params: TclParams,
    pub state: TclState,
}

pub fn sample_fleet(spec: &FleetSpec) -> Result<Vec<Unit>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let duty = spec.nominal.nominal_duty(spec.t_set, spec.t_amb);
    let h = spec.heterogeneity;
    let mut units = Vec::with_capacity(spec.n_units);
    for _ in 0..spec.n_units {
        let mut jitter = |v: f64| {
            if h == 0.0 {
                v
            } else {
                v * (1.0 + h * rng.gen_range(-1.0..=1.0))
            }
        };
        let n = &spec.nominal;
        let params = TclParams {
            c_a: jitter(n.c_a),
            c_m: jitter(n.c_m),
            u_a: jitter(n.u_a),
            h_m: jitter(n.h_m),
            q_a_on: jitter(n.q_a_on),
            q_a_off: jitter(n.q_a_off),
            q_m: jitter(n.q_m),
            p_rate: jitter(n.p_rate),
        };
        params.validate()?;
        let t_a = spec.t_set + spec.deadband * (rng.gen::<f64>() - 0.5);
        let on = rng.gen::<f64>() < duty;
        units.push(Unit { params, state: TclState { t_a, t_m: t_a, on, t_set: spec.t_set } });
    }
    Ok(units)
}

/// A fleet advanced in lockstep with cached per-unit propagators.
#[derive(Clone, Debug)]
pub struct FleetSim {
    states: Vec<TclState>,
    props: Vec<Propagator>,
    p_rate: Vec<f64>,
    deadband: f64,
    dt_h: f64,
}

impl FleetSim {
    pub fn new(units: &[Unit], t_amb: f64, deadband: f64, dt_h: f64) -> Result<Self> {
        if units.is_empty() {
            return invalid("empty fleet");
        }
        if !(deadband > 0.0) {
            return invalid("deadband must be positive");
        }
        let props = units.iter().map(|u| Propagator::new(&u.params, t_amb, dt_h)).collect::<Result<Vec<_>>>()?;
        if units.iter().any(|u| !u.state.is_finite()) {
            return invalid("non-finite TCL state");
        }
        Ok(Self {
            states: units.iter().map(|u| u.state).collect(),
            props,
            p_rate: units.iter().map(|u| u.params.p_rate).collect(),
            deadband,
            dt_h,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt_h(&self) -> f64 {
        self.dt_h
    }

    pub fn states(&self) -> &[TclState] {
        &self.states
    }

    pub fn set_setpoint(&mut self, unit: usize, t_set: f64) {
        self.states[unit].t_set = t_set;
    }

    pub fn power(&self) -> f64 {
        self.states.iter().zip(&self.p_rate).filter(|(s, _)| s.on).map(|(_, p)| p).sum()
    }

    pub fn step(&mut self) {
        let deadband = self.deadband;
        par::for_each_zip(&mut self.states, &self.props, |s, p| *s = p.step(s, deadband));
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetpointChange {
    pub step: usize,
    pub unit: usize,
    pub t_set: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FleetTrace {
    /// Aggregate power at steps 0..=horizon (kW).
    pub power: Vec<f64>,
    /// Per-step unit states when recording was requested.
    pub states: Option<Vec<Vec<TclState>>>,
}

pub fn simulate_fleet(
    units: &[Unit],
    t_amb: f64,
    deadband: f64,
    dt_h: f64,
    horizon: usize,
    schedule: &[SetpointChange],
    record_states: bool,
) -> Result<FleetTrace> {
    let mut sim = FleetSim::new(units, t_amb, deadband, dt_h)?;
    if let Some(c) = schedule.iter().find(|c| c.step > horizon || c.unit >= units.len()) {
        return invalid(format!("setpoint change at step {} for unit {} is out of range", c.step, c.unit));
    }
    let mut order: Vec<&SetpointChange> = schedule.iter().collect();
    order.sort_by_key(|c| (c.step, c.unit));
    let mut next = 0;
    let mut trace = FleetTrace { power: Vec::with_capacity(horizon + 1), states: record_states.then(Vec::new) };
    for k in 0..=horizon {
        while next < order.len() && order[next].step == k {
            sim.set_setpoint(order[next].unit, order[next].t_set);
            next += 1;
        }
        trace.power.push(sim.power());
        if let Some(states) = trace.states.as_mut() {
            states.push(sim.states().to_vec());
        }
        if k < horizon {
            sim.step();
        }
    }
    Ok(trace)
}

/// Writes recorded states as `step,unit,T_a,T_m,on,T_set`.
pub fn write_state_trace(path: &Path, states: &[Vec<TclState>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,unit,T_a,T_m,on,T_set")?;
    for (k, row) in states.iter().enumerate() {
        for (i, s) in row.iter().enumerate() {
            writeln!(out, "{k},{i},{:.6},{:.6},{},{:.3}", s.t_a, s.t_m, s.on as u8, s.t_set)?;
        }
    }
    out.flush().map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series_expm(m: Mat2, t: f64) -> Mat2 {
        // Scaling and squaring with a long Taylor series.
        let s = 12;
        let h = t / f64::powi(2.0, s);
        let a = [[m[0][0] * h, m[0][1] * h], [m[1][0] * h, m[1][1] * h]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        let mut sum = term;
        for n in 1..30 {
            term = mul(term, a);
            for r in 0..2 {
                for c in 0..2 {
                    term[r][c] /= n as f64;
                    sum[r][c] += term[r][c];
                }
            }
        }
        for _ in 0..s {
            sum = mul(sum, sum);
        }
        sum
    }

    fn mul(a: Mat2, b: Mat2) -> Mat2 {
        let mut c = [[0.0; 2]; 2];
        for r in 0..2 {
            for k in 0..2 {
                for q in 0..2 {
                    c[r][q] += a[r][k] * b[k][q];
                }
            }
        }
        c
    }

    #[test]
    fn expm_matches_series() {
        let p = TclParams::default();
        let m = [[-(p.u_a + p.h_m) / p.c_a, p.h_m / p.c_a], [p.h_m / p.c_m, -p.h_m / p.c_m]];
        for t in [1.0 / 3600.0, 1.0 / 60.0, 0.5] {
            let a = expm2(m, t);
            let b = series_expm(m, t);
            for r in 0..2 {
                for c in 0..2 {
                    assert_abs_diff_eq!(a[r][c], b[r][c], epsilon = 1e-10);
                }
            }
        }
        let rot = [[0.0, 1.0], [-1.0, 0.0]];
        let a = expm2(rot, 0.7);
        assert_abs_diff_eq!(a[0][0], 0.7f64.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(a[0][1], 0.7f64.sin(), epsilon = 1e-14);
        let jordan = [[-1.0, 1.0], [0.0, -1.0]];
        let a = expm2(jordan, 2.0);
        assert_abs_diff_eq!(a[0][1], 2.0 * (-2.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = TclParams::default();
        let s = TclState { t_a: 20.0, t_m: 20.0, on: false, t_set: 20.0 };
        let next = step_tcl(&s, &p, 20.0, 1.0, 1.0 / 60.0).unwrap();
        assert_abs_diff_eq!(next.t_a, 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.t_m, 20.0, epsilon = 1e-12);
        assert!(!next.on);
    }

    #[test]
    fn off_unit_warms_when_ambient_is_hotter() {
        let p = TclParams::default();
        let s = TclState { t_a: 20.0, t_m: 20.0, on: false, t_set: 20.0 };
        let next = step_tcl(&s, &p, 32.0, 1.0, 1.0 / 60.0).unwrap();
        assert!(next.t_a > 20.0);
    }

    #[test]
    fn non_finite_state_rejected() {
        let p = TclParams::default();
        let s = TclState { t_a: f64::NAN, t_m: 20.0, on: false, t_set: 20.0 };
        assert!(matches!(step_tcl(&s, &p, 32.0, 1.0, 1.0 / 60.0), Err(Error::InvalidInput(_))));
        let mut bad = p;
        bad.c_a = f64::INFINITY;
        let s = TclState { t_a: 20.0, t_m: 20.0, on: false, t_set: 20.0 };
        assert!(step_tcl(&s, &bad, 32.0, 1.0, 1.0 / 60.0).is_err());
    }

    fn duty_cycle(dt_h: f64, hours: f64) -> (f64, f64, f64) {
        let p = TclParams::default();
        let prop = Propagator::new(&p, 32.0, dt_h).unwrap();
        let mut s = TclState { t_a: 20.0, t_m: 20.0, on: false, t_set: 20.0 };
        let warm = (10.0 / dt_h) as usize;
        for _ in 0..warm {
            s = prop.step(&s, 1.0);
        }
        let n = (hours / dt_h) as usize;
        let (mut on, mut lo, mut hi) = (0usize, f64::MAX, f64::MIN);
        for _ in 0..n {
            s = prop.step(&s, 1.0);
            on += s.on as usize;
            lo = lo.min(s.t_a);
            hi = hi.max(s.t_a);
        }
        (on as f64 / n as f64, lo, hi)
    }

    #[test]
    fn single_unit_duty_matches_fine_reference() {
        let (d60, lo, hi) = duty_cycle(1.0 / 60.0, 200.0);
        let (d1, lo1, hi1) = duty_cycle(1.0 / 3600.0, 200.0);
        assert!((d60 - d1).abs() < 0.02, "duty {d60} vs {d1}");
        // One minute of drift at the fastest ON cooling rate is well under 0.05 °C.
        assert!(lo > 19.45 && hi < 20.55, "band [{lo}, {hi}]");
        assert!(lo1 > 19.49 && hi1 < 20.51);
    }

    #[test]
    fn homogeneous_fleet_shares_nominal_params() {
        let spec = FleetSpec {
            n_units: 50,
            nominal: TclParams::default(),
            heterogeneity: 0.0,
            deadband: 1.0,
            t_amb: 32.0,
            t_set: 20.0,
            seed: 3,
        };
        let fleet = sample_fleet(&spec).unwrap();
        assert!(fleet.iter().all(|u| u.params == spec.nominal));
        assert!(fleet.iter().all(|u| (u.state.t_a - 20.0).abs() <= 0.5 && u.state.t_m == u.state.t_a));
        assert_eq!(fleet, sample_fleet(&spec).unwrap());
    }

    #[test]
    fn heterogeneous_sample_means_near_nominal() {
        let spec = FleetSpec {
            n_units: 1000,
            nominal: TclParams::default(),
            heterogeneity: 0.1,
            deadband: 1.0,
            t_amb: 32.0,
            t_set: 20.0,
            seed: 11,
        };
        let fleet = sample_fleet(&spec).unwrap();
        let n = fleet.len() as f64;
        let mean = |f: fn(&TclParams) -> f64| fleet.iter().map(|u| f(&u.params)).sum::<f64>() / n;
        let nom = spec.nominal;
        for (m, v) in [
            (mean(|p| p.c_a), nom.c_a),
            (mean(|p| p.c_m), nom.c_m),
            (mean(|p| p.u_a), nom.u_a),
            (mean(|p| p.h_m), nom.h_m),
            (mean(|p| p.q_a_on), nom.q_a_on),
            (mean(|p| p.p_rate), nom.p_rate),
        ] {
            assert!((m / v - 1.0).abs() < 0.01, "{m} vs {v}");
        }
    }

    #[test]
    fn idle_fleet_draws_nothing() {
        let nominal = TclParams { q_a_off: 0.0, ..TclParams::default() };
        let spec =
            FleetSpec { n_units: 20, nominal, heterogeneity: 0.0, deadband: 1.0, t_amb: 15.0, t_set: 20.0, seed: 1 };
        let mut fleet = sample_fleet(&spec).unwrap();
        for u in &mut fleet {
            u.state.on = false;
        }
        let trace = simulate_fleet(&fleet, 15.0, 1.0, 1.0 / 60.0, 300, &[], false).unwrap();
        assert!(trace.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn schedule_out_of_range_and_empty_fleet_rejected() {
        assert!(simulate_fleet(&[], 32.0, 1.0, 1.0 / 60.0, 10, &[], false).is_err());
        let spec = FleetSpec {
            n_units: 2,
            nominal: TclParams::default(),
            heterogeneity: 0.0,
            deadband: 1.0,
            t_amb: 32.0,
            t_set: 20.0,
            seed: 1,
        };
        let fleet = sample_fleet(&spec).unwrap();
        let bad = [SetpointChange { step: 11, unit: 0, t_set: 22.0 }];
        assert!(simulate_fleet(&fleet, 32.0, 1.0, 1.0 / 60.0, 10, &bad, false).is_err());
    }

    #[test]
    fn state_trace_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let s = TclState { t_a: 20.0, t_m: 20.0, on: true, t_set: 20.0 };
        write_state_trace(&path, &[vec![s, s]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,unit,T_a,T_m,on,T_set"));
        assert_eq!(lines.next(), Some("0,0,20.000000,20.000000,1,20.000"));
    }
}
