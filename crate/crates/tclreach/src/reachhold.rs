//! Reach-and-hold sets of a TCL fleet: the pairs `(P_hold, T_hold)` such that a
//! demand reduction of at least `P_hold` can be held for `T_hold` steps by
//! moving units to a new setpoint.
//!
//! Three characterisations are provided: an exact LP over per-bin actuation
//! (small instances only), an inner approximation restricted to actuation
//! proportional to the stationary distribution, and an outer approximation
//! built on a fictitious fleet whose deadband is squeezed to a single bin.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::etp::TclParams;
use crate::lp::{self, LinearProgram, LpStatus};
use crate::markov::{
    aggregate_power, estimate_transition_matrix, stationary_distribution, stationary_from, step_population, BinGrid,
    Estimation, OutputVector, PopulationState, Stationary, TransitionMatrix,
};
use crate::par;

/// Largest `T_hold · 2N` accepted by the LP formulations.
pub const LP_SIZE_CAP: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub t_set: f64,
    pub t_set_new: f64,
    pub deadband: f64,
    pub t_amb: f64,
    pub dt_h: f64,
    pub grid: BinGrid,
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        if !(self.deadband > 0.0) || !(self.dt_h > 0.0) {
            return Err(Error::InvalidConfiguration("deadband and dt must be positive".into()));
        }
        self.grid.check_deadband(self.t_set, self.deadband)?;
        self.grid.check_deadband(self.t_set_new, self.deadband)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Inner,
    Outer,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Inner => "inner",
            Method::Outer => "outer",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Method::Exact),
            "inner" => Ok(Method::Inner),
            "outer" => Ok(Method::Outer),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachHoldPoint {
    /// Demand reduction (kW).
    pub p_hold: f64,
    /// Hold duration in model steps.
    pub t_hold: usize,
    pub method: Method,
    /// True when the hold only ended because the horizon did.
    #[serde(default)]
    pub horizon_limited: bool,
}

/// Response kernels `h_k = Aᵀᵏ c_ON` for the nominal, actuated and squeezed systems, `k = 0..=K`.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub h: Vec<Array1<f64>>,
    pub h_a: Vec<Array1<f64>>,
    pub h_out: Option<Vec<Array1<f64>>>,
}

impl Kernels {
    pub fn horizon(&self) -> usize {
        self.h.len() - 1
    }
}

fn kernel_sequence(a: &TransitionMatrix, c: &OutputVector, horizon: usize) -> Vec<Array1<f64>> {
    let at = a.entries.t();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(c.c_on.clone());
    for k in 0..horizon {
        let next = at.dot(&out[k]);
        out.push(next);
    }
    out
}

pub fn response_kernels(
    a: &TransitionMatrix,
    a_a: &TransitionMatrix,
    a_out: Option<&TransitionMatrix>,
    c: &OutputVector,
    horizon: usize,
) -> Result<Kernels> {
    let n = c.c_on.len();
    if a.dim() != n || a_a.dim() != n || a_out.is_some_and(|m| m.dim() != n) {
        return invalid("kernels: matrices and output vector differ in dimension");
    }
    Ok(Kernels {
        h: kernel_sequence(a, c, horizon),
        h_a: kernel_sequence(a_a, c, horizon),
        h_out: a_out.map(|m| kernel_sequence(m, c, horizon)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControlPlan {
    /// Per-step actuation fractions over all `2N` states.
    PerBin(Vec<Array1<f64>>),
    /// `u[k] = α[k] x_0`.
    Proportional { alpha: Vec<f64>, x0: Array1<f64> },
}

impl ControlPlan {
    pub fn len(&self) -> usize {
        match self {
            ControlPlan::PerBin(u) => u.len(),
            ControlPlan::Proportional { alpha, .. } => alpha.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            ControlPlan::PerBin(u) => u.first().map(|v| v.len()),
            ControlPlan::Proportional { x0, .. } => Some(x0.len()),
        }
    }

    /// Actuation at step `k`; zero past the end of the plan.
    pub fn u(&self, k: usize, dim: usize) -> Array1<f64> {
        match self {
            ControlPlan::PerBin(u) => u.get(k).cloned().unwrap_or_else(|| Array1::zeros(dim)),
            ControlPlan::Proportional { alpha, x0 } => match alpha.get(k) {
                Some(&a) => x0 * a,
                None => Array1::zeros(dim),
            },
        }
    }

    /// Σ_k 1ᵀu[k].
    pub fn budget(&self) -> f64 {
        match self {
            ControlPlan::PerBin(u) => u.iter().map(|v| v.sum()).sum(),
            ControlPlan::Proportional { alpha, x0 } => alpha.iter().sum::<f64>() * x0.sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoldResponse {
    /// ΔP_agg[k] for k = 0..=K (kW).
    pub delta_p: Vec<f64>,
    pub p_nom: f64,
}

/// ΔP_agg[k] = Σ_{n<k} (h_{k−n} − h_{a,k−n})ᵀ u[n], assuming the fleet starts stationary.
pub fn delta_p(plan: &ControlPlan, kernels: &Kernels, p_nom: f64, horizon: usize) -> Result<HoldResponse> {
    if horizon > kernels.horizon() || plan.len() > kernels.horizon() {
        return invalid(format!(
            "plan of {} steps over horizon {horizon} exceeds kernel horizon {}",
            plan.len(),
            kernels.horizon()
        ));
    }
    let dim = kernels.h[0].len();
    if plan.dim().is_some_and(|d| d != dim) {
        return invalid("plan dimension differs from kernels");
    }
    let mut out = vec![0.0; horizon + 1];
    match plan {
        ControlPlan::PerBin(u) => {
            for (n, un) in u.iter().enumerate() {
                if un.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for k in n + 1..=horizon {
                    let m = k - n;
                    out[k] += kernels.h[m].dot(un) - kernels.h_a[m].dot(un);
                }
            }
        }
        ControlPlan::Proportional { alpha, x0 } => {
            let w: Vec<f64> = (0..=horizon).map(|m| kernels.h[m].dot(x0) - kernels.h_a[m].dot(x0)).collect();
            for (n, &a) in alpha.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for k in n + 1..=horizon {
                    out[k] += a * w[k - n];
                }
            }
        }
    }
    Ok(HoldResponse { delta_p: out, p_nom })
}

/// Inputs needed to build a fleet model for one regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: TclParams,
    pub regime: Regime,
    /// Installed fleet capacity P_ON (kW).
    pub p_on: f64,
    pub estimation: Estimation,
    /// Longest hold considered (steps).
    pub horizon: usize,
    /// Also build the squeezed system used by the outer approximation.
    pub with_outer: bool,
}

/// Transition matrices, stationary state and kernels of a fleet under one regime.
#[derive(Clone, Debug)]
pub struct FleetModel {
    pub spec: ModelSpec,
    pub a: TransitionMatrix,
    pub a_a: TransitionMatrix,
    pub a_out: Option<TransitionMatrix>,
    pub stationary: Stationary,
    pub x0: Array1<f64>,
    pub output: OutputVector,
    pub p_nom: f64,
    pub kernels: Kernels,
    /// g[m] = c_ON A_aᵐ x_0.
    pub g_a: Vec<f64>,
    /// Nonzero states of the squeezed system's stationary distribution.
    pub out_support: Vec<usize>,
}

fn derived(est: &Estimation, offset: u64) -> Estimation {
    Estimation { n_samples: est.n_samples, seed: est.seed.wrapping_add(offset) }
}

/// Nominal-regime transition matrix for a `ModelSpec` (shared across regimes with the same start).
pub fn nominal_matrix(spec: &ModelSpec) -> Result<TransitionMatrix> {
    let r = &spec.regime;
    estimate_transition_matrix(&spec.params, &r.grid, r.t_set, r.deadband, r.t_amb, r.dt_h, &spec.estimation)
}

/// The squeezed system: setpoint `T_set − ΔT/2` with a deadband of one bin width.
pub fn build_fictitious_system(
    params: &TclParams,
    grid: &BinGrid,
    t_set: f64,
    deadband: f64,
    t_amb: f64,
    dt_h: f64,
    est: &Estimation,
) -> Result<TransitionMatrix> {
    let narrow = grid.width();
    if narrow >= deadband {
        return Err(Error::InvalidConfiguration(format!(
            "bin width {narrow} cannot resolve a deadband narrower than {deadband}"
        )));
    }
    estimate_transition_matrix(params, grid, t_set - 0.5 * deadband, narrow, t_amb, dt_h, est)
}

/// ON-mode state of the bin containing `T_set − ΔT/2`; the colder bin on an edge.
pub fn x_out_index(grid: &BinGrid, t_set: f64, deadband: f64) -> usize {
    let t = t_set - 0.5 * deadband;
    let mut b = grid.bin(t);
    if b > 0 && (t - grid.lower_edge(b)).abs() <= 1e-9 * grid.width() {
        b -= 1;
    }
    grid.n + b
}

impl FleetModel {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let a = nominal_matrix(spec)?;
        let stationary = stationary_distribution(&a)?;
        Self::with_nominal(spec, a, stationary)
    }

    /// Builds the remaining pieces around an already estimated nominal matrix.
    pub fn with_nominal(spec: &ModelSpec, a: TransitionMatrix, stationary: Stationary) -> Result<Self> {
        let r = &spec.regime;
        r.validate()?;
        if !(spec.p_on > 0.0) {
            return Err(Error::InvalidConfiguration("fleet capacity must be positive".into()));
        }
        if spec.horizon == 0 {
            return Err(Error::InvalidConfiguration("horizon must be at least one step".into()));
        }
        let a_a = estimate_transition_matrix(
            &spec.params,
            &r.grid,
            r.t_set_new,
            r.deadband,
            r.t_amb,
            r.dt_h,
            &derived(&spec.estimation, 1),
        )?;
        let (a_out, out_support) = if spec.with_outer {
            let m = build_fictitious_system(
                &spec.params,
                &r.grid,
                r.t_set,
                r.deadband,
                r.t_amb,
                r.dt_h,
                &derived(&spec.estimation, 2),
            )?;
            let start = r.grid.deadband_start(r.t_set - 0.5 * r.deadband, r.grid.width());
            let s = stationary_from(&m.entries, &start)?;
            let support = (0..s.x.len()).filter(|&i| s.x[i] > 1e-12).collect();
            (Some(m), support)
        } else {
            (None, Vec::new())
        };
        let output = OutputVector::new(&r.grid, spec.p_on);
        let x0 = stationary.vector();
        let p_nom = output.c_on.dot(&x0);
        let kernels = response_kernels(&a, &a_a, a_out.as_ref(), &output, spec.horizon + 1)?;
        let g_a = kernels.h_a.iter().map(|h| h.dot(&x0)).collect();
        Ok(Self { spec: spec.clone(), a, a_a, a_out, stationary, x0, output, p_nom, kernels, g_a, out_support })
    }

    pub fn regime(&self) -> &Regime {
        &self.spec.regime
    }

    pub fn p_on(&self) -> f64 {
        self.spec.p_on
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    /// `points` evenly spaced values in (0, P_nom].
    pub fn p_grid(&self, points: usize) -> Vec<f64> {
        (1..=points).map(|i| self.p_nom * i as f64 / points as f64).collect()
    }

    pub fn delta_p(&self, plan: &ControlPlan, horizon: usize) -> Result<HoldResponse> {
        delta_p(plan, &self.kernels, self.p_nom, horizon)
    }

    /// Aggregate power for k = 0..=horizon by stepping the population state directly.
    pub fn propagate(&self, plan: &ControlPlan, horizon: usize) -> Result<Vec<f64>> {
        let dim = self.x0.len();
        let mut state = PopulationState::from_stationary(&self.x0);
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(aggregate_power(&state, &self.output));
        for k in 0..horizon {
            state = step_population(&state, &plan.u(k, dim), &self.a, &self.a_a)?;
            out.push(aggregate_power(&state, &self.output));
        }
        Ok(out)
    }
}

/// Lower bound on α[k] that keeps ΔP_agg[k+1] ≥ P_hold given α[0..k].
///
/// With g[m] = c_ON A_aᵐ x_0 this is
/// `(P_hold − Σ_{n<k} α[n](P_nom − g[k+1−n])) / (P_nom − g[1])`, which reduces
/// to `P_hold/P_nom + Σ_{n<k} α[n](−1 + g[k+1−n]/P_nom)` when `g[1] = 0`.
pub fn alpha_lower_bound(k: usize, alpha: &[f64], p_hold: f64, p_nom: f64, g_a: &[f64]) -> Result<f64> {
    if !(p_nom > 0.0) {
        return Err(Error::InvalidConfiguration("P_nom must be positive".into()));
    }
    if alpha.len() < k || g_a.len() < k + 2 {
        return invalid("alpha_lower_bound: history or kernel too short");
    }
    let denom = p_nom - g_a[1];
    if !(denom > 0.0) {
        return Err(Error::InvalidConfiguration("actuation produces no one-step reduction".into()));
    }
    let held: f64 = (0..k).map(|n| alpha[n] * (p_nom - g_a[k + 1 - n])).sum();
    Ok((p_hold - held) / denom)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerPoint {
    pub p_hold: f64,
    pub t_hold: usize,
    /// Step at which the actuation budget was exhausted.
    pub t_d: Option<usize>,
    pub horizon_limited: bool,
    pub alpha: Vec<f64>,
}

impl InnerPoint {
    pub fn plan(&self, x0: &Array1<f64>) -> ControlPlan {
        ControlPlan::Proportional { alpha: self.alpha.clone(), x0: x0.clone() }
    }
}

pub fn inner_point(model: &FleetModel, p_hold: f64, t_max: usize) -> Result<InnerPoint> {
    let p_nom = model.p_nom;
    let tol = 1e-12 * model.p_on();
    if !(p_hold >= 0.0) || p_hold > p_nom + tol {
        return invalid(format!("P_hold {p_hold} outside [0, P_nom = {p_nom}]"));
    }
    if t_max > model.horizon() {
        return invalid(format!("T_max {t_max} exceeds model horizon {}", model.horizon()));
    }
    let g = &model.g_a;
    let mut alpha: Vec<f64> = Vec::with_capacity(t_max + 1);
    let mut total = 0.0;
    let mut t_d = None;
    for k in 0..=t_max {
        let a = alpha_lower_bound(k, &alpha, p_hold, p_nom, g)?.max(0.0);
        if total + a >= 1.0 {
            alpha.push(1.0 - total);
            t_d = Some(k);
            break;
        }
        alpha.push(a);
        total += a;
    }
    let Some(td) = t_d else {
        return Ok(InnerPoint { p_hold, t_hold: t_max, t_d: None, horizon_limited: true, alpha });
    };
    let dp = |k: usize| -> f64 { alpha.iter().enumerate().map(|(n, &a)| a * (p_nom - g[k - n])).sum() };
    for k in td + 1..=t_max {
        if dp(k) < p_hold - tol {
            return Ok(InnerPoint { p_hold, t_hold: k - 1, t_d, horizon_limited: false, alpha });
        }
    }
    Ok(InnerPoint { p_hold, t_hold: t_max, t_d, horizon_limited: true, alpha })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    /// min over m and bins of h^x_m − (h_m − h_{a,m}) (kW).
    pub worst_margin: f64,
    pub worst_margin_rel: f64,
    pub worst_m: usize,
    pub worst_bin: usize,
    pub horizon: usize,
    pub x_out_index: usize,
    /// Number of (m, bin) pairs with negative margin.
    pub violations: usize,
    /// Steps m ≤ 10 where c_ON A_outᵐ x_out < c_ON Aᵐ x_out.
    pub squeeze_kernel_violations: Vec<usize>,
}

/// Scans `h^x_m 1 ⪰ h_m − h_{a,m}` element-wise for m = 1..=horizon, with
/// `h^x_m = (h_{out,m} − h_{a,m})ᵀ x_out`.
pub fn check_outer_condition(model: &FleetModel, horizon: usize) -> Result<ConditionReport> {
    let k = &model.kernels;
    let h_out =
        k.h_out.as_ref().ok_or_else(|| Error::InvalidInput("model was built without the squeezed system".into()))?;
    if horizon > k.horizon() {
        return invalid("condition horizon exceeds kernel horizon");
    }
    let r = model.regime();
    let xo = x_out_index(&r.grid, r.t_set, r.deadband);
    let tol = 1e-12 * model.p_on();
    let mut report = ConditionReport {
        holds: true,
        worst_margin: f64::INFINITY,
        worst_margin_rel: f64::INFINITY,
        worst_m: 0,
        worst_bin: 0,
        horizon,
        x_out_index: xo,
        violations: 0,
        squeeze_kernel_violations: Vec::new(),
    };
    for m in 1..=horizon {
        let hx = h_out[m][xo] - k.h_a[m][xo];
        for i in 0..k.h[m].len() {
            let margin = hx - (k.h[m][i] - k.h_a[m][i]);
            if margin < report.worst_margin {
                report.worst_margin = margin;
                report.worst_m = m;
                report.worst_bin = i;
            }
            if margin < -tol {
                report.violations += 1;
            }
        }
    }
    report.holds = report.violations == 0;
    report.worst_margin_rel = report.worst_margin / model.p_on();
    for m in 1..=horizon.min(10) {
        if h_out[m][xo] < k.h[m][xo] - tol {
            report.squeeze_kernel_violations.push(m);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub p_hold: f64,
    pub t_hold: usize,
    pub plan: ControlPlan,
    pub iterations: usize,
}

fn lp_error(what: &str, t: usize, status: LpStatus) -> Error {
    Error::NumericalFailure(format!("{what} LP at T_hold = {t} ended with status {status:?}"))
}

/// Maximum P_hold over per-bin plans that keep `0 ≤ u[k] ≤ x[k]`, with
/// `x[k] = Aᵏx_0 − Σ_{m<k} A^{k−m}u[m]` eliminated.
pub fn solve_exact(model: &FleetModel, t_hold: usize) -> Result<ExactSolution> {
    let dim = model.x0.len();
    if t_hold == 0 || t_hold > model.kernels.horizon() {
        return invalid("exact LP needs 1 ≤ T_hold ≤ kernel horizon");
    }
    if t_hold * dim > LP_SIZE_CAP {
        return invalid(format!("exact LP too large: T_hold·2N = {} > {LP_SIZE_CAP}", t_hold * dim));
    }
    let nv = t_hold * dim + 1;
    let p = nv - 1;
    let mut c = vec![0.0; nv];
    c[p] = 1.0;
    let mut lp = LinearProgram::new(c);
    let k = &model.kernels;
    for kk in 1..=t_hold {
        let mut row = vec![0.0; nv];
        row[p] = 1.0;
        for n in 0..kk {
            let m = kk - n;
            for i in 0..dim {
                row[n * dim + i] = -(k.h[m][i] - k.h_a[m][i]);
            }
        }
        lp.add_le(row, 0.0);
    }
    let mut powers: Vec<Array2<f64>> = vec![Array2::eye(dim)];
    for d in 1..t_hold {
        let next = model.a.entries.dot(&powers[d - 1]);
        powers.push(next);
    }
    for kk in 0..t_hold {
        let free = powers[kk].dot(&model.x0);
        for i in 0..dim {
            let mut row = vec![0.0; nv];
            row[kk * dim + i] = 1.0;
            for m in 0..kk {
                let pw = &powers[kk - m];
                for j in 0..dim {
                    row[m * dim + j] = pw[[i, j]];
                }
            }
            lp.add_le(row, free[i].max(0.0));
        }
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(lp_error("exact", t_hold, sol.status));
    }
    let plan = (0..t_hold).map(|n| Array1::from(sol.z[n * dim..(n + 1) * dim].to_vec())).collect();
    Ok(ExactSolution { p_hold: sol.z[p], t_hold, plan: ControlPlan::PerBin(plan), iterations: sol.iterations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterSolution {
    pub p_hold: f64,
    pub t_hold: usize,
    pub full_support: Option<f64>,
    pub reduced_support: Option<f64>,
    pub plan: ControlPlan,
}

fn outer_lp(model: &FleetModel, t_hold: usize, support: &[usize]) -> Result<(f64, ControlPlan)> {
    let k = &model.kernels;
    let h_out =
        k.h_out.as_ref().ok_or_else(|| Error::InvalidInput("model was built without the squeezed system".into()))?;
    let dim = model.x0.len();
    let s = support.len();
    let nv = t_hold * s + 1;
    let p = nv - 1;
    let mut c = vec![0.0; nv];
    c[p] = 1.0;
    let mut lp = LinearProgram::new(c);
    for kk in 1..=t_hold {
        let mut row = vec![0.0; nv];
        row[p] = 1.0;
        for n in 0..kk {
            let m = kk - n;
            for (si, &i) in support.iter().enumerate() {
                row[n * s + si] = -(h_out[m][i] - k.h_a[m][i]);
            }
        }
        lp.add_le(row, 0.0);
    }
    let mut budget = vec![1.0; nv];
    budget[p] = 0.0;
    lp.add_le(budget, 1.0);
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(lp_error("outer", t_hold, sol.status));
    }
    let plan = (0..t_hold)
        .map(|n| {
            let mut u = Array1::zeros(dim);
            for (si, &i) in support.iter().enumerate() {
                u[i] = sol.z[n * s + si];
            }
            u
        })
        .collect();
    Ok((sol.z[p], ControlPlan::PerBin(plan)))
}

/// Outer bound at `t_hold`: solved over the full support when it fits the cap
/// and over the squeezed stationary support, keeping the tighter value.
pub fn solve_outer(model: &FleetModel, t_hold: usize) -> Result<OuterSolution> {
    let dim = model.x0.len();
    if t_hold == 0 || t_hold > model.kernels.horizon() {
        return invalid("outer LP needs 1 ≤ T_hold ≤ kernel horizon");
    }
    let full = if t_hold * dim <= LP_SIZE_CAP {
        let all: Vec<usize> = (0..dim).collect();
        Some(outer_lp(model, t_hold, &all)?)
    } else {
        None
    };
    let reduced = if !model.out_support.is_empty() && model.out_support.len() < dim {
        if t_hold * model.out_support.len() > LP_SIZE_CAP {
            return invalid("outer LP too large even on the reduced support");
        }
        Some(outer_lp(model, t_hold, &model.out_support)?)
    } else {
        None
    };
    let full_v = full.as_ref().map(|f| f.0);
    let reduced_v = reduced.as_ref().map(|r| r.0);
    let best = match (full, reduced) {
        (Some(f), Some(r)) => {
            if r.0 <= f.0 {
                r
            } else {
                f
            }
        }
        (Some(f), None) => f,
        (None, Some(r)) => r,
        (None, None) => return invalid("outer LP exceeds the size cap"),
    };
    Ok(OuterSolution { p_hold: best.0, t_hold, full_support: full_v, reduced_support: reduced_v, plan: best.1 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachHoldSet {
    pub method: Method,
    pub regime: Regime,
    pub p_nom: f64,
    pub p_on: f64,
    /// Sorted by T_hold ascending.
    pub boundary: Vec<ReachHoldPoint>,
    /// False for outer sets whose condition scan failed.
    pub verified: bool,
    pub condition: Option<ConditionReport>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    method: Method,
    regime: Regime,
    p_nom: f64,
    p_on: f64,
    verified: bool,
    condition: Option<ConditionReport>,
    horizon_limited_steps: Vec<usize>,
}

impl ReachHoldSet {
    pub fn new(method: Method, model: &FleetModel, mut boundary: Vec<ReachHoldPoint>) -> Result<Self> {
        sort_frontier(&mut boundary);
        let set = Self {
            method,
            regime: *model.regime(),
            p_nom: model.p_nom,
            p_on: model.p_on(),
            boundary,
            verified: true,
            condition: None,
        };
        set.check_monotone()?;
        Ok(set)
    }

    /// Fails when P_hold increases along increasing T_hold.
    pub fn check_monotone(&self) -> Result<()> {
        let tol = 1e-9 * self.p_on.max(1.0);
        for w in self.boundary.windows(2) {
            if w[1].p_hold > w[0].p_hold + tol {
                return Err(Error::NumericalFailure(format!(
                    "{} frontier not monotone: ({}, {}) then ({}, {})",
                    self.method, w[0].t_hold, w[0].p_hold, w[1].t_hold, w[1].p_hold
                )));
            }
        }
        Ok(())
    }

    pub fn hours(&self, steps: usize) -> f64 {
        steps as f64 * self.regime.dt_h
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let csv = dir.join(format!("{stem}.csv"));
        let mut out = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        writeln!(out, "T_hold_steps,T_hold_hours,P_hold_kW,method")?;
        for p in &self.boundary {
            writeln!(out, "{},{},{},{}", p.t_hold, self.hours(p.t_hold), p.p_hold, p.method)?;
        }
        out.flush()?;
        let side = Sidecar {
            method: self.method,
            regime: self.regime,
            p_nom: self.p_nom,
            p_on: self.p_on,
            verified: self.verified,
            condition: self.condition.clone(),
            horizon_limited_steps: self.boundary.iter().filter(|p| p.horizon_limited).map(|p| p.t_hold).collect(),
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(csv)
    }

    /// Reads a set written by [`ReachHoldSet::write`] from its CSV path.
    pub fn read(csv: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json"))?)?;
        let file = std::io::BufReader::new(std::fs::File::open(csv)?);
        let mut boundary = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "T_hold_steps,T_hold_hours,P_hold_kW,method" {
                    return Err(Error::Parse(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad row {line:?}")));
            }
            let t_hold: usize = f[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            boundary.push(ReachHoldPoint {
                p_hold: f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?,
                t_hold,
                method: f[3].parse()?,
                horizon_limited: side.horizon_limited_steps.contains(&t_hold),
            });
        }
        Ok(Self {
            method: side.method,
            regime: side.regime,
            p_nom: side.p_nom,
            p_on: side.p_on,
            boundary,
            verified: side.verified,
            condition: side.condition,
        })
    }
}

pub(crate) fn sort_frontier(points: &mut [ReachHoldPoint]) {
    points.sort_by(|a, b| a.t_hold.cmp(&b.t_hold).then(b.p_hold.total_cmp(&a.p_hold)));
}

pub fn inner_boundary(model: &FleetModel, p_grid: &[f64], t_max: usize) -> Result<ReachHoldSet> {
    if let Some(&p) = p_grid.iter().find(|&&p| !(p >= 0.0) || p > model.p_nom * (1.0 + 1e-12)) {
        return invalid(format!("P grid value {p} outside [0, P_nom]"));
    }
    let points = par::map_range(p_grid.len(), |i| inner_point(model, p_grid[i], t_max))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let boundary = points
        .iter()
        .map(|q| ReachHoldPoint {
            p_hold: q.p_hold,
            t_hold: q.t_hold,
            method: Method::Inner,
            horizon_limited: q.horizon_limited,
        })
        .collect();
    ReachHoldSet::new(Method::Inner, model, boundary)
}

pub fn exact_boundary(model: &FleetModel, t_grid: &[usize]) -> Result<ReachHoldSet> {
    let sols =
        par::map_range(t_grid.len(), |i| solve_exact(model, t_grid[i])).into_iter().collect::<Result<Vec<_>>>()?;
    let boundary = sols
        .iter()
        .map(|s| ReachHoldPoint { p_hold: s.p_hold, t_hold: s.t_hold, method: Method::Exact, horizon_limited: false })
        .collect();
    ReachHoldSet::new(Method::Exact, model, boundary)
}

/// Outer frontier over `t_grid`, tagged with the condition scan up to the largest grid value.
pub fn outer_boundary(model: &FleetModel, t_grid: &[usize]) -> Result<ReachHoldSet> {
    let sols =
        par::map_range(t_grid.len(), |i| solve_outer(model, t_grid[i])).into_iter().collect::<Result<Vec<_>>>()?;
    let boundary = sols
        .iter()
        .map(|s| ReachHoldPoint { p_hold: s.p_hold, t_hold: s.t_hold, method: Method::Outer, horizon_limited: false })
        .collect();
    let mut set = ReachHoldSet::new(Method::Outer, model, boundary)?;
    let horizon = t_grid.iter().copied().max().unwrap_or(1).max(1);
    let report = check_outer_condition(model, horizon)?;
    set.verified = report.holds;
    set.condition = Some(report);
    Ok(set)
}

/// `points` hold lengths spread over 1..=t_max.
pub fn t_grid(t_max: usize, points: usize) -> Vec<usize> {
    let points = points.max(1);
    let mut out: Vec<usize> = (0..points)
        .map(|i| {
            if points == 1 {
                t_max
            } else {
                1 + ((t_max - 1) as f64 * i as f64 / (points - 1) as f64).round() as usize
            }
        })
        .collect();
    out.dedup();
    out
}

/// One inner set per new setpoint, all sharing the nominal matrix and P grid.
pub fn sweep_setpoint(spec: &ModelSpec, setpoints: &[f64], p_points: usize) -> Result<Vec<ReachHoldSet>> {
    let a = nominal_matrix(spec)?;
    let stationary = stationary_distribution(&a)?;
    let mut out = Vec::with_capacity(setpoints.len());
    for &t_new in setpoints {
        let mut s = spec.clone();
        s.regime.t_set_new = t_new;
        s.with_outer = false;
        let model = FleetModel::with_nominal(&s, a.clone(), stationary.clone())?;
        let grid = model.p_grid(p_points);
        out.push(inner_boundary(&model, &grid, s.horizon)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecoolComparison {
    pub baseline: ReachHoldSet,
    pub precooled: ReachHoldSet,
    /// Precooled T_hold ≥ baseline T_hold at every baseline P_hold.
    pub dominates: bool,
}

/// Inner sets for a fleet starting at `spec.regime.t_set` and one pre-cooled to `t_precool`.
/// The pre-cooled set is evaluated on the baseline grid plus its own.
pub fn precool_compare(spec: &ModelSpec, t_precool: f64, p_points: usize) -> Result<PrecoolComparison> {
    let mut base_spec = spec.clone();
    base_spec.with_outer = false;
    let mut pre_spec = base_spec.clone();
    pre_spec.regime.t_set = t_precool;
    let base = FleetModel::build(&base_spec)?;
    let pre = FleetModel::build(&pre_spec)?;
    let base_grid = base.p_grid(p_points);
    let mut pre_grid = pre.p_grid(p_points);
    pre_grid.extend(base_grid.iter().copied().filter(|&p| p <= pre.p_nom));
    pre_grid.sort_by(f64::total_cmp);
    pre_grid.dedup();
    let baseline = inner_boundary(&base, &base_grid, spec.horizon)?;
    let precooled = inner_boundary(&pre, &pre_grid, spec.horizon)?;
    let dominates = baseline
        .boundary
        .iter()
        .all(|b| precooled.boundary.iter().find(|q| q.p_hold == b.p_hold).is_some_and(|q| q.t_hold >= b.t_hold));
    Ok(PrecoolComparison { baseline, precooled, dominates })
}
