//! Combining the reach-and-hold sets of several fleets.
//!
//! Frontiers are staircases: a boundary point `(P, T)` certifies every pair in
//! `[0, P] × [0, T]`, and queries never interpolate between points.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::reachhold::{sort_frontier, Method, ReachHoldPoint, ReachHoldSet};

/// Largest certified P_hold for a hold of `t` steps; 0 beyond the frontier.
pub fn query_p_at_t(boundary: &[ReachHoldPoint], t: usize) -> f64 {
    boundary.iter().filter(|p| p.t_hold >= t).map(|p| p.p_hold).fold(0.0, f64::max)
}

/// Longest certified hold at reduction `p`; 0 when no point reaches `p`.
pub fn query_t_at_p(boundary: &[ReachHoldPoint], p: f64) -> usize {
    boundary.iter().filter(|q| q.p_hold >= p).map(|q| q.t_hold).max().unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exclusive,
    Simultaneous,
    Consecutive,
    Union,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exclusive => "exclusive",
            Mode::Simultaneous => "simultaneous",
            Mode::Consecutive => "consecutive",
            Mode::Union => "union",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinedSet {
    pub components: Vec<ReachHoldSet>,
    pub exclusive: Vec<ReachHoldPoint>,
    pub simultaneous: Vec<ReachHoldPoint>,
    pub consecutive: Vec<ReachHoldPoint>,
    pub union: Vec<ReachHoldPoint>,
}

fn point(p_hold: f64, t_hold: usize, method: Method) -> ReachHoldPoint {
    ReachHoldPoint { p_hold, t_hold, method, horizon_limited: false }
}

fn sorted_unique<T: PartialOrd + Copy>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup_by(|a, b| a == b);
    v
}

/// Staircase frontier through P(t) evaluated at each candidate hold length. Zero-length holds are dropped.
fn frontier_in_t(ts: &[usize], method: Method, f: impl Fn(usize) -> f64) -> Vec<ReachHoldPoint> {
    let mut out: Vec<ReachHoldPoint> =
        ts.iter().map(|&t| point(f(t), t, method)).filter(|p| p.p_hold > 0.0 && p.t_hold > 0).collect();
    sort_frontier(&mut out);
    out
}

/// Combines two sets under exclusive, simultaneous (τ = 0) and consecutive
/// (τ = T¹_hold) actuation. Population 2 starts τ ≥ 0 steps after population 1.
pub fn combine(s1: &ReachHoldSet, s2: &ReachHoldSet) -> Result<CombinedSet> {
    if (s1.regime.dt_h - s2.regime.dt_h).abs() > 1e-12 * s1.regime.dt_h.abs().max(1.0) {
        return invalid(format!("sets use different time steps: {} h vs {} h", s1.regime.dt_h, s2.regime.dt_h));
    }
    if s1.method != s2.method {
        return invalid(format!("cannot combine a {} set with a {} set", s1.method, s2.method));
    }
    let method = s1.method;
    let (b1, b2) = (&s1.boundary, &s2.boundary);
    let ts = sorted_unique(b1.iter().chain(b2).map(|p| p.t_hold).collect());
    let ps = sorted_unique(b1.iter().chain(b2).map(|p| p.p_hold).filter(|&p| p > 0.0).collect());

    let exclusive = frontier_in_t(&ts, method, |t| query_p_at_t(b1, t).max(query_p_at_t(b2, t)));
    let simultaneous = frontier_in_t(&ts, method, |t| query_p_at_t(b1, t) + query_p_at_t(b2, t));
    let mut consecutive: Vec<ReachHoldPoint> = ps
        .iter()
        .map(|&p| point(p, query_t_at_p(b1, p) + query_t_at_p(b2, p), method))
        .filter(|q| q.t_hold > 0)
        .collect();
    sort_frontier(&mut consecutive);

    let all_t = sorted_unique(exclusive.iter().chain(&simultaneous).chain(&consecutive).map(|p| p.t_hold).collect());
    let union = frontier_in_t(&all_t, method, |t| {
        query_p_at_t(&exclusive, t).max(query_p_at_t(&simultaneous, t)).max(query_p_at_t(&consecutive, t))
    });
    Ok(CombinedSet { components: vec![s1.clone(), s2.clone()], exclusive, simultaneous, consecutive, union })
}

impl CombinedSet {
    pub fn frontier(&self, mode: Mode) -> &[ReachHoldPoint] {
        match mode {
            Mode::Exclusive => &self.exclusive,
            Mode::Simultaneous => &self.simultaneous,
            Mode::Consecutive => &self.consecutive,
            Mode::Union => &self.union,
        }
    }

    /// The union frontier as a set with summed capacities, for further folding.
    pub fn union_set(&self) -> ReachHoldSet {
        let first = &self.components[0];
        ReachHoldSet {
            method: first.method,
            regime: first.regime,
            p_nom: self.components.iter().map(|c| c.p_nom).sum(),
            p_on: self.components.iter().map(|c| c.p_on).sum(),
            boundary: self.union.clone(),
            verified: self.components.iter().all(|c| c.verified),
            condition: None,
        }
    }

    /// Writes `mode,T_hold_steps,T_hold_hours,P_hold_kW,method` rows for all four frontiers.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dt = self.components[0].regime.dt_h;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "mode,T_hold_steps,T_hold_hours,P_hold_kW,method")?;
        for mode in [Mode::Exclusive, Mode::Simultaneous, Mode::Consecutive, Mode::Union] {
            for p in self.frontier(mode) {
                writeln!(out, "{},{},{},{},{}", mode.as_str(), p.t_hold, p.t_hold as f64 * dt, p.p_hold, p.method)?;
            }
        }
        out.flush().map_err(Error::from)
    }
}

/// Left fold of [`combine`] over `sets`, returning the union frontier. This is
/// an inner bound of the k-fleet set: only pairwise schedules are enumerated.
pub fn combine_all(sets: &[ReachHoldSet]) -> Result<ReachHoldSet> {
    let (first, rest) = sets.split_first().ok_or_else(|| Error::InvalidInput("no sets to combine".into()))?;
    rest.iter().try_fold(first.clone(), |acc, s| Ok(combine(&acc, s)?.union_set()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::BinGrid;
    use crate::reachhold::Regime;

    pub(crate) fn synthetic(points: &[(usize, f64)]) -> ReachHoldSet {
        let mut boundary: Vec<ReachHoldPoint> = points.iter().map(|&(t, p)| point(p, t, Method::Inner)).collect();
        sort_frontier(&mut boundary);
        ReachHoldSet {
            method: Method::Inner,
            regime: Regime {
                t_set: 20.0,
                t_set_new: 22.0,
                deadband: 1.0,
                t_amb: 32.0,
                dt_h: 1.0 / 60.0,
                grid: BinGrid::new(18.0, 24.0, 10).unwrap(),
            },
            p_nom: points.iter().map(|p| p.1).fold(0.0, f64::max),
            p_on: 100.0,
            boundary,
            verified: true,
            condition: None,
        }
    }

    #[test]
    fn queries_use_conservative_steps() {
        let s = synthetic(&[(10, 5.0), (20, 3.0), (40, 1.0)]);
        assert_eq!(query_p_at_t(&s.boundary, 0), 5.0);
        assert_eq!(query_p_at_t(&s.boundary, 15), 3.0);
        assert_eq!(query_p_at_t(&s.boundary, 20), 3.0);
        assert_eq!(query_p_at_t(&s.boundary, 41), 0.0);
        assert_eq!(query_t_at_p(&s.boundary, 4.0), 10);
        assert_eq!(query_t_at_p(&s.boundary, 6.0), 0);
    }

    #[test]
    fn empty_fleet_is_identity() {
        let s1 = synthetic(&[(10, 5.0), (20, 3.0), (40, 1.0)]);
        let s2 = synthetic(&[]);
        let c = combine(&s1, &s2).unwrap();
        for mode in [Mode::Exclusive, Mode::Simultaneous, Mode::Consecutive, Mode::Union] {
            for t in 0..50 {
                assert_eq!(query_p_at_t(c.frontier(mode), t), query_p_at_t(&s1.boundary, t), "{mode:?} t={t}");
            }
        }
    }

    #[test]
    fn identical_fleets_double() {
        let s = synthetic(&[(10, 5.0), (20, 3.0), (40, 1.0)]);
        let c = combine(&s, &s).unwrap();
        for p in &s.boundary {
            assert_eq!(query_p_at_t(&c.simultaneous, p.t_hold), 2.0 * p.p_hold);
            assert_eq!(query_t_at_p(&c.consecutive, p.p_hold), 2 * p.t_hold);
        }
    }

    #[test]
    fn mismatched_time_steps_rejected() {
        let s1 = synthetic(&[(10, 5.0)]);
        let mut s2 = synthetic(&[(10, 5.0)]);
        s2.regime.dt_h = 1.0 / 30.0;
        assert!(matches!(combine(&s1, &s2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn combined_csv_has_mode_column() {
        let s = synthetic(&[(10, 5.0), (20, 3.0)]);
        let c = combine(&s, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        c.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("mode,T_hold_steps,T_hold_hours,P_hold_kW,method\n"));
        for m in ["exclusive,", "simultaneous,", "consecutive,", "union,"] {
            assert!(text.contains(m));
        }
    }

    #[test]
    fn fold_of_three() {
        let s = synthetic(&[(10, 5.0), (20, 3.0)]);
        let all = combine_all(&[s.clone(), s.clone(), s.clone()]).unwrap();
        assert_eq!(query_p_at_t(&all.boundary, 10), 15.0);
        assert_eq!(query_t_at_p(&all.boundary, 3.0), 60);
        assert!(combine_all(&[]).is_err());
    }
}
