//! Dense linear programming: `max cᵀz` subject to `G z ≤ h`, `E z = f`,
//! `lo ≤ z ≤ hi`, solved by a two-phase tableau simplex.
//!
//! Pricing uses Dantzig's rule and falls back to Bland's rule during runs of
//! degenerate pivots, so the method terminates.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LinearProgram {
    /// A program over `c.len()` variables with default bounds `z ≥ 0`.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        Self { c, lo: vec![0.0; n], hi: vec![f64::INFINITY; n], ..Default::default() }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.g.push(row);
        self.h.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.g.push(row.into_iter().map(|v| -v).collect());
        self.h.push(-rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.e.push(row);
        self.f.push(rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.g.len() != self.h.len() || self.e.len() != self.f.len() {
            return invalid("LP: row count and right-hand side length differ");
        }
        if self.lo.len() != n || self.hi.len() != n {
            return invalid("LP: bound vectors have the wrong length");
        }
        if self.g.iter().chain(&self.e).any(|r| r.len() != n) {
            return invalid("LP: constraint row has the wrong length");
        }
        let finite = |v: &f64| v.is_finite();
        if !self.c.iter().all(finite)
            || !self.h.iter().all(finite)
            || !self.f.iter().all(finite)
            || !self.g.iter().chain(&self.e).flatten().all(finite)
        {
            return invalid("LP: non-finite coefficient");
        }
        if self.lo.iter().chain(&self.hi).any(|v| v.is_nan()) || self.lo.contains(&f64::INFINITY) {
            return invalid("LP: invalid bound");
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `z`, each row scaled by `max(1, ‖row‖∞)`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let scale = |r: &[f64]| r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for (r, &b) in self.g.iter().zip(&self.h) {
            worst = worst.max((dot(r) - b).max(0.0) / scale(r));
        }
        for (r, &b) in self.e.iter().zip(&self.f) {
            worst = worst.max((dot(r) - b).abs() / scale(r));
        }
        for ((&v, &l), &u) in z.iter().zip(&self.lo).zip(&self.hi) {
            worst = worst.max((l - v).max(0.0)).max((v - u).max(0.0));
        }
        worst
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        self.c.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    /// Plain-text dump: a `maximize` header, then `c`, `le`, `eq` and `bounds`
    /// blocks with one whitespace-separated line per row.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "maximize {}", self.n_vars())?;
        writeln!(out, "c {}", fmt(&self.c))?;
        writeln!(out, "le {}", self.g.len())?;
        for (r, b) in self.g.iter().zip(&self.h) {
            writeln!(out, "{} | {b:.16e}", fmt(r))?;
        }
        writeln!(out, "eq {}", self.e.len())?;
        for (r, b) in self.e.iter().zip(&self.f) {
            writeln!(out, "{} | {b:.16e}", fmt(r))?;
        }
        writeln!(out, "bounds")?;
        writeln!(out, "{}", fmt(&self.lo))?;
        writeln!(out, "{}", fmt(&self.hi))?;
        out.flush().map_err(Error::from)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let lines: Vec<String> = file.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty());
        let bad = |what: &str| Error::Parse(format!("LP dump: {what}"));
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t}: {e}")))).collect()
        };
        let header = it.next().ok_or_else(|| bad("empty"))?;
        let n: usize = header.strip_prefix("maximize ").and_then(|s| s.parse().ok()).ok_or_else(|| bad("header"))?;
        let c = nums(it.next().and_then(|l| l.strip_prefix('c')).ok_or_else(|| bad("objective"))?)?;
        let mut lp = LinearProgram::new(c);
        for block in ["le", "eq"] {
            let count: usize = it
                .next()
                .and_then(|l| l.strip_prefix(block))
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(block))?;
            for _ in 0..count {
                let (row, rhs) = it.next().and_then(|l| l.split_once('|')).ok_or_else(|| bad("row"))?;
                let row = nums(row)?;
                let rhs = rhs.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                if block == "le" {
                    lp.add_le(row, rhs);
                } else {
                    lp.add_eq(row, rhs);
                }
            }
        }
        if it.next() != Some("bounds") {
            return Err(bad("bounds"));
        }
        lp.lo = nums(it.next().ok_or_else(|| bad("lower bounds"))?)?;
        lp.hi = nums(it.next().ok_or_else(|| bad("upper bounds"))?)?;
        if lp.n_vars() != n {
            return Err(bad("variable count"));
        }
        lp.validate()?;
        Ok(lp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub z: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;
const HARRIS_SLACK: f64 = 1e-11;

/// Small distinct rhs shifts that break the ties of degenerate vertices; the
/// exact basic solution is recovered after the final pivot.
fn perturbation(i: usize) -> f64 {
    let frac = (i as f64 * 0.618_033_988_749_895).fract();
    1e-9 * (1.0 + frac)
}

#[derive(Clone, Copy)]
enum VarMap {
    Shift(usize, f64),
    Flip(usize, f64),
    Split(usize, usize),
}

struct Tableau {
    rows: usize,
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, j: usize, scratch: &mut Vec<(usize, f64)>) {
        let w = self.width;
        let pv = self.t[r * w + j];
        let row = &mut self.t[r * w..(r + 1) * w];
        scratch.clear();
        for (k, v) in row.iter_mut().enumerate() {
            if *v != 0.0 {
                *v /= pv;
                scratch.push((k, *v));
            }
        }
        row[j] = 1.0;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f == 0.0 {
                continue;
            }
            let target = &mut self.t[i * w..(i + 1) * w];
            for &(k, v) in scratch.iter() {
                target[k] -= f * v;
            }
            target[j] = 0.0;
        }
        let f = self.obj[j];
        if f != 0.0 {
            for &(k, v) in scratch.iter() {
                self.obj[k] -= f * v;
            }
            self.obj[j] = 0.0;
        }
        self.basis[r] = j;
    }

    /// Minimum ratio row, ties broken by the lowest basic index.
    fn bland_row(&self, j: usize) -> Option<(usize, f64)> {
        let w = self.width;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.t[i * w + j];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                Some((bi, br)) if ratio > br + 1e-12 * (1.0 + br.abs()) => Some((bi, br)),
                Some((bi, br)) if ratio >= br - 1e-12 * (1.0 + br.abs()) && self.basis[bi] < self.basis[i] => {
                    Some((bi, br))
                }
                _ => Some((i, ratio)),
            };
        }
        best
    }

    /// Two-pass ratio test: bound the step with a small feasibility slack, then
    /// take the largest pivot among the rows within that bound.
    fn harris_row(&self, j: usize) -> Option<(usize, f64)> {
        let w = self.width;
        let mut bound = f64::INFINITY;
        for i in 0..self.rows {
            let a = self.t[i * w + j];
            if a > PIVOT_TOL {
                bound = bound.min((self.rhs(i).max(0.0) + HARRIS_SLACK) / a);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.rows {
            let a = self.t[i * w + j];
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            if ratio <= bound && best.is_none_or(|(_, _, ba)| a > ba) {
                best = Some((i, ratio, a));
            }
        }
        best.map(|(i, r, _)| (i, r))
    }

    fn run(&mut self, allowed: usize, cap: usize) -> Outcome {
        let w = self.width;
        let mut scratch = Vec::with_capacity(w);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= cap {
                return Outcome::Stalled;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                (0..allowed).find(|&j| self.obj[j] < -COST_TOL)
            } else {
                let mut best = None;
                let mut best_v = -COST_TOL;
                for j in 0..allowed {
                    if self.obj[j] < best_v {
                        best_v = self.obj[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(j) = entering else { return Outcome::Optimal };
            let leave = if bland { self.bland_row(j) } else { self.harris_row(j) };
            let Some((r, ratio)) = leave else { return Outcome::Unbounded };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, j, &mut scratch);
            self.iterations += 1;
        }
    }
}

fn failure(n: usize, status: LpStatus, iterations: usize) -> LpSolution {
    LpSolution { status, z: vec![0.0; n], objective: f64::NAN, max_violation: f64::NAN, iterations }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();
    if lp.lo.iter().zip(&lp.hi).any(|(l, u)| l > u) {
        return Ok(failure(n, LpStatus::Infeasible, 0));
    }

    // Map every original variable onto nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ny = 0usize;
    let mut box_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lo[j], lp.hi[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift(ny, l));
            if u.is_finite() {
                box_rows.push((ny, u - l));
            }
            ny += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Flip(ny, u));
            ny += 1;
        } else {
            maps.push(VarMap::Split(ny, ny + 1));
            ny += 2;
        }
    }
    let transform = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; ny];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift(k, off) => {
                    out[k] += a;
                    b -= a * off;
                }
                VarMap::Flip(k, off) => {
                    out[k] -= a;
                    b -= a * off;
                }
                VarMap::Split(p, q) => {
                    out[p] += a;
                    out[q] -= a;
                }
            }
        }
        (out, b)
    };

    // (coefficients, rhs, is_equality), scaled to unit max coefficient.
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let mut push = |coef: Vec<f64>, b: f64, eq: bool| -> bool {
        let s = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            return if eq { b.abs() <= FEAS_TOL } else { b >= -FEAS_TOL };
        }
        rows.push((coef.into_iter().map(|v| v / s).collect(), b / s, eq));
        true
    };
    let mut feasible = true;
    for (r, &b) in lp.g.iter().zip(&lp.h) {
        let (coef, b) = transform(r, b);
        feasible &= push(coef, b, false);
    }
    for (r, &b) in lp.e.iter().zip(&lp.f) {
        let (coef, b) = transform(r, b);
        feasible &= push(coef, b, true);
    }
    for &(k, width) in &box_rows {
        let mut coef = vec![0.0; ny];
        coef[k] = 1.0;
        feasible &= push(coef, width, false);
    }
    if !feasible {
        return Ok(failure(n, LpStatus::Infeasible, 0));
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| !r.2).count();
    let n_art = rows.iter().filter(|r| r.2 || r.1 < 0.0).count();
    let cols = ny + n_slack + n_art;
    let width = cols + 1;
    let mut tab =
        Tableau { rows: m, width, t: vec![0.0; m * width], obj: vec![0.0; width], basis: vec![0; m], iterations: 0 };
    let (mut s_next, mut a_next) = (ny, ny + n_slack);
    // Column that started as (a multiple of) e_i, its coefficient, and the unperturbed rhs.
    let mut unit_col = vec![(0usize, 1.0f64); m];
    let mut b_true = vec![0.0; m];
    for (i, (coef, b, eq)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        let row = &mut tab.t[i * width..(i + 1) * width];
        for (k, v) in coef.iter().enumerate() {
            row[k] = sign * v;
        }
        b_true[i] = sign * b;
        row[cols] = b_true[i] + perturbation(i);
        if !eq {
            row[s_next] = sign;
            unit_col[i] = (s_next, sign);
            if sign > 0.0 {
                tab.basis[i] = s_next;
            }
            s_next += 1;
        }
        if *eq || sign < 0.0 {
            row[a_next] = 1.0;
            unit_col[i] = (a_next, 1.0);
            tab.basis[i] = a_next;
            a_next += 1;
        }
    }
    let cap = 50 * (m + cols) + 10_000;
    let art_start = ny + n_slack;

    if n_art > 0 {
        for j in art_start..cols {
            tab.obj[j] = 1.0;
        }
        for i in 0..m {
            if tab.basis[i] >= art_start {
                for k in 0..width {
                    tab.obj[k] -= tab.t[i * width + k];
                }
            }
        }
        match tab.run(cols, cap) {
            Outcome::Stalled => return Ok(failure(n, LpStatus::NumericalFailure, tab.iterations)),
            Outcome::Unbounded => return Ok(failure(n, LpStatus::NumericalFailure, tab.iterations)),
            Outcome::Optimal => {}
        }
        let bmax = rows.iter().fold(1.0f64, |a, r| a.max(r.1.abs()));
        if -tab.obj[cols] > FEAS_TOL * bmax {
            return Ok(failure(n, LpStatus::Infeasible, tab.iterations));
        }
        let mut scratch = Vec::new();
        for i in 0..m {
            if tab.basis[i] < art_start {
                continue;
            }
            let row = &tab.t[i * width..i * width + art_start];
            let best = row
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > PIVOT_TOL)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k);
            if let Some(j) = best {
                tab.pivot(i, j, &mut scratch);
            }
        }
    }

    // Phase two objective, scaled to unit max coefficient.
    let (cy, _) = transform(&lp.c, 0.0);
    let cs = cy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cs = if cs > 0.0 { cs } else { 1.0 };
    tab.obj.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..ny {
        tab.obj[k] = -cy[k] / cs;
    }
    for i in 0..m {
        let b = tab.basis[i];
        if b < ny && cy[b] != 0.0 {
            let cb = cy[b] / cs;
            for k in 0..width {
                tab.obj[k] += cb * tab.t[i * width + k];
            }
        }
    }
    let status = match tab.run(art_start, cap) {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => return Ok(failure(n, LpStatus::Unbounded, tab.iterations)),
        Outcome::Stalled => return Ok(failure(n, LpStatus::NumericalFailure, tab.iterations)),
    };

    // Basic values for the unperturbed rhs: B⁻¹b with B⁻¹e_i read off the unit columns.
    let mut exact = vec![0.0; m];
    for (i, &(col, kappa)) in unit_col.iter().enumerate() {
        let bi = b_true[i] / kappa;
        if bi != 0.0 {
            for (r, v) in exact.iter_mut().enumerate() {
                *v += tab.t[r * width + col] * bi;
            }
        }
    }
    let restore = exact.iter().all(|&v| v >= -FEAS_TOL);
    let mut y = vec![0.0; ny];
    for i in 0..m {
        if tab.basis[i] < ny {
            y[tab.basis[i]] = if restore { exact[i] } else { tab.rhs(i) }.max(0.0);
        }
    }
    let z: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift(k, off) => off + y[k],
            VarMap::Flip(k, off) => off - y[k],
            VarMap::Split(p, q) => y[p] - y[q],
        })
        .collect();
    let max_violation = lp.max_violation(&z);
    let status = if max_violation > FEAS_TOL { LpStatus::NumericalFailure } else { status };
    Ok(LpSolution { status, objective: lp.objective(&z), z, max_violation, iterations: tab.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_variable_upper_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], 3.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.z[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn contradictory_pair_is_infeasible() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], -1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn open_direction_is_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, -1.0], 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_le(vec![1.0], 1.0);
        assert!(matches!(solve(&lp), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bounds_equalities_and_free_variables() {
        // max x + 2y - w, x + y = 4, y ≤ 3, -1 ≤ w ≤ 5, x free, w ≥ x - 10.
        let mut lp = LinearProgram::new(vec![1.0, 2.0, -1.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 3.0);
        lp.set_bounds(2, -1.0, 5.0);
        lp.add_eq(vec![1.0, 1.0, 0.0], 4.0);
        lp.add_ge(vec![-1.0, 0.0, 1.0], -10.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.z[1], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.z[2], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.objective, 8.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance.
        let mut lp = LinearProgram::new(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 0.05, epsilon = 1e-9);
    }

    /// Builds an LP whose optimum is known: `z*` is a vertex with 20 active
    /// rows, and `c` lies in the interior of the cone of their normals.
    fn constructed_lp(seed: u64) -> (LinearProgram, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let z_star: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
        let mut lp = LinearProgram::new(vec![0.0; n]);
        lp.lo = vec![f64::NEG_INFINITY; n];
        let mut c = vec![0.0; n];
        for i in 0..n + 15 {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = row.iter().zip(&z_star).map(|(a, b)| a * b).sum();
            if i < n {
                let y = rng.gen_range(0.5..2.0);
                for (cj, a) in c.iter_mut().zip(&row) {
                    *cj += y * a;
                }
                lp.add_le(row, lhs);
            } else {
                lp.add_le(row, lhs + rng.gen_range(0.1..2.0));
            }
        }
        let opt = c.iter().zip(&z_star).map(|(a, b)| a * b).sum();
        lp.c = c;
        (lp, z_star, opt)
    }

    #[test]
    fn constructed_optimum_is_recovered() {
        for seed in 0..10 {
            let (lp, z_star, opt) = constructed_lp(seed);
            let s = solve(&lp).unwrap();
            assert_eq!(s.status, LpStatus::Optimal, "seed {seed}");
            assert!((s.objective - opt).abs() <= 1e-6 * (1.0 + opt.abs()), "seed {seed}: {} vs {opt}", s.objective);
            for (a, b) in s.z.iter().zip(&z_star) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn text_dump_round_trip() {
        let (mut lp, _, _) = constructed_lp(3);
        lp.add_eq(vec![1.0; 20], 7.0);
        lp.hi[3] = 4.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lp.txt");
        lp.write_text(&path).unwrap();
        assert_eq!(LinearProgram::read_text(&path).unwrap(), lp);
    }
}
