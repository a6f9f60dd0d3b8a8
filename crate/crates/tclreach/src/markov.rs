//! Bin discretisation of the (air temperature, mode) space, Monte-Carlo estimation
//! of column-stochastic transition matrices, stationary distributions and the
//! actuated/non-actuated population dynamics.
//!
//! State layout is `[OFF 0..N-1 | ON N..2N-1]`, cold to hot within each block.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::etp::{thermostat, Propagator, TclParams};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n: usize,
}

impl BinGrid {
    pub fn new(t_min: f64, t_max: f64, n: usize) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_min >= t_max {
            return invalid("grid needs finite T_min < T_max");
        }
        if n < 2 {
            return invalid("grid needs at least two bins");
        }
        Ok(Self { t_min, t_max, n })
    }

    pub fn width(&self) -> f64 {
        (self.t_max - self.t_min) / self.n as f64
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Temperature bin; values outside the range clamp to the edge bins.
    pub fn bin(&self, t_a: f64) -> usize {
        let i = ((t_a - self.t_min) / self.width()).floor();
        if i <= 0.0 || i.is_nan() {
            0
        } else {
            (i as usize).min(self.n - 1)
        }
    }

    pub fn index(&self, t_a: f64, on: bool) -> usize {
        self.bin(t_a) + if on { self.n } else { 0 }
    }

    pub fn lower_edge(&self, bin: usize) -> f64 {
        self.t_min + bin as f64 * self.width()
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.t_min + (bin as f64 + 0.5) * self.width()
    }

    pub fn is_on(&self, index: usize) -> bool {
        index >= self.n
    }

    pub fn check_deadband(&self, t_set: f64, deadband: f64) -> Result<()> {
        let lo = t_set - 0.5 * deadband;
        let hi = t_set + 0.5 * deadband;
        if lo < self.t_min || hi > self.t_max {
            return Err(Error::InvalidConfiguration(format!(
                "deadband [{lo}, {hi}] is not contained in grid [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// Uniform distribution over the bins whose centres lie inside the deadband, both modes.
    pub fn deadband_start(&self, t_set: f64, deadband: f64) -> Array1<f64> {
        let mut x = Array1::zeros(self.dim());
        for i in 0..self.n {
            let c = self.center(i);
            if (c - t_set).abs() <= 0.5 * deadband {
                x[i] = 1.0;
                x[i + self.n] = 1.0;
            }
        }
        if x.sum() == 0.0 {
            let b = self.bin(t_set);
            x[b] = 1.0;
            x[b + self.n] = 1.0;
        }
        let s = x.sum();
        x / s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimation {
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    /// Entry `(j, i)` is the probability of moving from state `i` to state `j`.
    pub entries: Array2<f64>,
    pub dt_h: f64,
    pub t_set: f64,
    pub deadband: f64,
    pub t_amb: f64,
    pub grid: BinGrid,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.entries.dot(x)
    }

    /// Largest deviation of a column sum from one, or an error if any entry leaves [0, 1].
    pub fn stochasticity_error(&self) -> Result<f64> {
        if self.entries.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::NumericalFailure("transition entry outside [0, 1]".into()));
        }
        Ok(self.entries.columns().into_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# dt_hours={:.16e}", self.dt_h)?;
        writeln!(out, "# t_set={:.16e}", self.t_set)?;
        writeln!(out, "# deadband={:.16e}", self.deadband)?;
        writeln!(out, "# t_amb={:.16e}", self.t_amb)?;
        writeln!(out, "# grid t_min={:.16e} t_max={:.16e} n_bins={}", self.grid.t_min, self.grid.t_max, self.grid.n)?;
        for row in self.entries.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush().map_err(Error::from)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut meta = std::collections::HashMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in file.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let get = |k: &str| -> Result<f64> {
            meta.get(k)
                .ok_or_else(|| Error::Parse(format!("missing header field {k}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let n = get("n_bins")? as usize;
        let grid = BinGrid::new(get("t_min")?, get("t_max")?, n)?;
        let dim = grid.dim();
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Parse(format!("expected a {dim}x{dim} matrix")));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Self {
            entries: Array2::from_shape_vec((dim, dim), flat).map_err(|e| Error::Parse(e.to_string()))?,
            dt_h: get("dt_hours")?,
            t_set: get("t_set")?,
            deadband: get("deadband")?,
            t_amb: get("t_amb")?,
            grid,
        })
    }
}

/// Seeds one independent RNG stream per column so results do not depend on
/// scheduling, and so a larger sample count extends a smaller one.
fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(column as u64);
    rng
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_transition_matrix(
    params: &TclParams,
    grid: &BinGrid,
    t_set: f64,
    deadband: f64,
    t_amb: f64,
    dt_h: f64,
    est: &Estimation,
) -> Result<TransitionMatrix> {
    grid.check_deadband(t_set, deadband)?;
    if !(deadband > 0.0) {
        return invalid("deadband must be positive");
    }
    let prop = Propagator::new(params, t_amb, dt_h)?;
    let dim = grid.dim();
    let w = grid.width();
    let columns = par::map_range(dim, |col| {
        let mut counts = vec![0u64; dim];
        let on = grid.is_on(col);
        let lo = grid.lower_edge(col % grid.n);
        let mut rng = column_rng(est.seed, col);
        for _ in 0..est.n_samples {
            let t_a = lo + w * rng.gen::<f64>();
            let t_m = params.quasi_steady_mass(t_a);
            let (t_a, _) = prop.advance(t_a, t_m, on);
            let next_on = thermostat(on, t_a, t_set, deadband);
            counts[grid.index(t_a, next_on)] += 1;
        }
        counts
    });
    let mut entries = Array2::zeros((dim, dim));
    for (i, counts) in columns.iter().enumerate() {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            entries[[i, i]] = 1.0;
            continue;
        }
        for (j, &c) in counts.iter().enumerate() {
            entries[[j, i]] = c as f64 / total as f64;
        }
    }
    Ok(TransitionMatrix { entries, dt_h, t_set, deadband, t_amb, grid: *grid })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// False when the chain has more than one closed communicating class.
    pub unique: bool,
}

impl Stationary {
    pub fn vector(&self) -> Array1<f64> {
        Array1::from(self.x.clone())
    }
}

/// Number of closed communicating classes of the support graph of `a`.
pub fn closed_classes(a: &Array2<f64>) -> usize {
    let n = a.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 4);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if a[[j, i]] > 0.0 && i != j {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut class = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            class[v.index()] = c;
        }
    }
    let mut leaks = vec![false; sccs.len()];
    for e in g.raw_edges() {
        let (s, t) = (class[e.source().index()], class[e.target().index()]);
        if s != t {
            leaks[s] = true;
        }
    }
    leaks.iter().filter(|&&l| !l).count()
}

const STATIONARY_TARGET: f64 = 1e-14;
const STATIONARY_ACCEPT: f64 = 1e-10;
const STATIONARY_CAP: usize = 2_000_000;

/// Fixed point of a column-stochastic `a` by power iteration on the lazy chain
/// `(A + I)/2`, which shares its fixed points but is aperiodic.
pub fn stationary_from(a: &Array2<f64>, start: &Array1<f64>) -> Result<Stationary> {
    let n = a.nrows();
    if a.ncols() != n || start.len() != n {
        return invalid("stationary: dimension mismatch");
    }
    let s = start.sum();
    if !(s > 0.0) || start.iter().any(|&v| v < 0.0) {
        return invalid("stationary: start must be a nonnegative nonzero vector");
    }
    // Sparse columns make each iteration O(nnz).
    let cols: Vec<Vec<(usize, f64)>> =
        (0..n).map(|i| (0..n).filter(|&j| a[[j, i]] != 0.0).map(|j| (j, a[[j, i]])).collect()).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, col) in cols.iter().enumerate() {
            let xi = x[i];
            if xi != 0.0 {
                for &(j, v) in col {
                    y[j] += v * xi;
                }
            }
        }
    };
    let mut x: Vec<f64> = start.iter().map(|v| v / s).collect();
    let mut y = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut residual = f64::INFINITY;
    let mut it = 0usize;
    while it < STATIONARY_CAP {
        for _ in 0..64 {
            apply(&x, &mut y);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = 0.5 * (*xi + yi);
            }
            it += 1;
        }
        let total: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= total);
        apply(&x, &mut y);
        residual = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual <= STATIONARY_TARGET {
            break;
        }
        if residual < 0.5 * best {
            best = residual;
            stale = 0;
        } else {
            stale += 1;
            if stale > 200 && best <= STATIONARY_ACCEPT {
                break;
            }
        }
    }
    if residual > STATIONARY_ACCEPT {
        return Err(Error::NumericalFailure(format!(
            "stationary distribution did not converge: residual {residual:e} after {it} iterations"
        )));
    }
    Ok(Stationary { x, residual, iterations: it, unique: closed_classes(a) == 1 })
}

pub fn stationary_distribution(a: &TransitionMatrix) -> Result<Stationary> {
    let start = a.grid.deadband_start(a.t_set, a.deadband);
    stationary_from(&a.entries, &start)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationState {
    pub x: Array1<f64>,
    pub x_a: Array1<f64>,
}

impl PopulationState {
    pub fn from_stationary(x0: &Array1<f64>) -> Self {
        Self { x: x0.clone(), x_a: Array1::zeros(x0.len()) }
    }

    pub fn mass(&self) -> f64 {
        self.x.sum() + self.x_a.sum()
    }
}

const ADMISSIBILITY_TOL: f64 = 1e-12;

/// `x <- A(x - u)`, `x_a <- A_a(x_a + u)` for admissible `0 <= u <= x`.
pub fn step_population(
    state: &PopulationState,
    u: &Array1<f64>,
    a: &TransitionMatrix,
    a_a: &TransitionMatrix,
) -> Result<PopulationState> {
    let n = state.x.len();
    if u.len() != n || a.dim() != n || a_a.dim() != n || state.x_a.len() != n {
        return invalid("step_population: dimension mismatch");
    }
    for i in 0..n {
        if !(u[i] >= -ADMISSIBILITY_TOL) || u[i] > state.x[i] + ADMISSIBILITY_TOL {
            return Err(Error::ConstraintViolation { bin: i, u: u[i], available: state.x[i] });
        }
    }
    let remaining = (&state.x - u).mapv(|v| v.max(0.0));
    let moved = &state.x_a + &u.mapv(|v| v.max(0.0));
    Ok(PopulationState { x: a.apply(&remaining), x_a: a_a.apply(&moved) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputVector {
    pub c_on: Array1<f64>,
    pub p_on: f64,
}

impl OutputVector {
    pub fn new(grid: &BinGrid, p_on: f64) -> Self {
        let mut c_on = Array1::zeros(grid.dim());
        c_on.slice_mut(ndarray::s![grid.n..]).fill(p_on);
        Self { c_on, p_on }
    }
}

pub fn aggregate_power(state: &PopulationState, c: &OutputVector) -> f64 {
    c.c_on.dot(&state.x) + c.c_on.dot(&state.x_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn grid_arithmetic_and_edges() {
        let g = BinGrid::new(19.0, 23.0, 8).unwrap();
        assert_abs_diff_eq!(g.width(), 0.5);
        assert_eq!(g.dim(), 16);
        assert_eq!(g.index(19.0, false), 0);
        assert_eq!(g.index(23.0 - 1e-9, true), 15);
        assert_eq!(g.index(23.0, true), 15);
        assert_eq!(g.index(10.0, false), 0);
        assert_eq!(g.index(99.0, false), 7);
        assert_eq!(g.bin(19.5), 1);
        assert!(BinGrid::new(20.0, 19.0, 8).is_err());
        assert!(BinGrid::new(19.0, 23.0, 1).is_err());
        assert!(g.check_deadband(20.0, 1.0).is_ok());
        assert!(matches!(g.check_deadband(22.8, 1.0), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn interior_temperatures_round_trip() {
        let g = BinGrid::new(18.0, 24.0, 120).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let i = rng.gen_range(0..g.n);
            let t = g.lower_edge(i) + g.width() * rng.gen_range(0.01..0.99);
            assert_eq!(g.bin(t), i);
            assert_eq!(g.index(t, true), i + g.n);
        }
    }

    #[test]
    fn two_state_stationary() {
        let a = array![[0.9, 0.5], [0.1, 0.5]];
        let s = stationary_from(&a, &array![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(s.x[0], 5.0 / 6.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.x[1], 1.0 / 6.0, epsilon = 1e-13);
        assert!(s.unique);
    }

    #[test]
    fn identity_chain_is_flagged() {
        let a = Array2::<f64>::eye(4);
        let start = array![0.0, 0.25, 0.75, 0.0];
        let s = stationary_from(&a, &start).unwrap();
        assert_eq!(s.x, vec![0.0, 0.25, 0.75, 0.0]);
        assert!(!s.unique);
    }

    #[test]
    fn periodic_chain_converges() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let s = stationary_from(&a, &array![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-13);
    }

    fn small() -> (TclParams, BinGrid) {
        (TclParams::default(), BinGrid::new(19.0, 23.0, 10).unwrap())
    }

    #[test]
    fn estimated_columns_are_stochastic() {
        let (p, g) = small();
        let a =
            estimate_transition_matrix(&p, &g, 20.0, 1.0, 32.0, 1.0 / 60.0, &Estimation { n_samples: 1000, seed: 1 })
                .unwrap();
        assert!(a.stochasticity_error().unwrap() < 1e-12);
    }

    #[test]
    fn on_bins_drift_cooler() {
        let p = TclParams::default();
        let g = BinGrid::new(18.0, 24.0, 120).unwrap();
        let a =
            estimate_transition_matrix(&p, &g, 20.0, 1.0, 32.0, 1.0 / 60.0, &Estimation { n_samples: 2000, seed: 4 })
                .unwrap();
        let col = g.n + g.bin(20.0);
        let (mut cooler, mut warmer) = (0.0, 0.0);
        for j in 0..g.dim() {
            let b = j % g.n;
            if b < col - g.n {
                cooler += a.entries[[j, col]];
            } else if b > col - g.n {
                warmer += a.entries[[j, col]];
            }
        }
        assert!(cooler > warmer, "cooler {cooler} warmer {warmer}");
    }

    #[test]
    fn missing_deadband_room_is_a_config_error() {
        let (p, g) = small();
        let r = estimate_transition_matrix(&p, &g, 22.9, 1.0, 32.0, 1.0 / 60.0, &Estimation { n_samples: 10, seed: 1 });
        assert!(matches!(r, Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let (p, g) = small();
        let a =
            estimate_transition_matrix(&p, &g, 20.0, 1.0, 32.0, 1.0 / 60.0, &Estimation { n_samples: 1000, seed: 9 })
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        a.write_csv(&path).unwrap();
        let b = TransitionMatrix::read_csv(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn population_step_edge_cases() {
        let (p, g) = small();
        let est = Estimation { n_samples: 1000, seed: 2 };
        let a = estimate_transition_matrix(&p, &g, 20.0, 1.0, 32.0, 1.0 / 60.0, &est).unwrap();
        let a_a = estimate_transition_matrix(&p, &g, 22.0, 1.0, 32.0, 1.0 / 60.0, &est).unwrap();
        let x0 = stationary_distribution(&a).unwrap().vector();
        let s = PopulationState::from_stationary(&x0);

        let free = step_population(&s, &Array1::zeros(g.dim()), &a, &a_a).unwrap();
        assert_eq!(free.x, a.apply(&x0));

        let full = step_population(&s, &x0, &a, &a_a).unwrap();
        assert!(full.x.iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(full.x_a.sum(), 1.0, epsilon = 1e-12);

        let mut over = x0.clone();
        let bin = x0.iter().position(|&v| v > 0.0).unwrap();
        over[bin] += 0.1;
        match step_population(&s, &over, &a, &a_a) {
            Err(Error::ConstraintViolation { bin: b, .. }) => assert_eq!(b, bin),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn aggregate_power_extremes() {
        let g = BinGrid::new(19.0, 23.0, 4).unwrap();
        let c = OutputVector::new(&g, 300.0);
        assert_eq!(c.c_on.iter().filter(|&&v| v == 300.0).count(), 4);
        let off = PopulationState { x: array![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], x_a: Array1::zeros(8) };
        assert_eq!(aggregate_power(&off, &c), 0.0);
        let on = PopulationState {
            x: array![0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.1, 0.0],
            x_a: array![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5],
        };
        assert_abs_diff_eq!(aggregate_power(&on, &c), 300.0, epsilon = 1e-12);
    }
}
