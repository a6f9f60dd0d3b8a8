use std::sync::OnceLock;

use ndarray::Array1;
use proptest::prelude::*;

use tclreach::aggregation::{combine, query_p_at_t, query_t_at_p};
use tclreach::etp::{Propagator, TclParams};
use tclreach::lp::{self, LinearProgram, LpStatus};
use tclreach::markov::{estimate_transition_matrix, step_population, BinGrid, Estimation, PopulationState};
use tclreach::reachhold::{ControlPlan, FleetModel, Method, ModelSpec, ReachHoldPoint, ReachHoldSet, Regime};
use tclreach::validation::discretize_plan;

fn regime() -> Regime {
    Regime {
        t_set: 20.0,
        t_set_new: 22.0,
        deadband: 1.0,
        t_amb: 32.0,
        dt_h: 1.0 / 60.0,
        grid: BinGrid::new(18.0, 24.0, 24).unwrap(),
    }
}

fn small_model() -> &'static FleetModel {
    static M: OnceLock<FleetModel> = OnceLock::new();
    M.get_or_init(|| {
        FleetModel::build(&ModelSpec {
            params: TclParams::default(),
            regime: regime(),
            p_on: 300.0,
            estimation: Estimation { n_samples: 400, seed: 11 },
            horizon: 60,
            with_outer: false,
        })
        .unwrap()
    })
}

/// A monotone staircase from sorted-descending P values and increasing T values.
fn frontier() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((1usize..20, 1u32..50), 0..6).prop_map(|steps| {
        let mut t = 0;
        let mut p = steps.iter().map(|s| s.1).sum::<u32>() as f64;
        steps
            .iter()
            .map(|&(dt, dp)| {
                t += dt;
                let point = (t, p);
                p -= dp as f64 * 0.5;
                point
            })
            .collect()
    })
}

fn set_of(points: &[(usize, f64)]) -> ReachHoldSet {
    ReachHoldSet {
        method: Method::Inner,
        regime: regime(),
        p_nom: points.first().map_or(0.0, |p| p.1),
        p_on: 100.0,
        boundary: points
            .iter()
            .map(|&(t_hold, p_hold)| ReachHoldPoint { p_hold, t_hold, method: Method::Inner, horizon_limited: false })
            .collect(),
        verified: true,
        condition: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimated_matrices_are_column_stochastic(seed in any::<u64>(), samples in 1usize..60, t_set in 19.5f64..22.5) {
        let r = regime();
        let a = estimate_transition_matrix(&TclParams::default(), &r.grid, t_set, 1.0, 32.0, r.dt_h, &Estimation { n_samples: samples, seed }).unwrap();
        prop_assert!(a.stochasticity_error().unwrap() <= 1e-12);
        prop_assert!(a.entries.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn admissible_actuation_conserves_mass(fracs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 48), 1..30)) {
        let m = small_model();
        let mut s = PopulationState::from_stationary(&m.x0);
        for f in &fracs {
            let u = &s.x * &Array1::from(f.clone());
            s = step_population(&s, &u, &m.a, &m.a_a).unwrap();
            prop_assert!((s.mass() - 1.0).abs() <= 1e-12);
            prop_assert!(s.x.iter().chain(s.x_a.iter()).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn two_half_steps_equal_one_step(t_a in 15.0f64..30.0, t_m in 15.0f64..30.0, on: bool, minutes in 0.1f64..30.0) {
        let p = TclParams::default();
        let half = Propagator::new(&p, 32.0, minutes / 60.0).unwrap();
        let full = Propagator::new(&p, 32.0, 2.0 * minutes / 60.0).unwrap();
        let (a1, m1) = half.advance(t_a, t_m, on);
        let (a2, m2) = half.advance(a1, m1, on);
        let (a, m) = full.advance(t_a, t_m, on);
        prop_assert!((a - a2).abs() <= 1e-9 && (m - m2).abs() <= 1e-9);
    }

    #[test]
    fn lp_optimum_scales_with_objective_and_rows(
        c in prop::collection::vec(-5.0f64..5.0, 3),
        rows in prop::collection::vec((prop::collection::vec(0.1f64..4.0, 3), 1.0f64..10.0), 1..5),
        s in 0.01f64..100.0,
        r in 0.01f64..100.0,
    ) {
        let build = |cs: f64, rs: f64| {
            let mut lp = LinearProgram::new(c.iter().map(|v| v * cs).collect());
            for (row, b) in &rows {
                lp.add_le(row.iter().map(|v| v * rs).collect(), b * rs);
            }
            lp
        };
        let base = lp::solve(&build(1.0, 1.0)).unwrap();
        let scaled = lp::solve(&build(s, r)).unwrap();
        prop_assert_eq!(base.status, LpStatus::Optimal);
        prop_assert_eq!(scaled.status, LpStatus::Optimal);
        prop_assert!((scaled.objective - s * base.objective).abs() <= 1e-7 * (1.0 + (s * base.objective).abs()));
    }

    #[test]
    fn combination_commutes_and_dominates(f1 in frontier(), f2 in frontier()) {
        let (s1, s2) = (set_of(&f1), set_of(&f2));
        let ab = combine(&s1, &s2).unwrap();
        let ba = combine(&s2, &s1).unwrap();
        for t in 0..120 {
            for (x, y) in [(&ab.exclusive, &ba.exclusive), (&ab.simultaneous, &ba.simultaneous), (&ab.consecutive, &ba.consecutive), (&ab.union, &ba.union)] {
                prop_assert_eq!(query_p_at_t(x, t), query_p_at_t(y, t));
            }
            let own = query_p_at_t(&s1.boundary, t).max(query_p_at_t(&s2.boundary, t));
            prop_assert!(query_p_at_t(&ab.union, t) >= own);
            prop_assert!(query_p_at_t(&ab.simultaneous, t) >= own);
        }
    }

    #[test]
    fn combination_matches_lattice_enumeration(f1 in frontier(), f2 in frontier()) {
        let (s1, s2) = (set_of(&f1), set_of(&f2));
        let c = combine(&s1, &s2).unwrap();
        let (b1, b2) = (&s1.boundary, &s2.boundary);
        // Simultaneous: (P, T) is reachable iff P ≤ P1(T) + P2(T).
        for t in 0..120 {
            let want = query_p_at_t(b1, t) + query_p_at_t(b2, t);
            prop_assert_eq!(query_p_at_t(&c.simultaneous, t), want, "t = {}", t);
            prop_assert_eq!(query_p_at_t(&c.exclusive, t), query_p_at_t(b1, t).max(query_p_at_t(b2, t)));
        }
        // Consecutive: (P, T) is reachable iff T ≤ T1(P) + T2(P); probe every half unit of P.
        for i in 1..=400 {
            let p = 0.5 * i as f64;
            prop_assert_eq!(query_t_at_p(&c.consecutive, p), query_t_at_p(b1, p) + query_t_at_p(b2, p), "p = {}", p);
        }
    }

    #[test]
    fn discretized_counts_track_the_plan(
        alpha in prop::collection::vec(0.0f64..1.0, 1..40),
        weights in prop::collection::vec(0.0f64..1.0, 48),
        n_units in 1usize..5000,
    ) {
        let total: f64 = alpha.iter().sum();
        let alpha: Vec<f64> = if total > 1.0 { alpha.iter().map(|a| a / total).collect() } else { alpha };
        let w: f64 = weights.iter().sum::<f64>().max(1e-12);
        let x0 = Array1::from(weights.iter().map(|v| v / w).collect::<Vec<_>>());
        let plan = ControlPlan::Proportional { alpha, x0 };
        let d = discretize_plan(&plan, n_units).unwrap();
        prop_assert!(d.total() <= n_units as u64);
        prop_assert!(d.max_cumulative_gap(&plan, n_units) <= 48.0);
    }
}
