mod common;

use common::*;
use pdplan::planners::{plan, solve_coupled, PlannerKind};
use pdplan::ring::{build_ring_problem, mode_angle, theta_variability_bound, RingSpec};
use pdplan::solver::evaluate_frozen_policy;
use pdplan::{Dynamics, Grid, Problem32, RateMatrix32, Rect, Region, Scheme, SolveOptions};

#[test]
fn single_precision_solve_tracks_double() {
    let grid = Grid::new(&[0.0f32, 0.0], &[1.0, 1.0], 1.0 / 40.0).unwrap();
    let region = Region {
        domain: Rect::new([0.0f32, 0.0], [1.0, 1.0]),
        obstacles: vec![Rect::new([0.1, 0.1], [0.85, 0.15])],
        target_points: vec![[0.5, 0.05]],
        target_rects: vec![],
    };
    let p: Problem32 = Problem32::new(
        grid,
        region,
        Dynamics::time_optimal(2.0, &[[1.5, 0.0], [-1.5, 0.0]]),
        RateMatrix32::uniform(2, 5.0).unwrap(),
        0.0,
        1e-5,
    )
    .unwrap();
    let (f32_field, _) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).unwrap();
    let (f64_field, _) = solve_coupled(&benchmark(40, 5.0), Scheme::Euler, &SolveOptions::default()).unwrap();
    let mut worst = 0.0f64;
    for q in 0..p.grid().len() {
        for i in 0..2 {
            let (a, b) = (f32_field.value(q, i) as f64, f64_field.value(q, i));
            assert_eq!(a.is_finite(), b.is_finite());
            if b.is_finite() {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn schemes_agree_on_the_benchmark() {
    let mut diffs = Vec::new();
    for cells in [40, 80] {
        let p = benchmark(cells, 1.0);
        let (e, _) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).unwrap();
        let (s, _) = solve_coupled(&p, Scheme::Semilag, &SolveOptions::default()).unwrap();
        let q = p.grid().nearest(&X_HAT).unwrap();
        diffs.push((e.value(q, 0) - s.value(q, 0)).abs());
    }
    assert!(diffs[0] < 0.05 && diffs[1] < 0.03, "{diffs:?}");
}

#[test]
fn coupled_policy_evaluates_to_its_own_value() {
    let p = benchmark(80, 2.0);
    let pl = plan(&p, PlannerKind::Coupled, Scheme::Euler, &SolveOptions::default()).unwrap();
    let (urp, _) = evaluate_frozen_policy(&p, &pl.policy, p.rates(), &SolveOptions::default()).unwrap();
    let q = p.grid().nearest(&X_HAT).unwrap();
    for i in 0..2 {
        let (a, b) = (urp.value(q, i), pl.field.value(q, i));
        assert!(a >= b - 1e-6, "frozen value below the optimum: {a} < {b}");
        assert!((a - b) / b < 0.02, "{a} vs {b}");
    }
}

#[test]
fn uncoupled_policy_is_worse_under_switching() {
    let p = benchmark(80, 10.0);
    let pl = plan(&p, PlannerKind::Uncoupled, Scheme::Euler, &SolveOptions::default()).unwrap();
    let (ur, _) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).unwrap();
    let (urp, _) = evaluate_frozen_policy(&p, &pl.policy, p.rates(), &SolveOptions::default()).unwrap();
    let q = p.grid().nearest(&X_HAT).unwrap();
    assert!(urp.value(q, 0) > ur.value(q, 0) * 1.05);
}

fn ring(modes: usize, cells: usize) -> Problem<f64> {
    build_ring_problem(&RingSpec {
        modes,
        sigma: 2.0,
        wind_speed: 1.5,
        speed: 2.0,
        grid: Grid::new(&[0.0, 0.0], &[1.0, 1.0], 1.0 / cells as f64).unwrap(),
        region: benchmark_region(),
        terminal_cost: 0.0,
        epsilon: 1e-6,
    })
    .unwrap()
}

use pdplan::Problem;

#[test]
fn ring_pairs_respect_the_angular_bound() {
    for n in [4, 8, 16] {
        let cells = 80;
        let (f, _) = solve_coupled(&ring(n, cells), Scheme::Euler, &SolveOptions::default()).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                let b = theta_variability_bound(2.0, mode_angle(n, i), mode_angle(n, j)) + 5.0 / cells as f64;
                assert!(f.sup_mode_difference(i, j) <= b, "n={n} ({i},{j})");
            }
        }
    }
}

#[test]
fn finer_rings_converge() {
    // Value at x_hat averaged over directions settles as n grows.
    let avg = |n: usize| {
        let p = ring(n, 80);
        let (f, _) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).unwrap();
        let q = p.grid().nearest(&X_HAT).unwrap();
        (0..n).map(|i| f.value(q, i)).sum::<f64>() / n as f64
    };
    let (a, b, c) = (avg(4), avg(8), avg(16));
    assert!((c - b).abs() < (b - a).abs() + 1e-3, "{a} {b} {c}");
}
