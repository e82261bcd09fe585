#![allow(dead_code)]

use pdplan::{Dynamics, Grid, Problem, RateMatrix, Rect, Region};

pub const X_HAT: [f64; 2] = [0.5, 0.8];

pub fn benchmark_region() -> Region<f64> {
    Region {
        domain: Rect::new([0.0, 0.0], [1.0, 1.0]),
        obstacles: vec![Rect::new([0.1, 0.1], [0.85, 0.15])],
        target_points: vec![[0.5, 0.05]],
        target_rects: vec![],
    }
}

pub fn benchmark_rates(lambda: f64) -> RateMatrix<f64> {
    if lambda == 0.0 {
        RateMatrix::zeros(2)
    } else {
        RateMatrix::uniform(2, lambda).unwrap()
    }
}

/// Square with the thin obstacle, east/west wind of 1.5, rowing speed 2.
pub fn benchmark(cells: usize, lambda: f64) -> Problem<f64> {
    let grid = Grid::new(&[0.0, 0.0], &[1.0, 1.0], 1.0 / cells as f64).unwrap();
    Problem::new(
        grid,
        benchmark_region(),
        Dynamics::time_optimal(2.0, &[[1.5, 0.0], [-1.5, 0.0]]),
        benchmark_rates(lambda),
        0.0,
        1e-6,
    )
    .unwrap()
}
