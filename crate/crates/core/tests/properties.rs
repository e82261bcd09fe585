use std::f64::consts::PI;

use pdplan::cli::RunConfig;
use pdplan::updates::{euler_update, semilag_update, Stencil};
use pdplan::{Dynamics, Grid, Problem, RateMatrix, Rect, Region};
use proptest::prelude::*;

const CENTRE: usize = 12;

fn local(h: f64, speed: f64, wind: [f64; 2], rates: RateMatrix<f64>, modes: usize) -> Problem<f64> {
    let grid = Grid::new(&[0.0, 0.0], &[4.0 * h, 4.0 * h], h).unwrap();
    let region = Region {
        domain: Rect::new([0.0, 0.0], [4.0 * h, 4.0 * h]),
        obstacles: vec![],
        target_points: vec![[0.0, 2.0 * h]],
        target_rects: vec![],
    };
    let winds = vec![wind; modes];
    Problem::new(grid, region, Dynamics::time_optimal(speed, &winds), rates, 0.0, 1e-9).unwrap()
}

fn wind_strategy() -> impl Strategy<Value = (f64, [f64; 2])> {
    (0.5f64..3.0, 0.0f64..0.9, 0.0f64..2.0 * PI).prop_map(|(s, r, a)| (s, [s * r * a.cos(), s * r * a.sin()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    // A planar travel-time field solves the HJB exactly; both local updates
    // must reproduce it, which pins down the root choice and the upwinding.
    #[test]
    fn planar_solutions_are_reproduced((speed, wind) in wind_strategy(), dir in 0.0f64..2.0 * PI, h in 0.001f64..0.1) {
        let n = [dir.cos(), dir.sin()];
        let g = 1.0 / (speed - wind[0] * n[0] - wind[1] * n[1]);
        let p = local(h, speed, wind, RateMatrix::zeros(1), 1);
        let u = |q: usize| {
            let x = p.grid().point2(q);
            1.0 + g * (n[0] * x[0] + n[1] * x[1])
        };
        let mut vals = vec![f64::INFINITY; 25];
        for q in [CENTRE - 1, CENTRE + 1, CENTRE - 5, CENTRE + 5] {
            vals[q] = u(q);
        }
        let st = Stencil::new(&p, &vals, CENTRE);
        let e = euler_update(&st, 0);
        let s = semilag_update(&st, 0).unwrap();
        let tol = 1e-9 * (1.0 + g * h);
        prop_assert!((e.value - u(CENTRE)).abs() <= tol, "euler {} vs {}", e.value, u(CENTRE));
        prop_assert!((s.value - u(CENTRE)).abs() <= 1e-7 * (1.0 + g * h), "semilag {} vs {}", s.value, u(CENTRE));
        let c = e.control.unwrap();
        prop_assert!((c[0] + n[0]).abs() < 1e-6 && (c[1] + n[1]).abs() < 1e-6);
    }

    // Updates never undercut the cheapest neighbour by more than one step.
    #[test]
    fn update_bounded_below(
        (speed, wind) in wind_strategy(),
        vals4 in prop::collection::vec(0.0f64..1.0, 4),
        lambda in 0.0f64..10.0,
    ) {
        let h = 0.01;
        let rates = RateMatrix::uniform(2, lambda).unwrap();
        let p = local(h, speed, wind, rates, 2);
        let mut vals = vec![f64::INFINITY; 50];
        for (k, q) in [CENTRE - 1, CENTRE + 1, CENTRE - 5, CENTRE + 5].into_iter().enumerate() {
            vals[q * 2] = vals4[k];
            vals[q * 2 + 1] = vals4[k];
        }
        vals[CENTRE * 2 + 1] = vals4.iter().cloned().fold(f64::INFINITY, f64::min);
        let st = Stencil::new(&p, &vals, CENTRE);
        let m = vals4.iter().cloned().fold(f64::INFINITY, f64::min);
        let e = euler_update(&st, 0).value;
        prop_assert!(e >= m - 1e-12, "{e} < {m}");
        prop_assert!(e <= m + h / (speed - (wind[0].powi(2) + wind[1].powi(2)).sqrt()) + 1e-12);
    }

    #[test]
    fn transition_rows_are_distributions(rows in prop::collection::vec(prop::collection::vec(0.0f64..4.0, 3), 3), t in 0.0f64..5.0) {
        let mut rows = rows;
        for (i, r) in rows.iter_mut().enumerate() {
            r[i] = 0.0;
        }
        let m = RateMatrix::from_rows(&rows).unwrap();
        let p = m.transition_probabilities(t).unwrap();
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| p.get(i, j)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            prop_assert!((0..3).all(|j| p.get(i, j) >= -1e-12));
        }
    }

    #[test]
    fn config_round_trip(lambda in 0.0f64..50.0, cells in 10usize..400, speed in 1.6f64..5.0, seed in any::<u64>()) {
        let text = format!(
            "[grid]\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\ncells = {cells}\n\n[region]\ntarget_points = [[0.5, 0.05]]\n\n\
             [dynamics]\nspeed = {speed}\nwinds = [[1.5, 0.0], [-1.5, 0.0]]\n\n[rates]\nuniform = {lambda}\n\n\
             [simulation]\nx0 = [0.5, 0.8]\nmode0 = 1\nruns = 10\nseed = {seed}\n"
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.simulation().unwrap().seed, seed);
    }
}
