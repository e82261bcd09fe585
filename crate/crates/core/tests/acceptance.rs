//! Acceptance checks on the rowing-boat benchmark and the property suites.
//! Prints one PASS/FAIL line per criterion. Set `ACCEPTANCE_STRICT=1` to
//! turn any failure into a non-zero exit status.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use pdplan::markov::RateMatrix;
use pdplan::model::{Dynamics, Grid, PointLabel, Problem, Rect, Region};
use pdplan::planners::{plan, solve_coupled, solve_infinite_rate, Plan, PlannerKind};
use pdplan::ring::{build_ring_problem, mode_angle, theta_variability_bound, RingSpec};
use pdplan::simulate::{monte_carlo, replay_trajectory, Controller, Outcome, SimOptions};
use pdplan::solver::{
    evaluate_frozen_policy, sweep_solve, EulerOperator, Scheme, SolveOptions, SolveReport, ValueField,
};
use pdplan::updates::{euler_update, semilag_update, Stencil};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdicts {
    results: Vec<(String, bool)>,
}

impl Verdicts {
    fn record(&mut self, name: &str, checks: &[(String, bool)]) {
        for (text, ok) in checks {
            println!("    {} {text}", if *ok { "ok  " } else { "MISS" });
        }
        let pass = checks.iter().all(|c| c.1);
        println!("[{}] {name}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), pass));
    }
}

fn within(label: &str, value: f64, target: f64, tol: f64) -> (String, bool) {
    (format!("{label}: {value:.4} (target {target} ± {tol})"), (value - target).abs() <= tol)
}

fn value_at(p: &Problem<f64>, f: &ValueField<f64>, x: [f64; 2], mode: usize) -> f64 {
    f.value(p.grid().nearest(&x).unwrap(), mode)
}

struct Solved {
    field: ValueField<f64>,
    report: SolveReport,
}

fn coupled(cells: usize, lambda: f64) -> Solved {
    let p = benchmark(cells, lambda);
    let (field, report) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).expect("benchmark solve");
    Solved { field, report }
}

fn main() {
    let start = Instant::now();
    let mut v = Verdicts { results: Vec::new() };
    let h = 1.0 / 320.0;
    let p0 = benchmark(320, 0.0);

    let s0 = coupled(320, 0.0);
    let s1 = coupled(320, 1.0);
    let s10 = coupled(320, 10.0);
    let s50 = coupled(320, 50.0);

    // 1
    v.record(
        "1 uncoupled mode gap",
        &[within("||u0_1 - u0_2||_inf", s0.field.sup_mode_spread(), 0.8518, 0.02)],
    );

    // 2
    let at0 = [value_at(&p0, &s0.field, X_HAT, 0), value_at(&p0, &s0.field, X_HAT, 1)];
    let at1 = [value_at(&p0, &s1.field, X_HAT, 0), value_at(&p0, &s1.field, X_HAT, 1)];
    let member = |set: &[f64; 2], target: f64| {
        (
            format!("lambda=1 values {:.4}, {:.4} contain {target} ± 0.02", set[0], set[1]),
            set.iter().any(|&u| (u - target).abs() <= 0.02),
        )
    };
    v.record(
        "2 point values at x_hat",
        &[
            within("lambda=0 min-mode value", at0[0].min(at0[1]), 1.073, 0.02),
            within("lambda=0 eastward-wind value", at0[0], 1.073, 0.02),
            member(&at1, 0.915),
            member(&at1, 0.873),
        ],
    );

    // 3
    let lambdas = [1.0, 5.0, 10.0, 50.0, 100.0];
    let mut gaps = Vec::new();
    let mut checks = Vec::new();
    for &l in &lambdas {
        let gap = match l {
            1.0 => s1.field.sup_mode_spread(),
            10.0 => s10.field.sup_mode_spread(),
            50.0 => s50.field.sup_mode_spread(),
            _ => coupled(320, l).field.sup_mode_spread(),
        };
        // Two symmetric modes: expected hitting time 1/λ, running cost 1.
        let bound = 1.0 / l + 5.0 * h;
        checks.push((format!("lambda={l}: gap {gap:.5} <= 1/lambda + 5h = {bound:.5}"), gap <= bound));
        gaps.push(gap);
    }
    checks.push((
        format!("strictly decreasing: {:?}", gaps.iter().map(|g| format!("{g:.5}")).collect::<Vec<_>>()),
        gaps.windows(2).all(|w| w[1] < w[0]),
    ));
    v.record("3 mode-difference decay", &checks);

    // 4
    let mut checks = Vec::new();
    let targets = [
        (1.0, [0.840, 0.882, 1.030], 0.225),
        (10.0, [0.636, 0.731, 0.702], 0.425),
    ];
    for (lambda, means, collide) in targets {
        let p = benchmark(320, lambda);
        let opts = SimOptions::for_grid(p.grid());
        for (k, kind) in PlannerKind::ALL.into_iter().enumerate() {
            let pl = plan(&p, kind, Scheme::Euler, &SolveOptions::default()).unwrap();
            let ctrl = Controller::new(p.grid(), &pl.field, &pl.policy);
            let (st, _) = monte_carlo(&p, &ctrl, X_HAT, 0, p.rates(), 2000, 42, &opts);
            let mean = st.mean_arrival_time.unwrap_or(f64::NAN);
            let se = st.std_error.unwrap_or(f64::NAN);
            let dev = (mean - means[k]).abs();
            checks.push((
                format!(
                    "lambda={lambda} {}: mean {mean:.4} ± {se:.4} (SE), target {} — {:.1} SE, |diff| {dev:.4}",
                    kind.name(),
                    means[k],
                    dev / se
                ),
                dev <= 3.0 * se && dev <= 0.05,
            ));
            if kind == PlannerKind::Infinite {
                checks.push((
                    format!("lambda={lambda} infinite collisions {:.1}% (target {:.1}% ± 5)", 100.0 * st.collision_fraction, 100.0 * collide),
                    (st.collision_fraction - collide).abs() <= 0.05,
                ));
            }
        }
    }
    v.record("4 Monte Carlo means (N=2000)", &checks);

    // 5
    let mut checks = Vec::new();
    for (lambda, target) in [(1.0, 1.0), (10.0, 13.2)] {
        let p = benchmark(320, lambda);
        let ur = if lambda == 1.0 { &s1.field } else { &s10.field };
        let pl = plan(&p, PlannerKind::Uncoupled, Scheme::Euler, &SolveOptions::default()).unwrap();
        let (urp, _) = evaluate_frozen_policy(&p, &pl.policy, p.rates(), &SolveOptions::default()).unwrap();
        let (a, b) = (value_at(&p, &urp, X_HAT, 0), value_at(&p, ur, X_HAT, 0));
        checks.push(within(&format!("lambda={lambda} uncoupled degradation % (u_rp {a:.4}, u_r {b:.4})"), 100.0 * (a - b) / b, target, 2.0));
    }
    v.record("5 degradation percentages", &checks);

    // 6
    let p = benchmark(320, 10.0);
    let times = [0.029, 0.064, 0.098, 0.159, 0.285, 0.689, 0.706];
    let path: Vec<(f64, usize)> = times.iter().enumerate().map(|(k, &t)| (t, (k + 1) % 2)).collect();
    let opts = SimOptions::for_grid(p.grid());
    let plans: Vec<Plan<f64>> =
        PlannerKind::ALL.iter().map(|&k| plan(&p, k, Scheme::Euler, &SolveOptions::default()).unwrap()).collect();
    let runs: Vec<_> = plans
        .iter()
        .map(|pl| replay_trajectory(&p, &Controller::new(p.grid(), &pl.field, &pl.policy), X_HAT, 0, &path, &opts))
        .collect();
    let mut checks = Vec::new();
    match (runs[0].outcome, runs[1].outcome, runs[2].outcome) {
        (Outcome::Arrived { time: tc }, Outcome::Arrived { time: tu }, Outcome::Collided { time: ti, .. }) => {
            checks.push((format!("coupled arrives first ({tc:.4} < {tu:.4})"), tc < tu));
            checks.push(within("coupled arrival", tc, 0.589, 0.0589));
            checks.push(within("uncoupled arrival", tu, 0.741, 0.0741));
            checks.push((
                format!("uncoupled sees two more switches ({} vs {})", runs[1].switches.len(), runs[0].switches.len()),
                runs[1].switches.len() == runs[0].switches.len() + 2,
            ));
            checks.push(within("infinite-rate collision", ti, 0.423, 0.0423));
        }
        other => checks.push((format!("unexpected outcomes {other:?}"), false)),
    }
    v.record("6 single-trajectory replay", &checks);

    // 7
    v.record("7 property suites", &property_suites());

    // 8
    v.record("8 ring model", &ring_checks());

    // 9
    let (_, _, rinf) = solve_infinite_rate(&benchmark(320, 1.0), Scheme::Euler, &SolveOptions::default()).unwrap();
    let counts = [s0.report.sweeps, s1.report.sweeps, s10.report.sweeps, s50.report.sweeps];
    v.record(
        "9 sweep-count trend",
        &[
            (format!("lambda = 0, 1, 10, 50: {counts:?} non-decreasing"), counts.windows(2).all(|w| w[0] <= w[1])),
            (
                format!("infinite rate: {} sweeps, within 2x of {}", rinf.sweeps, counts[0]),
                rinf.sweeps <= 2 * counts[0] && counts[0] <= 2 * rinf.sweeps,
            ),
        ],
    );

    let failed: Vec<&str> = v.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s{}",
        v.results.len() - failed.len(),
        v.results.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

/// 5x5 grid on [0, 4h]² whose centre (index 12) is the update point.
fn local_problem(h: f64, speed: f64, winds: &[[f64; 2]], rates: RateMatrix<f64>) -> Problem<f64> {
    let grid = Grid::new(&[0.0, 0.0], &[4.0 * h, 4.0 * h], h).unwrap();
    let region = Region {
        domain: Rect::new([0.0, 0.0], [4.0 * h, 4.0 * h]),
        obstacles: vec![],
        target_points: vec![[0.0, 2.0 * h]],
        target_rects: vec![],
    };
    Problem::new(grid, region, Dynamics::time_optimal(speed, winds), rates, 0.0, 1e-9).unwrap()
}

const CENTRE: usize = 12;

fn random_dynamics(rng: &mut ChaCha8Rng) -> (f64, Vec<[f64; 2]>, RateMatrix<f64>) {
    let speed = rng.random_range(0.5..3.0);
    let winds: Vec<[f64; 2]> = (0..2)
        .map(|_| {
            let r = speed * rng.random_range(0.0..0.9);
            let a = rng.random_range(0.0..2.0 * PI);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let l = rng.random_range(0.0..5.0);
    (speed, winds, RateMatrix::uniform(2, l).unwrap())
}

fn property_suites() -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    // Monotonicity of both local updates.
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (speed, winds, rates) = random_dynamics(&mut rng);
        let h = 0.01;
        let p = local_problem(h, speed, &winds, rates);
        let n = 2;
        let mut lo = vec![f64::INFINITY; 25 * n];
        for q in [CENTRE - 1, CENTRE + 1, CENTRE - 5, CENTRE + 5, CENTRE] {
            for j in 0..n {
                if q == CENTRE || rng.random_bool(0.85) {
                    lo[q * n + j] = rng.random_range(0.0..0.1);
                }
            }
        }
        let mut hi = lo.clone();
        for x in hi.iter_mut() {
            if x.is_finite() && rng.random_bool(0.5) {
                *x += rng.random_range(0.0..0.05);
            }
        }
        for i in 0..n {
            let (a, b) = (euler_update(&Stencil::new(&p, &lo, CENTRE), i), euler_update(&Stencil::new(&p, &hi, CENTRE), i));
            let (c, d) = (
                semilag_update(&Stencil::new(&p, &lo, CENTRE), i).unwrap(),
                semilag_update(&Stencil::new(&p, &hi, CENTRE), i).unwrap(),
            );
            let slack = 1e-9;
            for (x, y) in [(a.value, b.value), (c.value, d.value)] {
                if x > y + slack {
                    violations += 1;
                    worst = worst.max(x - y);
                }
            }
        }
    }
    out.push((format!("update monotonicity on 10^4 random inputs: {violations} violations (worst {worst:.2e})"), violations == 0));

    // Eulerian vs semi-Lagrangian per update on the benchmark dynamics:
    // sup |diff| / h² must level off under dyadic refinement (coarse levels
    // are pre-asymptotic when λ h is not small).
    let hs = [0.02, 0.01, 0.005, 0.0025, 0.00125, 0.000625];
    let mut consts = [0.0f64; 6];
    let mut orders = Vec::new();
    for _ in 0..300 {
        let lambda = rng.random_range(0.0..20.0);
        let rates = RateMatrix::uniform(2, lambda).unwrap();
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dir = rng.random_range(0.0..2.0 * PI);
        let u = |x: f64, y: f64, j: usize| {
            0.5 + 0.6 * (x * dir.cos() + y * dir.sin()) + 0.3 * c[0] * x * x + 0.3 * c[1] * x * y + 0.3 * c[2] * y * y
                + 0.05 * (j as f64) * c[3]
        };
        let mut errs = [0.0f64; 6];
        for (k, &h) in hs.iter().enumerate() {
            let p = local_problem(h, 2.0, &[[1.5, 0.0], [-1.5, 0.0]], rates.clone());
            let mut vals = vec![f64::INFINITY; 50];
            for q in [CENTRE - 1, CENTRE + 1, CENTRE - 5, CENTRE + 5, CENTRE] {
                let x = p.grid().point2(q);
                for j in 0..2 {
                    vals[q * 2 + j] = u(x[0] - 2.0 * h, x[1] - 2.0 * h, j);
                }
            }
            let st = Stencil::new(&p, &vals, CENTRE);
            let e = euler_update(&st, 0).value;
            let s = semilag_update(&st, 0).unwrap().value;
            errs[k] = (e - s).abs();
            consts[k] = consts[k].max(errs[k] / (h * h));
        }
        if errs[0] > 1e-12 && errs[5] > 0.0 {
            orders.push((errs[0] / errs[5]).log2() / 5.0);
        }
    }
    orders.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = orders.get(orders.len() / 2).copied().unwrap_or(f64::INFINITY);
    out.push((
        format!(
            "euler vs semilag: sup |diff|/h^2 = {:?} for h = {hs:?}; median observed order {median:.2}",
            consts.map(|c| (c * 100.0).round() / 100.0)
        ),
        consts[5] <= 1.1 * consts[4] && (orders.is_empty() || median >= 1.8),
    ));

    // CTMC identities.
    let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { rng.random_range(0.2..3.0) }).collect()).collect();
    let r = RateMatrix::from_rows(&rows).unwrap();
    let (ps, pt, pst) = (
        r.transition_probabilities(0.3).unwrap(),
        r.transition_probabilities(0.7).unwrap(),
        r.transition_probabilities(1.0).unwrap(),
    );
    let mut semigroup: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let prod: f64 = (0..3).map(|k| ps.get(i, k) * pt.get(k, j)).sum();
            semigroup = semigroup.max((prod - pst.get(i, j)).abs());
        }
    }
    out.push((format!("semigroup P(0.3)P(0.7) = P(1): max error {semigroup:.1e}"), semigroup < 1e-12));
    let pi = r.invariant_distribution().unwrap();
    let fixed = (0..3).map(|j| ((0..3).map(|i| pi[i] * pst.get(i, j)).sum::<f64>() - pi[j]).abs()).fold(0.0, f64::max);
    out.push((format!("invariant distribution fixed by P(1): max error {fixed:.1e}"), fixed < 1e-12));
    let expected = r.expected_hitting_time(0, 2).unwrap();
    let samples: Vec<f64> = (0..100_000)
        .map(|_| {
            let mut t0 = 0.0;
            let mut from = 0;
            loop {
                let path = r.sample_mode_path(from, 20.0, &mut rng);
                if let Some(s) = path.iter().find(|s| s.1 == 2) {
                    break t0 + s.0;
                }
                t0 += 20.0;
                from = path.last().map_or(from, |s| s.1);
            }
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let se = (samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64 / samples.len() as f64).sqrt();
    out.push((
        format!("hitting time 0 -> 2: linear system {expected:.4}, 10^5 samples {mean:.4} ± {se:.4}"),
        (mean - expected).abs() <= 3.0 * se,
    ));

    // Eikonal cone refinement.
    let errs: Vec<f64> = [20usize, 40, 80].iter().map(|&c| cone_error(c)).collect();
    out.push((format!("eikonal cone sup errors {errs:?} decreasing"), errs[0] > errs[1] && errs[1] > errs[2]));

    // Active flags.
    let p = benchmark(80, 5.0);
    let (a, _) = sweep_solve(&p, &EulerOperator, &SolveOptions::default()).unwrap();
    let (b, _) = sweep_solve(&p, &EulerOperator, &SolveOptions { active_flags: false, ..SolveOptions::default() }).unwrap();
    out.push(("active flags vs always-recompute: bit-identical".into(), a.raw() == b.raw()));

    // Seed determinism, independent of the thread count.
    let p = benchmark(80, 5.0);
    let pl = plan(&p, PlannerKind::Coupled, Scheme::Euler, &SolveOptions::default()).unwrap();
    let ctrl = Controller::new(p.grid(), &pl.field, &pl.policy);
    let opts = SimOptions::for_grid(p.grid());
    let (s1, r1) = monte_carlo(&p, &ctrl, X_HAT, 0, p.rates(), 300, 99, &opts);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (s2, r2) = single.install(|| monte_carlo(&p, &ctrl, X_HAT, 0, p.rates(), 300, 99, &opts));
    let (s3, _) = monte_carlo(&p, &ctrl, X_HAT, 0, p.rates(), 300, 100, &opts);
    out.push((
        "seed determinism (1 thread vs pool identical; other seed differs)".into(),
        s1 == s2 && r1 == r2 && s1.mean_arrival_time != s3.mean_arrival_time,
    ));
    out
}

fn cone_error(cells: usize) -> f64 {
    let grid = Grid::new(&[0.0, 0.0], &[1.0, 1.0], 1.0 / cells as f64).unwrap();
    let region = Region {
        domain: Rect::new([0.0, 0.0], [1.0, 1.0]),
        obstacles: vec![],
        target_points: vec![[0.5, 0.5]],
        target_rects: vec![],
    };
    let p = Problem::new(grid, region, Dynamics::time_optimal(1.0, &[[0.0, 0.0]]), RateMatrix::zeros(1), 0.0, 1e-12).unwrap();
    let (f, _) = sweep_solve(&p, &EulerOperator, &SolveOptions::default()).unwrap();
    (0..p.grid().len())
        .filter(|&q| p.label(q) == PointLabel::Free)
        .map(|q| {
            let x = p.grid().point2(q);
            (f.value(q, 0) - (x[0] - 0.5).hypot(x[1] - 0.5)).abs()
        })
        .fold(0.0, f64::max)
}

fn ring_checks() -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let cells = 320;
    let grid = Grid::new(&[0.0, 0.0], &[1.0, 1.0], 1.0 / cells as f64).unwrap();
    let spec = RingSpec {
        modes: 8,
        sigma: 2.0,
        wind_speed: 1.5,
        speed: 2.0,
        grid,
        region: benchmark_region(),
        terminal_cost: 0.0,
        epsilon: 1e-6,
    };
    let p = build_ring_problem(&spec).unwrap();
    match solve_coupled(&p, Scheme::Euler, &SolveOptions::default()) {
        Ok((f, r)) => {
            out.push((format!("n=8 ring solve converged in {} sweeps", r.sweeps), true));
            let mut worst = f64::NEG_INFINITY;
            let mut ok = true;
            for i in 0..8 {
                for j in (i + 1)..8 {
                    let d = f.sup_mode_difference(i, j);
                    let b = theta_variability_bound(2.0, mode_angle(8, i), mode_angle(8, j)) + 5.0 / cells as f64;
                    worst = worst.max(d - b);
                    ok &= d <= b;
                }
            }
            out.push((format!("all 28 pairs within phi + 5h (worst margin {:.4})", -worst), ok));
        }
        Err(e) => out.push((format!("n=8 ring solve failed: {e}"), false)),
    }

    // Rotation by 90 degrees on a square centred at the target maps mode i
    // onto mode i + n/4.
    for n in [4usize, 8] {
        let cells = 64;
        let eps = 1e-10;
        let grid = Grid::new(&[-1.0, -1.0], &[1.0, 1.0], 2.0 / cells as f64).unwrap();
        let region = Region {
            domain: Rect::new([-1.0, -1.0], [1.0, 1.0]),
            obstacles: vec![],
            target_points: vec![[0.0, 0.0]],
            target_rects: vec![],
        };
        let p = build_ring_problem(&RingSpec {
            modes: n,
            sigma: 2.0,
            wind_speed: 1.5,
            speed: 2.0,
            grid,
            region,
            terminal_cost: 0.0,
            epsilon: eps,
        })
        .unwrap();
        let (f, _) = solve_coupled(&p, Scheme::Euler, &SolveOptions::default()).unwrap();
        let side = cells + 1;
        let shift = n / 4;
        let mut worst: f64 = 0.0;
        for iy in 1..side - 1 {
            for ix in 1..side - 1 {
                let q = iy * side + ix;
                let rq = ix * side + (side - 1 - iy); // (x, y) -> (-y, x)
                for i in 0..n {
                    let (a, b) = (f.value(rq, (i + shift) % n), f.value(q, i));
                    if a.is_finite() || b.is_finite() {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        out.push((
            format!("n={n} rotational covariance u_(i+{shift})(Rx) = u_i(x): max deviation {worst:.1e} (<= 10 eps = {:.0e})", 10.0 * eps),
            worst <= 10.0 * eps,
        ));
    }
    out
}
