//! Monte Carlo execution of feedback policies under sampled wind switching.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::RateMatrix;
use crate::model::{Grid, Problem, Rect};
use crate::planners::{PlannerKind, Policy};
use crate::real::{norm, Real, Vec2};
use crate::solver::ValueField;

/// A policy together with the value field it was derived from. The field
/// may have one mode (infinite-rate planner) shared by every real mode.
#[derive(Clone, Copy)]
pub struct Controller<'a, T> {
    pub grid: &'a Grid<T>,
    pub field: &'a ValueField<T>,
    pub policy: &'a Policy<T>,
}

impl<'a, T: Real> Controller<'a, T> {
    pub fn new(grid: &'a Grid<T>, field: &'a ValueField<T>, policy: &'a Policy<T>) -> Self {
        Controller { grid, field, policy }
    }

    fn field_mode(&self, mode: usize) -> usize {
        if self.field.modes() == 1 {
            0
        } else {
            mode
        }
    }

    /// Bilinear interpolation of the mode's values with weights renormalised
    /// over the finite cell corners. `None` if fewer than two are finite.
    pub fn interpolate(&self, x: Vec2<T>, mode: usize) -> Option<T> {
        let (corners, w) = self.cell(x);
        let m = self.field_mode(mode);
        let mut acc = T::zero();
        let mut wsum = T::zero();
        let mut finite = 0;
        for (&c, &wk) in corners.iter().zip(&w) {
            let v = self.field.value(c, m);
            if v.is_finite() {
                finite += 1;
                acc = acc + wk * v;
                wsum = wsum + wk;
            }
        }
        if finite < 2 || !(wsum > T::zero()) {
            return None;
        }
        Some(acc / wsum)
    }

    fn cell(&self, x: Vec2<T>) -> ([usize; 4], [T; 4]) {
        let g = self.grid;
        let h = g.h();
        let mut base = [0usize; 2];
        let mut frac = [T::zero(); 2];
        for k in 0..2 {
            let n = g.counts()[k];
            let s = ((x[k] - g.lo()[k]) / h).max(T::zero());
            let i = s.floor().to_usize().unwrap_or(0).min(n - 2);
            base[k] = i;
            frac[k] = (s - T::lit(i as f64)).max(T::zero()).min(T::one());
        }
        let nx = g.counts()[0];
        let p00 = base[1] * nx + base[0];
        let (fx, fy) = (frac[0], frac[1]);
        let one = T::one();
        (
            [p00, p00 + 1, p00 + nx, p00 + nx + 1],
            [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy],
        )
    }

    /// Rowing direction at an arbitrary position: steepest descent of the
    /// interpolated value, otherwise the stored control of the nearest usable
    /// gridpoint of the surrounding cell.
    pub fn policy_at(&self, x: Vec2<T>, mode: usize) -> Result<Vec2<T>> {
        let half = self.grid.h() / T::lit(2.0);
        let mut g = [T::zero(); 2];
        let mut ok = self.interpolate(x, mode).is_some();
        for k in 0..2 {
            if !ok {
                break;
            }
            let mut xp = x;
            let mut xm = x;
            xp[k] = xp[k] + half;
            xm[k] = xm[k] - half;
            match (self.interpolate(xp, mode), self.interpolate(xm, mode)) {
                (Some(a), Some(b)) => g[k] = (a - b) / self.grid.h(),
                _ => ok = false,
            }
        }
        if ok {
            let n = norm(g);
            if n > T::zero() && n.is_finite() {
                return Ok([-g[0] / n, -g[1] / n]);
            }
        }
        self.fallback(x, mode)
    }

    fn fallback(&self, x: Vec2<T>, mode: usize) -> Result<Vec2<T>> {
        let (corners, _) = self.cell(x);
        let dist = |p: usize| {
            let q = self.grid.point2(p);
            (q[0] - x[0]).hypot(q[1] - x[1])
        };
        let mut order = corners;
        order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap());
        order
            .iter()
            .find_map(|&p| self.policy.control(p, mode))
            .ok_or(Error::NoPolicy { x: x[0].as_f64(), y: x[1].as_f64(), mode })
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions<T> {
    pub dt: T,
    pub t_max: T,
    /// Arrival when within this distance of a target point.
    pub capture_radius: T,
    /// Keep every position sample (otherwise only events).
    pub record_path: bool,
}

impl<T: Real> SimOptions<T> {
    pub fn for_grid(grid: &Grid<T>) -> Self {
        SimOptions {
            dt: T::lit(1e-3),
            t_max: T::lit(20.0),
            capture_radius: T::lit(2.0) * grid.h(),
            record_path: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Arrived { time: f64 },
    Collided { time: f64, x: f64, y: f64 },
    TimedOut { time: f64 },
}

impl Outcome {
    pub fn time(&self) -> f64 {
        match *self {
            Outcome::Arrived { time } | Outcome::Collided { time, .. } | Outcome::TimedOut { time } => time,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Arrived { .. } => "arrived",
            Outcome::Collided { .. } => "collided",
            Outcome::TimedOut { .. } => "timed_out",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub mode: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub planner: PlannerKind,
    pub start_mode: usize,
    pub x0: [f64; 2],
    /// Position at the outcome time.
    pub end: [f64; 2],
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub outcome: Outcome,
}

impl TrajectoryRecord {
    /// `(start, end, mode)` intervals covering `[0, outcome time]`.
    pub fn mode_segments(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        let mut t0 = 0.0;
        let mut m = self.start_mode;
        for s in &self.switches {
            out.push((t0, s.t, m));
            t0 = s.t;
            m = s.to;
        }
        out.push((t0, self.outcome.time(), m));
        out
    }

    /// The mode path as `(switch time, new mode)` pairs, replayable via
    /// [`replay_trajectory`].
    pub fn mode_path(&self) -> Vec<(f64, usize)> {
        self.switches.iter().map(|s| (s.t, s.to)).collect()
    }
}

/// Samples a mode path and follows the controller from `x0`.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory<T: Real, R: rand::Rng + ?Sized>(
    world: &Problem<T>,
    ctrl: &Controller<'_, T>,
    x0: Vec2<T>,
    mode0: usize,
    rates_real: &RateMatrix<T>,
    options: &SimOptions<T>,
    rng: &mut R,
) -> TrajectoryRecord {
    let path = rates_real.sample_mode_path(mode0, options.t_max, rng);
    replay_trajectory(world, ctrl, x0, mode0, &path, options)
}

/// Follows the controller with a prescribed mode path. Euler steps are cut
/// exactly at switch times; arrival and collision are resolved at their
/// crossing point within a step.
pub fn replay_trajectory<T: Real>(
    world: &Problem<T>,
    ctrl: &Controller<'_, T>,
    x0: Vec2<T>,
    mode0: usize,
    path: &[(T, usize)],
    options: &SimOptions<T>,
) -> TrajectoryRecord {
    let mut t = T::zero();
    let mut x = x0;
    let mut mode = mode0;
    let mut next = 0usize;
    let mut samples = Vec::new();
    let mut switches = Vec::new();
    let sample = |t: T, x: Vec2<T>, mode| Sample { t: t.as_f64(), x: x[0].as_f64(), y: x[1].as_f64(), mode };
    if options.record_path {
        samples.push(sample(t, x, mode));
    }
    let events = Events::new(world, options.capture_radius);
    let mut end = x0;
    let outcome = if events.in_target(x) {
        Outcome::Arrived { time: 0.0 }
    } else if let Some(_) = events.crossing_obstacle(x, x) {
        Outcome::Collided { time: 0.0, x: x[0].as_f64(), y: x[1].as_f64() }
    } else {
        loop {
            if t >= options.t_max {
                break Outcome::TimedOut { time: t.as_f64() };
            }
            while next < path.len() && path[next].0 <= t {
                let to = path[next].1;
                if to != mode {
                    switches.push(SwitchEvent { t: t.as_f64(), x: x[0].as_f64(), y: x[1].as_f64(), from: mode, to });
                }
                mode = to;
                next += 1;
            }
            let mut t_end = (t + options.dt).min(options.t_max);
            if next < path.len() && path[next].0 < t_end {
                t_end = path[next].0;
            }
            let a = match ctrl.policy_at(x, mode) {
                Ok(a) => a,
                Err(_) => break Outcome::Collided { time: t.as_f64(), x: x[0].as_f64(), y: x[1].as_f64() },
            };
            let v = world.dynamics().velocity(x, mode, a);
            let dt = t_end - t;
            let x_new = [x[0] + dt * v[0], x[1] + dt * v[1]];
            let hit_target = events.crossing_target(x, x_new);
            let hit_obstacle = events.crossing_obstacle(x, x_new);
            let at = |f: T| [x[0] + f * (x_new[0] - x[0]), x[1] + f * (x_new[1] - x[1])];
            match (hit_target, hit_obstacle) {
                (Some(ft), fo) if fo.is_none_or(|fo| ft <= fo) => {
                    end = at(ft);
                    break Outcome::Arrived { time: (t + ft * dt).as_f64() };
                }
                (_, Some(fo)) => {
                    let p = at(fo);
                    end = p;
                    break Outcome::Collided { time: (t + fo * dt).as_f64(), x: p[0].as_f64(), y: p[1].as_f64() };
                }
                _ => {}
            }
            t = t_end;
            x = x_new;
            end = x;
            if options.record_path {
                samples.push(sample(t, x, mode));
            }
        }
    };
    TrajectoryRecord {
        planner: ctrl.policy.kind,
        start_mode: mode0,
        x0: [x0[0].as_f64(), x0[1].as_f64()],
        end: [end[0].as_f64(), end[1].as_f64()],
        samples,
        switches,
        outcome,
    }
}

struct Events<'a, T> {
    world: &'a Problem<T>,
    radius: T,
}

impl<'a, T: Real> Events<'a, T> {
    fn new(world: &'a Problem<T>, radius: T) -> Self {
        Events { world, radius }
    }

    fn targets(&self) -> Vec<Vec2<T>> {
        self.world.region().target_points.clone()
    }

    fn in_target(&self, x: Vec2<T>) -> bool {
        self.crossing_target(x, x) == Some(T::zero())
    }

    /// Smallest segment fraction in `[0, 1]` at which `a → b` enters a target.
    fn crossing_target(&self, a: Vec2<T>, b: Vec2<T>) -> Option<T> {
        let mut best: Option<T> = None;
        let mut take = |f: T| best = Some(best.map_or(f, |b: T| b.min(f)));
        for c in self.targets() {
            if let Some(f) = segment_disk(a, b, c, self.radius) {
                take(f);
            }
        }
        for r in &self.world.region().target_rects {
            if let Some(f) = segment_rect(a, b, r) {
                take(f);
            }
        }
        best
    }

    /// Smallest fraction at which `a → b` touches a closed obstacle or
    /// reaches the domain boundary.
    fn crossing_obstacle(&self, a: Vec2<T>, b: Vec2<T>) -> Option<T> {
        let region = self.world.region();
        let mut best: Option<T> = None;
        for r in &region.obstacles {
            if let Some(f) = segment_rect(a, b, r) {
                best = Some(best.map_or(f, |b: T| b.min(f)));
            }
        }
        let d = &region.domain;
        for k in 0..2 {
            for (bound, outward) in [(d.lo[k], -T::one()), (d.hi[k], T::one())] {
                let sa = (a[k] - bound) * outward;
                let sb = (b[k] - bound) * outward;
                if sa >= T::zero() {
                    best = Some(T::zero());
                } else if sb >= T::zero() {
                    let f = sa / (sa - sb);
                    best = Some(best.map_or(f, |b: T| b.min(f)));
                }
            }
        }
        best
    }
}

/// First fraction in `[0, 1]` where the segment is within `r` of `c`.
fn segment_disk<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, r: T) -> Option<T> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let m = [a[0] - c[0], a[1] - c[1]];
    let cc = m[0] * m[0] + m[1] * m[1] - r * r;
    if cc <= T::zero() {
        return Some(T::zero());
    }
    let aa = d[0] * d[0] + d[1] * d[1];
    if aa == T::zero() {
        return None;
    }
    let bb = T::lit(2.0) * (m[0] * d[0] + m[1] * d[1]);
    let disc = bb * bb - T::lit(4.0) * aa * cc;
    if disc < T::zero() {
        return None;
    }
    let f = (-bb - disc.sqrt()) / (T::lit(2.0) * aa);
    (f >= T::zero() && f <= T::one()).then_some(f)
}

/// Liang–Barsky entry fraction of the segment into a closed rectangle.
fn segment_rect<T: Real>(a: Vec2<T>, b: Vec2<T>, r: &Rect<T>) -> Option<T> {
    let mut t0 = T::zero();
    let mut t1 = T::one();
    for k in 0..2 {
        let d = b[k] - a[k];
        if d == T::zero() {
            if a[k] < r.lo[k] || a[k] > r.hi[k] {
                return None;
            }
            continue;
        }
        let mut e = (r.lo[k] - a[k]) / d;
        let mut l = (r.hi[k] - a[k]) / d;
        if e > l {
            std::mem::swap(&mut e, &mut l);
        }
        t0 = t0.max(e);
        t1 = t1.min(l);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub planner: PlannerKind,
    pub runs: usize,
    pub seed: u64,
    pub arrived: usize,
    pub collided: usize,
    pub timed_out: usize,
    /// Over arrived runs only.
    pub mean_arrival_time: Option<f64>,
    pub std_error: Option<f64>,
    pub collision_fraction: f64,
    pub mean_switches: f64,
}

impl SimStats {
    pub fn from_records(planner: PlannerKind, seed: u64, records: &[TrajectoryRecord]) -> Self {
        let times: Vec<f64> = records
            .iter()
            .filter_map(|r| match r.outcome {
                Outcome::Arrived { time } => Some(time),
                _ => None,
            })
            .collect();
        let collided = records.iter().filter(|r| matches!(r.outcome, Outcome::Collided { .. })).count();
        let timed_out = records.iter().filter(|r| matches!(r.outcome, Outcome::TimedOut { .. })).count();
        let n = times.len();
        let mean = (n > 0).then(|| times.iter().sum::<f64>() / n as f64);
        let se = mean.filter(|_| n > 1).map(|m| {
            let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        let runs = records.len();
        SimStats {
            planner,
            runs,
            seed,
            arrived: n,
            collided,
            timed_out,
            mean_arrival_time: mean,
            std_error: se,
            collision_fraction: if runs > 0 { collided as f64 / runs as f64 } else { 0.0 },
            mean_switches: records.iter().map(|r| r.switches.len() as f64).sum::<f64>() / runs.max(1) as f64,
        }
    }
}

/// Runs `runs` independent trajectories. Run `k` uses ChaCha8 seeded with
/// `seed` on stream `k`, so results do not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo<T: Real>(
    world: &Problem<T>,
    ctrl: &Controller<'_, T>,
    x0: Vec2<T>,
    mode0: usize,
    rates_real: &RateMatrix<T>,
    runs: usize,
    seed: u64,
    options: &SimOptions<T>,
) -> (SimStats, Vec<TrajectoryRecord>) {
    let records: Vec<TrajectoryRecord> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            run_trajectory(world, ctrl, x0, mode0, rates_real, options, &mut rng)
        })
        .collect();
    (SimStats::from_records(ctrl.policy.kind, seed, &records), records)
}
