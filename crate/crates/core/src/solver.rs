//! Gauss-Seidel sweeping over the coupled grid with active flags, and the
//! linear evaluation of a frozen feedback policy under (possibly different)
//! switching rates.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PointLabel, Problem};
use crate::planners::Policy;
use crate::real::{Real, Vec2};
use crate::markov::RateMatrix;
use crate::updates::{self, Orthant, SimplexPoint, Stencil, UpdateResult};

/// Discretisation used by the optimal-control solves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    #[serde(alias = "semi-lagrangian", alias = "semi_lagrangian")]
    Semilag,
}

/// Which values a recomputed `(x, i)` may influence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Influence {
    /// `(N(x) × {i}) ∪ ({x} × M)`.
    Eulerian,
    /// `N(x) × M`.
    NeighborsAllModes,
}

/// A single-gridpoint update rule driven by [`sweep_solve`].
pub trait UpdateOperator<T: Real>: Sync {
    fn influence(&self) -> Influence;

    fn update(&self, stencil: &Stencil<'_, T>, mode: usize) -> Result<UpdateResult<T>>;

    /// Called once before sweeping starts.
    fn prepare(&self, _problem: &Problem<T>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EulerOperator;

impl<T: Real> UpdateOperator<T> for EulerOperator {
    fn influence(&self) -> Influence {
        Influence::Eulerian
    }

    fn update(&self, stencil: &Stencil<'_, T>, mode: usize) -> Result<UpdateResult<T>> {
        Ok(updates::euler_update(stencil, mode))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SemiLagrangianOperator;

impl<T: Real> UpdateOperator<T> for SemiLagrangianOperator {
    fn influence(&self) -> Influence {
        Influence::NeighborsAllModes
    }

    fn update(&self, stencil: &Stencil<'_, T>, mode: usize) -> Result<UpdateResult<T>> {
        updates::semilag_update(stencil, mode)
    }

    fn prepare(&self, problem: &Problem<T>) -> Result<()> {
        problem.check_timestep()
    }
}

/// Per-mode value arrays with stored controls and active flags.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField<T> {
    points: usize,
    modes: usize,
    values: Vec<T>,
    controls: Vec<Option<Vec2<T>>>,
    active: Vec<bool>,
}

impl<T: Real> ValueField<T> {
    /// Every value at the sentinel.
    pub fn unreached(points: usize, modes: usize) -> Self {
        ValueField {
            points,
            modes,
            values: vec![T::infinity(); points * modes],
            controls: vec![None; points * modes],
            active: vec![false; points * modes],
        }
    }

    /// Interleaves single-mode fields into one.
    pub fn stack(fields: &[ValueField<T>]) -> Self {
        let points = fields[0].points;
        let modes = fields.len();
        let mut out = ValueField::unreached(points, modes);
        for (i, f) in fields.iter().enumerate() {
            assert_eq!(f.modes, 1);
            assert_eq!(f.points, points);
            for p in 0..points {
                out.values[p * modes + i] = f.values[p];
                out.controls[p * modes + i] = f.controls[p];
                out.active[p * modes + i] = f.active[p];
            }
        }
        out
    }

    /// One mode as a single-mode field.
    pub fn select_mode(&self, mode: usize) -> Self {
        ValueField {
            points: self.points,
            modes: 1,
            values: (0..self.points).map(|p| self.value(p, mode)).collect(),
            controls: (0..self.points).map(|p| self.control(p, mode)).collect(),
            active: (0..self.points).map(|p| self.is_active(p, mode)).collect(),
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    #[inline]
    pub fn value(&self, point: usize, mode: usize) -> T {
        self.values[point * self.modes + mode]
    }

    #[inline]
    pub fn control(&self, point: usize, mode: usize) -> Option<Vec2<T>> {
        self.controls[point * self.modes + mode]
    }

    /// Point-major raw values, `+∞` where unreached.
    pub fn raw(&self) -> &[T] {
        &self.values
    }

    pub fn mode_values(&self, mode: usize) -> Vec<T> {
        (0..self.points).map(|p| self.value(p, mode)).collect()
    }

    pub fn is_active(&self, point: usize, mode: usize) -> bool {
        self.active[point * self.modes + mode]
    }

    /// `max_x |U(x, i) - U(x, j)|` over points where both are reached.
    pub fn sup_mode_difference(&self, i: usize, j: usize) -> T {
        (0..self.points)
            .map(|p| (self.value(p, i), self.value(p, j)))
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest pairwise mode difference.
    pub fn sup_mode_spread(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.modes {
            for j in (i + 1)..self.modes {
                m = m.max(self.sup_mode_difference(i, j));
            }
        }
        m
    }
}

/// Rotation through the `2^d` geometric sweep orderings. Each entry gives
/// the traversal direction per axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSchedule {
    pub orders: Vec<[i8; 2]>,
    pub current: usize,
}

impl Default for SweepSchedule {
    /// From the south-west, south-east, north-east, then north-west.
    fn default() -> Self {
        SweepSchedule { orders: vec![[1, 1], [-1, 1], [-1, -1], [1, -1]], current: 0 }
    }
}

impl SweepSchedule {
    pub fn rotated(order: [usize; 4]) -> Self {
        let base = SweepSchedule::default().orders;
        SweepSchedule { orders: order.iter().map(|&k| base[k]).collect(), current: 0 }
    }

    fn advance(&mut self) {
        self.current = (self.current + 1) % self.orders.len();
    }

    fn enumerate<T: Real>(order: [i8; 2], problem: &Problem<T>) -> Vec<usize> {
        let grid = problem.grid();
        let (nx, ny) = (grid.counts()[0], grid.counts()[1]);
        let xs: Vec<usize> = if order[0] > 0 { (0..nx).collect() } else { (0..nx).rev().collect() };
        let ys: Vec<usize> = if order[1] > 0 { (0..ny).collect() } else { (0..ny).rev().collect() };
        let mut out = Vec::new();
        for &iy in &ys {
            for &ix in &xs {
                let p = iy * nx + ix;
                if problem.label(p) == PointLabel::Free {
                    out.push(p);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub max_sweeps: usize,
    /// Skip points none of whose dependencies changed since their last update.
    pub active_flags: bool,
    pub schedule: SweepSchedule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_sweeps: 10_000, active_flags: true, schedule: SweepSchedule::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub sweeps: usize,
    /// `inf` if the last sweep still reached a new point.
    pub final_max_change: f64,
    pub wall_time_secs: f64,
    pub max_change_history: Vec<f64>,
    pub updates_computed: u64,
    /// Free `(x, i)` pairs left unreached (disconnected from the target).
    pub unreachable: usize,
}

/// Runs Gauss-Seidel sweeps until the largest decrease in one sweep falls
/// below the problem's tolerance.
pub fn sweep_solve<T: Real, O: UpdateOperator<T>>(
    problem: &Problem<T>,
    op: &O,
    options: &SolveOptions,
) -> Result<(ValueField<T>, SolveReport)> {
    op.prepare(problem)?;
    let start = Instant::now();
    let grid = problem.grid();
    let n = problem.modes();
    let mut field = ValueField::unreached(grid.len(), n);
    let influence = op.influence();

    let targets = problem.target_points();
    for &t in &targets {
        for i in 0..n {
            field.values[t * n + i] = problem.terminal_cost();
        }
    }
    for &t in &targets {
        for i in 0..n {
            activate(problem, &mut field.active, influence, t, i);
        }
    }

    let orders: Vec<Vec<usize>> =
        options.schedule.orders.iter().map(|&o| SweepSchedule::enumerate(o, problem)).collect();
    let mut schedule = options.schedule.clone();
    let mut history = Vec::new();
    let mut computed = 0u64;
    loop {
        let mut max_change = T::zero();
        for &p in &orders[schedule.current] {
            for i in 0..n {
                let z = p * n + i;
                if options.active_flags {
                    if !field.active[z] {
                        continue;
                    }
                    field.active[z] = false;
                }
                computed += 1;
                let res = op.update(&Stencil::new(problem, &field.values, p), i)?;
                let old = field.values[z];
                if res.value < old {
                    let change = if old.is_finite() { old - res.value } else { T::infinity() };
                    max_change = max_change.max(change);
                    field.values[z] = res.value;
                    field.controls[z] = res.control;
                    if options.active_flags {
                        activate(problem, &mut field.active, influence, p, i);
                    }
                }
            }
        }
        history.push(max_change.as_f64());
        let report = || SolveReport {
            sweeps: history.len(),
            final_max_change: max_change.as_f64(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            max_change_history: history.clone(),
            updates_computed: computed,
            unreachable: count_unreachable(problem, &field),
        };
        if max_change < problem.epsilon() {
            return Ok((field.clone(), report()));
        }
        if history.len() >= options.max_sweeps {
            return Err(Error::NotConverged(Box::new(report())));
        }
        schedule.advance();
    }
}

fn count_unreachable<T: Real>(problem: &Problem<T>, field: &ValueField<T>) -> usize {
    let n = field.modes;
    (0..field.points)
        .filter(|&p| problem.label(p) == PointLabel::Free)
        .map(|p| (0..n).filter(|&i| !field.values[p * n + i].is_finite()).count())
        .sum()
}

fn activate<T: Real>(problem: &Problem<T>, active: &mut [bool], influence: Influence, p: usize, i: usize) {
    let grid = problem.grid();
    let n = problem.modes();
    let mut mark = |q: usize, j: usize| {
        if problem.label(q) == PointLabel::Free {
            active[q * n + j] = true;
        }
    };
    for axis in 0..2 {
        for sign in [1i8, -1] {
            if let Some(q) = grid.neighbor(p, axis, sign) {
                match influence {
                    Influence::Eulerian => mark(q, i),
                    Influence::NeighborsAllModes => (0..n).for_each(|j| mark(q, j)),
                }
            }
        }
    }
    if influence == Influence::Eulerian {
        for j in (0..n).filter(|&j| j != i) {
            mark(p, j);
        }
    }
}

/// Orthant and simplex point reached by the policy's own ground velocity at
/// `(point, mode)`; `None` where the policy is undefined or stalls.
fn frozen_step<T: Real>(
    problem: &Problem<T>,
    policy: &Policy<T>,
    point: usize,
    mode: usize,
) -> Option<(Orthant<2>, SimplexPoint<T, 2>)> {
    let control = policy.control(point, mode)?;
    let x = problem.grid().point2(point);
    let mut v = problem.dynamics().velocity(x, mode, control);
    // Round-off in an axis-aligned velocity must not make the blocked side count.
    let cut = T::lit(1e-12) * (v[0].abs() + v[1].abs());
    for c in v.iter_mut() {
        if c.abs() <= cut {
            *c = T::zero();
        }
    }
    let total = v[0].abs() + v[1].abs();
    if !(total > T::zero()) {
        return None;
    }
    let sign = |c: T| if c < T::zero() { -1 } else { 1 };
    Some((Orthant([sign(v[0]), sign(v[1])]), SimplexPoint::edge(v[0].abs() / total)))
}

/// Expected cost `u^{r,p}` of following `policy` when the modes actually
/// switch with `rates_real`.
///
/// The frozen semi-Lagrangian scheme is a discrete Markov chain on
/// `(gridpoint, mode)`. States from which the chain can crash (step into an
/// obstacle or off the grid, or lose the policy) or can wander off without
/// ever reaching the target have infinite expected cost and stay unreached.
/// On the remaining states the linear system is solved by Gauss-Seidel
/// sweeps started from zero, which increase monotonically to the solution;
/// starting from the sentinel instead would stall on cycles such as a boat
/// shuttling along an obstacle edge as the wind flips.
pub fn evaluate_frozen_policy<T: Real>(
    problem: &Problem<T>,
    policy: &Policy<T>,
    rates_real: &RateMatrix<T>,
    options: &SolveOptions,
) -> Result<(ValueField<T>, SolveReport)> {
    let real = problem.with_rates(rates_real.clone())?;
    if policy.modes() != real.modes() {
        return Err(Error::config("policy and problem have different mode counts"));
    }
    real.check_timestep()?;
    let start = Instant::now();
    let grid = real.grid();
    let n = real.modes();
    let len = grid.len() * n;
    let rates = real.rates();

    // Successors of each free state; `None` marks a crash.
    let mut succ: Vec<Option<Vec<usize>>> = vec![Some(Vec::new()); len];
    let mut target = vec![false; len];
    for p in 0..grid.len() {
        match real.label(p) {
            PointLabel::Target => (0..n).for_each(|i| target[p * n + i] = true),
            PointLabel::Blocked => (0..n).for_each(|i| succ[p * n + i] = None),
            PointLabel::Free => {
                for i in 0..n {
                    succ[p * n + i] = frozen_step(&real, policy, p, i).and_then(|(ort, xi)| {
                        let w = xi.weights();
                        let mut out = Vec::new();
                        for k in 0..2 {
                            if w[k] == T::zero() {
                                continue;
                            }
                            let q = grid.neighbor(p, k, ort.0[k]).filter(|&q| real.label(q) != PointLabel::Blocked)?;
                            out.extend((0..n).filter(|&j| j == i || rates.rate(i, j) > T::zero()).map(|j| q * n + j));
                        }
                        Some(out)
                    });
                }
            }
        }
    }
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); len];
    for (z, s) in succ.iter().enumerate() {
        if target[z] {
            continue;
        }
        for &y in s.iter().flatten() {
            pred[y].push(z);
        }
    }
    let backward = |seeds: Vec<usize>, mark: &mut [bool]| {
        let mut stack = seeds;
        while let Some(y) = stack.pop() {
            for &z in &pred[y] {
                if !mark[z] {
                    mark[z] = true;
                    stack.push(z);
                }
            }
        }
    };
    let mut reaches = target.clone();
    backward((0..len).filter(|&z| target[z]).collect(), &mut reaches);
    let is_free = |z: usize| real.label(z / n) == PointLabel::Free;
    let mut infinite: Vec<bool> = (0..len).map(|z| is_free(z) && (succ[z].is_none() || !reaches[z])).collect();
    backward((0..len).filter(|&z| infinite[z]).collect(), &mut infinite);

    let mut field = ValueField::unreached(grid.len(), n);
    for z in 0..len {
        if target[z] {
            field.values[z] = real.terminal_cost();
        } else if is_free(z) && !infinite[z] {
            field.values[z] = T::zero();
            field.controls[z] = policy.control(z / n, z % n);
        }
    }

    let orders: Vec<Vec<usize>> =
        options.schedule.orders.iter().map(|&o| SweepSchedule::enumerate(o, &real)).collect();
    let mut schedule = options.schedule.clone();
    let mut history = Vec::new();
    let mut computed = 0u64;
    loop {
        let mut max_change = T::zero();
        for &p in &orders[schedule.current] {
            for i in 0..n {
                let z = p * n + i;
                if infinite[z] {
                    continue;
                }
                let (ort, xi) = frozen_step(&real, policy, p, i).expect("finite states have a step");
                let st = Stencil::new(&real, &field.values, p);
                let v = updates::simplex_value(&st, i, ort, xi)?.expect("finite states depend on finite states").0;
                computed += 1;
                max_change = max_change.max((v - field.values[z]).abs());
                field.values[z] = v;
            }
        }
        history.push(max_change.as_f64());
        let report = || SolveReport {
            sweeps: history.len(),
            final_max_change: max_change.as_f64(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            max_change_history: history.clone(),
            updates_computed: computed,
            unreachable: count_unreachable(&real, &field),
        };
        if max_change < real.epsilon() {
            return Ok((field.clone(), report()));
        }
        if history.len() >= options.max_sweeps {
            return Err(Error::NotConverged(Box::new(report())));
        }
        schedule.advance();
    }
}
