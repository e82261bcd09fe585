//! Problem instances: the Cartesian grid, obstacles and target, per-mode
//! dynamics `f_i(x, a) = s(x) a + w_i(x)`, running costs and the mode
//! switching rates.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::markov::RateMatrix;
use crate::real::{norm, Real, Vec2};

/// Uniform Cartesian grid in `d` dimensions. Axis 0 varies fastest in the flat
/// index.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    h: T,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl<T: Real> Grid<T> {
    /// Builds a grid on the box `[lo, hi]` with spacing `h`. Every axis must be an
    /// integer number of cells long (to within `1e-9` of a cell).
    pub fn new(lo: &[T], hi: &[T], h: T) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::config("grid extents must be non-empty and of equal dimension"));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::config(format!("grid spacing must be positive, got {h}")));
        }
        let mut counts = Vec::with_capacity(lo.len());
        for (axis, (&l, &u)) in lo.iter().zip(hi).enumerate() {
            if !(u > l) {
                return Err(Error::config(format!("empty extent on axis {axis}: [{l}, {u}]")));
            }
            let cells = ((u - l) / h).round();
            if (cells * h - (u - l)).abs() > T::lit(1e-9) * h {
                return Err(Error::config(format!(
                    "extent {} on axis {axis} is not a multiple of h = {h}",
                    u - l
                )));
            }
            let cells = cells.to_usize().ok_or_else(|| Error::config("grid too large"))?;
            if cells < 2 {
                return Err(Error::config("each axis needs at least two cells"));
            }
            counts.push(cells + 1);
        }
        let mut strides = Vec::with_capacity(counts.len());
        let mut acc = 1;
        for &c in &counts {
            strides.push(acc);
            acc *= c;
        }
        Ok(Grid { lo: lo.to_vec(), hi: hi.to_vec(), h, counts, strides })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    /// Total number of gridpoints.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (axis, &c) in self.counts.iter().enumerate() {
            out[axis] = flat % c;
            flat /= c;
        }
        out
    }

    /// Index along `axis` of the point with flat index `flat`.
    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.counts[axis]
    }

    pub fn coord(&self, flat: usize) -> Vec<T> {
        self.multi_index(flat)
            .into_iter()
            .zip(&self.lo)
            .map(|(i, &l)| l + T::lit(i as f64) * self.h)
            .collect()
    }

    /// Coordinates of a gridpoint of a two-dimensional grid.
    #[inline]
    pub fn point2(&self, flat: usize) -> Vec2<T> {
        debug_assert_eq!(self.dim(), 2);
        let ix = flat % self.counts[0];
        let iy = flat / self.counts[0];
        [
            self.lo[0] + T::lit(ix as f64) * self.h,
            self.lo[1] + T::lit(iy as f64) * self.h,
        ]
    }

    /// Nearest gridpoint to `x`; exact half-way ties go to the lower index.
    /// `None` if `x` lies outside the grid box.
    pub fn nearest(&self, x: &[T]) -> Option<usize> {
        let tol = T::lit(1e-9) * self.h;
        let mut multi = Vec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            if x[axis] < self.lo[axis] - tol || x[axis] > self.hi[axis] + tol {
                return None;
            }
            let r = (x[axis] - self.lo[axis]) / self.h;
            let below = r.floor();
            let i = if r - below > T::lit(0.5) { below + T::one() } else { below };
            let i = i.max(T::zero()).to_usize()?.min(self.counts[axis] - 1);
            multi.push(i);
        }
        Some(self.flat_index(&multi))
    }

    /// The neighbor one step of `sign` (±1) along `axis`, if inside the grid.
    #[inline]
    pub fn neighbor(&self, flat: usize, axis: usize, sign: i8) -> Option<usize> {
        let i = self.axis_index(flat, axis);
        if sign > 0 {
            (i + 1 < self.counts[axis]).then(|| flat + self.strides[axis])
        } else {
            (i > 0).then(|| flat - self.strides[axis])
        }
    }

    /// All gridpoints at distance exactly `h` from `flat`.
    pub fn neighbors(&self, flat: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for sign in [1i8, -1] {
                if let Some(n) = self.neighbor(flat, axis, sign) {
                    out.push(n);
                }
            }
        }
        out
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        (0..self.dim()).any(|axis| {
            let i = self.axis_index(flat, axis);
            i == 0 || i + 1 == self.counts[axis]
        })
    }
}

/// Closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub lo: Vec2<T>,
    pub hi: Vec2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(lo: Vec2<T>, hi: Vec2<T>) -> Self {
        Rect { lo, hi }
    }

    /// Closed membership, with a relative tolerance `tol` absorbing gridpoint
    /// coordinate rounding.
    pub fn contains(&self, x: Vec2<T>, tol: T) -> bool {
        (0..2).all(|k| x[k] >= self.lo[k] - tol && x[k] <= self.hi[k] + tol)
    }

    fn contains_strictly(&self, x: Vec2<T>, tol: T) -> bool {
        (0..2).all(|k| x[k] > self.lo[k] + tol && x[k] < self.hi[k] - tol)
    }

    fn is_valid(&self) -> bool {
        (0..2).all(|k| self.lo[k] <= self.hi[k] && self.lo[k].is_finite() && self.hi[k].is_finite())
    }
}

/// Obstacles, outer domain box and target set.
#[derive(Clone, Debug, PartialEq)]
pub struct Region<T> {
    pub domain: Rect<T>,
    pub obstacles: Vec<Rect<T>>,
    pub target_points: Vec<Vec2<T>>,
    pub target_rects: Vec<Rect<T>>,
}

impl<T: Real> Region<T> {
    pub fn in_obstacle(&self, x: Vec2<T>, tol: T) -> bool {
        self.obstacles.iter().any(|o| o.contains(x, tol))
    }
}

/// Classification of a gridpoint for the sweeping solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointLabel {
    /// Carries the finite terminal cost; never updated.
    Target,
    /// Obstacle or non-target outer boundary; holds the unreached sentinel.
    Blocked,
    /// Updated by the sweeps.
    Free,
}

/// Scalar field over the plane, e.g. the rowing speed `s(x)` or a running cost.
#[derive(Clone)]
pub enum ScalarProfile<T> {
    Constant(T),
    Custom(Arc<dyn Fn(Vec2<T>) -> T + Send + Sync>),
}

impl<T: Real> ScalarProfile<T> {
    #[inline]
    pub fn eval(&self, x: Vec2<T>) -> T {
        match self {
            ScalarProfile::Constant(c) => *c,
            ScalarProfile::Custom(f) => f(x),
        }
    }

    pub fn as_constant(&self) -> Option<T> {
        match self {
            ScalarProfile::Constant(c) => Some(*c),
            ScalarProfile::Custom(_) => None,
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for ScalarProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarProfile::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            ScalarProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Vector field over the plane, e.g. a wind map `w_i(x)`.
#[derive(Clone)]
pub enum VectorProfile<T> {
    Constant(Vec2<T>),
    Custom(Arc<dyn Fn(Vec2<T>) -> Vec2<T> + Send + Sync>),
}

impl<T: Real> VectorProfile<T> {
    #[inline]
    pub fn eval(&self, x: Vec2<T>) -> Vec2<T> {
        match self {
            VectorProfile::Constant(c) => *c,
            VectorProfile::Custom(f) => f(x),
        }
    }

    pub fn as_constant(&self) -> Option<Vec2<T>> {
        match self {
            VectorProfile::Constant(c) => Some(*c),
            VectorProfile::Custom(_) => None,
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for VectorProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorProfile::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            VectorProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Mode-dependent dynamics `f_i(x, a) = s(x) a + w_i(x)` with `a` on the unit
/// circle, and running costs `C_i(x)`.
///
/// Running costs do not depend on the control; the Eulerian update relies on
/// the optimal control being `-grad u / |grad u|`.
#[derive(Clone, Debug)]
pub struct Dynamics<T> {
    pub speed: ScalarProfile<T>,
    pub winds: Vec<VectorProfile<T>>,
    pub costs: Vec<ScalarProfile<T>>,
}

impl<T: Real> Dynamics<T> {
    /// Constant speed and winds with unit running cost (time-optimal control).
    pub fn time_optimal(speed: T, winds: &[Vec2<T>]) -> Self {
        Dynamics {
            speed: ScalarProfile::Constant(speed),
            winds: winds.iter().map(|&w| VectorProfile::Constant(w)).collect(),
            costs: vec![ScalarProfile::Constant(T::one()); winds.len()],
        }
    }

    pub fn modes(&self) -> usize {
        self.winds.len()
    }

    #[inline]
    pub fn velocity(&self, x: Vec2<T>, mode: usize, control: Vec2<T>) -> Vec2<T> {
        let s = self.speed.eval(x);
        let w = self.winds[mode].eval(x);
        [s * control[0] + w[0], s * control[1] + w[1]]
    }
}

/// A full planning instance.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    grid: Grid<T>,
    region: Region<T>,
    dynamics: Dynamics<T>,
    rates: RateMatrix<T>,
    terminal_cost: T,
    epsilon: T,
    labels: Vec<PointLabel>,
    cost_bound: T,
    min_speed_margin: T,
    partner_gap: Vec<T>,
}

impl<T: Real> Problem<T> {
    /// Validates the instance and classifies every gridpoint.
    pub fn new(
        grid: Grid<T>,
        region: Region<T>,
        dynamics: Dynamics<T>,
        rates: RateMatrix<T>,
        terminal_cost: T,
        epsilon: T,
    ) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::UnsupportedDimension(grid.dim()));
        }
        let n = dynamics.modes();
        if n == 0 {
            return Err(Error::config("at least one mode is required"));
        }
        if dynamics.costs.len() != n {
            return Err(Error::config(format!(
                "{} running costs given for {n} modes",
                dynamics.costs.len()
            )));
        }
        if rates.modes() != n {
            return Err(Error::config(format!(
                "rate matrix is {0}x{0} but there are {n} modes",
                rates.modes()
            )));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::config("convergence tolerance must be positive"));
        }
        if !terminal_cost.is_finite() {
            return Err(Error::config("terminal cost on the target must be finite"));
        }
        if !region.domain.is_valid() || region.obstacles.iter().any(|o| !o.is_valid()) {
            return Err(Error::config("malformed rectangle"));
        }
        let tol = T::lit(1e-9) * grid.h();
        for o in &region.obstacles {
            if !region.domain.contains(o.lo, tol) || !region.domain.contains(o.hi, tol) {
                return Err(Error::config("obstacle extends outside the domain box"));
            }
        }
        for (k, (&l, &u)) in grid.lo().iter().zip(grid.hi()).enumerate() {
            if (l - region.domain.lo[k]).abs() > tol || (u - region.domain.hi[k]).abs() > tol {
                return Err(Error::config("grid extents must coincide with the domain box"));
            }
        }

        let labels = classify_gridpoints(&grid, &region)?;

        let mut cost_bound = T::zero();
        let mut margin = T::infinity();
        for p in 0..grid.len() {
            let x = grid.point2(p);
            let s = dynamics.speed.eval(x);
            for i in 0..n {
                let w = dynamics.winds[i].eval(x);
                let c = dynamics.costs[i].eval(x);
                if !(s > norm(w)) {
                    return Err(Error::config(format!(
                        "speed {s} does not exceed wind magnitude {} in mode {i}",
                        norm(w)
                    )));
                }
                if !(c > T::zero()) || !c.is_finite() {
                    return Err(Error::config(format!("running cost must be positive, got {c}")));
                }
                cost_bound = cost_bound.max(c);
                margin = margin.min(s - norm(w));
            }
        }

        let mut problem = Problem {
            grid,
            region,
            dynamics,
            rates,
            terminal_cost,
            epsilon,
            labels,
            cost_bound,
            min_speed_margin: margin,
            partner_gap: Vec::new(),
        };
        problem.partner_gap = problem.compute_partner_gap();
        Ok(problem)
    }

    /// Same instance with a different switching process.
    pub fn with_rates(&self, rates: RateMatrix<T>) -> Result<Self> {
        if rates.modes() != self.modes() {
            return Err(Error::config("replacement rate matrix has the wrong size"));
        }
        let mut p = self.clone();
        p.rates = rates;
        p.partner_gap = p.compute_partner_gap();
        Ok(p)
    }

    /// Same geometry and switching, different dynamics (used to build averaged problems).
    pub fn with_dynamics(&self, dynamics: Dynamics<T>, rates: RateMatrix<T>) -> Result<Self> {
        Problem::new(
            self.grid.clone(),
            self.region.clone(),
            dynamics,
            rates,
            self.terminal_cost,
            self.epsilon,
        )
    }

    pub fn with_epsilon(&self, epsilon: T) -> Self {
        let mut p = self.clone();
        p.epsilon = epsilon;
        p
    }

    // Upper bound on U(x, j) - U(x, i) from hovering in place until the mode
    // first hits i, used when a coupling partner at x is still unreached.
    fn compute_partner_gap(&self) -> Vec<T> {
        let n = self.modes();
        let mut gap = vec![T::infinity(); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    gap[i * n + j] = T::zero();
                } else if let Ok(t) = self.rates.expected_hitting_time(j, i) {
                    gap[i * n + j] = self.cost_bound * t;
                }
            }
        }
        gap
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn region(&self) -> &Region<T> {
        &self.region
    }

    pub fn dynamics(&self) -> &Dynamics<T> {
        &self.dynamics
    }

    pub fn rates(&self) -> &RateMatrix<T> {
        &self.rates
    }

    pub fn modes(&self) -> usize {
        self.dynamics.modes()
    }

    pub fn terminal_cost(&self) -> T {
        self.terminal_cost
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn labels(&self) -> &[PointLabel] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, point: usize) -> PointLabel {
        self.labels[point]
    }

    /// `C̄`, the largest running cost over the grid.
    pub fn cost_bound(&self) -> T {
        self.cost_bound
    }

    /// `min (s(x) - |w_i(x)|)`, the slowest ground speed in any direction.
    pub fn min_speed_margin(&self) -> T {
        self.min_speed_margin
    }

    /// `C̄ E[κ_ji]`: bound on `U(x, j) - U(x, i)`; infinite if `i` is unreachable from `j`.
    #[inline]
    pub fn partner_gap(&self, i: usize, j: usize) -> T {
        self.partner_gap[i * self.modes() + j]
    }

    /// Rejects grids too coarse for first-order switch probabilities
    /// `p_ii(τ) = 1 - τ Σ λ_ij` to stay non-negative.
    pub fn check_timestep(&self) -> Result<()> {
        let worst = (0..self.modes()).map(|i| self.rates.exit_rate(i)).fold(T::zero(), T::max);
        if worst > T::zero() {
            let bound = self.min_speed_margin / worst;
            if !(self.grid.h() < bound) {
                return Err(Error::TimestepValidity { h: self.grid.h().as_f64(), bound: bound.as_f64() });
            }
        }
        Ok(())
    }

    /// Gridpoints labelled [`PointLabel::Target`].
    pub fn target_points(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == PointLabel::Target)
            .map(|(p, _)| p)
            .collect()
    }
}

/// Labels every gridpoint as target, blocked or free.
///
/// Target rectangles capture the gridpoints they contain; target points snap
/// to the nearest gridpoint. Obstacles are closed sets.
pub fn classify_gridpoints<T: Real>(grid: &Grid<T>, region: &Region<T>) -> Result<Vec<PointLabel>> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    let tol = T::lit(1e-9) * grid.h();
    let mut labels: Vec<PointLabel> = (0..grid.len())
        .map(|p| {
            if grid.is_boundary(p) || region.in_obstacle(grid.point2(p), tol) {
                PointLabel::Blocked
            } else {
                PointLabel::Free
            }
        })
        .collect();

    let mut any_target = false;
    for rect in &region.target_rects {
        if region.obstacles.iter().any(|o| {
            let mid = [(rect.lo[0] + rect.hi[0]) / T::lit(2.0), (rect.lo[1] + rect.hi[1]) / T::lit(2.0)];
            o.contains_strictly(mid, tol)
        }) {
            return Err(Error::config("target rectangle intersects an obstacle"));
        }
        for (p, label) in labels.iter_mut().enumerate() {
            let x = grid.point2(p);
            if rect.contains(x, tol) {
                if region.in_obstacle(x, tol) {
                    return Err(Error::config("target rectangle overlaps an obstacle"));
                }
                *label = PointLabel::Target;
                any_target = true;
            }
        }
    }
    for &pt in &region.target_points {
        let p = grid
            .nearest(&pt)
            .ok_or_else(|| Error::config(format!("target point {pt:?} lies outside the grid")))?;
        if region.in_obstacle(grid.point2(p), tol) {
            return Err(Error::config(format!("target point {pt:?} snaps onto an obstacle")));
        }
        labels[p] = PointLabel::Target;
        any_target = true;
    }
    if !any_target {
        return Err(Error::config("target set is empty"));
    }
    Ok(labels)
}
