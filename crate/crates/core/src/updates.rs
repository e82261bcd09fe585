//! Single-gridpoint update operators for the coupled system
//!
//! ```text
//! min_a { ∇u_i · f_i(x, a) + C_i(x) } - Σ_{j≠i} λ_ij (u_i - u_j) = 0
//! ```
//!
//! * [`semilag_update`]: semi-Lagrangian step with a control-dependent
//!   pseudo-timestep, landing on the simplex spanned by the axis neighbours of
//!   one orthant and minimised over the simplex.
//! * [`euler_update`]: first-order upwind (Eulerian) discretisation of the
//!   Eikonal form `s |∇u_i| = ∇u_i · w_i - Σ λ_ij (u_i - u_j) + C_i`, with a
//!   two-sided quadratic solve per quadrant and one-sided fallbacks.
//!
//! All operators read a snapshot of the value array through a [`Stencil`] and
//! never write. Unreached values are `+∞` and never enter the arithmetic: any
//! candidate that would need one is itself unreached.

use crate::error::{Error, Result};
use crate::model::{PointLabel, Problem};
use crate::real::{ground_speed, norm, Real, Vec2};

/// Sign vector `(ε_1, …, ε_d)` selecting an orthant of the stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Orthant<const D: usize>(pub [i8; D]);

impl<const D: usize> Orthant<D> {
    /// All `2^D` orthants, `+` before `-`, first axis varying slowest:
    /// `(+,+), (+,-), (-,+), (-,-)` in two dimensions.
    pub fn all() -> Vec<Self> {
        (0..1usize << D)
            .map(|code| {
                let mut signs = [1i8; D];
                for (k, s) in signs.iter_mut().enumerate() {
                    if code >> (D - 1 - k) & 1 == 1 {
                        *s = -1;
                    }
                }
                Orthant(signs)
            })
            .collect()
    }
}

/// Tie-breaking order used by every two-dimensional update.
pub const ORTHANTS_2D: [Orthant<2>; 4] =
    [Orthant([1, 1]), Orthant([1, -1]), Orthant([-1, 1]), Orthant([-1, -1])];

/// Barycentric weights on the unit simplex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexPoint<T, const D: usize>([T; D]);

impl<T: Real, const D: usize> SimplexPoint<T, D> {
    pub fn new(weights: [T; D]) -> Option<Self> {
        let sum: T = weights.iter().copied().sum();
        let ok = weights.iter().all(|w| *w >= T::zero()) && (sum - T::one()).abs() <= T::lit(1e-9);
        ok.then_some(SimplexPoint(weights))
    }

    pub fn weights(&self) -> [T; D] {
        self.0
    }
}

impl<T: Real> SimplexPoint<T, 2> {
    /// `(t, 1 - t)` for `t` in `[0, 1]`.
    pub fn edge(t: T) -> Self {
        let t = t.max(T::zero()).min(T::one());
        SimplexPoint([t, T::one() - t])
    }
}

/// Which branch of an update produced the winning candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UpdateKind {
    TwoSided,
    OneSided,
    Simplex,
}

/// Candidate value for one `(x, i)`, with the control that attains it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateResult<T> {
    /// `+∞` when unreached.
    pub value: T,
    /// Unit rowing direction `a`; `None` when unreached.
    pub control: Option<Vec2<T>>,
    pub kind: Option<UpdateKind>,
}

impl<T: Real> UpdateResult<T> {
    pub fn unreached() -> Self {
        UpdateResult { value: T::infinity(), control: None, kind: None }
    }

    pub fn is_reached(&self) -> bool {
        self.value.is_finite()
    }

    fn offer(&mut self, value: T, control: Vec2<T>, kind: UpdateKind) {
        if value < self.value {
            *self = UpdateResult { value, control: Some(control), kind: Some(kind) };
        }
    }
}

/// Read-only view of the value array around one gridpoint. `values` is laid
/// out point-major: `values[p * n + j]`.
#[derive(Clone, Copy)]
pub struct Stencil<'a, T> {
    pub problem: &'a Problem<T>,
    pub values: &'a [T],
    pub point: usize,
}

impl<'a, T: Real> Stencil<'a, T> {
    pub fn new(problem: &'a Problem<T>, values: &'a [T], point: usize) -> Self {
        debug_assert_eq!(values.len(), problem.grid().len() * problem.modes());
        Stencil { problem, values, point }
    }

    #[inline]
    pub fn value(&self, point: usize, mode: usize) -> T {
        self.values[point * self.problem.modes() + mode]
    }

    /// Neighbour along `axis` in direction `sign`, unless off-grid or blocked.
    #[inline]
    pub fn neighbor(&self, axis: usize, sign: i8) -> Option<usize> {
        self.problem
            .grid()
            .neighbor(self.point, axis, sign)
            .filter(|&q| self.problem.label(q) != PointLabel::Blocked)
    }

    #[inline]
    fn local(&self, mode: usize) -> Local<T> {
        let x = self.problem.grid().point2(self.point);
        let d = self.problem.dynamics();
        Local {
            h: self.problem.grid().h(),
            speed: d.speed.eval(x),
            wind: d.winds[mode].eval(x),
            cost: d.costs[mode].eval(x),
        }
    }
}

#[derive(Clone, Copy)]
struct Local<T> {
    h: T,
    speed: T,
    wind: Vec2<T>,
    cost: T,
}

impl<T: Real> Local<T> {
    /// Rowing direction that makes the ground velocity parallel to `dir`
    /// (unit), together with the resulting ground speed.
    #[inline]
    fn steer(&self, dir: Vec2<T>) -> (Vec2<T>, T) {
        let c = ground_speed(self.speed, self.wind, dir);
        let a = [(c * dir[0] - self.wind[0]) / self.speed, (c * dir[1] - self.wind[1]) / self.speed];
        (a, c)
    }
}

/// Zeroth-order coupling at `(x, i)`, written as `-rate U(x, i) + extra`.
///
/// A still-unreached partner `U(x, j)` is replaced by the upper estimate
/// `U(x, i) + C̄ E[κ_ji]`; its term then contributes the constant
/// `λ_ij C̄ E[κ_ji]` and no rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling<T> {
    pub rate: T,
    pub extra: T,
}

pub fn coupling<T: Real>(st: &Stencil<'_, T>, mode: usize) -> Option<Coupling<T>> {
    let rates = st.problem.rates();
    let mut rate = T::zero();
    let mut extra = T::zero();
    for j in 0..st.problem.modes() {
        if j == mode {
            continue;
        }
        let l = rates.rate(mode, j);
        if l == T::zero() {
            continue;
        }
        let uj = st.value(st.point, j);
        if uj.is_finite() {
            rate = rate + l;
            extra = extra + l * uj;
        } else {
            let gap = st.problem.partner_gap(mode, j);
            if !gap.is_finite() {
                return None;
            }
            extra = extra + l * gap;
        }
    }
    Some(Coupling { rate, extra })
}

/// Semi-Lagrangian candidate `Ũ(z, ort, ξ)` for mode `mode`.
///
/// The pseudo-timestep `τ = h |ξ| / |f|` makes `x + τ f` land on the simplex
/// point `ξ`; first-order switch probabilities `p_ij = λ_ij τ` weight the
/// neighbour values. `Ok(None)` when a needed value is unreached.
pub fn simplex_value<T: Real>(
    st: &Stencil<'_, T>,
    mode: usize,
    ort: Orthant<2>,
    xi: SimplexPoint<T, 2>,
) -> Result<Option<(T, Vec2<T>)>> {
    let loc = st.local(mode);
    simplex_value_local(st, &loc, mode, ort, xi.weights())
}

fn simplex_value_local<T: Real>(
    st: &Stencil<'_, T>,
    loc: &Local<T>,
    mode: usize,
    ort: Orthant<2>,
    xi: [T; 2],
) -> Result<Option<(T, Vec2<T>)>> {
    let step = [T::lit(ort.0[0] as f64) * xi[0], T::lit(ort.0[1] as f64) * xi[1]];
    let len = norm(step);
    if len == T::zero() {
        return Ok(None);
    }
    let dir = [step[0] / len, step[1] / len];
    let (control, c) = loc.steer(dir);
    let tau = loc.h * len / c;
    let rates = st.problem.rates();
    let stay = T::one() - tau * rates.exit_rate(mode);
    if stay < T::zero() {
        return Err(Error::TimestepValidity {
            h: loc.h.as_f64(),
            bound: (st.problem.min_speed_margin() / rates.exit_rate(mode)).as_f64(),
        });
    }
    let mut value = tau * loc.cost;
    for k in 0..2 {
        if xi[k] == T::zero() {
            continue;
        }
        let Some(q) = st.neighbor(k, ort.0[k]) else {
            return Ok(None);
        };
        let own = st.value(q, mode);
        if !own.is_finite() {
            return Ok(None);
        }
        let mut mix = stay * own;
        for j in 0..st.problem.modes() {
            let l = rates.rate(mode, j);
            if j == mode || l == T::zero() {
                continue;
            }
            let uj = st.value(q, j);
            if !uj.is_finite() {
                return Ok(None);
            }
            mix = mix + l * tau * uj;
        }
        value = value + xi[k] * mix;
    }
    Ok(Some((value, control)))
}

const SCAN_POINTS: usize = 17;
const GOLDEN_TOL: f64 = 1e-10;

/// Semi-Lagrangian update: minimum of [`simplex_value`] over all orthants and
/// simplex points. Edge minimisation is a 17-point scan refined by golden
/// section search.
pub fn semilag_update<T: Real>(st: &Stencil<'_, T>, mode: usize) -> Result<UpdateResult<T>> {
    let loc = st.local(mode);
    let mut best = UpdateResult::unreached();
    for ort in ORTHANTS_2D {
        let eval = |t: T| simplex_value_local(st, &loc, mode, ort, [t, T::one() - t]);
        // Vertex values decide which faces are usable.
        let at1 = eval(T::one())?;
        let at0 = eval(T::zero())?;
        match (at1, at0) {
            (None, None) => {}
            (Some((v, a)), None) | (None, Some((v, a))) => best.offer(v, a, UpdateKind::Simplex),
            (Some(_), Some(_)) => {
                let mut scan = Vec::with_capacity(SCAN_POINTS);
                for m in 0..SCAN_POINTS {
                    let t = T::lit(m as f64 / (SCAN_POINTS - 1) as f64);
                    let (v, a) = eval(t)?.expect("interior of a usable edge");
                    scan.push((t, v, a));
                }
                let m = (0..SCAN_POINTS)
                    .min_by(|&p, &q| scan[p].1.partial_cmp(&scan[q].1).unwrap())
                    .unwrap();
                let (mut lo, mut hi) =
                    (scan[m.saturating_sub(1)].0, scan[(m + 1).min(SCAN_POINTS - 1)].0);
                let (mut bt, mut bv, mut ba) = scan[m];
                let phi = T::lit(0.5 * (5f64.sqrt() - 1.0));
                let mut c = hi - phi * (hi - lo);
                let mut d = lo + phi * (hi - lo);
                let mut fc = eval(c)?.expect("usable edge");
                let mut fd = eval(d)?.expect("usable edge");
                while hi - lo > T::lit(GOLDEN_TOL) {
                    if fc.0 < fd.0 {
                        hi = d;
                        d = c;
                        fd = fc;
                        c = hi - phi * (hi - lo);
                        fc = eval(c)?.expect("usable edge");
                    } else {
                        lo = c;
                        c = d;
                        fc = fd;
                        d = lo + phi * (hi - lo);
                        fd = eval(d)?.expect("usable edge");
                    }
                }
                for (t, (v, a)) in [(c, fc), (d, fd)] {
                    if v < bv {
                        (bt, bv, ba) = (t, v, a);
                    }
                }
                let _ = bt;
                best.offer(bv, ba, UpdateKind::Simplex);
            }
        }
    }
    Ok(best)
}

/// Larger root of the quadrant's discretised Eikonal-form equation, if it is
/// real, consistent with the unsquared equation and upwind (the ground
/// velocity points into the quadrant). `None` means "rejected".
pub fn quadratic_two_sided<T: Real>(
    st: &Stencil<'_, T>,
    mode: usize,
    ort: Orthant<2>,
    cpl: Coupling<T>,
) -> Option<(T, Vec2<T>)> {
    quadratic_local(st, &st.local(mode), mode, ort, cpl)
}

fn quadratic_local<T: Real>(
    st: &Stencil<'_, T>,
    loc: &Local<T>,
    mode: usize,
    ort: Orthant<2>,
    cpl: Coupling<T>,
) -> Option<(T, Vec2<T>)> {
    let a1 = st.value(st.neighbor(0, ort.0[0])?, mode);
    let a2 = st.value(st.neighbor(1, ort.0[1])?, mode);
    if !a1.is_finite() || !a2.is_finite() {
        return None;
    }
    let two = T::lit(2.0);
    let (h, s2) = (loc.h, loc.speed * loc.speed);
    let eps = [T::lit(ort.0[0] as f64), T::lit(ort.0[1] as f64)];
    // Centred unknown U = mid + h y keeps every coefficient O(1):
    // s² Σ (γ_k - y)² = (p - q y)².
    let mid = (a1 + a2) / two;
    let g = [(a1 - mid) / h, (a2 - mid) / h];
    let ew = [eps[0] * loc.wind[0], eps[1] * loc.wind[1]];
    let p = ew[0] * g[0] + ew[1] * g[1] + cpl.extra + loc.cost - cpl.rate * mid;
    let q = ew[0] + ew[1] + h * cpl.rate;
    let qa = two * s2 - q * q;
    let qb = two * (p * q - s2 * (g[0] + g[1]));
    let qc = s2 * (g[0] * g[0] + g[1] * g[1]) - p * p;
    let y = larger_root(qa, qb, qc)?;

    let diff = [eps[0] * (g[0] - y), eps[1] * (g[1] - y)];
    let dn = norm(diff);
    if !(dn > T::zero()) {
        return None;
    }
    let tol = T::lit(1e-12);
    if p - q * y < -tol * (p.abs() + q.abs() + T::one()) {
        return None;
    }
    let control = [-diff[0] / dn, -diff[1] / dn];
    let f = [loc.speed * control[0] + loc.wind[0], loc.speed * control[1] + loc.wind[1]];
    if eps[0] * f[0] < -tol * loc.speed || eps[1] * f[1] < -tol * loc.speed {
        return None;
    }
    Some((mid + h * y, control))
}

/// Both real roots of `a y² + b y + c`, smaller first.
pub(crate) fn real_roots<T: Real>(a: T, b: T, c: T) -> Option<(T, T)> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == T::zero() {
        return None;
    }
    if a.abs() <= T::lit(1e-14) * scale {
        if b == T::zero() {
            return None;
        }
        let r = -c / b;
        return Some((r, r));
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let qq = -(b + b.signum() * sq) / T::lit(2.0);
    let (r1, r2) = if qq == T::zero() { (T::zero(), T::zero()) } else { (qq / a, c / qq) };
    Some(if r1 <= r2 { (r1, r2) } else { (r2, r1) })
}

fn larger_root<T: Real>(a: T, b: T, c: T) -> Option<T> {
    real_roots(a, b, c).map(|(_, r)| r)
}

/// Characteristic along `sign e_axis`: the control making the ground velocity
/// point exactly at that neighbour, with pseudo-timestep `τ_k = h / |f|`.
pub fn one_sided_update<T: Real>(
    st: &Stencil<'_, T>,
    mode: usize,
    axis: usize,
    sign: i8,
    cpl: Coupling<T>,
) -> Option<(T, Vec2<T>)> {
    one_sided_local(st, &st.local(mode), mode, axis, sign, cpl)
}

fn one_sided_local<T: Real>(
    st: &Stencil<'_, T>,
    loc: &Local<T>,
    mode: usize,
    axis: usize,
    sign: i8,
    cpl: Coupling<T>,
) -> Option<(T, Vec2<T>)> {
    let nb = st.value(st.neighbor(axis, sign)?, mode);
    if !nb.is_finite() {
        return None;
    }
    let mut dir = [T::zero(); 2];
    dir[axis] = T::lit(sign as f64);
    let (control, c) = loc.steer(dir);
    let tau = loc.h / c;
    let value = (nb + tau * (loc.cost + cpl.extra)) / (T::one() + tau * cpl.rate);
    Some((value, control))
}

/// Eulerian update: per quadrant the two-sided solution when accepted,
/// otherwise both one-sided candidates; minimum over quadrants.
pub fn euler_update<T: Real>(st: &Stencil<'_, T>, mode: usize) -> UpdateResult<T> {
    let mut best = UpdateResult::unreached();
    let Some(cpl) = coupling(st, mode) else {
        return best;
    };
    let loc = st.local(mode);
    for ort in ORTHANTS_2D {
        if let Some((v, a)) = quadratic_local(st, &loc, mode, ort, cpl) {
            best.offer(v, a, UpdateKind::TwoSided);
        } else {
            for k in 0..2 {
                if let Some((v, a)) = one_sided_local(st, &loc, mode, k, ort.0[k], cpl) {
                    best.offer(v, a, UpdateKind::OneSided);
                }
            }
        }
    }
    best
}

/// Unit ground-velocity direction of the control `a` in mode `mode` at the
/// stencil point.
pub fn ground_direction<T: Real>(st: &Stencil<'_, T>, mode: usize, control: Vec2<T>) -> Vec2<T> {
    let loc = st.local(mode);
    let f = [loc.speed * control[0] + loc.wind[0], loc.speed * control[1] + loc.wind[1]];
    let n = norm(f);
    [f[0] / n, f[1] / n]
}
