//! Continuous-time Markov chain utilities for the mode process.
//!
//! Matrices here are tiny (a handful of modes, at most a few dozen), so the
//! dense routines below favour accuracy over speed.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::real::Real;

/// Transition-rate matrix `Λ = (λ_ij)`: non-negative off-diagonal rates,
/// diagonal `λ_ii = -Σ_{j≠i} λ_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix<T> {
    n: usize,
    data: Vec<T>,
}

/// `P(t) = exp(Λ t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix<T> {
    pub t: T,
    n: usize,
    data: Vec<T>,
}

impl<T: Real> ProbabilityMatrix<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }
}

impl<T: Real> RateMatrix<T> {
    /// Validates a square matrix of rates. The given diagonal is ignored and
    /// recomputed from the off-diagonal entries.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Shape { rows: n, cols: bad.len() });
        }
        let mut data = vec![T::zero(); n * n];
        for (i, row) in rows.iter().enumerate() {
            let mut total = T::zero();
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if !(v >= T::zero()) || !v.is_finite() {
                    return Err(Error::InvalidRate { row: i, col: j, value: v.as_f64() });
                }
                data[i * n + j] = v;
                total = total + v;
            }
            data[i * n + i] = -total;
        }
        Ok(RateMatrix { n, data })
    }

    /// No switching at all.
    pub fn zeros(n: usize) -> Self {
        RateMatrix { n, data: vec![T::zero(); n * n] }
    }

    /// Every off-diagonal rate equal to `rate` (the symmetric two-mode chain for `n = 2`).
    pub fn uniform(n: usize, rate: T) -> Result<Self> {
        let rows: Vec<Vec<T>> =
            (0..n).map(|i| (0..n).map(|j| if i == j { T::zero() } else { rate }).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// `-λ_ii`, the total rate of leaving mode `i`.
    #[inline]
    pub fn exit_rate(&self, i: usize) -> T {
        -self.data[i * self.n + i]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }

    /// `cΛ`.
    pub fn scaled(&self, c: T) -> Self {
        RateMatrix { n: self.n, data: self.data.iter().map(|&v| v * c).collect() }
    }

    /// `reach[i][j]`: mode `j` can be reached from `i` (reflexive transitive
    /// closure of the off-diagonal support graph).
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.n;
        let mut reach: Vec<Vec<bool>> =
            (0..n).map(|i| (0..n).map(|j| i == j || self.rate(i, j) > T::zero()).collect()).collect();
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        reach
    }

    pub fn check_irreducible(&self) -> Result<()> {
        let reach = self.reachability();
        for (i, row) in reach.iter().enumerate() {
            if let Some(j) = row.iter().position(|r| !r) {
                return Err(Error::Reducible { from: i, to: j });
            }
        }
        Ok(())
    }

    /// `exp(Λ t)` by scaling and squaring of a 24-term Taylor polynomial.
    pub fn transition_probabilities(&self, t: T) -> Result<ProbabilityMatrix<T>> {
        if t < T::zero() || t.is_nan() {
            return Err(Error::NegativeTime(t.as_f64()));
        }
        let n = self.n;
        let a: Vec<T> = self.data.iter().map(|&v| v * t).collect();
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<T>())
            .fold(T::zero(), T::max);
        let mut squarings = 0u32;
        let mut scale = T::one();
        while norm1 * scale > T::lit(0.5) {
            scale = scale / T::lit(2.0);
            squarings += 1;
        }
        let a: Vec<T> = a.into_iter().map(|v| v * scale).collect();

        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..=24 {
            term = matmul(&term, &a, n);
            let inv_k = T::one() / T::lit(k as f64);
            for v in term.iter_mut() {
                *v = *v * inv_k;
            }
            for (r, v) in result.iter_mut().zip(&term) {
                *r = *r + *v;
            }
        }
        for _ in 0..squarings {
            result = matmul(&result, &result, n);
        }
        Ok(ProbabilityMatrix { t, n, data: result })
    }

    /// Stationary distribution `π*` with `π* Λ = 0`, `Σ π* = 1`.
    pub fn invariant_distribution(&self) -> Result<Vec<T>> {
        self.check_irreducible()?;
        let n = self.n;
        // Λᵀ π = 0 with the last equation replaced by the normalisation.
        let mut m = vec![T::zero(); n * n];
        let mut rhs = vec![T::zero(); n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.rate(j, i);
            }
        }
        for j in 0..n {
            m[(n - 1) * n + j] = T::one();
        }
        rhs[n - 1] = T::one();
        let pi = solve_dense(m, rhs, n).ok_or(Error::Reducible { from: 0, to: 0 })?;
        Ok(pi.into_iter().map(|p| p.max(T::zero())).collect())
    }

    /// Mean first-passage time `E[κ_ij]` from mode `i` to mode `j`.
    pub fn expected_hitting_time(&self, i: usize, j: usize) -> Result<T> {
        if i == j {
            return Ok(T::zero());
        }
        let n = self.n;
        let reach = self.reachability();
        // States from which j is hit almost surely: every state they can reach still reaches j.
        let sure: Vec<bool> = (0..n).map(|k| (0..n).all(|m| !reach[k][m] || reach[m][j])).collect();
        if !sure[i] {
            return Err(Error::Unreachable { from: i, to: j });
        }
        let states: Vec<usize> = (0..n).filter(|&k| k != j && sure[k]).collect();
        let m = states.len();
        let mut a = vec![T::zero(); m * m];
        for (r, &k) in states.iter().enumerate() {
            for (c, &l) in states.iter().enumerate() {
                a[r * m + c] = -self.rate(k, l);
            }
        }
        let times = solve_dense(a, vec![T::one(); m], m).ok_or(Error::Unreachable { from: i, to: j })?;
        let pos = states.iter().position(|&k| k == i).expect("i is a transient state");
        Ok(times[pos])
    }

    /// Matrix of `C̄ max(E[κ_ij], E[κ_ji])`, bounding `|u_i(x) - u_j(x)|`.
    pub fn mode_difference_bound(&self, cost_bound: T) -> Result<Vec<Vec<T>>> {
        self.check_irreducible()?;
        let n = self.n;
        let mut out = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let b = cost_bound * self.expected_hitting_time(i, j)?.max(self.expected_hitting_time(j, i)?);
                out[i][j] = b;
                out[j][i] = b;
            }
        }
        Ok(out)
    }

    /// Exact sample of the mode path started in `start`: switch times and the
    /// new mode at each, up to `horizon`.
    pub fn sample_mode_path<R: Rng + ?Sized>(&self, start: usize, horizon: T, rng: &mut R) -> Vec<(T, usize)> {
        let mut path = Vec::new();
        let mut t = T::zero();
        let mut mode = start;
        loop {
            let exit = self.exit_rate(mode);
            if !(exit > T::zero()) {
                break;
            }
            let hold: f64 = Exp1.sample(rng);
            t = t + T::lit(hold) / exit;
            if t > horizon {
                break;
            }
            let mut pick = T::lit(rng.random::<f64>()) * exit;
            let mut next = mode;
            for j in 0..self.n {
                if j == mode {
                    continue;
                }
                let r = self.rate(mode, j);
                if r > T::zero() {
                    next = j;
                    if pick < r {
                        break;
                    }
                    pick = pick - r;
                }
            }
            mode = next;
            path.push((t, mode));
        }
        path
    }
}

fn identity<T: Real>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = T::one();
    }
    m
}

fn matmul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] = out[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense<T: Real>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Option<Vec<T>> {
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::lit(n as f64 * 16.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r * n + col].abs().partial_cmp(&a[s * n + col].abs()).unwrap())?;
        if a[pivot * n + col].abs() <= tiny {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
            }
            b.swap(pivot, col);
        }
        let p = a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                a[r * n + j] = a[r * n + j] - f * a[col * n + j];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for j in (r + 1)..n {
            s = s - a[r * n + j] * x[j];
        }
        x[r] = s / a[r * n + r];
    }
    Some(x)
}
