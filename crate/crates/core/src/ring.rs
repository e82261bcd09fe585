//! Wind of constant strength whose direction performs a Brownian motion on
//! the circle, discretised into `n` equally spaced directions with
//! nearest-neighbour switching.

use crate::error::{Error, Result};
use crate::markov::RateMatrix;
use crate::model::{Dynamics, Grid, Problem, Region};
use crate::real::Real;

#[derive(Clone, Debug)]
pub struct RingSpec<T> {
    pub modes: usize,
    /// Angular diffusion, radians per square-root time.
    pub sigma: T,
    pub wind_speed: T,
    pub speed: T,
    pub grid: Grid<T>,
    pub region: Region<T>,
    pub terminal_cost: T,
    pub epsilon: T,
}

/// Rate of switching to each adjacent direction: `σ² / (2 Δθ²)`.
pub fn adjacent_rate<T: Real>(modes: usize, sigma: T) -> T {
    let n = T::lit(modes as f64);
    sigma * sigma * n * n / (T::lit(8.0) * T::PI() * T::PI())
}

/// Wind direction of mode `i`.
pub fn mode_angle<T: Real>(modes: usize, i: usize) -> T {
    T::lit(2.0) * T::PI() * T::lit(i as f64) / T::lit(modes as f64)
}

pub fn ring_rates<T: Real>(modes: usize, sigma: T) -> Result<RateMatrix<T>> {
    if modes < 3 {
        return Err(Error::config(format!("a wind ring needs at least 3 directions, got {modes}")));
    }
    if !(sigma > T::zero()) {
        return Err(Error::config("angular diffusion must be positive"));
    }
    let r = adjacent_rate(modes, sigma);
    let mut rows = vec![vec![T::zero(); modes]; modes];
    for (i, row) in rows.iter_mut().enumerate() {
        row[(i + 1) % modes] = r;
        row[(i + modes - 1) % modes] = r;
    }
    RateMatrix::from_rows(&rows)
}

pub fn build_ring_problem<T: Real>(spec: &RingSpec<T>) -> Result<Problem<T>> {
    let rates = ring_rates(spec.modes, spec.sigma)?;
    if !(spec.speed > spec.wind_speed) {
        return Err(Error::config("rowing speed must exceed the wind speed"));
    }
    let winds: Vec<[T; 2]> = (0..spec.modes)
        .map(|i| {
            let th = mode_angle::<T>(spec.modes, i);
            [spec.wind_speed * th.cos(), spec.wind_speed * th.sin()]
        })
        .collect();
    Problem::new(
        spec.grid.clone(),
        spec.region.clone(),
        Dynamics::time_optimal(spec.speed, &winds),
        rates,
        spec.terminal_cost,
        spec.epsilon,
    )
}

/// Bound `φ(α) = α (2π − α) / σ²` on the value difference between wind
/// directions `α` apart (unit running cost).
pub fn theta_variability_bound<T: Real>(sigma: T, theta1: T, theta2: T) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let mut a = (theta2 - theta1).abs() % two_pi;
    if a < T::zero() {
        a = a + two_pi;
    }
    a * (two_pi - a) / (sigma * sigma)
}
