//! Run configuration, read from a single TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::RateMatrix;
use crate::model::{Dynamics, Grid, Problem, Rect, Region};
use crate::planners::PlannerKind;
use crate::ring::{build_ring_problem, RingSpec};
use crate::simulate::SimOptions;
use crate::solver::{Scheme, SolveOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub region: RegionConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Either the spacing or the number of cells along the first axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default)]
    pub obstacles: Vec<RectConfig>,
    #[serde(default)]
    pub target_points: Vec<[f64; 2]>,
    #[serde(default)]
    pub target_rects: Vec<RectConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub speed: f64,
    /// One constant wind per mode; omitted when a `[ring]` section defines them.
    #[serde(default)]
    pub winds: Vec<[f64; 2]>,
    /// Per-mode constant running costs, default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    /// Same rate between every ordered pair of distinct modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<f64>,
    /// Full matrix; diagonal entries are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub modes: usize,
    pub sigma: f64,
    pub wind_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub planner: PlannerKind,
    pub scheme: Scheme,
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub terminal_cost: f64,
    pub active_flags: bool,
    /// Points at which values are reported.
    pub query_points: Vec<[f64; 2]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            planner: PlannerKind::Coupled,
            scheme: Scheme::Euler,
            epsilon: 1e-6,
            max_sweeps: 10_000,
            terminal_cost: 0.0,
            active_flags: true,
            query_points: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub x0: [f64; 2],
    #[serde(default)]
    pub mode0: usize,
    pub runs: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to twice the grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_radius: Option<f64>,
    /// Switching process the simulated world actually follows; defaults to
    /// the planning rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_rates: Option<RatesConfig>,
    /// Write every integration step, not only events.
    #[serde(default)]
    pub record_paths: bool,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_max() -> f64 {
    20.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub query_points: Vec<[f64; 2]>,
    #[serde(default = "all_planners")]
    pub planners: Vec<PlannerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_rates: Option<RatesConfig>,
}

fn all_planners() -> Vec<PlannerKind> {
    PlannerKind::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl RatesConfig {
    pub fn build(&self, modes: usize) -> Result<RateMatrix<f64>> {
        match (self.uniform, &self.matrix) {
            (Some(_), Some(_)) => Err(Error::config("give either rates.uniform or rates.matrix, not both")),
            (Some(r), None) => {
                if r < 0.0 || !r.is_finite() {
                    return Err(Error::InvalidRate { row: 0, col: 1, value: r });
                }
                if r == 0.0 {
                    Ok(RateMatrix::zeros(modes))
                } else {
                    RateMatrix::uniform(modes, r)
                }
            }
            (None, Some(m)) => {
                if m.len() != modes {
                    return Err(Error::config(format!("rate matrix has {} rows for {modes} modes", m.len())));
                }
                RateMatrix::from_rows(m)
            }
            (None, None) => Ok(RateMatrix::zeros(modes)),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("cannot serialise configuration: {e}")))
    }

    pub fn grid(&self) -> Result<Grid<f64>> {
        let g = &self.grid;
        let h = match (g.h, g.cells) {
            (Some(_), Some(_)) => return Err(Error::config("give either grid.h or grid.cells, not both")),
            (Some(h), None) => h,
            (None, Some(c)) if c > 0 => (g.hi[0] - g.lo[0]) / c as f64,
            _ => return Err(Error::config("grid needs a positive h or cells")),
        };
        Grid::new(&g.lo, &g.hi, h)
    }

    pub fn region(&self) -> Region<f64> {
        let rect = |r: &RectConfig| Rect::new(r.lo, r.hi);
        Region {
            domain: Rect::new(self.grid.lo, self.grid.hi),
            obstacles: self.region.obstacles.iter().map(rect).collect(),
            target_points: self.region.target_points.clone(),
            target_rects: self.region.target_rects.iter().map(rect).collect(),
        }
    }

    pub fn modes(&self) -> usize {
        match &self.ring {
            Some(r) => r.modes,
            None => self.dynamics.winds.len(),
        }
    }

    fn validate_physical(&self) -> Result<()> {
        let d = &self.dynamics;
        if !(d.speed > 0.0) {
            return Err(Error::config("dynamics.speed must be positive"));
        }
        if !(self.solver.epsilon > 0.0) {
            return Err(Error::config("solver.epsilon must be positive"));
        }
        if self.solver.max_sweeps == 0 {
            return Err(Error::config("solver.max_sweeps must be positive"));
        }
        if let Some(s) = &self.simulation {
            if !(s.dt > 0.0) || !(s.t_max > 0.0) {
                return Err(Error::config("simulation.dt and simulation.t_max must be positive"));
            }
            if s.capture_radius.is_some_and(|r| !(r > 0.0)) {
                return Err(Error::config("simulation.capture_radius must be positive"));
            }
            if s.mode0 >= self.modes() {
                return Err(Error::config(format!("simulation.mode0 = {} but there are {} modes", s.mode0, self.modes())));
            }
        }
        Ok(())
    }

    /// Planning problem described by the file.
    pub fn problem(&self) -> Result<Problem<f64>> {
        self.validate_physical()?;
        let grid = self.grid()?;
        let region = self.region();
        if let Some(r) = &self.ring {
            if !self.dynamics.winds.is_empty() || self.rates.is_some() {
                return Err(Error::config("a [ring] section defines the winds and rates itself"));
            }
            if self.dynamics.costs.is_some() {
                return Err(Error::config("the ring model has unit running costs"));
            }
            return build_ring_problem(&RingSpec {
                modes: r.modes,
                sigma: r.sigma,
                wind_speed: r.wind_speed,
                speed: self.dynamics.speed,
                grid,
                region,
                terminal_cost: self.solver.terminal_cost,
                epsilon: self.solver.epsilon,
            });
        }
        let n = self.dynamics.winds.len();
        if n == 0 {
            return Err(Error::config("dynamics.winds must list at least one mode"));
        }
        let mut dynamics = Dynamics::time_optimal(self.dynamics.speed, &self.dynamics.winds);
        if let Some(c) = &self.dynamics.costs {
            if c.len() != n {
                return Err(Error::config(format!("{} running costs for {n} modes", c.len())));
            }
            dynamics.costs = c.iter().map(|&c| crate::model::ScalarProfile::Constant(c)).collect();
        }
        let rates = match &self.rates {
            Some(r) => r.build(n)?,
            None => RateMatrix::zeros(n),
        };
        Problem::new(grid, region, dynamics, rates, self.solver.terminal_cost, self.solver.epsilon)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_sweeps: self.solver.max_sweeps,
            active_flags: self.solver.active_flags,
            ..SolveOptions::default()
        }
    }

    pub fn simulation(&self) -> Result<&SimulationConfig> {
        self.simulation.as_ref().ok_or_else(|| Error::config("missing [simulation] section"))
    }

    pub fn sim_options(&self, grid: &Grid<f64>) -> Result<SimOptions<f64>> {
        let s = self.simulation()?;
        Ok(SimOptions {
            dt: s.dt,
            t_max: s.t_max,
            capture_radius: s.capture_radius.unwrap_or(2.0 * grid.h()),
            record_path: s.record_paths,
        })
    }

    /// Rates the simulated or evaluated world follows.
    pub fn real_rates(&self, problem: &Problem<f64>, section: Option<&RatesConfig>) -> Result<RateMatrix<f64>> {
        match section {
            Some(r) => r.build(problem.modes()),
            None => Ok(problem.rates().clone()),
        }
    }
}
