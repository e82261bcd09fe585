use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::output::{write_csv_table, write_json, write_trajectories, write_value_csv, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::model::{Grid, Problem};
use crate::planners::{plan, solve_coupled, Plan, PlannerKind};
use crate::ring::{mode_angle, theta_variability_bound};
use crate::simulate::{monte_carlo, replay_trajectory, Controller, SimStats, TrajectoryRecord};
use crate::solver::{evaluate_frozen_policy, Scheme, SolveReport, ValueField};

/// Command-line settings that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub planner: Option<PlannerKind>,
    pub scheme: Option<Scheme>,
    pub replay: Option<PathBuf>,
}

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl Context {
    pub fn new(config: RunConfig, overrides: Overrides) -> Self {
        let out = overrides
            .out
            .clone()
            .or_else(|| config.output.as_ref().map(|o| PathBuf::from(&o.dir)))
            .unwrap_or_else(|| PathBuf::from("out"));
        Context { config, out, overrides }
    }

    fn planner(&self) -> PlannerKind {
        self.overrides.planner.unwrap_or(self.config.solver.planner)
    }

    fn scheme(&self) -> Scheme {
        self.overrides.scheme.unwrap_or(self.config.solver.scheme)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn grid_json(grid: &Grid<f64>) -> serde_json::Value {
    json!({"lo": grid.lo(), "hi": grid.hi(), "h": grid.h(), "points": grid.counts()})
}

fn json_f64(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(null)
    }
}

/// Value of every mode at the gridpoint nearest to `x`.
fn values_at(grid: &Grid<f64>, field: &ValueField<f64>, x: [f64; 2]) -> Result<Vec<f64>> {
    let p = grid
        .nearest(&x)
        .ok_or_else(|| Error::config(format!("query point ({}, {}) outside the grid", x[0], x[1])))?;
    Ok((0..field.modes()).map(|i| field.value(p, i)).collect())
}

fn mode_spread_matrix(field: &ValueField<f64>) -> Vec<Vec<f64>> {
    let n = field.modes();
    (0..n).map(|i| (0..n).map(|j| field.sup_mode_difference(i, j)).collect()).collect()
}

fn write_fields(ctx: &Context, grid: &Grid<f64>, field: &ValueField<f64>, prefix: &str) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for i in 0..field.modes() {
        let name = format!("{prefix}_mode{i}.csv");
        write_value_csv(&ctx.path(&name), grid, field, i, prefix)?;
        files.push(name);
    }
    Ok(files)
}

fn reports_json(reports: &[SolveReport]) -> serde_json::Value {
    json!(reports
        .iter()
        .map(|r| json!({
            "sweeps": r.sweeps,
            "final_max_change": r.final_max_change,
            "wall_time_secs": r.wall_time_secs,
            "updates_computed": r.updates_computed,
            "unreachable": r.unreachable,
            "max_change_history": r.max_change_history.iter().map(|&v| json_f64(v)).collect::<Vec<_>>(),
        }))
        .collect::<Vec<_>>())
}

fn solve_plan(ctx: &Context, problem: &Problem<f64>, kind: PlannerKind) -> Result<Plan<f64>> {
    let result = plan(problem, kind, ctx.scheme(), &ctx.config.solve_options());
    if let Err(Error::NotConverged(report)) = &result {
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "solve",
            "planner": kind.name(),
            "converged": false,
            "reports": reports_json(std::slice::from_ref(report)),
        });
        write_json(&ctx.path("solve_report.json"), &summary)?;
    }
    result
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub planner: PlannerKind,
    pub sweeps: Vec<usize>,
    pub sup_mode_difference: f64,
    pub files: Vec<String>,
}

/// Solves with one planner; writes one value file per mode and a report.
pub fn cmd_solve(ctx: &Context) -> Result<SolveSummary> {
    let problem = ctx.config.problem()?;
    let kind = ctx.planner();
    let plan = solve_plan(ctx, &problem, kind)?;
    let grid = problem.grid();
    let mut files = write_fields(ctx, grid, &plan.field, &format!("value_{}", kind.name()))?;
    let queries: Vec<serde_json::Value> = ctx
        .config
        .solver
        .query_points
        .iter()
        .map(|&x| {
            values_at(grid, &plan.field, x)
                .map(|v| json!({"x": x[0], "y": x[1], "values": v.iter().map(|&u| json_f64(u)).collect::<Vec<_>>()}))
        })
        .collect::<Result<_>>()?;
    let spread = plan.field.sup_mode_spread();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "planner": kind.name(),
        "scheme": ctx.scheme(),
        "converged": true,
        "modes": plan.field.modes(),
        "grid": grid_json(grid),
        "epsilon": problem.epsilon(),
        "reports": reports_json(&plan.reports),
        "sup_mode_difference": spread,
        "mode_difference_matrix": mode_spread_matrix(&plan.field),
        "query": queries,
        "files": files,
    });
    write_json(&ctx.path("solve_report.json"), &summary)?;
    files.push("solve_report.json".into());
    Ok(SolveSummary {
        planner: kind,
        sweeps: plan.reports.iter().map(|r| r.sweeps).collect(),
        sup_mode_difference: spread,
        files,
    })
}

/// Explicit mode path for replay. Either JSON `{"times": [..], "modes": [..]}`
/// or plain text listing switch times (commas / whitespace, `#` comments);
/// without modes each switch moves to the next mode cyclically.
pub fn parse_replay(text: &str, mode0: usize, modes: usize) -> Result<Vec<(f64, usize)>> {
    let trimmed = text.trim_start();
    let (times, given): (Vec<f64>, Option<Vec<usize>>) = if trimmed.starts_with('{') {
        #[derive(serde::Deserialize)]
        struct Replay {
            times: Vec<f64>,
            modes: Option<Vec<usize>>,
        }
        let r: Replay = serde_json::from_str(trimmed).map_err(|e| Error::config(format!("replay file: {e}")))?;
        (r.times, r.modes)
    } else {
        let mut times = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
                times.push(tok.parse::<f64>().map_err(|e| Error::config(format!("replay file: {tok:?}: {e}")))?);
            }
        }
        (times, None)
    };
    if let Some(m) = &given {
        if m.len() != times.len() {
            return Err(Error::config("replay file: times and modes differ in length"));
        }
        if let Some(&bad) = m.iter().find(|&&m| m >= modes) {
            return Err(Error::config(format!("replay file: mode {bad} out of range")));
        }
    }
    if let Some(w) = times.windows(2).find(|w| !(w[0] <= w[1])) {
        return Err(Error::config(format!("replay file: switch times not increasing ({} then {})", w[0], w[1])));
    }
    if let Some(&t) = times.iter().find(|&&t| t < 0.0 || !t.is_finite()) {
        return Err(Error::NegativeTime(t));
    }
    let mut mode = mode0;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            mode = given.as_ref().map_or((mode + 1) % modes, |m| m[k]);
            (t, mode)
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub stats: Vec<SimStats>,
    pub replays: Vec<TrajectoryRecord>,
    pub files: Vec<String>,
}

/// Monte Carlo runs of one planner's policy, or, with `--replay`, single
/// runs of the selected (default: all) planners along the same mode path.
pub fn cmd_simulate(ctx: &Context) -> Result<SimulateSummary> {
    let problem = ctx.config.problem()?;
    let sim = ctx.config.simulation()?.clone();
    let opts = ctx.config.sim_options(problem.grid())?;
    let real = ctx.config.real_rates(&problem, sim.real_rates.as_ref())?;
    let seed = ctx.overrides.seed.unwrap_or(sim.seed);
    let mut files = Vec::new();

    if let Some(replay) = &ctx.overrides.replay {
        let text = std::fs::read_to_string(replay).map_err(|source| Error::Io { path: replay.clone(), source })?;
        let path = parse_replay(&text, sim.mode0, problem.modes())?;
        let kinds = ctx.overrides.planner.map_or(PlannerKind::ALL.to_vec(), |k| vec![k]);
        let mut records = Vec::new();
        for kind in kinds {
            let plan = solve_plan(ctx, &problem, kind)?;
            let ctrl = check_coverage(&problem, &plan, sim.x0, sim.mode0)?;
            records.push(replay_trajectory(&problem, &ctrl, sim.x0, sim.mode0, &path, &opts));
        }
        write_trajectories(&ctx.path("replay_trajectories.jsonl"), &records)?;
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "simulate",
            "replay": path,
            "runs": records.iter().map(|r| json!({
                "planner": r.planner.name(),
                "outcome": r.outcome,
                "switches_elapsed": r.switches.len(),
            })).collect::<Vec<_>>(),
        });
        write_json(&ctx.path("replay_summary.json"), &summary)?;
        files.extend(["replay_trajectories.jsonl".to_string(), "replay_summary.json".to_string()]);
        return Ok(SimulateSummary { stats: Vec::new(), replays: records, files });
    }

    let kind = ctx.planner();
    let plan = solve_plan(ctx, &problem, kind)?;
    let ctrl = check_coverage(&problem, &plan, sim.x0, sim.mode0)?;
    let (stats, records) = monte_carlo(&problem, &ctrl, sim.x0, sim.mode0, &real, sim.runs, seed, &opts);
    let name = format!("trajectories_{}.jsonl", kind.name());
    write_trajectories(&ctx.path(&name), &records)?;
    files.push(name);
    let expected = values_at(problem.grid(), &plan.field, sim.x0)?;
    let m = if plan.field.modes() == 1 { 0 } else { sim.mode0 };
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "planner": kind.name(),
        "x0": sim.x0,
        "mode0": sim.mode0,
        "dt": opts.dt,
        "t_max": opts.t_max,
        "capture_radius": opts.capture_radius,
        "planner_expected_cost": json_f64(expected[m]),
        "stats": stats,
    });
    let name = format!("sim_stats_{}.json", kind.name());
    write_json(&ctx.path(&name), &summary)?;
    files.push(name);
    Ok(SimulateSummary { stats: vec![stats], replays: Vec::new(), files })
}

fn check_coverage<'a>(problem: &'a Problem<f64>, plan: &'a Plan<f64>, x0: [f64; 2], mode0: usize) -> Result<Controller<'a, f64>> {
    let ctrl = Controller::new(problem.grid(), &plan.field, &plan.policy);
    ctrl.policy_at(x0, mode0)?;
    Ok(ctrl)
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub planner: PlannerKind,
    pub x: f64,
    pub y: f64,
    pub mode: usize,
    /// Optimal expected cost under the real rates.
    pub u_r: f64,
    /// What the planner itself expects.
    pub u_p: f64,
    /// Expected cost of the planner's policy under the real rates.
    pub u_rp: f64,
    pub degradation_pct: f64,
}

/// Cross-evaluation of every planner's policy under the real switching rates.
pub fn cmd_compare(ctx: &Context) -> Result<Vec<CompareRow>> {
    let problem = ctx.config.problem()?;
    let cmp = ctx.config.compare.clone().unwrap_or_else(|| super::config::CompareConfig {
        query_points: ctx.config.solver.query_points.clone(),
        planners: PlannerKind::ALL.to_vec(),
        real_rates: None,
    });
    if cmp.query_points.is_empty() {
        return Err(Error::config("compare needs query points"));
    }
    let real = ctx.config.real_rates(&problem, cmp.real_rates.as_ref())?;
    let opts = ctx.config.solve_options();
    let real_problem = problem.with_rates(real.clone())?;
    let (ur, _) = solve_coupled(&real_problem, ctx.scheme(), &opts)?;
    let planners = ctx.overrides.planner.map_or(cmp.planners.clone(), |k| vec![k]);
    let grid = problem.grid();
    let mut rows = Vec::new();
    for kind in planners {
        let plan = solve_plan(ctx, &problem, kind)?;
        let (urp, _) = evaluate_frozen_policy(&problem, &plan.policy, &real, &opts)?;
        for &x in &cmp.query_points {
            let r = values_at(grid, &ur, x)?;
            let p = values_at(grid, &plan.field, x)?;
            let rp = values_at(grid, &urp, x)?;
            for mode in 0..problem.modes() {
                let up = if p.len() == 1 { p[0] } else { p[mode] };
                rows.push(CompareRow {
                    planner: kind,
                    x: x[0],
                    y: x[1],
                    mode,
                    u_r: r[mode],
                    u_p: up,
                    u_rp: rp[mode],
                    degradation_pct: 100.0 * (rp[mode] - r[mode]) / r[mode],
                });
            }
        }
    }
    let fmt = |v: f64| if v.is_finite() { format!("{v:.6}") } else { "inf".into() };
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.planner.name().to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.mode.to_string(),
                fmt(r.u_r),
                fmt(r.u_p),
                fmt(r.u_rp),
                if r.degradation_pct.is_finite() { format!("{:.3}", r.degradation_pct) } else { "inf".into() },
            ]
        })
        .collect();
    write_csv_table(
        &ctx.path("compare.csv"),
        &["planner", "x", "y", "mode", "u_r", "u_p", "u_rp", "degradation_pct"],
        &table,
    )?;
    let json_rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            json!({
                "planner": r.planner.name(), "x": r.x, "y": r.y, "mode": r.mode,
                "u_r": json_f64(r.u_r), "u_p": json_f64(r.u_p), "u_rp": json_f64(r.u_rp),
                "degradation_pct": json_f64(r.degradation_pct),
            })
        })
        .collect();
    write_json(
        &ctx.path("compare.json"),
        &json!({"schema_version": SCHEMA_VERSION, "command": "compare", "real_rates": real.rows(), "rows": json_rows}),
    )?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct RingPair {
    pub i: usize,
    pub j: usize,
    pub sup_difference: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Expands a `[ring]` section into an explicit configuration, solves it and
/// checks the angular variability bound for every pair of directions.
pub fn cmd_ring(ctx: &Context) -> Result<Vec<RingPair>> {
    let ring = ctx.config.ring.clone().ok_or_else(|| Error::config("missing [ring] section"))?;
    let problem = ctx.config.problem()?;

    let mut expanded = ctx.config.clone();
    expanded.ring = None;
    expanded.dynamics.winds = (0..problem.modes()).map(|i| problem.dynamics().winds[i].eval([0.0, 0.0])).collect();
    expanded.rates = Some(super::config::RatesConfig { uniform: None, matrix: Some(problem.rates().rows()) });
    let text = expanded.to_toml()?;
    std::fs::create_dir_all(&ctx.out).map_err(|source| Error::Io { path: ctx.out.clone(), source })?;
    let exp_path = ctx.path("ring_expanded.toml");
    std::fs::write(&exp_path, text).map_err(|source| Error::Io { path: exp_path, source })?;

    let plan = solve_plan(ctx, &problem, PlannerKind::Coupled)?;
    let grid = problem.grid();
    write_fields(ctx, grid, &plan.field, "value_ring")?;
    let n = problem.modes();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = plan.field.sup_mode_difference(i, j);
            let bound = theta_variability_bound(ring.sigma, mode_angle(n, i), mode_angle(n, j)) + 5.0 * grid.h();
            pairs.push(RingPair { i, j, sup_difference: d, bound, within_bound: d <= bound });
        }
    }
    write_json(
        &ctx.path("ring_report.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "ring",
            "modes": n,
            "sigma": ring.sigma,
            "adjacent_rate": problem.rates().rate(0, 1),
            "reports": reports_json(&plan.reports),
            "pairs": pairs,
        }),
    )?;
    Ok(pairs)
}

pub fn load_context(config: &Path, overrides: Overrides) -> Result<Context> {
    Ok(Context::new(RunConfig::load(config)?, overrides))
}
