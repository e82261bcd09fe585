//! File formats written by the command-line tool.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::Grid;
use crate::simulate::TrajectoryRecord;
use crate::solver::ValueField;

pub const SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// One mode of a value field: three `#` header lines (extents, spacing,
/// mode), then one CSV row per grid row from the lowest `y` upwards.
/// Unreached points are written as `inf`.
pub fn write_value_csv(path: &Path, grid: &Grid<f64>, field: &ValueField<f64>, mode: usize, label: &str) -> Result<()> {
    let mut w = create(path)?;
    let (nx, ny) = (grid.counts()[0], grid.counts()[1]);
    let body = (|| -> std::io::Result<()> {
        writeln!(
            w,
            "# extents {} {} {} {} points {nx} {ny}",
            grid.lo()[0],
            grid.hi()[0],
            grid.lo()[1],
            grid.hi()[1]
        )?;
        writeln!(w, "# h {}", grid.h())?;
        writeln!(w, "# mode {mode} {label}")?;
        let mut line = String::new();
        for iy in 0..ny {
            line.clear();
            for ix in 0..nx {
                if ix > 0 {
                    line.push(',');
                }
                let v = field.value(iy * nx + ix, mode);
                if v.is_finite() {
                    line.push_str(&v.to_string());
                } else {
                    line.push_str("inf");
                }
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    })();
    body.map_err(io_err(path))
}

/// Reads back a file written by [`write_value_csv`] as `(counts, values)`.
pub fn read_value_csv(path: &Path) -> Result<([usize; 2], Vec<f64>)> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut counts = [0usize; 2];
    let mut values = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if let Some(rest) = line.strip_prefix("# extents") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if let Some(k) = parts.iter().position(|&p| p == "points") {
                counts = [parts[k + 1].parse().unwrap_or(0), parts[k + 2].parse().unwrap_or(0)];
            }
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            let v = tok.trim().parse::<f64>().map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            values.push(v);
        }
    }
    if counts[0] * counts[1] != values.len() {
        return Err(Error::config(format!("{}: header promises {}x{} values, found {}", path.display(), counts[0], counts[1], values.len())));
    }
    Ok((counts, values))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::config(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// One JSON object per line with `t, x, y, mode, event`; `run` identifies
/// the trajectory. Events are `start`, `step`, `switch` and the outcome
/// (`arrived`, `collided`, `timed_out`).
pub fn write_trajectories(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        for (run, r) in records.iter().enumerate() {
            for line in trajectory_lines(run, r) {
                serde_json::to_writer(&mut w, &line)?;
                writeln!(w)?;
            }
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

fn trajectory_lines(run: usize, r: &TrajectoryRecord) -> Vec<serde_json::Value> {
    let planner = r.planner.name();
    let mut events: Vec<(f64, u8, serde_json::Value)> = Vec::new();
    events.push((0.0, 0, json!({"run": run, "planner": planner, "t": 0.0, "x": r.x0[0], "y": r.x0[1], "mode": r.start_mode, "event": "start"})));
    for s in r.samples.iter().filter(|s| s.t > 0.0) {
        events.push((s.t, 2, json!({"run": run, "planner": planner, "t": s.t, "x": s.x, "y": s.y, "mode": s.mode, "event": "step"})));
    }
    for s in &r.switches {
        events.push((
            s.t,
            1,
            json!({"run": run, "planner": planner, "t": s.t, "x": s.x, "y": s.y, "mode": s.to, "from": s.from, "event": "switch"}),
        ));
    }
    let end_mode = r.switches.last().map_or(r.start_mode, |s| s.to);
    let t = r.outcome.time();
    events.push((t, 3, json!({"run": run, "planner": planner, "t": t, "x": r.end[0], "y": r.end[1], "mode": end_mode, "event": r.outcome.label()})));
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    events.into_iter().map(|e| e.2).collect()
}

pub fn write_csv_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for r in rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}
