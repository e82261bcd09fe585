use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pdplan::cli::{cmd_compare, cmd_ring, cmd_simulate, cmd_solve, load_context, Overrides};
use pdplan::{PlannerKind, Scheme};

#[derive(Parser)]
#[command(name = "pdplan", version, about = "Path planning under randomly switching dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte Carlo seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_enum)]
    planner: Option<PlannerArg>,

    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,

    /// File of explicit switch times for `simulate`.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute value functions and write one CSV per mode.
    Solve,
    /// Monte Carlo (or replayed) trajectories of a feedback policy.
    Simulate,
    /// Evaluate each planner's policy under the real switching rates.
    Compare,
    /// Build and solve the wind-direction ring model.
    Ring,
}

#[derive(ValueEnum, Clone, Copy)]
enum PlannerArg {
    Coupled,
    Uncoupled,
    Infinite,
}

#[derive(ValueEnum, Clone, Copy)]
enum SchemeArg {
    Euler,
    Semilag,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        planner: cli.planner.map(|p| match p {
            PlannerArg::Coupled => PlannerKind::Coupled,
            PlannerArg::Uncoupled => PlannerKind::Uncoupled,
            PlannerArg::Infinite => PlannerKind::Infinite,
        }),
        scheme: cli.scheme.map(|s| match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Semilag => Scheme::Semilag,
        }),
        replay: cli.replay,
    };
    let result = load_context(&config, overrides).and_then(|ctx| {
        let out = ctx.out.display().to_string();
        match cli.command {
            Command::Solve => cmd_solve(&ctx).map(|s| {
                println!(
                    "{} solve converged in {:?} sweeps; sup mode difference {:.6}",
                    s.planner.name(),
                    s.sweeps,
                    s.sup_mode_difference
                );
            }),
            Command::Simulate => cmd_simulate(&ctx).map(|s| {
                for st in &s.stats {
                    println!(
                        "{}: {} runs, {} arrived (mean {}), {:.1}% collided",
                        st.planner.name(),
                        st.runs,
                        st.arrived,
                        st.mean_arrival_time.map_or("n/a".into(), |m| format!("{m:.4}")),
                        100.0 * st.collision_fraction
                    );
                }
                for r in &s.replays {
                    println!("{}: {} at t = {:.4}", r.planner.name(), r.outcome.label(), r.outcome.time());
                }
            }),
            Command::Compare => cmd_compare(&ctx).map(|rows| {
                for r in rows {
                    println!(
                        "{:<9} ({}, {}) mode {}: u_r {:.4}  u_p {:.4}  u_rp {:.4}  degradation {:.2}%",
                        r.planner.name(),
                        r.x,
                        r.y,
                        r.mode,
                        r.u_r,
                        r.u_p,
                        r.u_rp,
                        r.degradation_pct
                    );
                }
            }),
            Command::Ring => cmd_ring(&ctx).map(|pairs| {
                let ok = pairs.iter().filter(|p| p.within_bound).count();
                println!("{ok}/{} direction pairs within the variability bound", pairs.len());
            }),
        }
        .map(|()| println!("outputs in {out}"))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
