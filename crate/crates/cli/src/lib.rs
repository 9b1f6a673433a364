// Copyright 2026 The branchmanip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Command-line harness: scenario files, single runs, batch experiments and
//! CSV/JSON reports.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 solver or planner
//! failure, 3 infeasible input, 4 experiment finished with failed trials.

pub mod config;
pub mod experiment;
pub mod output;

use std::path::{Path, PathBuf};

use branchmanip::dlo::{solve_shape, DloError, EndpointTarget};
use branchmanip::planner::{plan_with, GoalRegion, PlanError, WaypointPose};
use branchmanip::safety::{build_safety_map, MapMode, PlaneBounds, SafetyLabel};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("infeasible input: {0}")]
    Infeasible(String),
    #[error("{0} trial(s) failed")]
    TrialsFailed(usize),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::TrialsFailed(_) => 4,
        }
    }
}

impl From<DloError> for CliError {
    fn from(e: DloError) -> Self {
        match e {
            DloError::Unreachable { .. } => CliError::Infeasible(e.to_string()),
            DloError::SolveFailed { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::InfeasibleStart(_) => CliError::Infeasible(e.to_string()),
            PlanError::PlanningTimeout { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "branchmanip", version, about = "Branch-constrained planning and force-aware replanning")]
pub struct Cli {
    /// Scenario file (TOML, or JSON by extension). Defaults to the built-in
    /// five-start scenario.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for batch trials.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// More log output; repeat for more detail.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one branch shape and write curve.csv.
    SolveShape(SolveShapeArgs),
    /// Classify targets in the branch plane and write map.csv.
    SafetyMap(SafetyMapArgs),
    /// Plan one path and write path.csv.
    Plan(PlanArgs),
    /// Run one plan/execute/replan trial and write its force trace.
    Simulate(SimulateArgs),
    /// Run every trial of the scenario and write the report.
    Experiment,
    /// Recompute and print the aggregates of a report directory.
    Report,
    /// Print the effective scenario configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct SolveShapeArgs {
    /// Target x in the branch plane, metres.
    #[arg(long = "x-m", allow_hyphen_values = true)]
    pub x_m: f64,
    /// Target z in the branch plane, metres.
    #[arg(long = "z-m", allow_hyphen_values = true)]
    pub z_m: f64,
    /// Optional tip tangent angle, radians.
    #[arg(long = "tip-angle-rad", allow_hyphen_values = true)]
    pub tip_angle_rad: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SafetyMapArgs {
    /// Number of random targets in the disk of radius 1.1 L.
    #[arg(long, conflicts_with = "grid")]
    pub random: Option<usize>,
    /// Classify a regular grid instead.
    #[arg(long)]
    pub grid: bool,
    /// Grid spacing, metres.
    #[arg(long = "resolution-m", default_value_t = 0.05)]
    pub resolution_m: f64,
    /// Grid half-width, metres (default 1.1 L).
    #[arg(long = "half-width-m")]
    pub half_width_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Start id from the scenario (default: the first start).
    #[arg(long = "start-id")]
    pub start_id: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Start id from the scenario (default: the first start).
    #[arg(long = "start-id")]
    pub start_id: Option<usize>,
    /// Trial index used to derive the seeds.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Stop at the first threshold violation instead of replanning.
    #[arg(long = "no-replan")]
    pub no_replan: bool,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::five_start(),
    };
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Report = cli.command {
        let summary = experiment::load_report(&cli.out)?;
        print!("{}", experiment::format_table(&summary));
        return Ok(());
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::SolveShape(a) => cmd_solve_shape(&cfg, a, &cli.out),
        Command::SafetyMap(a) => cmd_safety_map(&cfg, a, &cli.out),
        Command::Plan(a) => cmd_plan(&cfg, a, &cli.out),
        Command::Simulate(a) => cmd_simulate(&cfg, a, &cli.out),
        Command::Experiment => cmd_experiment(&cfg, &cli.out, cli.jobs),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Report => unreachable!("handled above"),
    }
}

pub fn cmd_solve_shape(cfg: &ScenarioConfig, a: &SolveShapeArgs, out: &Path) -> Result<(), CliError> {
    let target = match a.tip_angle_rad {
        Some(t) => EndpointTarget::with_tip_angle(a.x_m, a.z_m, t),
        None => EndpointTarget::new(a.x_m, a.z_m),
    };
    let sol = solve_shape(&cfg.params(), &target, None)?;
    let path = out.join("curve.csv");
    output::write_curve(&path, &sol)?;
    println!("energy_J {:.9e}", sol.energy);
    println!("endpoint_residual_m {:.3e}", sol.endpoint_residual);
    match sol.angle_residuals.tip {
        Some(tip) => println!("angle_residuals_rad base {:.3e} tip {tip:.3e}", sol.angle_residuals.base),
        None => println!("angle_residuals_rad base {:.3e}", sol.angle_residuals.base),
    }
    println!("endpoint_force_N {:.6} {:.6}", sol.endpoint_multipliers[0], sol.endpoint_multipliers[1]);
    println!("iterations {}", sol.iterations);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_safety_map(cfg: &ScenarioConfig, a: &SafetyMapArgs, out: &Path) -> Result<(), CliError> {
    let params = cfg.params();
    let mode = if a.grid {
        if !(a.resolution_m > 0.0 && a.resolution_m.is_finite()) {
            return Err(CliError::Config("--resolution-m must be positive".into()));
        }
        let hw = a.half_width_m.unwrap_or(1.1 * params.length);
        if !(hw > 0.0) {
            return Err(CliError::Config("--half-width-m must be positive".into()));
        }
        MapMode::Grid {
            bounds: PlaneBounds::square(hw),
            resolution: a.resolution_m,
        }
    } else {
        let count = a.random.unwrap_or(200);
        if count == 0 {
            return Err(CliError::Config("--random needs at least one target".into()));
        }
        MapMode::Random {
            count,
            seed: cfg.base_seed,
        }
    };
    let map = build_safety_map(&params, &mode)?;
    let path = out.join("map.csv");
    output::write_map(&path, &map)?;
    for l in [SafetyLabel::Safe, SafetyLabel::Caution, SafetyLabel::Risky] {
        println!("{:<8} {}", l.as_str(), map.count(l));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn start_id(cfg: &ScenarioConfig, requested: Option<usize>) -> Result<usize, CliError> {
    match requested {
        Some(id) if cfg.starts.iter().any(|s| s.id == id) => Ok(id),
        Some(id) => Err(CliError::Config(format!("--start-id {id} is not in the scenario"))),
        None => Ok(cfg.starts[0].id),
    }
}

pub fn cmd_plan(cfg: &ScenarioConfig, a: &PlanArgs, out: &Path) -> Result<(), CliError> {
    let id = start_id(cfg, a.start_id)?;
    let scenario = cfg.scenario()?;
    let lattice = scenario.lattice()?;
    let constraint = scenario.constraint()?;
    let start = WaypointPose::new(scenario.start(id).expect("checked").position, cfg.start_orientation(id));
    let goal = GoalRegion::new(scenario.goal_center, scenario.goal_radius, cfg.goal_orientation());
    let seeds = experiment::TrialSeeds::new(experiment::trial_seed(cfg.base_seed, id, 0));
    let path = plan_with(&lattice, &start, &goal, &constraint, &cfg.planner_config(seeds.planner), None)?;
    let file = out.join("path.csv");
    output::write_path(&file, &path)?;
    println!("waypoints {}", path.waypoints.len());
    println!("path_length_m {:.4}", path.total_length);
    println!("goal_offset_m {:.4}", path.final_offset);
    println!("planning_time_s {:.3}", path.planning_time);
    println!("iterations {}", path.iterations_used);
    println!("wrote {}", file.display());
    Ok(())
}

pub fn cmd_simulate(cfg: &ScenarioConfig, a: &SimulateArgs, out: &Path) -> Result<(), CliError> {
    let id = start_id(cfg, a.start_id)?;
    let mut cfg = cfg.clone();
    if a.no_replan {
        cfg.exec.replanning = false;
    }
    let scenario = cfg.scenario()?;
    let lattice = scenario.lattice()?;
    let outcome = experiment::run_trial(&cfg, &lattice, id, a.trial).map_err(CliError::Solver)?;
    output::write_force_trace(&out.join("force.csv"), &outcome.log)?;
    output::write_events(&out.join("events.csv"), &outcome.log)?;
    for (k, p) in outcome.plans.iter().enumerate() {
        output::write_path(&out.join(format!("path_{k}.csv")), p)?;
    }
    output::write_json(&out.join("outcome.json"), &outcome)?;
    println!("status {:?}", outcome.status);
    println!("success {}", outcome.success);
    println!("final_offset_m {:.4}", outcome.final_offset);
    println!("replans {}", outcome.replan_count);
    println!("path_length_m {:.4}", outcome.executed_path_length);
    println!("peak_force_N {:.2}", outcome.peak_force_overall);
    println!("peak_force_final_segment_N {:.2}", outcome.peak_force_final_segment);
    println!("planning_time_s {:.3}", outcome.planning_time);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_experiment(cfg: &ScenarioConfig, out: &Path, jobs: usize) -> Result<(), CliError> {
    let scenario = cfg.scenario()?;
    let lattice = scenario.lattice()?;
    let results = experiment::run_batch(cfg, &lattice, jobs);
    let summary = experiment::write_report(out, cfg, &results)?;
    print!("{}", experiment::format_table(&summary));
    println!("wrote {}", out.display());
    let failed = results.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(CliError::TrialsFailed(failed));
    }
    Ok(())
}
