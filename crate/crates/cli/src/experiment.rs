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

//! Batch trials over every start of a scenario and their aggregate report.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use branchmanip::executor::{execute, ExecutionOutcome};
use branchmanip::planner::{safety_gate, GoalRegion, WaypointPose};
use branchmanip::safety::SafetyLattice;
use branchmanip::sim::Simulator;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::output::{self, TimingRow, TrialRow};
use crate::CliError;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: `mix64(mix64(mix64(base) ^ start_id) ^ trial_id)`.
/// Each trial's seed depends only on its own ids, so adding or removing
/// trials never shifts the others.
pub fn trial_seed(base_seed: u64, start_id: usize, trial_id: usize) -> u64 {
    mix64(mix64(mix64(base_seed) ^ start_id as u64) ^ trial_id as u64)
}

/// Independent streams for the planner, the sensor noise and goal selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub planner: u64,
    pub sim: u64,
    pub exec: u64,
}

impl TrialSeeds {
    pub fn new(trial: u64) -> Self {
        Self {
            planner: mix64(trial ^ 1),
            sim: mix64(trial ^ 2),
            exec: mix64(trial ^ 3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub start_id: usize,
    pub trial_id: usize,
    /// `Err` holds the message of a trial that errored or panicked.
    pub outcome: Result<ExecutionOutcome, String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }

    pub fn row(&self) -> TrialRow {
        match &self.outcome {
            Ok(o) => TrialRow {
                start_id: self.start_id,
                trial_id: self.trial_id,
                success: o.success,
                final_offset: o.final_offset,
                path_length: o.executed_path_length,
                replan_count: o.replan_count,
                peak_force: o.peak_force_overall,
            },
            Err(_) => TrialRow {
                start_id: self.start_id,
                trial_id: self.trial_id,
                success: false,
                final_offset: f64::NAN,
                path_length: 0.0,
                replan_count: 0,
                peak_force: 0.0,
            },
        }
    }

    pub fn timing(&self) -> TimingRow {
        TimingRow {
            start_id: self.start_id,
            trial_id: self.trial_id,
            planning_time: self.outcome.as_ref().map(|o| o.planning_time).unwrap_or(0.0),
        }
    }
}

/// Runs one execution from start `start_id` with the seeds of `trial_id`.
pub fn run_trial(
    cfg: &ScenarioConfig,
    lattice: &SafetyLattice,
    start_id: usize,
    trial_id: usize,
) -> Result<ExecutionOutcome, String> {
    let seeds = TrialSeeds::new(trial_seed(cfg.base_seed, start_id, trial_id));
    let scenario = cfg.scenario().map_err(|e| e.to_string())?;
    let constraint = scenario.constraint().map_err(|e| e.to_string())?;
    let start = scenario
        .start(start_id)
        .ok_or_else(|| format!("unknown start id {start_id}"))?;
    if !constraint.contains(&start.position) || !safety_gate(&start.position, &constraint, &scenario.branch) {
        return Err(format!("start {start_id} is not a Safe pose inside the reachable half-ball"));
    }
    let branch = scenario.sim_branch(Some(start_id), seeds.sim).map_err(|e| e.to_string())?;
    let mut sim = Simulator::new(branch).map_err(|e| e.to_string())?;
    let region = GoalRegion::new(scenario.goal_center, scenario.goal_radius, cfg.goal_orientation());
    let pose = WaypointPose::new(start.position, cfg.start_orientation(start_id));
    Ok(execute(
        &pose,
        &region,
        &mut sim,
        lattice,
        &constraint,
        &cfg.planner_config(seeds.planner),
        &cfg.execution_config(seeds.exec),
    ))
}

/// Every `(start, trial)` of the scenario, in `(start_id, trial_id)` order
/// whatever the completion order across `jobs` worker threads.
pub fn run_batch(cfg: &ScenarioConfig, lattice: &SafetyLattice, jobs: usize) -> Vec<TrialResult> {
    let mut starts: Vec<usize> = cfg.starts.iter().map(|s| s.id).collect();
    starts.sort_unstable();
    let tasks: Vec<(usize, usize)> = starts
        .iter()
        .flat_map(|&s| (0..cfg.trials_per_start).map(move |t| (s, t)))
        .collect();
    let results: Mutex<Vec<Option<TrialResult>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(start_id, trial_id)) = tasks.get(k) else {
            break;
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| run_trial(cfg, lattice, start_id, trial_id)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| p.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "panic".into());
                Err(format!("trial panicked: {msg}"))
            });
        match &outcome {
            Ok(o) => log::info!(
                "start {start_id} trial {trial_id}: success {} replans {} offset {:.4}",
                o.success,
                o.replan_count,
                o.final_offset
            ),
            Err(e) => log::warn!("start {start_id} trial {trial_id} failed: {e}"),
        }
        let r = TrialResult {
            start_id,
            trial_id,
            outcome,
        };
        results.lock().expect("results lock")[k] = Some(r);
    };
    std::thread::scope(|scope| {
        for _ in 1..jobs.max(1) {
            scope.spawn(worker);
        }
        worker();
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start_id: usize,
    pub trials: usize,
    pub success_count: usize,
    pub planning_time_mean: f64,
    pub planning_time_std: f64,
    pub replan_mean: f64,
    pub replan_std: f64,
    pub path_length_mean: f64,
    /// Mean final offset over successful trials.
    pub goal_offset_mean: Option<f64>,
    pub peak_force_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub trials: usize,
    pub success_count: usize,
    pub success_rate: f64,
    pub failed_trials: usize,
    pub planning_time_mean: f64,
    pub replan_mean: f64,
    pub path_length_mean: f64,
    pub goal_offset_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub base_seed: u64,
    pub trials_per_start: usize,
    pub per_start: Vec<StartSummary>,
    pub totals: Totals,
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean(v: &[f64]) -> f64 {
    mean_std(v).0
}

/// Aggregates computed from the report rows alone; a row marked as failed
/// has a NaN offset.
pub fn summarize(
    scenario: &str,
    base_seed: u64,
    trials_per_start: usize,
    rows: &[TrialRow],
    timings: &[TimingRow],
) -> Summary {
    let time_of = |r: &TrialRow| {
        timings
            .iter()
            .find(|t| t.start_id == r.start_id && t.trial_id == r.trial_id)
            .map(|t| t.planning_time)
            .unwrap_or(f64::NAN)
    };
    let mut ids: Vec<usize> = rows.iter().map(|r| r.start_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let offsets = |rs: &[&TrialRow]| {
        let v: Vec<f64> = rs.iter().filter(|r| r.success).map(|r| r.final_offset).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    let per_start = ids
        .iter()
        .map(|&id| {
            let rs: Vec<&TrialRow> = rows.iter().filter(|r| r.start_id == id).collect();
            let times: Vec<f64> = rs.iter().map(|r| time_of(r)).collect();
            let reps: Vec<f64> = rs.iter().map(|r| r.replan_count as f64).collect();
            let (pt_m, pt_s) = mean_std(&times);
            let (rp_m, rp_s) = mean_std(&reps);
            StartSummary {
                start_id: id,
                trials: rs.len(),
                success_count: rs.iter().filter(|r| r.success).count(),
                planning_time_mean: pt_m,
                planning_time_std: pt_s,
                replan_mean: rp_m,
                replan_std: rp_s,
                path_length_mean: mean(&rs.iter().map(|r| r.path_length).collect::<Vec<_>>()),
                goal_offset_mean: offsets(&rs),
                peak_force_mean: mean(&rs.iter().map(|r| r.peak_force).collect::<Vec<_>>()),
            }
        })
        .collect();
    let all: Vec<&TrialRow> = rows.iter().collect();
    let success_count = rows.iter().filter(|r| r.success).count();
    Summary {
        scenario: scenario.to_string(),
        base_seed,
        trials_per_start,
        per_start,
        totals: Totals {
            trials: rows.len(),
            success_count,
            success_rate: success_count as f64 / rows.len().max(1) as f64,
            failed_trials: rows.iter().filter(|r| r.final_offset.is_nan()).count(),
            planning_time_mean: mean(&rows.iter().map(time_of).collect::<Vec<_>>()),
            replan_mean: mean(&rows.iter().map(|r| r.replan_count as f64).collect::<Vec<_>>()),
            path_length_mean: mean(&rows.iter().map(|r| r.path_length).collect::<Vec<_>>()),
            goal_offset_mean: offsets(&all),
        },
    }
}

/// Writes `trials.csv`, `timings.csv`, per-trial traces, `summary.json` and
/// `plots.json` under `out`.
pub fn write_report(out: &Path, cfg: &ScenarioConfig, results: &[TrialResult]) -> Result<Summary, CliError> {
    let rows: Vec<TrialRow> = results.iter().map(TrialResult::row).collect();
    let timings: Vec<TimingRow> = results.iter().map(TrialResult::timing).collect();
    output::write_trials(&out.join("trials.csv"), &rows)?;
    output::write_timings(&out.join("timings.csv"), &timings)?;
    for r in results {
        if let Ok(o) = &r.outcome {
            let stem = format!("start{}_trial{}", r.start_id, r.trial_id);
            output::write_force_trace(&out.join("traces").join(format!("{stem}_force.csv")), &o.log)?;
            output::write_events(&out.join("traces").join(format!("{stem}_events.csv")), &o.log)?;
        }
    }
    let summary = summarize(&cfg.name, cfg.base_seed, cfg.trials_per_start, &rows, &timings);
    output::write_json(&out.join("summary.json"), &summary)?;
    output::write_json(&out.join("plots.json"), &plot_manifest(results))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: String,
    pub file: String,
    pub x: String,
    pub y: Vec<String>,
    pub group_by: Option<String>,
}

fn plot_manifest(results: &[TrialResult]) -> Vec<PlotSpec> {
    let mut plots = vec![
        PlotSpec {
            kind: "bar".into(),
            file: "trials.csv".into(),
            x: "start_id".into(),
            y: vec!["replan_count".into(), "path_length".into()],
            group_by: Some("start_id".into()),
        },
        PlotSpec {
            kind: "scatter".into(),
            file: "trials.csv".into(),
            x: "replan_count".into(),
            y: vec!["peak_force".into()],
            group_by: Some("success".into()),
        },
    ];
    for r in results.iter().filter(|r| !r.failed()) {
        plots.push(PlotSpec {
            kind: "line".into(),
            file: format!("traces/start{}_trial{}_force.csv", r.start_id, r.trial_id),
            x: "time".into(),
            y: vec!["Fx".into(), "Fy".into(), "Fz".into(), "magnitude".into()],
            group_by: Some("segment_idx".into()),
        });
    }
    plots
}

/// Reloads a report directory and checks `summary.json` against the rows.
pub fn load_report(out: &Path) -> Result<Summary, CliError> {
    let rows: Vec<TrialRow> = output::read_rows(&out.join("trials.csv"))?;
    let timings_path = out.join("timings.csv");
    let timings: Vec<TimingRow> = if timings_path.exists() {
        output::read_rows(&timings_path)?
    } else {
        Vec::new()
    };
    let summary_path = out.join("summary.json");
    let stored: Option<Summary> = if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path).map_err(|e| CliError::io(&summary_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("summary.json: {e}")))?)
    } else {
        None
    };
    let (name, seed, tps) = stored
        .as_ref()
        .map(|s| (s.scenario.clone(), s.base_seed, s.trials_per_start))
        .unwrap_or_else(|| ("unknown".into(), 0, 0));
    let summary = summarize(&name, seed, tps, &rows, &timings);
    if let Some(stored) = stored {
        if !summaries_agree(&stored, &summary) {
            return Err(CliError::Config(
                "summary.json does not match the aggregates recomputed from trials.csv".into(),
            ));
        }
    }
    Ok(summary)
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

fn summaries_agree(a: &Summary, b: &Summary) -> bool {
    a.per_start.len() == b.per_start.len()
        && a.per_start.iter().zip(&b.per_start).all(|(x, y)| {
            x.start_id == y.start_id
                && x.trials == y.trials
                && x.success_count == y.success_count
                && close(x.planning_time_mean, y.planning_time_mean)
                && close(x.planning_time_std, y.planning_time_std)
                && close(x.replan_mean, y.replan_mean)
                && close(x.replan_std, y.replan_std)
                && close(x.path_length_mean, y.path_length_mean)
                && close_opt(x.goal_offset_mean, y.goal_offset_mean)
        })
        && a.totals.success_count == b.totals.success_count
        && a.totals.trials == b.totals.trials
}

/// Table with one line per start, in the layout of the published results.
pub fn format_table(s: &Summary) -> String {
    let mut out = format!(
        "{:<6} {:>8} {:>16} {:>16} {:>12} {:>12}\n",
        "start", "success", "planning_s", "replans", "path_m", "offset_m"
    );
    for p in &s.per_start {
        let offset = p
            .goal_offset_mean
            .map(|o| format!("{o:.4}"))
            .unwrap_or_else(|| "-".into());
        out += &format!(
            "{:<6} {:>8} {:>16} {:>16} {:>12.3} {:>12}\n",
            p.start_id,
            format!("{}/{}", p.success_count, p.trials),
            format!("{:.2} ± {:.2}", p.planning_time_mean, p.planning_time_std),
            format!("{:.2} ± {:.2}", p.replan_mean, p.replan_std),
            p.path_length_mean,
            offset
        );
    }
    out += &format!(
        "total  {}/{} successful ({:.0}%), {} failed\n",
        s.totals.success_count,
        s.totals.trials,
        100.0 * s.totals.success_rate,
        s.totals.failed_trials
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_are_independent_of_neighbours() {
        let a = trial_seed(7, 1, 3);
        assert_eq!(a, trial_seed(7, 1, 3));
        assert_ne!(a, trial_seed(7, 1, 4));
        assert_ne!(a, trial_seed(7, 2, 3));
        assert_ne!(a, trial_seed(8, 1, 3));
        assert_ne!(trial_seed(0, 1, 2), trial_seed(0, 2, 1));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    }

    #[test]
    fn summary_is_recomputable() {
        let rows = vec![
            TrialRow {
                start_id: 1,
                trial_id: 0,
                success: true,
                final_offset: 0.01,
                path_length: 0.6,
                replan_count: 2,
                peak_force: 50.0,
            },
            TrialRow {
                start_id: 1,
                trial_id: 1,
                success: false,
                final_offset: 0.2,
                path_length: 0.4,
                replan_count: 4,
                peak_force: 60.0,
            },
        ];
        let timings = vec![
            TimingRow {
                start_id: 1,
                trial_id: 0,
                planning_time: 1.0,
            },
            TimingRow {
                start_id: 1,
                trial_id: 1,
                planning_time: 3.0,
            },
        ];
        let s = summarize("x", 0, 2, &rows, &timings);
        let p = &s.per_start[0];
        assert_eq!(p.success_count, 1);
        assert_eq!(p.replan_mean, 3.0);
        assert_eq!(p.planning_time_mean, 2.0);
        assert_eq!(p.goal_offset_mean, Some(0.01));
        assert!(summaries_agree(&s, &summarize("x", 0, 2, &rows, &timings)));
        let mut other = rows.clone();
        other[0].replan_count = 3;
        assert!(!summaries_agree(&s, &summarize("x", 0, 2, &other, &timings)));
    }
}
