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

//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use branchmanip::dlo::ShapeSolution;
use branchmanip::executor::ExecutionLog;
use branchmanip::planner::PlanPath;
use branchmanip::safety::SafetyMap;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut any = false;
    for r in rows {
        w.serialize(r).map_err(err)?;
        any = true;
    }
    if !any {
        return Err(CliError::Io(format!("{}: nothing to write", path.display())));
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a header-only CSV when there are no rows.
fn write_rows_or_header<T: Serialize>(path: &Path, header: &[&str], rows: Vec<T>) -> Result<(), CliError> {
    if rows.is_empty() {
        let mut w = writer(path)?;
        w.write_record(header)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        return w.flush().map_err(|e| CliError::io(path, e));
    }
    write_rows(path, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct CurveRow {
    s: f64,
    theta: f64,
    x: f64,
    z: f64,
}

pub fn write_curve(path: &Path, sol: &ShapeSolution) -> Result<(), CliError> {
    let rows = sol
        .s_grid
        .iter()
        .zip(&sol.theta)
        .zip(&sol.positions)
        .map(|((&s, &theta), p)| CurveRow { s, theta, x: p[0], z: p[1] });
    write_rows(path, rows)
}

#[derive(Serialize)]
struct MapRow<'a> {
    x: f64,
    z: f64,
    label: &'a str,
}

pub fn write_map(path: &Path, map: &SafetyMap) -> Result<(), CliError> {
    let rows = map.samples.iter().map(|s| MapRow {
        x: s.x,
        z: s.z,
        label: s.label.as_str(),
    });
    write_rows(path, rows)
}

#[derive(Serialize)]
struct PathRow {
    idx: usize,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    cum_length: f64,
}

pub fn write_path(path: &Path, plan: &PlanPath) -> Result<(), CliError> {
    let cum = plan.cumulative_lengths();
    let rows = plan.waypoints.iter().zip(cum).enumerate().map(|(idx, (w, c))| {
        let q = w.orientation.quaternion();
        PathRow {
            idx,
            x: w.position.x,
            y: w.position.y,
            z: w.position.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            cum_length: c,
        }
    });
    write_rows(path, rows)
}

#[derive(Serialize)]
struct ForceRow {
    time: f64,
    #[serde(rename = "Fx")]
    fx: f64,
    #[serde(rename = "Fy")]
    fy: f64,
    #[serde(rename = "Fz")]
    fz: f64,
    magnitude: f64,
    segment_idx: usize,
}

pub const FORCE_HEADER: [&str; 6] = ["time", "Fx", "Fy", "Fz", "magnitude", "segment_idx"];

pub fn write_force_trace(path: &Path, log: &ExecutionLog) -> Result<(), CliError> {
    let rows: Vec<ForceRow> = log
        .steps
        .iter()
        .filter_map(|s| {
            s.force.map(|f| ForceRow {
                time: s.time,
                fx: f.force.x,
                fy: f.force.y,
                fz: f.force.z,
                magnitude: f.magnitude,
                segment_idx: s.active_segment,
            })
        })
        .collect();
    write_rows_or_header(path, &FORCE_HEADER, rows)
}

#[derive(Serialize)]
struct EventRow<'a> {
    time: f64,
    x: f64,
    y: f64,
    z: f64,
    segment_idx: usize,
    event: &'a str,
}

pub const EVENT_HEADER: [&str; 6] = ["time", "x", "y", "z", "segment_idx", "event"];

/// Non-trivial log events with the pose at which they happened.
pub fn write_events(path: &Path, log: &ExecutionLog) -> Result<(), CliError> {
    let rows: Vec<EventRow> = log
        .steps
        .iter()
        .filter(|s| s.event != branchmanip::executor::ExecEvent::None)
        .map(|s| EventRow {
            time: s.time,
            x: s.pose.position.x,
            y: s.pose.position.y,
            z: s.pose.position.z,
            segment_idx: s.active_segment,
            event: s.event.as_str(),
        })
        .collect();
    write_rows_or_header(path, &EVENT_HEADER, rows)
}

/// One row of `trials.csv`. Everything here is a deterministic function of
/// the configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub start_id: usize,
    pub trial_id: usize,
    pub success: bool,
    pub final_offset: f64,
    pub path_length: f64,
    pub replan_count: usize,
    pub peak_force: f64,
}

/// One row of `timings.csv`: wall-clock planning time, which varies
/// between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub start_id: usize,
    pub trial_id: usize,
    pub planning_time: f64,
}

pub fn write_trials(path: &Path, rows: &[TrialRow]) -> Result<(), CliError> {
    write_rows(path, rows)
}

pub fn write_timings(path: &Path, rows: &[TimingRow]) -> Result<(), CliError> {
    write_rows(path, rows)
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
