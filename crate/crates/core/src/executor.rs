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

//! Plan, execute, monitor the wrist force and replan.
//!
//! The executor follows the planned waypoints with the simulated servo and
//! checks every force reading. When a reading exceeds the threshold it stops,
//! picks a new goal inside the goal region and replans from where the arm
//! stopped, penalizing nodes near the path that caused the violation.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dlo::EndpointTarget;
use crate::planner::{plan_with, BranchConstraint, GoalRegion, PlanError, PlanPath, PlannerConfig, WaypointPose};
use crate::safety::{SafetyLabel, SafetyLattice};
use crate::sim::{pose_servo_step, EndEffectorState, ForceReading, ServoConfig, SimError, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Per-axis and magnitude bound, newtons.
    pub force_threshold: f64,
    pub max_replans: usize,
    /// Radius R of the acceptable goal region, metres.
    pub goal_radius: f64,
    /// Cumulative planning-time limit, seconds.
    pub total_time_budget: f64,
    pub rng_seed: u64,
    /// With replanning off, the first violation ends the run.
    pub replanning: bool,
    /// After a violation, step back to the last pose read below the
    /// threshold before replanning.
    pub retreat_on_abort: bool,
    /// Penalize every path violated so far in this execution rather than
    /// only the latest one.
    pub accumulate_penalty: bool,
    pub servo: ServoConfig,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            force_threshold: 40.0,
            max_replans: 50,
            goal_radius: 0.05,
            total_time_budget: 400.0,
            rng_seed: 0,
            replanning: true,
            retreat_on_abort: true,
            accumulate_penalty: true,
            servo: ServoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitorDecision {
    Continue,
    Abort,
}

/// Abort when any component or the magnitude strictly exceeds the threshold.
pub fn monitor(reading: &ForceReading, config: &ExecutionConfig) -> MonitorDecision {
    let t = config.force_threshold;
    if reading.force.iter().any(|f| f.abs() > t) || reading.magnitude > t {
        MonitorDecision::Abort
    } else {
        MonitorDecision::Continue
    }
}

/// Uniform point in `region`, at least `R/4` from every tried goal when that
/// can be found in 100 draws.
pub fn select_new_goal<R: Rng + ?Sized>(region: &GoalRegion, tried: &[Vector3<f64>], rng: &mut R) -> Vector3<f64> {
    let min_sep = region.radius / 4.0;
    for _ in 0..100 {
        let q = region.sample(rng);
        if tried.iter().all(|t| (t - q).norm() >= min_sep) {
            return q;
        }
    }
    region.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecEvent {
    None,
    ThresholdViolation,
    ReplanStarted,
    GoalReached,
}

impl ExecEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecEvent::None => "none",
            ExecEvent::ThresholdViolation => "threshold_violation",
            ExecEvent::ReplanStarted => "replan_started",
            ExecEvent::GoalReached => "goal_reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStep {
    pub time: f64,
    pub pose: WaypointPose,
    /// Sensor reading taken at this step; event-only rows carry none.
    pub force: Option<ForceReading>,
    /// Index of the plan being followed (0 for the first plan).
    pub active_segment: usize,
    pub event: ExecEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub steps: Vec<LogStep>,
}

impl ExecutionLog {
    pub fn count(&self, event: ExecEvent) -> usize {
        self.steps.iter().filter(|s| s.event == event).count()
    }

    /// Sum of displacements between consecutive logged poses.
    pub fn path_length(&self) -> f64 {
        self.steps
            .windows(2)
            .map(|w| (w[1].pose.position - w[0].pose.position).norm())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecStatus {
    GoalReached,
    /// Stopped by the monitor with replanning disabled.
    Aborted,
    /// Replan cap or planning budget used up.
    Exhausted,
    /// Finished the last path outside the goal region.
    MissedGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub success: bool,
    pub status: ExecStatus,
    /// Distance from the final grasp position to the goal centre, metres.
    pub final_offset: f64,
    pub replan_count: usize,
    pub executed_path_length: f64,
    pub peak_force_overall: f64,
    pub peak_force_final_segment: f64,
    /// Simulated execution time, seconds.
    pub elapsed: f64,
    /// Wall-clock planning time, seconds.
    pub planning_time: f64,
    /// Every path returned by the planner, in order.
    pub plans: Vec<PlanPath>,
    pub log: ExecutionLog,
}

fn mix_seed(base: u64, k: u64) -> u64 {
    let mut z = base ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the plan / execute / replan loop from `start` until the goal region
/// is reached or the replan cap or planning budget runs out.
///
/// Goal balls handed to the planner are shrunk by the servo tolerance so a
/// converged servo always ends inside the region of radius `R`. The first
/// plan targets the region centre; each replan targets a fresh point drawn
/// from the inner half of the region.
#[allow(clippy::too_many_arguments)]
pub fn execute(
    start: &WaypointPose,
    region: &GoalRegion,
    sim: &mut Simulator,
    lattice: &SafetyLattice,
    constraint: &BranchConstraint,
    planner_cfg: &PlannerConfig,
    exec_cfg: &ExecutionConfig,
) -> ExecutionOutcome {
    let tol = exec_cfg.servo.position_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(exec_cfg.rng_seed);
    let mut state = EndEffectorState { pose: *start, time: 0.0 };
    let mut log = ExecutionLog::default();
    log.steps.push(LogStep {
        time: 0.0,
        pose: *start,
        force: Some(sim.grasp_force(start, 0.0)),
        active_segment: 0,
        event: ExecEvent::None,
    });

    let inner = GoalRegion::new(region.center, (0.5 * region.radius - tol).max(tol), region.orientation);
    let mut goal = GoalRegion::new(region.center, (region.radius - tol).max(tol), region.orientation);
    let mut tried = vec![region.center];
    let mut prev_path: Option<PlanPath> = None;
    let mut plans = Vec::new();
    let mut replans = 0usize;
    let mut planning_time = 0.0;
    let mut segment = 0usize;
    let status;

    'attempts: loop {
        let remaining = exec_cfg.total_time_budget - planning_time;
        if remaining <= 0.0 {
            status = ExecStatus::Exhausted;
            break;
        }
        let cfg = PlannerConfig {
            rng_seed: mix_seed(planner_cfg.rng_seed, segment as u64),
            time_budget: planner_cfg.time_budget.min(remaining),
            ..*planner_cfg
        };
        let t0 = Instant::now();
        let planned = plan_with(lattice, &state.pose, &goal, constraint, &cfg, prev_path.as_ref());
        planning_time += t0.elapsed().as_secs_f64();

        let path = match planned {
            Ok(p) => p,
            Err(e) => {
                log::debug!("planning attempt {segment} failed: {e}");
                if !exec_cfg.replanning || replans >= exec_cfg.max_replans || matches!(e, PlanError::InvalidConfig(_)) {
                    status = ExecStatus::Exhausted;
                    break;
                }
                replans += 1;
                segment += 1;
                log.steps.push(event_row(&state, segment, ExecEvent::ReplanStarted));
                goal = next_goal(&inner, &mut tried, lattice, constraint, &mut rng);
                continue;
            }
        };
        plans.push(path.clone());

        for wp in &path.waypoints {
            let result = sim.run_segment(&state, wp, &exec_cfg.servo, |r| monitor(r, exec_cfg) == MonitorDecision::Abort);
            match result {
                Ok((s, readings)) => {
                    push_readings(&mut log, &state, &readings, segment, wp, &exec_cfg.servo);
                    state = s;
                }
                Err(SimError::AbortedByMonitor {
                    state: s, readings, ..
                }) => {
                    push_readings(&mut log, &state, &readings, segment, wp, &exec_cfg.servo);
                    if let Some(last) = log.steps.last_mut() {
                        last.event = ExecEvent::ThresholdViolation;
                    }
                    let retreat = if readings.len() >= 2 {
                        log.steps[log.steps.len() - 2].pose
                    } else {
                        state.pose
                    };
                    state = s;
                    if !exec_cfg.replanning {
                        status = ExecStatus::Aborted;
                        break 'attempts;
                    }
                    if replans >= exec_cfg.max_replans {
                        status = ExecStatus::Exhausted;
                        break 'attempts;
                    }
                    if exec_cfg.retreat_on_abort {
                        // back off to the last pose whose reading was below the threshold
                        state = EndEffectorState {
                            pose: retreat,
                            time: state.time + exec_cfg.servo.dt,
                        };
                        let reading = sim.grasp_force(&state.pose, state.time);
                        log.steps.push(LogStep {
                            time: state.time,
                            pose: state.pose,
                            force: Some(reading),
                            active_segment: segment,
                            event: ExecEvent::None,
                        });
                    }
                    replans += 1;
                    segment += 1;
                    log.steps.push(event_row(&state, segment, ExecEvent::ReplanStarted));
                    // the whole violated path is penalized, not just its remainder
                    prev_path = Some(match (prev_path.take(), exec_cfg.accumulate_penalty) {
                        (Some(mut acc), true) => {
                            acc.waypoints.extend(path.waypoints.iter().copied());
                            acc
                        }
                        _ => path.clone(),
                    });
                    goal = next_goal(&inner, &mut tried, lattice, constraint, &mut rng);
                    continue 'attempts;
                }
                Err(e) => {
                    log::warn!("segment failed: {e}");
                    status = ExecStatus::Exhausted;
                    break 'attempts;
                }
            }
        }
        let offset = (state.pose.position - region.center).norm();
        if offset <= region.radius {
            log.steps.push(event_row(&state, segment, ExecEvent::GoalReached));
            status = ExecStatus::GoalReached;
        } else {
            status = ExecStatus::MissedGoal;
        }
        break;
    }

    let final_offset = (state.pose.position - region.center).norm();
    let peak = |seg: Option<usize>| {
        log.steps
            .iter()
            .filter(|s| seg.is_none_or(|k| s.active_segment == k))
            .filter_map(|s| s.force.map(|f| f.magnitude))
            .fold(0.0, f64::max)
    };
    ExecutionOutcome {
        success: final_offset <= region.radius && status == ExecStatus::GoalReached,
        status,
        final_offset,
        replan_count: replans,
        executed_path_length: log.path_length(),
        peak_force_overall: peak(None),
        peak_force_final_segment: peak(Some(segment)),
        elapsed: state.time,
        planning_time,
        plans,
        log,
    }
}

fn event_row(state: &EndEffectorState, segment: usize, event: ExecEvent) -> LogStep {
    LogStep {
        time: state.time,
        pose: state.pose,
        force: None,
        active_segment: segment,
        event,
    }
}

fn push_readings(
    log: &mut ExecutionLog,
    from: &EndEffectorState,
    readings: &[ForceReading],
    segment: usize,
    target: &WaypointPose,
    servo: &ServoConfig,
) {
    // the servo law is deterministic, so replaying it recovers each pose
    let mut state = *from;
    for r in readings {
        state = pose_servo_step(&state, target, servo.gain_kp, servo.dt).unwrap_or(state);
        log.steps.push(LogStep {
            time: r.time,
            pose: state.pose,
            force: Some(*r),
            active_segment: segment,
            event: ExecEvent::None,
        });
    }
}

/// New goal from `inner`, resampled until it passes the exact safety test.
fn next_goal<R: Rng + ?Sized>(
    inner: &GoalRegion,
    tried: &mut Vec<Vector3<f64>>,
    lattice: &SafetyLattice,
    constraint: &BranchConstraint,
    rng: &mut R,
) -> GoalRegion {
    let classifier = lattice.classifier();
    let mut g = select_new_goal(inner, tried, rng);
    for _ in 0..20 {
        let (x, z) = constraint.project(&g);
        if constraint.contains(&g) && classifier.classify(&EndpointTarget::new(x, z)) == SafetyLabel::Safe {
            break;
        }
        g = select_new_goal(inner, tried, rng);
    }
    tried.push(g);
    GoalRegion::new(g, inner.radius, inner.orientation)
}
