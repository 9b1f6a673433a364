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


use std::sync::OnceLock;

use branchmanip::executor::{execute, ExecEvent, ExecStatus, ExecutionConfig, ExecutionOutcome};
use branchmanip::planner::PlannerConfig;
use branchmanip::safety::SafetyLattice;
use branchmanip::scenario::Scenario;
use branchmanip::sim::Simulator;

fn scenario() -> &'static Scenario {
    static S: OnceLock<Scenario> = OnceLock::new();
    S.get_or_init(Scenario::five_start)
}

fn lattice() -> &'static SafetyLattice {
    static L: OnceLock<SafetyLattice> = OnceLock::new();
    L.get_or_init(|| scenario().lattice().unwrap())
}

fn run(start_id: usize, seed: u64, with_anomaly: bool, exec: ExecutionConfig) -> ExecutionOutcome {
    let s = scenario();
    let mut branch = s.sim_branch(Some(start_id), seed).unwrap();
    if !with_anomaly {
        branch.anomalies.clear();
    }
    let mut sim = Simulator::new(branch).unwrap();
    let planner = PlannerConfig {
        rng_seed: seed,
        ..PlannerConfig::default()
    };
    execute(
        &s.start_pose(start_id).unwrap(),
        &s.goal_region(),
        &mut sim,
        lattice(),
        &s.constraint().unwrap(),
        &planner,
        &ExecutionConfig { rng_seed: seed, ..exec },
    )
}

#[test]
fn clear_branch_needs_no_replanning() {
    let o = run(2, 3, false, ExecutionConfig::default());
    assert!(o.success);
    assert_eq!(o.status, ExecStatus::GoalReached);
    assert_eq!(o.replan_count, 0);
    assert_eq!(o.plans.len(), 1);
    assert!(o.final_offset <= 0.05);
    assert!(o.peak_force_overall <= 40.0);
    assert_eq!(o.log.count(ExecEvent::GoalReached), 1);
}

#[test]
fn baseline_stops_at_the_anomaly() {
    let exec = ExecutionConfig {
        replanning: false,
        ..ExecutionConfig::default()
    };
    let o = run(1, 1, true, exec);
    assert!(!o.success);
    assert_eq!(o.status, ExecStatus::Aborted);
    assert_eq!(o.log.count(ExecEvent::ThresholdViolation), 1);
    assert!(o.peak_force_overall > 40.0);
}

#[test]
fn replanning_reaches_the_goal_below_threshold() {
    let o = run(1, 1, true, ExecutionConfig::default());
    assert!(o.success, "{:?} offset {}", o.status, o.final_offset);
    assert!(o.replan_count >= 1);
    assert_eq!(o.plans.len(), o.replan_count + 1);
    assert!(o.peak_force_final_segment <= 40.0);
    assert!(o.final_offset <= 0.05);
    assert_eq!(o.log.count(ExecEvent::ReplanStarted), o.replan_count);
    // later plans carry the penalty of the violated path
    assert!(o.plans[1..].iter().any(|p| p.penalized_nodes > 0));
}

#[test]
fn replan_cap_is_respected() {
    let exec = ExecutionConfig {
        max_replans: 0,
        ..ExecutionConfig::default()
    };
    let o = run(1, 1, true, exec);
    assert_eq!(o.status, ExecStatus::Exhausted);
    assert_eq!(o.replan_count, 0);
}

#[test]
fn execution_is_deterministic() {
    let a = run(4, 8, true, ExecutionConfig::default());
    let b = run(4, 8, true, ExecutionConfig::default());
    assert_eq!(a.log, b.log);
    assert_eq!(a.replan_count, b.replan_count);
    assert_eq!(a.final_offset, b.final_offset);
    let wp = |o: &ExecutionOutcome| o.plans.iter().map(|p| p.waypoints.clone()).collect::<Vec<_>>();
    assert_eq!(wp(&a), wp(&b));
}

#[test]
fn log_times_increase() {
    let o = run(3, 2, true, ExecutionConfig::default());
    for w in o.log.steps.windows(2) {
        assert!(w[1].time >= w[0].time);
    }
    assert!((o.elapsed - o.log.steps.last().unwrap().time).abs() < 1e-12);
}
