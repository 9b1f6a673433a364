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

use branchmanip::planner::{
    interpolate_orientations, penalty_cost, plan_with, safety_gate, sample_constrained, slerp, steer, GoalRegion,
    PlanError, PlanPath, PlannerConfig, RrtStar, WaypointPose,
};
use branchmanip::safety::SafetyLattice;
use branchmanip::scenario::Scenario;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scenario() -> &'static Scenario {
    static S: OnceLock<Scenario> = OnceLock::new();
    S.get_or_init(Scenario::five_start)
}

fn lattice() -> &'static SafetyLattice {
    static L: OnceLock<SafetyLattice> = OnceLock::new();
    L.get_or_init(|| scenario().lattice().unwrap())
}

fn plan_start(id: usize, seed: u64) -> PlanPath {
    let s = scenario();
    let cfg = PlannerConfig {
        rng_seed: seed,
        ..PlannerConfig::default()
    };
    plan_with(
        lattice(),
        &s.start_pose(id).unwrap(),
        &s.goal_region(),
        &s.constraint().unwrap(),
        &cfg,
        None,
    )
    .unwrap()
}

#[test]
fn half_ball_samples_have_the_right_centroid() {
    let s = scenario();
    let c = s.constraint().unwrap();
    let cfg = PlannerConfig {
        goal_bias: 0.0,
        ..PlannerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut mean = Vector3::zeros();
    for _ in 0..n {
        let q = sample_constrained(&c, &s.goal_region(), &cfg, &mut rng);
        assert!(c.contains(&q));
        mean += (q - c.base_point) / n as f64;
    }
    let h = c.height;
    assert!((mean.z - 3.0 * h / 8.0).abs() < 0.01 * 3.0 * h / 8.0, "{}", mean.z);
    assert!(mean.x.abs() < 0.01 * h && mean.y.abs() < 0.01 * h);
}

#[test]
fn steer_caps_the_step() {
    let a = Vector3::new(0.0, 0.0, 0.0);
    let b = Vector3::new(0.3, 0.4, 0.0);
    assert!(((steer(&a, &b, 0.05).unwrap() - a).norm() - 0.05).abs() < 1e-15);
    assert_eq!(steer(&a, &b, 1.0).unwrap(), b);
    assert!(matches!(steer(&a, &a, 0.05), Err(PlanError::ZeroDirection)));
}

#[test]
fn five_start_paths_satisfy_the_invariants() {
    let s = scenario();
    let c = s.constraint().unwrap();
    for st in &s.starts {
        let path = plan_start(st.id, st.id as u64);
        let straight = (st.position - s.goal_center).norm();
        assert!(path.total_length >= straight - 1e-12);
        assert_eq!(path.waypoints[0].position, st.position);
        assert!(s.goal_region().contains(&path.waypoints.last().unwrap().position));
        for w in &path.waypoints {
            assert!(c.contains(&w.position));
            assert!(safety_gate(&w.position, &c, &s.branch));
        }
        for w in path.waypoints.windows(2) {
            assert!((w[1].position - w[0].position).norm() <= 0.05 * (1.0 + 1e-6));
        }
    }
}

#[test]
fn start_one_is_at_least_the_straight_line_distance() {
    let path = plan_start(1, 11);
    assert!(path.total_length >= 0.544, "{}", path.total_length);
}

#[test]
fn planning_is_deterministic() {
    let a = plan_start(2, 5);
    let b = plan_start(2, 5);
    assert_eq!(a.waypoints, b.waypoints);
    assert_eq!(a.cost, b.cost);
}

#[test]
fn start_inside_the_goal_gives_a_single_waypoint() {
    let s = scenario();
    let cfg = PlannerConfig::default();
    let start = WaypointPose::at(s.goal_center + Vector3::new(0.0, 0.0, 0.01));
    let path = plan_with(lattice(), &start, &s.goal_region(), &s.constraint().unwrap(), &cfg, None).unwrap();
    assert_eq!(path.waypoints.len(), 1);
    assert_eq!(path.total_length, 0.0);
}

#[test]
fn unreachable_start_is_infeasible() {
    let s = scenario();
    let start = WaypointPose::at(s.base_point + Vector3::new(0.0, 0.0, 1.5));
    let r = plan_with(
        lattice(),
        &start,
        &s.goal_region(),
        &s.constraint().unwrap(),
        &PlannerConfig::default(),
        None,
    );
    assert!(matches!(r, Err(PlanError::InfeasibleStart(_))));
}

#[test]
fn best_cost_never_increases_and_tree_costs_are_consistent() {
    let s = scenario();
    let mut rrt = RrtStar::new(
        lattice(),
        s.starts[0].position,
        s.goal_region(),
        s.constraint().unwrap(),
        PlannerConfig {
            rng_seed: 4,
            ..PlannerConfig::default()
        },
        None,
    )
    .unwrap();
    let mut best = f64::INFINITY;
    let mut seen = false;
    for _ in 0..3000 {
        rrt.step();
        if let Some(c) = rrt.best_cost() {
            assert!(c <= best + 1e-12);
            best = c;
            seen = true;
        }
    }
    assert!(seen);
    let tree = rrt.tree();
    for i in 0..tree.len() {
        assert!((tree.nodes[i].cost - tree.recomputed_cost(i)).abs() < 1e-9);
    }
}

#[test]
fn penalty_pushes_replans_away() {
    let s = scenario();
    let c = s.constraint().unwrap();
    let first = plan_start(1, 2);
    let mid = first.waypoints[first.waypoints.len() / 2].position;
    let goal = GoalRegion::new(s.goal_center, 0.023, UnitQuaternion::identity());
    let cfg = PlannerConfig {
        rng_seed: 40,
        ..PlannerConfig::default()
    };
    let on = plan_with(lattice(), &WaypointPose::at(mid), &goal, &c, &cfg, Some(&first)).unwrap();
    let off = plan_with(
        lattice(),
        &WaypointPose::at(mid),
        &goal,
        &c,
        &PlannerConfig {
            penalty_weight: 0.0,
            ..cfg
        },
        Some(&first),
    )
    .unwrap();
    assert!(on.penalized_nodes > 0);
    assert_eq!(off.penalized_nodes, 0);
    assert!(on.mean_distance_to(&first) > off.mean_distance_to(&first));
}

#[test]
fn penalty_is_inverse_distance_inside_the_radius() {
    let path = PlanPath {
        waypoints: vec![WaypointPose::at(Vector3::zeros())],
        total_length: 0.0,
        final_offset: 0.0,
        planning_time: 0.0,
        iterations_used: 0,
        cost: 0.0,
        penalized_nodes: 0,
    };
    let cfg = PlannerConfig::default();
    let q = Vector3::new(0.1, 0.0, 0.0);
    let want = cfg.penalty_weight / (0.1 + cfg.penalty_epsilon);
    assert!((penalty_cost(&q, Some(&path), &cfg) - want).abs() < 1e-12);
    assert_eq!(penalty_cost(&Vector3::new(0.2, 0.0, 0.0), Some(&path), &cfg), 0.0);
    assert_eq!(penalty_cost(&q, None, &cfg), 0.0);
}

fn unit_quat(v: [f64; 4]) -> Option<Quaternion<f64>> {
    let q = Quaternion::new(v[0], v[1], v[2], v[3]);
    (q.norm() > 1e-3).then(|| q / q.norm())
}

proptest! {
    #[test]
    fn slerp_matches_a_reference_implementation(
        a in prop::array::uniform4(-1.0f64..1.0),
        b in prop::array::uniform4(-1.0f64..1.0),
        t in 0.0f64..=1.0,
    ) {
        let (Some(qa), Some(qb)) = (unit_quat(a), unit_quat(b)) else { return Ok(()); };
        let ua = UnitQuaternion::new_unchecked(qa);
        let ub = UnitQuaternion::new_unchecked(qb);
        let got = slerp(&qa, &qb, t).unwrap();
        prop_assert!((got.norm() - 1.0).abs() < 1e-9);
        // nalgebra takes the shorter arc as well; compare as rotations
        let want = ua.slerp(&ub, t);
        prop_assert!(got.angle_to(&want) < 1e-6);
    }

    #[test]
    fn slerp_hits_the_endpoints_and_steps_evenly(
        a in prop::array::uniform4(-1.0f64..1.0),
        b in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let (Some(qa), Some(qb)) = (unit_quat(a), unit_quat(b)) else { return Ok(()); };
        let q0 = slerp(&qa, &qb, 0.0).unwrap();
        let q1 = slerp(&qa, &qb, 1.0).unwrap();
        prop_assert!((q0.quaternion() - qa).norm() < 1e-9);
        prop_assert!(q1.angle_to(&UnitQuaternion::new_unchecked(qb)) < 1e-6);
        let n = 20;
        let qs: Vec<_> = (0..=n).map(|k| slerp(&qa, &qb, k as f64 / n as f64).unwrap()).collect();
        let steps: Vec<f64> = qs.windows(2).map(|w| w[0].angle_to(&w[1])).collect();
        for s in &steps {
            prop_assert!((s - steps[0]).abs() < 1e-9);
        }
    }
}

#[test]
fn slerp_rejects_non_unit_input() {
    let q = Quaternion::new(2.0, 0.0, 0.0, 0.0);
    let i = Quaternion::identity();
    assert!(matches!(slerp(&q, &i, 0.5), Err(PlanError::NonUnitQuaternion(_))));
}

#[test]
fn orientations_follow_arc_length() {
    let path = plan_start(3, 9);
    let q0 = UnitQuaternion::identity();
    let q1 = UnitQuaternion::from_euler_angles(0.0, 0.0, 1.2);
    let out = interpolate_orientations(&path, q0.quaternion(), q1.quaternion()).unwrap();
    let first = out.waypoints.first().unwrap().orientation;
    let last = out.waypoints.last().unwrap().orientation;
    assert!(first.angle_to(&q0) < 1e-12);
    assert!(last.angle_to(&q1) < 1e-9);
    let cum = path.cumulative_lengths();
    let total = *cum.last().unwrap();
    for (w, s) in out.waypoints.iter().zip(&cum) {
        assert!((w.orientation.angle_to(&q0) - 1.2 * s / total).abs() < 1e-9);
    }
}
