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

//! Task-space RRT* for moving a grasped branch tip.
//!
//! Samples are drawn from the half-ball the branch can reach, every node and
//! edge must project to a Safe target in the branch plane, and a replan can
//! add an inverse-distance penalty near a previously violated path.
//! Orientations are attached afterwards by SLERP over arc length.

mod rrt;
mod slerp;

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dlo::{BranchParams, EndpointTarget};
use crate::frame::{FrameError, PlaneFrame};
use crate::safety::{classify_endpoint, SafetyLabel};

pub use rrt::{plan, plan_with, PlanNode, PlanTree, RrtStar};
pub use slerp::{interpolate_orientations, slerp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),
    #[error("no path reached the goal within {iterations} iterations ({elapsed:.1} s)")]
    PlanningTimeout { iterations: usize, elapsed: f64 },
    #[error("steer called with coincident points")]
    ZeroDirection,
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// End-effector pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl WaypointPose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn at(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub orientation: UnitQuaternion<f64>,
}

impl GoalRegion {
    pub fn new(center: Vector3<f64>, radius: f64, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            center,
            radius,
            orientation,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (p - self.center).norm() <= self.radius
    }

    /// Uniform point in the ball.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            );
            if v.norm_squared() <= 1.0 {
                return self.center + v * self.radius;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Steering step Δq, metres.
    pub step: f64,
    /// Upper bound on the shrinking RRT* neighbour radius, metres.
    pub neighbor_radius: f64,
    pub goal_bias: f64,
    pub rng_seed: u64,
    /// ε of the replanning penalty, metres.
    pub penalty_epsilon: f64,
    /// Distance r′ within which the penalty applies, metres.
    pub penalty_radius: f64,
    pub penalty_weight: f64,
    /// Wall-clock limit, seconds.
    pub time_budget: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            step: 0.05,
            neighbor_radius: 0.2,
            goal_bias: 0.05,
            rng_seed: 0,
            penalty_epsilon: 1e-3,
            penalty_radius: 0.15,
            penalty_weight: 0.5,
            time_budget: 400.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step_delta_q must be positive");
        }
        if !(self.neighbor_radius >= self.step) {
            return bad("neighbor_radius must be at least step_delta_q");
        }
        if !(0.0..=0.2).contains(&self.goal_bias) {
            return bad("goal_bias must lie in [0, 0.2]");
        }
        if !(self.penalty_epsilon > 0.0) {
            return bad("penalty_epsilon must be positive");
        }
        if !(self.penalty_radius >= 0.0 && self.penalty_weight >= 0.0) {
            return bad("penalty radius and weight must be non-negative");
        }
        if !(self.time_budget > 0.0) {
            return bad("time_budget must be positive");
        }
        Ok(())
    }
}

/// Where the branch is fixed and which plane it bends in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchConstraint {
    pub base_point: Vector3<f64>,
    /// Radius `h` of the reachable half-ball.
    pub height: f64,
    pub plane_frame: PlaneFrame,
}

impl BranchConstraint {
    /// Vertical branch plane through `base_point` containing `heading`.
    pub fn new(base_point: Vector3<f64>, height: f64, heading: Vector3<f64>) -> Result<Self, PlanError> {
        if !(height > 0.0) {
            return Err(PlanError::InvalidConfig("height_h must be positive".into()));
        }
        Ok(Self {
            base_point,
            height,
            plane_frame: PlaneFrame::vertical(base_point, heading)?,
        })
    }

    /// The half-ball condition: within `h` of the base and not below it.
    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        let tol = 1e-12 * self.height.max(1.0);
        (q - self.base_point).norm() <= self.height + tol && q.z >= self.base_point.z - tol
    }

    pub fn project(&self, q: &Vector3<f64>) -> (f64, f64) {
        self.plane_frame.to_plane(q)
    }
}

/// Random point for tree growth: the goal ball with probability
/// `goal_bias`, otherwise uniform over the reachable half-ball.
pub fn sample_constrained<R: Rng + ?Sized>(
    constraint: &BranchConstraint,
    goal: &GoalRegion,
    config: &PlannerConfig,
    rng: &mut R,
) -> Vector3<f64> {
    if rng.random::<f64>() < config.goal_bias {
        for _ in 0..64 {
            let q = goal.sample(rng);
            if constraint.contains(&q) {
                return q;
            }
        }
    }
    let h = constraint.height;
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(0.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            return constraint.base_point + v * h;
        }
    }
}

pub fn steer(q_near: &Vector3<f64>, q_rand: &Vector3<f64>, step: f64) -> Result<Vector3<f64>, PlanError> {
    let d = q_rand - q_near;
    let n = d.norm();
    if n == 0.0 {
        return Err(PlanError::ZeroDirection);
    }
    if n <= step {
        return Ok(*q_rand);
    }
    Ok(q_near + d * (step / n))
}

/// Exact gate: the in-plane projection of `q` must classify as Safe.
pub fn safety_gate(q: &Vector3<f64>, constraint: &BranchConstraint, params: &BranchParams) -> bool {
    let (x, z) = constraint.project(q);
    classify_endpoint(params, &EndpointTarget::new(x, z)) == SafetyLabel::Safe
}

/// Inverse-distance cost near a previously violated path; zero when there
/// is no such path or `q` is farther than `r′` from all of its waypoints.
pub fn penalty_cost(q: &Vector3<f64>, prev_path: Option<&PlanPath>, config: &PlannerConfig) -> f64 {
    let Some(path) = prev_path else {
        return 0.0;
    };
    let d = path
        .waypoints
        .iter()
        .map(|w| (w.position - q).norm())
        .fold(f64::INFINITY, f64::min);
    if d > config.penalty_radius {
        0.0
    } else {
        config.penalty_weight / (d + config.penalty_epsilon)
    }
}

/// Neighbour radius for a tree of `n` nodes in the half-ball of radius `h`.
pub fn neighbor_radius(n: usize, h: f64, cap: f64) -> f64 {
    if n < 2 {
        return cap;
    }
    // γ from the RRT* bound with d = 3 and the half-ball volume
    let volume = 2.0 / 3.0 * PI * h.powi(3);
    let unit_ball = 4.0 / 3.0 * PI;
    let gamma = (2.0f64 * (1.0 + 1.0 / 3.0)).cbrt() * (volume / unit_ball).cbrt();
    let nf = n as f64;
    (gamma * (nf.ln() / nf).cbrt()).min(cap)
}

/// A planned sequence of poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPath {
    pub waypoints: Vec<WaypointPose>,
    pub total_length: f64,
    /// Distance from the last waypoint to the goal centre.
    pub final_offset: f64,
    pub planning_time: f64,
    pub iterations_used: usize,
    /// Cost of the tree node the path ends at.
    pub cost: f64,
    /// Tree nodes that received a nonzero replanning penalty.
    pub penalized_nodes: usize,
}

impl PlanPath {
    /// Arc length from the first waypoint to each waypoint.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.waypoints.len());
        let mut acc = 0.0;
        for (i, w) in self.waypoints.iter().enumerate() {
            if i > 0 {
                acc += (w.position - self.waypoints[i - 1].position).norm();
            }
            out.push(acc);
        }
        out
    }

    /// Smallest distance from `q` to any waypoint.
    pub fn distance_to(&self, q: &Vector3<f64>) -> f64 {
        self.waypoints
            .iter()
            .map(|w| (w.position - q).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean over this path's waypoints of the distance to `other`.
    pub fn mean_distance_to(&self, other: &PlanPath) -> f64 {
        if self.waypoints.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.waypoints.iter().map(|w| other.distance_to(&w.position)).sum();
        sum / self.waypoints.len() as f64
    }
}
