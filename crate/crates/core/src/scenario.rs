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

//! A complete manipulation setup: branch, plane, goal, starts, anomalies.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::dlo::{BranchParams, DloError};
use crate::planner::{BranchConstraint, GoalRegion, PlanError, WaypointPose};
use crate::safety::SafetyLattice;
use crate::sim::{Anomaly, SimBranch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub id: usize,
    pub position: Vector3<f64>,
    /// Extra anomalies present only in trials from this start.
    #[serde(default)]
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub branch: BranchParams,
    pub base_point: Vector3<f64>,
    pub goal_center: Vector3<f64>,
    /// Acceptable goal radius R, metres.
    pub goal_radius: f64,
    pub starts: Vec<StartPose>,
    /// Anomalies shared by every start.
    pub anomalies: Vec<Anomaly>,
    pub noise_sigma: f64,
    pub k_plane: f64,
}

impl Scenario {
    /// Five starts around a goal 5 cm in radius on a 1.3 m branch. Each
    /// start gets a stiff ball (radius 0.1 m, 6x stiffness) centred halfway
    /// along its straight line to the goal.
    pub fn five_start() -> Self {
        let goal_center = Vector3::new(0.45, -0.43, 0.36);
        let starts = [
            Vector3::new(0.66, 0.046, 0.52),
            Vector3::new(0.65, 0.07, 0.62),
            Vector3::new(0.81, -0.007, 0.4),
            Vector3::new(0.63, 0.12, 0.58),
            Vector3::new(0.62, 0.15, 0.43),
        ]
        .iter()
        .enumerate()
        .map(|(i, &p)| StartPose {
            id: i + 1,
            position: p,
            anomalies: vec![Anomaly {
                center: 0.5 * (p + goal_center),
                radius: 0.1,
                stiffness_multiplier: 6.0,
            }],
        })
        .collect();
        Self {
            name: "five-start".into(),
            branch: BranchParams {
                length: 1.3,
                flexural_rigidity: 1.0,
                ..BranchParams::default()
            },
            base_point: Vector3::new(0.7, 0.1, -0.6),
            goal_center,
            goal_radius: 0.05,
            starts,
            anomalies: Vec::new(),
            noise_sigma: 0.5,
            k_plane: 50.0,
        }
    }

    /// Branch plane: vertical, through the base, heading toward the goal.
    pub fn constraint(&self) -> Result<BranchConstraint, PlanError> {
        BranchConstraint::new(self.base_point, self.branch.length, self.goal_center - self.base_point)
    }

    pub fn goal_region(&self) -> GoalRegion {
        GoalRegion::new(self.goal_center, self.goal_radius, UnitQuaternion::identity())
    }

    pub fn start(&self, id: usize) -> Option<&StartPose> {
        self.starts.iter().find(|s| s.id == id)
    }

    pub fn start_pose(&self, id: usize) -> Option<WaypointPose> {
        self.start(id).map(|s| WaypointPose::at(s.position))
    }

    pub fn lattice(&self) -> Result<SafetyLattice, DloError> {
        SafetyLattice::for_branch(self.branch)
    }

    /// Simulated branch for trials from `start_id` (shared anomalies plus
    /// that start's own).
    pub fn sim_branch(&self, start_id: Option<usize>, rng_seed: u64) -> Result<SimBranch, PlanError> {
        let c = self.constraint()?;
        let mut b = SimBranch::new(self.branch, c.plane_frame);
        b.anomalies = self.anomalies.clone();
        if let Some(s) = start_id.and_then(|id| self.start(id)) {
            b.anomalies.extend(s.anomalies.iter().copied());
        }
        b.noise_sigma = self.noise_sigma;
        b.k_plane = self.k_plane;
        b.rng_seed = rng_seed;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_start_geometry_is_consistent() {
        let s = Scenario::five_start();
        let c = s.constraint().unwrap();
        assert!(c.contains(&s.goal_center));
        for st in &s.starts {
            assert!(c.contains(&st.position));
            for a in &st.anomalies {
                assert!(!a.contains(&st.position) && !a.contains(&s.goal_center));
            }
        }
        let s1 = (s.starts[0].position - s.goal_center).norm();
        assert!((s1 - 0.544).abs() < 1e-3);
    }
}
