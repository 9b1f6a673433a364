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

//! Scenario configuration file.
//!
//! The primary encoding is TOML; a file ending in `.json` is read as JSON
//! with the same schema. Field names carry their units.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use branchmanip::dlo::BranchParams;
use branchmanip::executor::ExecutionConfig;
use branchmanip::planner::PlannerConfig;
use branchmanip::scenario::{Scenario, StartPose};
use branchmanip::sim::{Anomaly, ServoConfig};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub trials_per_start: usize,
    pub branch: BranchConfig,
    pub goal: GoalConfig,
    pub starts: Vec<StartConfig>,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub exec: ExecSection,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct BranchConfig {
    pub length_L_m: f64,
    pub flexural_rigidity_EI_Nm2: f64,
    #[serde(default = "vertical")]
    pub base_angle_rad: f64,
    #[serde(default = "five")]
    pub num_harmonics: usize,
    #[serde(default = "hundred")]
    pub quadrature_points: usize,
    /// World position of the branch base.
    pub base_point_m: [f64; 3],
    #[serde(default = "half")]
    pub noise_sigma_N: f64,
    #[serde(default = "fifty")]
    pub k_plane_N_per_m: f64,
    #[serde(default)]
    pub anomalies: Vec<AnomalyConfig>,
}

fn vertical() -> f64 {
    FRAC_PI_2
}
fn five() -> usize {
    5
}
fn hundred() -> usize {
    100
}
fn half() -> f64 {
    0.5
}
fn fifty() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyConfig {
    pub center_m: [f64; 3],
    pub radius_m: f64,
    pub stiffness_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GoalConfig {
    pub center_m: [f64; 3],
    pub radius_R_m: f64,
    /// Goal orientation quaternion `(w, x, y, z)`.
    #[serde(default = "identity")]
    pub orientation_wxyz: [f64; 4],
}

fn identity() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub id: usize,
    pub position_m: [f64; 3],
    #[serde(default = "identity")]
    pub orientation_wxyz: [f64; 4],
    /// Anomalies present only in trials from this start.
    #[serde(default)]
    pub anomalies: Vec<AnomalyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub max_iterations: usize,
    pub step_dq_m: f64,
    pub neighbor_radius_m: f64,
    pub goal_bias: f64,
    pub penalty_epsilon_m: f64,
    pub penalty_radius_m: f64,
    pub penalty_weight: f64,
    pub time_budget_s: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let d = PlannerConfig::default();
        Self {
            max_iterations: d.max_iterations,
            step_dq_m: d.step,
            neighbor_radius_m: d.neighbor_radius,
            goal_bias: d.goal_bias,
            penalty_epsilon_m: d.penalty_epsilon,
            penalty_radius_m: d.penalty_radius,
            penalty_weight: d.penalty_weight,
            time_budget_s: d.time_budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct ExecSection {
    pub force_threshold_N: f64,
    pub max_replans: usize,
    pub total_time_budget_s: f64,
    pub replanning: bool,
    pub retreat_on_abort: bool,
    pub accumulate_penalty: bool,
    pub servo_gain_kp_per_s: f64,
    pub servo_dt_s: f64,
    pub servo_position_tol_m: f64,
    pub servo_angle_tol_rad: f64,
    pub servo_max_steps: usize,
}

impl Default for ExecSection {
    fn default() -> Self {
        let d = ExecutionConfig::default();
        Self {
            force_threshold_N: d.force_threshold,
            max_replans: d.max_replans,
            total_time_budget_s: d.total_time_budget,
            replanning: d.replanning,
            retreat_on_abort: d.retreat_on_abort,
            accumulate_penalty: d.accumulate_penalty,
            servo_gain_kp_per_s: d.servo.gain_kp,
            servo_dt_s: d.servo.dt,
            servo_position_tol_m: d.servo.position_tol,
            servo_angle_tol_rad: d.servo.angle_tol,
            servo_max_steps: d.servo.max_steps,
        }
    }
}

fn anomaly(a: &AnomalyConfig) -> Anomaly {
    Anomaly {
        center: Vector3::from(a.center_m),
        radius: a.radius_m,
        stiffness_multiplier: a.stiffness_multiplier,
    }
}

fn anomaly_config(a: &Anomaly) -> AnomalyConfig {
    AnomalyConfig {
        center_m: a.center.into(),
        radius_m: a.radius,
        stiffness_multiplier: a.stiffness_multiplier,
    }
}

fn quaternion(field: &str, q: [f64; 4]) -> Result<UnitQuaternion<f64>, CliError> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    if (raw.norm() - 1.0).abs() > 1e-6 {
        return Err(CliError::Config(format!("{field}: quaternion must have unit norm")));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.starts.is_empty() {
            return bad("starts: at least one start is required");
        }
        if self.trials_per_start == 0 {
            return bad("trials_per_start must be at least 1");
        }
        let mut ids: Vec<usize> = self.starts.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("starts: ids must be unique");
        }
        self.params()
            .validate()
            .map_err(|e| CliError::Config(format!("branch (length_L_m / flexural_rigidity_EI_Nm2): {e}")))?;
        if !(self.goal.radius_R_m > 0.0) {
            return bad("goal.radius_R_m must be positive");
        }
        quaternion("goal.orientation_wxyz", self.goal.orientation_wxyz)?;
        for s in &self.starts {
            quaternion("starts.orientation_wxyz", s.orientation_wxyz)?;
        }
        if !(self.exec.force_threshold_N > 0.0) {
            return bad("exec.force_threshold_N must be positive");
        }
        self.planner_config(0)
            .validate()
            .map_err(|e| CliError::Config(format!("planner: {e}")))?;
        self.execution_config(0)
            .servo
            .validate()
            .map_err(|e| CliError::Config(format!("exec: {e}")))?;
        let scenario = self.scenario()?;
        scenario
            .sim_branch(None, 0)
            .map_err(|e| CliError::Config(format!("branch: {e}")))?
            .validate()
            .map_err(|e| CliError::Config(format!("branch: {e}")))?;
        Ok(())
    }

    pub fn params(&self) -> BranchParams {
        let b = &self.branch;
        BranchParams {
            length: b.length_L_m,
            flexural_rigidity: b.flexural_rigidity_EI_Nm2,
            base_angle: b.base_angle_rad,
            num_harmonics: b.num_harmonics,
            quadrature_points: b.quadrature_points,
        }
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let s = Scenario {
            name: self.name.clone(),
            branch: self.params(),
            base_point: Vector3::from(self.branch.base_point_m),
            goal_center: Vector3::from(self.goal.center_m),
            goal_radius: self.goal.radius_R_m,
            starts: self
                .starts
                .iter()
                .map(|s| StartPose {
                    id: s.id,
                    position: Vector3::from(s.position_m),
                    anomalies: s.anomalies.iter().map(anomaly).collect(),
                })
                .collect(),
            anomalies: self.branch.anomalies.iter().map(anomaly).collect(),
            noise_sigma: self.branch.noise_sigma_N,
            k_plane: self.branch.k_plane_N_per_m,
        };
        s.constraint().map_err(|e| CliError::Config(format!("goal / base_point_m: {e}")))?;
        Ok(s)
    }

    pub fn goal_orientation(&self) -> UnitQuaternion<f64> {
        quaternion("goal", self.goal.orientation_wxyz).unwrap_or_else(|_| UnitQuaternion::identity())
    }

    pub fn start_orientation(&self, id: usize) -> UnitQuaternion<f64> {
        self.starts
            .iter()
            .find(|s| s.id == id)
            .and_then(|s| quaternion("start", s.orientation_wxyz).ok())
            .unwrap_or_else(UnitQuaternion::identity)
    }

    pub fn planner_config(&self, rng_seed: u64) -> PlannerConfig {
        let p = &self.planner;
        PlannerConfig {
            max_iterations: p.max_iterations,
            step: p.step_dq_m,
            neighbor_radius: p.neighbor_radius_m,
            goal_bias: p.goal_bias,
            rng_seed,
            penalty_epsilon: p.penalty_epsilon_m,
            penalty_radius: p.penalty_radius_m,
            penalty_weight: p.penalty_weight,
            time_budget: p.time_budget_s,
        }
    }

    pub fn execution_config(&self, rng_seed: u64) -> ExecutionConfig {
        let e = &self.exec;
        ExecutionConfig {
            force_threshold: e.force_threshold_N,
            max_replans: e.max_replans,
            goal_radius: self.goal.radius_R_m,
            total_time_budget: e.total_time_budget_s,
            rng_seed,
            replanning: e.replanning,
            retreat_on_abort: e.retreat_on_abort,
            accumulate_penalty: e.accumulate_penalty,
            servo: ServoConfig {
                gain_kp: e.servo_gain_kp_per_s,
                dt: e.servo_dt_s,
                position_tol: e.servo_position_tol_m,
                angle_tol: e.servo_angle_tol_rad,
                max_steps: e.servo_max_steps,
            },
        }
    }

    /// The five-start scenario with ten trials per start.
    pub fn five_start() -> Self {
        Self::from_scenario(&Scenario::five_start(), 10)
    }

    pub fn from_scenario(s: &Scenario, trials_per_start: usize) -> Self {
        Self {
            name: s.name.clone(),
            base_seed: 0,
            trials_per_start,
            branch: BranchConfig {
                length_L_m: s.branch.length,
                flexural_rigidity_EI_Nm2: s.branch.flexural_rigidity,
                base_angle_rad: s.branch.base_angle,
                num_harmonics: s.branch.num_harmonics,
                quadrature_points: s.branch.quadrature_points,
                base_point_m: s.base_point.into(),
                noise_sigma_N: s.noise_sigma,
                k_plane_N_per_m: s.k_plane,
                anomalies: s.anomalies.iter().map(anomaly_config).collect(),
            },
            goal: GoalConfig {
                center_m: s.goal_center.into(),
                radius_R_m: s.goal_radius,
                orientation_wxyz: identity(),
            },
            starts: s
                .starts
                .iter()
                .map(|st| StartConfig {
                    id: st.id,
                    position_m: st.position.into(),
                    orientation_wxyz: identity(),
                    anomalies: st.anomalies.iter().map(anomaly_config).collect(),
                })
                .collect(),
            planner: PlannerSection::default(),
            exec: ExecSection::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::five_start();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::five_start();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn missing_length_is_named() {
        let text = ScenarioConfig::five_start().to_toml().replace("length_L_m = 1.3\n", "");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("length_L"), "{err}");
    }

    #[test]
    fn typos_are_rejected() {
        let text = ScenarioConfig::five_start().to_toml().replace("radius_R_m", "radius_m_R");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn empty_starts_are_rejected() {
        let mut cfg = ScenarioConfig::five_start();
        cfg.starts.clear();
        assert!(cfg.validate().is_err());
    }
}
