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

//! Deterministic stand-in for the arm, the wrist force sensor and the branch.
//!
//! The arm is a first-order task-space pose servo. The sensor reports the
//! branch reaction predicted by the energy model: the in-plane part is the
//! negative gradient of the minimum bending energy with respect to the grasp
//! target, scaled inside anomaly balls; the out-of-plane part is a linear
//! spring pulling the grasp back to the branch plane.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dlo::{BasisCoefficients, BranchParams, DloError, EndpointTarget, ShapeModel, ShapeSolution, SolveOptions};
use crate::frame::PlaneFrame;
use crate::planner::{slerp, WaypointPose};

/// Per-axis sensor range, newtons.
pub const SENSOR_LIMIT: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulated branch: {0}")]
    InvalidBranch(String),
    #[error("servo gain·dt = {0} exceeds 1")]
    UnstableGain(f64),
    #[error("invalid servo settings: {0}")]
    InvalidServo(String),
    #[error("segment aborted by the force monitor at t = {:.3} s (|F| = {:.2} N)", .reading.time, .reading.magnitude)]
    AbortedByMonitor {
        reading: ForceReading,
        state: EndEffectorState,
        readings: Vec<ForceReading>,
    },
    #[error("waypoint not reached within {0} servo steps")]
    NotConverged(usize),
    #[error(transparent)]
    Model(#[from] DloError),
}

/// Ball in which the branch is locally stiffer than the model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub stiffness_multiplier: f64,
}

impl Anomaly {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBranch {
    pub params: BranchParams,
    /// Base point (origin) and bending plane.
    pub plane_frame: PlaneFrame,
    pub anomalies: Vec<Anomaly>,
    /// Standard deviation of the per-axis sensor noise, newtons.
    pub noise_sigma: f64,
    /// Out-of-plane spring rate, N/m.
    pub k_plane: f64,
    pub rng_seed: u64,
}

impl SimBranch {
    pub fn new(params: BranchParams, plane_frame: PlaneFrame) -> Self {
        Self {
            params,
            plane_frame,
            anomalies: Vec::new(),
            noise_sigma: 0.5,
            k_plane: 50.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if !(self.noise_sigma >= 0.0) {
            return Err(SimError::InvalidBranch("noise_sigma must be non-negative".into()));
        }
        if !(self.k_plane >= 0.0) {
            return Err(SimError::InvalidBranch("k_plane must be non-negative".into()));
        }
        for a in &self.anomalies {
            if !(a.stiffness_multiplier >= 1.0) || !(a.radius > 0.0) {
                return Err(SimError::InvalidBranch(
                    "anomalies need radius > 0 and stiffness_multiplier >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Grasp pose of the unloaded, straight branch.
    pub fn rest_grasp(&self) -> WaypointPose {
        WaypointPose::at(self.plane_frame.to_world(0.0, self.params.length))
    }

    /// Largest multiplier of any anomaly containing `p`, or 1.
    pub fn multiplier_at(&self, p: &Vector3<f64>) -> f64 {
        self.anomalies
            .iter()
            .filter(|a| a.contains(p))
            .map(|a| a.stiffness_multiplier)
            .fold(1.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorState {
    pub pose: WaypointPose,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceReading {
    pub force: Vector3<f64>,
    pub magnitude: f64,
    pub time: f64,
}

impl ForceReading {
    pub fn new(force: Vector3<f64>, time: f64) -> Self {
        Self {
            force,
            magnitude: force.norm(),
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    /// Proportional gain, 1/s.
    pub gain_kp: f64,
    /// Control period, seconds.
    pub dt: f64,
    /// Convergence radius, metres.
    pub position_tol: f64,
    /// Convergence angle, radians.
    pub angle_tol: f64,
    pub max_steps: usize,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            gain_kp: 10.0,
            dt: 0.02,
            position_tol: 2e-3,
            angle_tol: 0.01,
            max_steps: 10_000,
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.gain_kp > 0.0) {
            return Err(SimError::InvalidServo("gain_kp and dt must be positive".into()));
        }
        let k = self.gain_kp * self.dt;
        if k > 1.0 {
            return Err(SimError::UnstableGain(k));
        }
        if !(self.position_tol > 0.0 && self.angle_tol > 0.0) {
            return Err(SimError::InvalidServo("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn converged(&self, pose: &WaypointPose, target: &WaypointPose) -> bool {
        (pose.position - target.position).norm() < self.position_tol
            && pose.orientation.angle_to(&target.orientation) < self.angle_tol
    }
}

/// One explicit step of the proportional pose servo.
pub fn pose_servo_step(
    state: &EndEffectorState,
    target: &WaypointPose,
    gain_kp: f64,
    dt: f64,
) -> Result<EndEffectorState, SimError> {
    if !(dt > 0.0 && gain_kp > 0.0) {
        return Err(SimError::InvalidServo("gain_kp and dt must be positive".into()));
    }
    let k = gain_kp * dt;
    if k > 1.0 {
        return Err(SimError::UnstableGain(k));
    }
    let p = state.pose.position;
    let position = p + (target.position - p) * k;
    let orientation = slerp(&state.pose.orientation, &target.orientation, k.min(1.0))
        .map_err(|e| SimError::InvalidServo(e.to_string()))?;
    Ok(EndEffectorState {
        pose: WaypointPose::new(position, orientation),
        time: state.time + dt,
    })
}

/// Simulation instance: owns the noise RNG and the warm-start cache.
#[derive(Debug, Clone)]
pub struct Simulator {
    branch: SimBranch,
    model: ShapeModel,
    opts: SolveOptions,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    warm: Option<BasisCoefficients>,
}

impl Simulator {
    pub fn new(branch: SimBranch) -> Result<Self, SimError> {
        branch.validate()?;
        let noise = if branch.noise_sigma > 0.0 {
            Some(Normal::new(0.0, branch.noise_sigma).map_err(|e| SimError::InvalidBranch(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            model: ShapeModel::new(branch.params)?,
            opts: SolveOptions::default(),
            rng: ChaCha8Rng::seed_from_u64(branch.rng_seed),
            noise,
            warm: None,
            branch,
        })
    }

    pub fn branch(&self) -> &SimBranch {
        &self.branch
    }

    /// Forget the warm start so the next reading begins from scratch.
    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    fn solve(&self, x: f64, z: f64, init: Option<&BasisCoefficients>) -> Option<ShapeSolution> {
        let t = EndpointTarget::new(x, z);
        match init {
            Some(c) => self
                .model
                .solve(&t, Some(c), &self.opts)
                .or_else(|_| self.model.solve(&t, None, &self.opts))
                .ok(),
            None => self.model.solve(&t, None, &self.opts).ok(),
        }
    }

    /// `−∇U*` at in-plane target `(x, z)` by central differences, or `None`
    /// when the target cannot be solved.
    pub fn in_plane_force(&mut self, x: f64, z: f64) -> Option<[f64; 2]> {
        let params = self.branch.params;
        let center = self.solve(x, z, self.warm.as_ref())?;
        self.warm = Some(center.coefficients.clone());
        // the unloaded branch sits at the energy minimum
        if center.energy <= 1e-12 * params.flexural_rigidity / params.length {
            return Some([0.0, 0.0]);
        }
        let h = 1e-3 * params.length;
        let init = Some(&center.coefficients);
        let mut grad = [0.0; 2];
        for (axis, g) in grad.iter_mut().enumerate() {
            let (dx, dz) = if axis == 0 { (h, 0.0) } else { (0.0, h) };
            let plus = self.solve(x + dx, z + dz, init).map(|s| s.energy);
            let minus = self.solve(x - dx, z - dz, init).map(|s| s.energy);
            *g = match (plus, minus) {
                (Some(p), Some(m)) => (p - m) / (2.0 * h),
                (Some(p), None) => (p - center.energy) / h,
                (None, Some(m)) => (center.energy - m) / h,
                (None, None) => return None,
            };
        }
        Some([-grad[0], -grad[1]])
    }

    /// Simulated sensor reading with the grasp at `grasp`.
    pub fn grasp_force(&mut self, grasp: &WaypointPose, time: f64) -> ForceReading {
        let frame = self.branch.plane_frame;
        let p = grasp.position;
        let (x, z) = frame.to_plane(&p);
        let limit = self.branch.params.length * (1.0 + self.opts.reachability_slack);
        let in_plane = if x.hypot(z) <= limit { self.in_plane_force(x, z) } else { None };
        let mut force = match in_plane {
            Some([fx, fz]) => {
                let m = self.branch.multiplier_at(&p);
                (frame.x_axis.into_inner() * fx + frame.z_axis.into_inner() * fz) * m
                    - frame.normal() * (self.branch.k_plane * frame.offset(&p))
            }
            None => {
                // taut or snagged: saturate along the pull toward the base
                let dir = frame.origin - p;
                let n = dir.amax().max(1e-12);
                dir * (SENSOR_LIMIT / n)
            }
        };
        if let Some(noise) = self.noise {
            for v in force.iter_mut() {
                *v += noise.sample(&mut self.rng);
            }
        }
        force.apply(|v| *v = v.clamp(-SENSOR_LIMIT, SENSOR_LIMIT));
        ForceReading::new(force, time)
    }

    /// Servo toward `waypoint`, reading the sensor after every step, until
    /// convergence or until `abort` returns true for a reading.
    pub fn run_segment<F>(
        &mut self,
        state: &EndEffectorState,
        waypoint: &WaypointPose,
        servo: &ServoConfig,
        mut abort: F,
    ) -> Result<(EndEffectorState, Vec<ForceReading>), SimError>
    where
        F: FnMut(&ForceReading) -> bool,
    {
        servo.validate()?;
        let mut state = *state;
        let mut readings = Vec::new();
        for _ in 0..servo.max_steps {
            if servo.converged(&state.pose, waypoint) {
                return Ok((state, readings));
            }
            state = pose_servo_step(&state, waypoint, servo.gain_kp, servo.dt)?;
            let reading = self.grasp_force(&state.pose, state.time);
            readings.push(reading);
            if abort(&reading) {
                return Err(SimError::AbortedByMonitor {
                    reading,
                    state,
                    readings,
                });
            }
        }
        if servo.converged(&state.pose, waypoint) {
            return Ok((state, readings));
        }
        Err(SimError::NotConverged(servo.max_steps))
    }
}
