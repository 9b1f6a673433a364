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

//! Constant-speed orientation interpolation.

use nalgebra::{Quaternion, UnitQuaternion};

use super::{PlanError, PlanPath};

const UNIT_TOL: f64 = 1e-9;
/// Below this angle the great-circle formula loses precision.
const SMALL_ANGLE: f64 = 1e-6;

fn check_unit(q: &Quaternion<f64>) -> Result<(), PlanError> {
    let n = q.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(PlanError::NonUnitQuaternion(n));
    }
    Ok(())
}

/// Great-circle interpolation from `q0` (`t = 0`) to `q1` (`t = 1`) along the
/// shorter arc.
pub fn slerp(q0: &Quaternion<f64>, q1: &Quaternion<f64>, t: f64) -> Result<UnitQuaternion<f64>, PlanError> {
    check_unit(q0)?;
    check_unit(q1)?;
    let mut dot = q0.dot(q1);
    let q1 = if dot < 0.0 {
        dot = -dot;
        -q1
    } else {
        *q1
    };
    let gamma = dot.min(1.0).acos();
    if gamma < SMALL_ANGLE {
        let q = q0 * (1.0 - t) + q1 * t;
        return Ok(UnitQuaternion::new_normalize(q));
    }
    let s = gamma.sin();
    let q = q0 * (((1.0 - t) * gamma).sin() / s) + q1 * ((t * gamma).sin() / s);
    Ok(UnitQuaternion::new_normalize(q))
}

/// Assigns each waypoint the orientation at its arc-length fraction along
/// the path, from `q_start` at the first waypoint to `q_goal` at the last.
pub fn interpolate_orientations(
    path: &PlanPath,
    q_start: &Quaternion<f64>,
    q_goal: &Quaternion<f64>,
) -> Result<PlanPath, PlanError> {
    check_unit(q_start)?;
    check_unit(q_goal)?;
    let mut out = path.clone();
    let cum = path.cumulative_lengths();
    let total = cum.last().copied().unwrap_or(0.0);
    let n = out.waypoints.len();
    for (i, w) in out.waypoints.iter_mut().enumerate() {
        let t = if i + 1 == n && i > 0 {
            1.0
        } else if total > 0.0 {
            cum[i] / total
        } else {
            0.0
        };
        w.orientation = slerp(q_start, q_goal, t)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn endpoints_and_midpoint() {
        let a = UnitQuaternion::identity();
        let b = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let q0 = slerp(&a, &b, 0.0).unwrap();
        let q1 = slerp(&a, &b, 1.0).unwrap();
        assert!(q0.angle_to(&a) < 1e-12 && q1.angle_to(&b) < 1e-12);
        let mid = slerp(&a, &b, 0.5).unwrap();
        let expect = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(mid.angle_to(&expect) < 1e-12);
    }

    #[test]
    fn takes_the_short_way_round() {
        let a = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3);
        let b = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.9);
        let neg_b = -b.into_inner();
        let q = slerp(&a, &neg_b, 0.5).unwrap();
        let expect = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.6);
        assert!(q.angle_to(&expect) < 1e-12);
    }

    #[test]
    fn nearly_equal_inputs_fall_back_to_lerp() {
        let a = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.2);
        let b = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.2 + 1e-7);
        let q = slerp(&a, &b, 0.5).unwrap();
        assert!((q.into_inner().norm() - 1.0).abs() < 1e-12);
        assert!(q.angle_to(&a) < 1e-7);
    }

    #[test]
    fn rejects_non_unit_input() {
        let a = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let b = Quaternion::identity();
        assert!(matches!(slerp(&a, &b, 0.5), Err(PlanError::NonUnitQuaternion(_))));
    }
}
