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

//! The branch plane: a world-frame origin at the branch base with an
//! in-plane horizontal axis `x` and an in-plane upward axis `z`.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("plane axis has zero length")]
    ZeroAxis,
    #[error("plane axes are not orthogonal (dot {0:.3e})")]
    NotOrthogonal(f64),
    #[error("plane origin is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub origin: Vector3<f64>,
    pub x_axis: Unit<Vector3<f64>>,
    pub z_axis: Unit<Vector3<f64>>,
}

impl Default for PlaneFrame {
    /// World X-Z plane through the origin.
    fn default() -> Self {
        Self {
            origin: Vector3::zeros(),
            x_axis: Vector3::x_axis(),
            z_axis: Vector3::z_axis(),
        }
    }
}

impl PlaneFrame {
    pub fn new(origin: Vector3<f64>, x_axis: Vector3<f64>, z_axis: Vector3<f64>) -> Result<Self, FrameError> {
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(FrameError::NonFinite);
        }
        let x = Unit::try_new(x_axis, 1e-12).ok_or(FrameError::ZeroAxis)?;
        let z = Unit::try_new(z_axis, 1e-12).ok_or(FrameError::ZeroAxis)?;
        let d = x.dot(&z);
        if d.abs() > ORTHO_TOL {
            return Err(FrameError::NotOrthogonal(d));
        }
        Ok(Self {
            origin,
            x_axis: x,
            z_axis: z,
        })
    }

    /// Vertical plane through `origin` containing the horizontal direction
    /// `heading` (its vertical component is dropped).
    pub fn vertical(origin: Vector3<f64>, heading: Vector3<f64>) -> Result<Self, FrameError> {
        Self::new(origin, Vector3::new(heading.x, heading.y, 0.0), Vector3::z())
    }

    /// Unit normal completing a right-handed `(x, normal, z)` triad.
    pub fn normal(&self) -> Vector3<f64> {
        self.z_axis.cross(&self.x_axis)
    }

    /// In-plane coordinates of a world point (orthogonal projection).
    pub fn to_plane(&self, p: &Vector3<f64>) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.x_axis), d.dot(&self.z_axis))
    }

    /// Signed distance of a world point from the plane.
    pub fn offset(&self, p: &Vector3<f64>) -> f64 {
        (p - self.origin).dot(&self.normal())
    }

    pub fn to_world(&self, x: f64, z: f64) -> Vector3<f64> {
        self.origin + self.x_axis.into_inner() * x + self.z_axis.into_inner() * z
    }
}
