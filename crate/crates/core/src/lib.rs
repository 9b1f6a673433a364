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

//! Force-aware manipulation of a flexible branch.
//!
//! * [`dlo`]: planar minimum-bending-energy branch shapes.
//! * [`safety`]: Safe / Caution / Risky classification of grasp targets.
//! * [`planner`]: task-space RRT* constrained by the branch model, SLERP
//!   orientations and the replanning penalty.
//! * [`sim`]: deterministic stand-in for the arm, force sensor and branch.
//! * [`executor`]: plan, execute, monitor force and replan.
//! * [`frame`]: the branch plane embedded in the world frame.
//! * [`scenario`]: a full setup bundling branch, goal, starts and anomalies.

pub mod dlo;
pub mod executor;
pub mod frame;
pub mod planner;
pub mod safety;
pub mod scenario;
pub mod sim;
