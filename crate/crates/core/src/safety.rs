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

//! Safe / Caution / Risky classification of grasp targets in the branch
//! plane, and maps built from many classifications.
//!
//! A target is Risky when it is out of reach, when the shape solve fails, or
//! when the solved shape loops. It is Caution when some interior point of the
//! branch rises above the grasp point, and Safe otherwise.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dlo::{BasisCoefficients, BranchParams, DloError, EndpointTarget, ShapeModel, ShapeSolution, SolveOptions};
use crate::frame::PlaneFrame;

/// Default wall-clock cap for one classification.
pub const DEFAULT_SOLVE_BUDGET: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SafetyLabel {
    Safe,
    Caution,
    Risky,
}

impl SafetyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SafetyLabel::Safe => "Safe",
            SafetyLabel::Caution => "Caution",
            SafetyLabel::Risky => "Risky",
        }
    }
}

impl fmt::Display for SafetyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SafetyLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Safe" => Ok(SafetyLabel::Safe),
            "Caution" => Ok(SafetyLabel::Caution),
            "Risky" => Ok(SafetyLabel::Risky),
            other => Err(format!("unknown safety label {other:?}")),
        }
    }
}

/// Which rule decided a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelReason {
    Unreachable,
    SolveFailed,
    Looping,
    RisesAboveGrasp,
    Smooth,
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub label: SafetyLabel,
    pub reason: LabelReason,
    /// The shape the label was read from, when a solve succeeded.
    pub solution: Option<ShapeSolution>,
}

/// Classifier bound to one branch; reuses the basis tables across targets.
#[derive(Debug, Clone)]
pub struct Classifier {
    model: ShapeModel,
    opts: SolveOptions,
    /// Caution margin as a fraction of `L`.
    caution_tolerance: f64,
}

impl Classifier {
    pub fn new(params: BranchParams) -> Result<Self, DloError> {
        let opts = SolveOptions {
            time_budget: Some(DEFAULT_SOLVE_BUDGET),
            ..SolveOptions::default()
        };
        Self::with_options(params, opts, 1e-3)
    }

    pub fn with_options(params: BranchParams, opts: SolveOptions, caution_tolerance: f64) -> Result<Self, DloError> {
        Ok(Self {
            model: ShapeModel::new(params)?,
            opts,
            caution_tolerance,
        })
    }

    pub fn params(&self) -> &BranchParams {
        self.model.params()
    }

    pub fn model(&self) -> &ShapeModel {
        &self.model
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    pub fn reach_limit(&self) -> f64 {
        self.params().length * (1.0 + self.opts.reachability_slack)
    }

    pub fn classify(&self, target: &EndpointTarget) -> SafetyLabel {
        self.classify_with(target, None).label
    }

    /// Classifies `target`, also trying a warm start from `warm`. When both
    /// starts succeed the lower-energy shape decides the label.
    pub fn classify_with(&self, target: &EndpointTarget, warm: Option<&BasisCoefficients>) -> Classification {
        let risky = |reason| Classification {
            label: SafetyLabel::Risky,
            reason,
            solution: None,
        };
        if !(target.x.is_finite() && target.z.is_finite()) || target.norm() > self.reach_limit() {
            return risky(LabelReason::Unreachable);
        }
        let cold = self.model.solve(target, None, &self.opts).ok();
        let warm = warm.and_then(|w| self.model.solve(target, Some(w), &self.opts).ok());
        let best = match (cold, warm) {
            (Some(c), Some(w)) => Some(if w.energy < c.energy { w } else { c }),
            (c, w) => c.or(w),
        };
        let Some(sol) = best else {
            return risky(LabelReason::SolveFailed);
        };
        let l = self.params().length;
        let (label, reason) = if is_looping(&sol, self.params().base_angle) {
            (SafetyLabel::Risky, LabelReason::Looping)
        } else if sol.max_z() > sol.endpoint()[1] + self.caution_tolerance * l {
            (SafetyLabel::Caution, LabelReason::RisesAboveGrasp)
        } else {
            (SafetyLabel::Safe, LabelReason::Smooth)
        };
        Classification {
            label,
            reason,
            solution: Some(sol),
        }
    }
}

/// Label of a single in-plane target with default solver settings.
pub fn classify_endpoint(params: &BranchParams, target: &EndpointTarget) -> SafetyLabel {
    match Classifier::new(*params) {
        Ok(c) => c.classify(target),
        Err(_) => SafetyLabel::Risky,
    }
}

/// A shape loops if its tangent turns by more than half a revolution away
/// from the base direction, or if its polyline crosses itself.
pub fn is_looping(sol: &ShapeSolution, base_angle: f64) -> bool {
    if sol.theta.iter().any(|t| (t - base_angle).abs() > PI) {
        return true;
    }
    polyline_self_intersects(&sol.positions)
}

/// Proper crossing test between non-adjacent segments.
pub fn polyline_self_intersects(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    if n < 4 {
        return false;
    }
    for i in 0..n - 1 {
        let (a, b) = (points[i], points[i + 1]);
        let (lo_x, hi_x) = (a[0].min(b[0]), a[0].max(b[0]));
        let (lo_z, hi_z) = (a[1].min(b[1]), a[1].max(b[1]));
        for j in i + 2..n - 1 {
            let (c, d) = (points[j], points[j + 1]);
            if c[0].max(d[0]) < lo_x || c[0].min(d[0]) > hi_x || c[1].max(d[1]) < lo_z || c[1].min(d[1]) > hi_z {
                continue;
            }
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Rectangle in the branch plane, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl PlaneBounds {
    pub fn square(half_width: f64) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            z_min: -half_width,
            z_max: half_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MapMode {
    /// `count` targets uniform over the disk of radius `1.1·L`.
    Random { count: usize, seed: u64 },
    /// One target per grid node; node `(i, j)` sits at
    /// `(x_min + i·resolution, z_min + j·resolution)`.
    Grid { bounds: PlaneBounds, resolution: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSample {
    pub x: f64,
    pub z: f64,
    pub label: SafetyLabel,
}

/// Rasterized labels. Cell `(i, j)` is the square of side `resolution`
/// centred on its grid node; `None` marks an unclassified cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGrid {
    pub x0: f64,
    pub z0: f64,
    pub resolution: f64,
    pub nx: usize,
    pub nz: usize,
    pub labels: Vec<Option<SafetyLabel>>,
}

impl LabelGrid {
    fn new(bounds: &PlaneBounds, resolution: f64) -> Self {
        let count = |lo: f64, hi: f64| ((hi - lo) / resolution + 1e-9).floor() as usize + 1;
        let nx = count(bounds.x_min, bounds.x_max);
        let nz = count(bounds.z_min, bounds.z_max);
        Self {
            x0: bounds.x_min,
            z0: bounds.z_min,
            resolution,
            nx,
            nz,
            labels: vec![None; nx * nz],
        }
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.resolution, self.z0 + j as f64 * self.resolution)
    }

    /// Indices of the cell containing `(x, z)`, if inside the grid.
    pub fn cell_of(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.x0) / self.resolution).round();
        let fj = ((z - self.z0) / self.resolution).round();
        if !(fi >= 0.0 && fj >= 0.0) || fi as usize >= self.nx || fj as usize >= self.nz {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<SafetyLabel> {
        if i < self.nx && j < self.nz {
            self.labels[j * self.nx + i]
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyMap {
    pub plane_frame: PlaneFrame,
    pub samples: Vec<MapSample>,
    pub grid: Option<LabelGrid>,
    /// Largest distance at which a sample answers a query off the grid.
    pub lookup_radius: f64,
}

impl SafetyMap {
    /// Label at `(x, z)`: the containing grid cell, else the nearest sample
    /// within `lookup_radius`; `None` means unknown.
    pub fn query(&self, x: f64, z: f64) -> Option<SafetyLabel> {
        if let Some(grid) = &self.grid {
            if let Some((i, j)) = grid.cell_of(x, z) {
                return grid.get(i, j);
            }
        }
        let (best, d2) = self
            .samples
            .iter()
            .map(|s| (s, (s.x - x).powi(2) + (s.z - z).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d2.sqrt() <= self.lookup_radius).then_some(best.label)
    }

    pub fn count(&self, label: SafetyLabel) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

/// Classifies every target of `mode` in the branch plane.
pub fn build_safety_map(params: &BranchParams, mode: &MapMode) -> Result<SafetyMap, DloError> {
    let classifier = Classifier::new(*params)?;
    Ok(build_with(&classifier, mode))
}

pub fn build_with(classifier: &Classifier, mode: &MapMode) -> SafetyMap {
    let l = classifier.params().length;
    match *mode {
        MapMode::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let radius = 1.1 * l;
            let points: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    // uniform in the disk: sqrt-distributed radius
                    let r = radius * rng.random::<f64>().sqrt();
                    let a = rng.random_range(-PI..PI);
                    (r * a.cos(), r * a.sin())
                })
                .collect();
            let labels = classify_points(classifier, &points);
            let samples = zip_samples(&points, &labels);
            SafetyMap {
                plane_frame: PlaneFrame::default(),
                samples,
                grid: None,
                lookup_radius: radius * (PI / count.max(1) as f64).sqrt(),
            }
        }
        MapMode::Grid { bounds, resolution } => {
            let mut grid = LabelGrid::new(&bounds, resolution);
            let mut points = Vec::with_capacity(grid.nx * grid.nz);
            for j in 0..grid.nz {
                for i in 0..grid.nx {
                    points.push(grid.node(i, j));
                }
            }
            let labels = classify_points(classifier, &points);
            grid.labels = labels.iter().copied().map(Some).collect();
            SafetyMap {
                plane_frame: PlaneFrame::default(),
                samples: zip_samples(&points, &labels),
                grid: Some(grid),
                lookup_radius: resolution,
            }
        }
    }
}

fn zip_samples(points: &[(f64, f64)], labels: &[SafetyLabel]) -> Vec<MapSample> {
    points
        .iter()
        .zip(labels)
        .map(|(&(x, z), &label)| MapSample { x, z, label })
        .collect()
}

/// Labels in input order. Points are visited along a greedy nearest-neighbour
/// tour from the rest grasp position, and each solve is warm-started from the
/// closest point already solved.
fn classify_points(classifier: &Classifier, points: &[(f64, f64)]) -> Vec<SafetyLabel> {
    let l = classifier.params().length;
    let reach = classifier.reach_limit();
    let n = points.len();
    let mut labels = vec![SafetyLabel::Risky; n];
    let mut visited = vec![false; n];
    let mut solved: Vec<((f64, f64), BasisCoefficients)> = Vec::new();
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut cursor = (0.0, l);
    for _ in 0..n {
        let next = (0..n)
            .filter(|&k| !visited[k])
            .min_by(|&a, &b| d2(points[a], cursor).total_cmp(&d2(points[b], cursor)).then(a.cmp(&b)))
            .expect("unvisited point remains");
        visited[next] = true;
        cursor = points[next];
        let p = points[next];
        if p.0.hypot(p.1) > reach {
            continue;
        }
        let warm = solved
            .iter()
            .min_by(|a, b| d2(a.0, p).total_cmp(&d2(b.0, p)))
            .map(|(_, c)| c);
        let out = classifier.classify_with(&EndpointTarget::new(p.0, p.1), warm);
        labels[next] = out.label;
        if let Some(sol) = out.solution {
            solved.push((p, sol.coefficients));
        }
    }
    labels
}

/// Lazily filled labels on a square lattice in the branch plane.
///
/// Each lattice node is classified exactly, once. A point counts as safe only
/// when all four nodes of its lattice cell are Safe, so near zone boundaries
/// the answer errs toward rejection. Node labels depend only on the node
/// position, so the cache can be shared across plans and threads without
/// affecting results.
#[derive(Debug)]
pub struct SafetyLattice {
    classifier: Classifier,
    resolution: f64,
    cache: Mutex<HashMap<(i64, i64), SafetyLabel>>,
}

impl SafetyLattice {
    pub fn new(classifier: Classifier, resolution: f64) -> Self {
        assert!(resolution > 0.0, "lattice resolution must be positive");
        Self {
            classifier,
            resolution,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Lattice at `L/100`.
    pub fn for_branch(params: BranchParams) -> Result<Self, DloError> {
        let res = params.length / 100.0;
        Ok(Self::new(Classifier::new(params)?, res))
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cached_nodes(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    pub fn node_label(&self, i: i64, j: i64) -> SafetyLabel {
        let (x, z) = (i as f64 * self.resolution, j as f64 * self.resolution);
        if x.hypot(z) > self.classifier.reach_limit() {
            return SafetyLabel::Risky;
        }
        if let Some(l) = self.cache.lock().ok().and_then(|c| c.get(&(i, j)).copied()) {
            return l;
        }
        let label = self.classifier.classify(&EndpointTarget::new(x, z));
        if let Ok(mut c) = self.cache.lock() {
            c.insert((i, j), label);
        }
        label
    }

    /// Conservative Safe test for an in-plane point.
    pub fn is_safe(&self, x: f64, z: f64) -> bool {
        if !(x.is_finite() && z.is_finite()) || x.hypot(z) > self.classifier.reach_limit() {
            return false;
        }
        let i = (x / self.resolution).floor() as i64;
        let j = (z / self.resolution).floor() as i64;
        [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
            .iter()
            .all(|&(a, b)| self.node_label(a, b) == SafetyLabel::Safe)
    }
}
