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

//! The RRT* tree and the planning loop.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    interpolate_orientations, neighbor_radius, penalty_cost, sample_constrained, steer, BranchConstraint,
    GoalRegion, PlanError, PlanPath, PlannerConfig, WaypointPose,
};
use crate::dlo::{BranchParams, EndpointTarget};
use crate::safety::{SafetyLabel, SafetyLattice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub position: Vector3<f64>,
    pub parent: Option<usize>,
    /// Path length from the root plus the penalties of every node on the way.
    pub cost: f64,
    pub penalty: f64,
}

/// Tree rooted at node 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub nodes: Vec<PlanNode>,
    children: Vec<Vec<usize>>,
}

impl PlanTree {
    fn with_root(position: Vector3<f64>) -> Self {
        Self {
            nodes: vec![PlanNode {
                position,
                parent: None,
                cost: 0.0,
                penalty: 0.0,
            }],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node indices from the root to `i`.
    pub fn chain(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut k = i;
        while let Some(p) = self.nodes[k].parent {
            out.push(p);
            k = p;
        }
        out.reverse();
        out
    }

    /// Cost of `i` recomputed along its parent chain.
    pub fn recomputed_cost(&self, i: usize) -> f64 {
        let chain = self.chain(i);
        chain
            .windows(2)
            .map(|w| (self.nodes[w[1]].position - self.nodes[w[0]].position).norm() + self.nodes[w[1]].penalty)
            .sum()
    }

    fn push(&mut self, node: PlanNode) -> usize {
        let idx = self.nodes.len();
        if let Some(p) = node.parent {
            self.children[p].push(idx);
        }
        self.nodes.push(node);
        self.children.push(Vec::new());
        idx
    }

    fn reparent(&mut self, child: usize, new_parent: usize, new_cost: f64) {
        if let Some(old) = self.nodes[child].parent {
            self.children[old].retain(|&c| c != child);
        }
        self.children[new_parent].push(child);
        self.nodes[child].parent = Some(new_parent);
        let delta = new_cost - self.nodes[child].cost;
        let mut stack = vec![child];
        while let Some(k) = stack.pop() {
            self.nodes[k].cost += delta;
            stack.extend(self.children[k].iter().copied());
        }
    }
}

/// Incremental RRT* over the safe part of the reachable half-ball.
pub struct RrtStar<'a> {
    lattice: &'a SafetyLattice,
    constraint: BranchConstraint,
    goal: GoalRegion,
    config: PlannerConfig,
    prev_path: Option<&'a PlanPath>,
    rng: ChaCha8Rng,
    tree: PlanTree,
    goal_nodes: Vec<usize>,
    iterations: usize,
    penalized: usize,
}

impl<'a> RrtStar<'a> {
    pub fn new(
        lattice: &'a SafetyLattice,
        start: Vector3<f64>,
        goal: GoalRegion,
        constraint: BranchConstraint,
        config: PlannerConfig,
        prev_path: Option<&'a PlanPath>,
    ) -> Result<Self, PlanError> {
        config.validate()?;
        let tree = PlanTree::with_root(start);
        let goal_nodes = if goal.contains(&start) { vec![0] } else { Vec::new() };
        Ok(Self {
            lattice,
            constraint,
            goal,
            config,
            prev_path,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            tree,
            goal_nodes,
            iterations: 0,
            penalized: 0,
        })
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn penalized_nodes(&self) -> usize {
        self.penalized
    }

    /// Cost of the cheapest node inside the goal region so far.
    pub fn best_cost(&self) -> Option<f64> {
        self.goal_nodes
            .iter()
            .map(|&i| self.tree.nodes[i].cost)
            .min_by(|a, b| a.total_cmp(b))
    }

    fn is_safe(&self, q: &Vector3<f64>) -> bool {
        if !self.constraint.contains(q) {
            return false;
        }
        let (x, z) = self.constraint.project(q);
        self.lattice.is_safe(x, z)
    }

    /// Interior points every `Δq/2` or closer.
    fn edge_is_safe(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        let pieces = 2 * ((b - a).norm() / self.config.step).ceil().max(1.0) as usize;
        (1..pieces).all(|k| self.is_safe(&(a + (b - a) * (k as f64 / pieces as f64))))
    }

    /// One sample-steer-insert-rewire iteration. Returns whether a node was
    /// added.
    pub fn step(&mut self) -> bool {
        self.iterations += 1;
        let q_rand = sample_constrained(&self.constraint, &self.goal, &self.config, &mut self.rng);
        let nodes = &self.tree.nodes;
        let d2 = |i: usize| (nodes[i].position - q_rand).norm_squared();
        let nearest = (0..nodes.len())
            .min_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)))
            .expect("tree has a root");
        let Ok(q_new) = steer(&nodes[nearest].position, &q_rand, self.config.step) else {
            return false;
        };
        if !self.is_safe(&q_new) {
            return false;
        }

        let radius = neighbor_radius(nodes.len(), self.constraint.height, self.config.neighbor_radius);
        let mut near: Vec<(usize, f64)> = (0..nodes.len())
            .filter_map(|i| {
                let d = (nodes[i].position - q_new).norm();
                (d <= radius || i == nearest).then_some((i, d))
            })
            .collect();
        if near.iter().any(|&(_, d)| d == 0.0) {
            return false;
        }
        let penalty = penalty_cost(&q_new, self.prev_path, &self.config);

        // choose parent: cheapest candidate whose edge is safe
        near.sort_by(|a, b| {
            (nodes[a.0].cost + a.1)
                .total_cmp(&(nodes[b.0].cost + b.1))
                .then(a.0.cmp(&b.0))
        });
        let Some(&(parent, d_parent)) = near
            .iter()
            .find(|(i, _)| self.edge_is_safe(&self.tree.nodes[*i].position, &q_new))
        else {
            return false;
        };
        let cost = self.tree.nodes[parent].cost + d_parent + penalty;
        let new = self.tree.push(PlanNode {
            position: q_new,
            parent: Some(parent),
            cost,
            penalty,
        });
        if penalty > 0.0 {
            self.penalized += 1;
        }

        // rewire
        near.sort_by_key(|&(i, _)| i);
        for &(j, d) in &near {
            if j == parent {
                continue;
            }
            let candidate = cost + d + self.tree.nodes[j].penalty;
            if candidate < self.tree.nodes[j].cost - 1e-12
                && self.edge_is_safe(&q_new, &self.tree.nodes[j].position)
            {
                self.tree.reparent(j, new, candidate);
            }
        }

        if self.goal.contains(&q_new) {
            self.goal_nodes.push(new);
        }
        true
    }

    /// Cheapest goal-reaching path whose every waypoint passes the exact
    /// safety test, densified to spacing at most `Δq`. The path is extended
    /// to the goal centre when that last segment is also exactly safe.
    fn extract(&self) -> Option<(usize, Vec<Vector3<f64>>)> {
        let classifier = self.lattice.classifier();
        let exact = |q: &Vector3<f64>| {
            if !self.constraint.contains(q) {
                return false;
            }
            let (x, z) = self.constraint.project(q);
            classifier.classify(&EndpointTarget::new(x, z)) == SafetyLabel::Safe
        };
        let mut candidates = self.goal_nodes.clone();
        candidates.sort_by(|&a, &b| {
            self.tree.nodes[a]
                .cost
                .partial_cmp(&self.tree.nodes[b].cost)
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        // verdicts per node, covering the node and the edge from its parent
        let step = self.config.step;
        let densify = |a: Vector3<f64>, b: Vector3<f64>| -> Vec<Vector3<f64>> {
            let pieces = ((b - a).norm() / step).ceil().max(1.0) as usize;
            (1..=pieces)
                .map(|k| if k == pieces { b } else { a + (b - a) * (k as f64 / pieces as f64) })
                .collect()
        };
        let mut verdict: HashMap<usize, bool> = HashMap::new();
        'next: for g in candidates {
            let chain = self.tree.chain(g);
            let mut points = vec![self.tree.nodes[chain[0]].position];
            for w in chain.windows(2) {
                let seg = densify(self.tree.nodes[w[0]].position, self.tree.nodes[w[1]].position);
                let ok = *verdict.entry(w[1]).or_insert_with(|| seg.iter().all(&exact));
                if !ok {
                    continue 'next;
                }
                points.extend(seg);
            }
            let last = *points.last().expect("chain includes the root");
            if last != self.goal.center {
                let seg = densify(last, self.goal.center);
                if seg.iter().all(&exact) {
                    points.extend(seg);
                }
            }
            return Some((g, points));
        }
        None
    }
}

/// Plans with a fresh label lattice for `params`.
pub fn plan(
    start: &WaypointPose,
    goal: &GoalRegion,
    constraint: &BranchConstraint,
    params: &BranchParams,
    config: &PlannerConfig,
    prev_path: Option<&PlanPath>,
) -> Result<PlanPath, PlanError> {
    let lattice = SafetyLattice::for_branch(*params).map_err(|e| PlanError::InvalidConfig(e.to_string()))?;
    plan_with(&lattice, start, goal, constraint, config, prev_path)
}

/// Plans from `start` into `goal`, reusing the labels cached in `lattice`.
pub fn plan_with(
    lattice: &SafetyLattice,
    start: &WaypointPose,
    goal: &GoalRegion,
    constraint: &BranchConstraint,
    config: &PlannerConfig,
    prev_path: Option<&PlanPath>,
) -> Result<PlanPath, PlanError> {
    let started = Instant::now();
    config.validate()?;
    if !(goal.radius > 0.0) {
        return Err(PlanError::InvalidConfig("goal radius_R must be positive".into()));
    }
    let s = start.position;
    if !constraint.contains(&s) {
        return Err(PlanError::InfeasibleStart("start lies outside the reachable half-ball".into()));
    }
    let (sx, sz) = constraint.project(&s);
    let label = lattice.classifier().classify(&EndpointTarget::new(sx, sz));
    if label != SafetyLabel::Safe {
        return Err(PlanError::InfeasibleStart(format!("start projects to a {label} target")));
    }
    let base = constraint.base_point;
    if (goal.center - base).norm() > constraint.height + goal.radius || goal.center.z + goal.radius < base.z {
        return Err(PlanError::InfeasibleStart("goal region misses the reachable half-ball".into()));
    }

    let mut rrt = RrtStar::new(lattice, s, *goal, *constraint, *config, prev_path)?;
    let finish = |points: Vec<Vector3<f64>>, cost: f64, rrt: &RrtStar| {
        let mut path = PlanPath {
            waypoints: points.into_iter().map(WaypointPose::at).collect(),
            total_length: 0.0,
            final_offset: 0.0,
            planning_time: 0.0,
            iterations_used: rrt.iterations(),
            cost,
            penalized_nodes: rrt.penalized_nodes(),
        };
        path.total_length = path.cumulative_lengths().last().copied().unwrap_or(0.0);
        path.final_offset = (path.waypoints.last().expect("non-empty path").position - goal.center).norm();
        let mut path = interpolate_orientations(&path, &start.orientation, &goal.orientation)?;
        path.planning_time = started.elapsed().as_secs_f64();
        Ok(path)
    };
    if goal.contains(&s) {
        return finish(vec![s], 0.0, &rrt);
    }
    while rrt.iterations() < config.max_iterations {
        if started.elapsed().as_secs_f64() > config.time_budget {
            break;
        }
        rrt.step();
    }
    match rrt.extract() {
        Some((g, points)) => {
            let node = &rrt.tree().nodes[g];
            let tail = (points.last().expect("non-empty path") - node.position).norm();
            finish(points, node.cost + tail, &rrt)
        }
        None => Err(PlanError::PlanningTimeout {
            iterations: rrt.iterations(),
            elapsed: started.elapsed().as_secs_f64(),
        }),
    }
}
