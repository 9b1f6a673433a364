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

mod common;

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use branchmanip::dlo::{solve_shape, BranchParams, EndpointTarget};
use branchmanip::safety::{
    build_safety_map, classify_endpoint, Classifier, LabelReason, MapMode, PlaneBounds, SafetyLabel,
};
use common::oracle::piecewise_oracle;
use proptest::prelude::*;

fn unit() -> BranchParams {
    BranchParams {
        length: 1.0,
        flexural_rigidity: 1.0,
        ..BranchParams::default()
    }
}

fn grid_mode(l: f64) -> MapMode {
    MapMode::Grid {
        bounds: PlaneBounds::square(1.2 * l),
        resolution: l / 20.0,
    }
}

#[test]
fn rest_target_is_safe() {
    let p = BranchParams::default();
    assert_eq!(classify_endpoint(&p, &EndpointTarget::new(0.0, p.length)), SafetyLabel::Safe);
}

#[test]
fn target_beyond_arc_length_is_risky() {
    let p = BranchParams::default();
    assert_eq!(classify_endpoint(&p, &EndpointTarget::new(0.0, 1.5 * p.length)), SafetyLabel::Risky);
    let c = Classifier::new(p).unwrap();
    let out = c.classify_with(&EndpointTarget::new(0.0, 1.5 * p.length), None);
    assert_eq!(out.reason, LabelReason::Unreachable);
    assert_eq!(c.classify(&EndpointTarget::new(f64::NAN, 0.0)), SafetyLabel::Risky);
}

#[test]
fn low_side_target_is_caution_and_the_oracle_agrees() {
    let p = unit();
    assert_eq!(classify_endpoint(&p, &EndpointTarget::new(0.5, 0.2)), SafetyLabel::Caution);
    let sol = solve_shape(&p, &EndpointTarget::new(0.5, 0.2), None).unwrap();
    assert!(sol.max_z() > 0.2 + 1e-3);

    let oracle = piecewise_oracle(1.0, 1.0, FRAC_PI_2, 0.5, 0.2).unwrap();
    let h = 1.0 / oracle.angles.len() as f64;
    let mut z = 0.0f64;
    let mut peak = 0.0f64;
    for a in &oracle.angles {
        z += h * a.sin();
        peak = peak.max(z);
    }
    assert!((z - 0.2).abs() < 1e-9);
    assert!(peak > 0.2 + 1e-3, "oracle peak {peak}");
}

#[test]
fn random_map_is_deterministic_and_contained() {
    let p = BranchParams::default();
    let started = Instant::now();
    let a = build_safety_map(&p, &MapMode::Random { count: 200, seed: 7 }).unwrap();
    assert!(started.elapsed().as_secs_f64() < 60.0);
    let b = build_safety_map(&p, &MapMode::Random { count: 200, seed: 7 }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.samples.len(), 200);
    let limit = p.length * 1.001;
    for s in &a.samples {
        assert!(s.x.hypot(s.z) <= 1.1 * p.length);
        if s.x.hypot(s.z) > limit {
            assert_eq!(s.label, SafetyLabel::Risky);
        }
    }
    // all three zones appear
    for l in [SafetyLabel::Safe, SafetyLabel::Caution, SafetyLabel::Risky] {
        assert!(a.count(l) > 0, "no {l} samples");
    }
    let c = build_safety_map(&p, &MapMode::Random { count: 200, seed: 8 }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn grid_map_rules() {
    let p = BranchParams::default();
    let l = p.length;
    let map = build_safety_map(&p, &grid_mode(l)).unwrap();
    let grid = map.grid.as_ref().unwrap();
    assert_eq!((grid.nx, grid.nz), (49, 49));
    for s in &map.samples {
        if s.x.hypot(s.z) > 1.001 * l {
            assert_eq!(s.label, SafetyLabel::Risky);
        }
    }

    // rest cell is Safe; its reachable 4-neighbours are Safe, the others
    // are out of reach and must be Risky
    let (i, j) = grid.cell_of(0.0, l).unwrap();
    assert_eq!(grid.get(i, j), Some(SafetyLabel::Safe));
    for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
        let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
        let (x, z) = grid.node(ni, nj);
        let expected = if x.hypot(z) <= 1.001 * l { SafetyLabel::Safe } else { SafetyLabel::Risky };
        assert_eq!(grid.get(ni, nj), Some(expected), "neighbour ({x}, {z})");
    }

    // monotone reachability along rays
    for s in &map.samples {
        if s.x.hypot(s.z) > 1.001 * l {
            for k in [1.05, 1.2, 1.5] {
                assert_eq!(map.query(s.x * k, s.z * k).unwrap_or(SafetyLabel::Risky), SafetyLabel::Risky);
            }
        }
    }
}

#[test]
fn grid_query_agrees_with_direct_classification() {
    let p = BranchParams::default();
    let l = p.length;
    let mode = MapMode::Grid {
        bounds: PlaneBounds::square(1.1 * l),
        resolution: l / 8.0,
    };
    let map = build_safety_map(&p, &mode).unwrap();
    let mut mismatches = Vec::new();
    for s in &map.samples {
        assert_eq!(map.query(s.x, s.z), Some(s.label));
        let direct = classify_endpoint(&p, &EndpointTarget::new(s.x, s.z));
        if direct != s.label {
            mismatches.push((s.x, s.z, s.label, direct));
        }
    }
    assert!(mismatches.is_empty(), "{mismatches:?}");
}

#[test]
fn query_semantics() {
    let p = BranchParams::default();
    let l = p.length;
    let map = build_safety_map(&p, &MapMode::Random { count: 60, seed: 3 }).unwrap();
    for s in &map.samples {
        assert_eq!(map.query(s.x, s.z), Some(s.label));
    }
    assert_eq!(map.query(10.0 * l, 10.0 * l), None);

    let grid = build_safety_map(
        &p,
        &MapMode::Grid {
            bounds: PlaneBounds {
                x_min: 1.2 * l,
                x_max: 1.5 * l,
                z_min: 0.0,
                z_max: 0.3 * l,
            },
            resolution: 0.1 * l,
        },
    )
    .unwrap();
    assert!(grid.samples.iter().all(|s| s.label == SafetyLabel::Risky));
    // just outside the lower-left node but still inside its cell
    assert_eq!(grid.query(1.17 * l, 0.02 * l), Some(SafetyLabel::Risky));
    assert_eq!(grid.query(1.1 * l, 0.0), Some(SafetyLabel::Risky));
    assert_eq!(grid.query(0.5 * l, 0.5 * l), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn out_of_reach_is_always_risky(r in 1.0011f64..3.0, a in -3.2f64..3.2) {
        let p = BranchParams::default();
        let t = EndpointTarget::new(r * p.length * a.cos(), r * p.length * a.sin());
        prop_assert_eq!(classify_endpoint(&p, &t), SafetyLabel::Risky);
    }

    #[test]
    fn mirror_targets_share_a_label(r in 0.1f64..0.95, a in 0.05f64..1.5) {
        let p = BranchParams::default();
        let x = r * p.length * a.cos();
        let z = r * p.length * a.sin();
        let right = classify_endpoint(&p, &EndpointTarget::new(x, z));
        let left = classify_endpoint(&p, &EndpointTarget::new(-x, z));
        prop_assert_eq!(right, left);
    }
}
