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

//! Composite Simpson quadrature on a uniform grid.

/// Uniform grid over `[0, length]` with an even number of intervals and the
/// matching composite Simpson weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Simpson {
    step: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Simpson {
    /// `intervals` must be even and at least 2.
    pub fn new(length: f64, intervals: usize) -> Self {
        assert!(intervals >= 2 && intervals.is_multiple_of(2), "Simpson needs an even interval count");
        let step = length / intervals as f64;
        let nodes = (0..=intervals).map(|k| k as f64 * step).collect();
        let weights = (0..=intervals)
            .map(|k| {
                let c = if k == 0 || k == intervals {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * step / 3.0
            })
            .collect();
        Self {
            step,
            nodes,
            weights,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of sampled values over the whole grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Running integral `F(s_k) = ∫₀^{s_k} f` at every grid node.
    ///
    /// Even nodes use composite Simpson exactly; odd nodes add a single-interval
    /// third-order rule to the preceding even node, so `F` at the last node
    /// equals [`Simpson::integrate`].
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        debug_assert_eq!(n, self.nodes.len());
        let h = self.step;
        let mut out = vec![0.0; n];
        for k in 1..n {
            out[k] = if k % 2 == 0 {
                out[k - 2] + h / 3.0 * (values[k - 2] + 4.0 * values[k - 1] + values[k])
            } else if k == 1 {
                h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2])
            } else {
                out[k - 1] + h / 12.0 * (-values[k - 2] + 8.0 * values[k - 1] + 5.0 * values[k])
            };
        }
        out
    }
}

/// Composite Simpson integral of `f` over `[a, b]` with `intervals` (even) pieces.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals >= 2 && intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for k in 1..intervals {
        let c = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += c * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubics() {
        let q = Simpson::new(2.0, 10);
        let vals: Vec<f64> = q.nodes().iter().map(|s| s * s * s - s + 1.0).collect();
        // ∫₀² (s³ - s + 1) ds = 4 - 2 + 2
        assert!((q.integrate(&vals) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_total_and_antiderivative() {
        let q = Simpson::new(1.0, 100);
        let vals: Vec<f64> = q.nodes().iter().map(|s| s.cos()).collect();
        let cum = q.cumulative(&vals);
        assert_eq!(cum[0], 0.0);
        assert!((cum[100] - q.integrate(&vals)).abs() < 1e-15);
        for (s, c) in q.nodes().iter().zip(&cum) {
            assert!((c - s.sin()).abs() < 1e-9, "s={s}");
        }
    }

    #[test]
    fn free_function_matches_grid() {
        let q = Simpson::new(0.7, 20);
        let vals: Vec<f64> = q.nodes().iter().map(|s| (3.0 * s).sin()).collect();
        let a = q.integrate(&vals);
        let b = simpson(|s| (3.0 * s).sin(), 0.0, 0.7, 20);
        assert!((a - b).abs() < 1e-14);
    }
}
