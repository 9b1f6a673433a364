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

//! Augmented-Lagrangian solve of the constrained minimum-energy problem.
//!
//! The problem is solved in scaled units: the objective is `U·L/EI` and the
//! position constraints are divided by `L`, so the tolerances below do not
//! depend on the branch size or stiffness. Each outer iteration minimises
//!
//! ```text
//! Φ(a) = f(a) + λ·c(a) + (μ/2)·|c(a)|²
//! ```
//!
//! with a damped Newton method on the exact Hessian, then updates
//! `λ ← λ + μ·c` and grows `μ` by `penalty_growth`.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{BasisCoefficients, DloError, EndpointTarget, ShapeModel, ShapeSolution};

/// Residual level at which the outer loop stops early.
const TIGHT_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Endpoint tolerance as a fraction of `L`.
    pub position_tolerance: f64,
    /// Base/tip angle tolerance, radians.
    pub angle_tolerance: f64,
    /// Bound on the scaled first-order optimality norm.
    pub opt_tolerance: f64,
    /// Targets farther than `L·(1 + slack)` are rejected without solving.
    pub reachability_slack: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Wall-clock cap for a single solve; exceeding it is a failed solve.
    pub time_budget: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            position_tolerance: 1e-3,
            angle_tolerance: 1e-2,
            opt_tolerance: 1e-6,
            reachability_slack: 1e-3,
            max_outer: 8,
            max_inner: 500,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            time_budget: None,
        }
    }
}

struct Evaluation {
    phi: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

struct Problem<'a> {
    model: &'a ShapeModel,
    target: &'a EndpointTarget,
    inv_l: f64,
    obj_scale: f64,
}

impl<'a> Problem<'a> {
    fn new(model: &'a ShapeModel, target: &'a EndpointTarget) -> Self {
        let p = model.params();
        Self {
            model,
            target,
            inv_l: 1.0 / p.length,
            obj_scale: p.length / p.flexural_rigidity,
        }
    }

    /// Scaled constraints and Jacobian.
    fn constraints(&self, a: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (mut c, mut j) = self.model.constraints(a, self.target);
        for r in 0..2 {
            c[r] *= self.inv_l;
            for col in 0..j.ncols() {
                j[(r, col)] *= self.inv_l;
            }
        }
        (c, j)
    }

    fn objective(&self, a: &[f64]) -> (f64, DVector<f64>) {
        let (f, g) = self.model.objective(a);
        (f * self.obj_scale, g * self.obj_scale)
    }

    fn phi(&self, a: &[f64], lambda: &DVector<f64>, mu: f64) -> f64 {
        let (f, _) = self.objective(a);
        let mut c = self.model.constraint_values(a, self.target);
        c[0] *= self.inv_l;
        c[1] *= self.inv_l;
        f + lambda.dot(&c) + 0.5 * mu * c.norm_squared()
    }

    fn evaluate(&self, a: &[f64], lambda: &DVector<f64>, mu: f64) -> Evaluation {
        let (f, gf) = self.objective(a);
        let (mut c, mut jac, [wc, ws]) = self.model.constraints_weighted(a, self.target);
        for r in 0..2 {
            c[r] *= self.inv_l;
            jac.row_mut(r).scale_mut(self.inv_l);
        }
        let y = lambda + &c * mu;
        let phi = f + lambda.dot(&c) + 0.5 * mu * c.norm_squared();
        let grad = gf + jac.tr_mul(&y);

        let mut hess = self.model.energy_hessian() * self.obj_scale + jac.tr_mul(&jac) * mu;
        // curvature of the closure integrals: ∂²x = −∫cos θ eeᵀ, ∂²z = −∫sin θ eeᵀ
        let (y0, y1) = (y[0] * self.inv_l, y[1] * self.inv_l);
        if y0 != 0.0 || y1 != 0.0 {
            let b = self.model.basis_matrix();
            let mut weighted = b.clone();
            for k in 0..b.nrows() {
                weighted.row_mut(k).scale_mut(-(y0 * wc[k] + y1 * ws[k]));
            }
            hess.gemm_tr(1.0, b, &weighted, 1.0);
        }
        Evaluation { phi, grad, hess }
    }
}

/// Newton direction on a Hessian made positive definite by a diagonal shift.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let n = hess.nrows();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(1e-12, f64::max);
    let mut shift = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(h) {
            let p = -ch.solve(grad);
            if p.iter().all(|v| v.is_finite()) {
                return p;
            }
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
        if shift > 1e12 * scale {
            return -grad;
        }
    }
}

/// Unit eigenvector of the most negative Hessian eigenvalue, oriented downhill,
/// or `None` when the Hessian is positive semidefinite.
fn negative_curvature(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let eig = SymmetricEigen::new(hess.clone());
    let (idx, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let scale = eig.eigenvalues.amax().max(1e-12);
    if lmin >= -1e-9 * scale {
        return None;
    }
    let mut v = eig.eigenvectors.column(idx).into_owned();
    let gv = grad.dot(&v);
    let flip = if gv != 0.0 {
        gv > 0.0
    } else {
        // deterministic orientation on exact saddles
        let imax = v.iamax();
        v[imax] > 0.0
    };
    if flip {
        v = -v;
    }
    Some((v, lmin))
}

impl ShapeModel {
    /// Minimum-energy shape reaching `target`, starting from `init` (or the
    /// heuristic [`ShapeModel::initial_guess`]).
    ///
    /// Returns `Ok` whenever the endpoint and angle residuals are within
    /// tolerance; `converged` additionally requires the optimality norm to be
    /// below `opt_tolerance`.
    pub fn solve(
        &self,
        target: &EndpointTarget,
        init: Option<&BasisCoefficients>,
        opts: &SolveOptions,
    ) -> Result<ShapeSolution, DloError> {
        target.validate()?;
        let params = self.params();
        let l = params.length;
        let limit = l * (1.0 + opts.reachability_slack);
        let distance = target.norm();
        if distance > limit {
            return Err(DloError::Unreachable { distance, limit });
        }
        let m = self.basis_size();
        let mut a: Vec<f64> = match init {
            Some(c) if c.len() == m => c.0.clone(),
            Some(c) => {
                return Err(DloError::CoefficientLength {
                    got: c.len(),
                    expected: m,
                })
            }
            None => self.initial_guess(target).0,
        };

        let started = Instant::now();
        let problem = Problem::new(self, target);
        let n_cons = if target.tip_angle.is_some() { 4 } else { 3 };
        let mut lambda = DVector::zeros(n_cons);
        let mut mu = opts.initial_penalty;
        let mut iterations = 0usize;
        let mut optimality = f64::INFINITY;
        let mut prev_residual = f64::INFINITY;
        let mut timed_out = false;
        let inner_tol = 0.1 * opts.opt_tolerance;
        let pos_tol = opts.position_tolerance;

        'outer: for outer in 0..opts.max_outer {
            for _ in 0..opts.max_inner {
                let ev = problem.evaluate(&a, &lambda, mu);
                if ev.grad.amax() <= inner_tol {
                    // stationary: leave saddles along negative curvature
                    let Some((v, lmin)) = negative_curvature(&ev.hess, &ev.grad) else {
                        break;
                    };
                    let mut alpha = 1.0;
                    let mut moved = false;
                    while alpha > 1e-6 {
                        let trial: Vec<f64> = a.iter().zip(v.iter()).map(|(x, d)| x + alpha * d).collect();
                        let phi = problem.phi(&trial, &lambda, mu);
                        if phi.is_finite() && phi < ev.phi + 0.25 * alpha * alpha * lmin {
                            a = trial;
                            moved = true;
                            break;
                        }
                        alpha *= 0.5;
                    }
                    iterations += 1;
                    if !moved {
                        break;
                    }
                    continue;
                }
                let p = newton_direction(&ev.hess, &ev.grad);
                let slope = ev.grad.dot(&p);
                let (p, slope) = if slope < 0.0 {
                    (p, slope)
                } else {
                    (-&ev.grad, -ev.grad.norm_squared())
                };
                let mut alpha = 1.0;
                let mut trial: Vec<f64>;
                loop {
                    trial = a.iter().zip(p.iter()).map(|(x, d)| x + alpha * d).collect();
                    let phi = problem.phi(&trial, &lambda, mu);
                    if phi.is_finite() && phi <= ev.phi + 1e-4 * alpha * slope {
                        break;
                    }
                    alpha *= 0.5;
                    if alpha < 1e-12 {
                        break;
                    }
                }
                iterations += 1;
                let step = alpha * p.amax();
                if alpha < 1e-12 {
                    break;
                }
                a = trial;
                if step < 1e-15 {
                    break;
                }
                if let Some(budget) = opts.time_budget {
                    if started.elapsed() > budget {
                        timed_out = true;
                        break 'outer;
                    }
                }
            }

            let (c, jac) = problem.constraints(&a);
            lambda += &c * mu;
            let (_, gf) = problem.objective(&a);
            optimality = (gf + jac.tr_mul(&lambda)).amax();
            let residual = c.amax();
            if residual <= TIGHT_RESIDUAL && optimality <= opts.opt_tolerance {
                break;
            }
            let within = c.rows(0, 2).amax() <= pos_tol
                && (2..n_cons).all(|r| c[r].abs() <= opts.angle_tolerance);
            if outer >= 3 && residual > 0.9 * prev_residual {
                if within {
                    break;
                }
                // stalled far from feasibility
                return Err(DloError::SolveFailed {
                    iterations,
                    residual: residual * l,
                    timed_out: false,
                });
            }
            prev_residual = residual;
            mu *= opts.penalty_growth;
        }

        let (c, _) = problem.constraints(&a);
        let pos_res = c.rows(0, 2).amax();
        let angle_ok = (2..n_cons).all(|r| c[r].abs() <= opts.angle_tolerance);
        if timed_out || pos_res > pos_tol || !angle_ok || a.iter().any(|v| !v.is_finite()) {
            return Err(DloError::SolveFailed {
                iterations,
                residual: pos_res * l,
                timed_out,
            });
        }
        let ei = params.flexural_rigidity;
        let multipliers = [ei * lambda[0] / (l * l), ei * lambda[1] / (l * l)];
        let converged = optimality <= opts.opt_tolerance;
        Ok(self.solution(a, target, multipliers, optimality, converged, iterations))
    }
}
