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

//! Planar minimum-bending-energy branch model.
//!
//! The branch is an inextensible curve `P(s)`, `s ∈ [0, L]`, fixed at the local
//! origin. Its tangent angle `θ(s)` (measured from the local +x axis) is a
//! linear combination of the basis
//!
//! ```text
//! e₁ = 1,  e₂ = s,  e₂ᵢ₊₁ = sin(2πis/L),  e₂ᵢ₊₂ = cos(2πis/L),  i = 1..=num_harmonics
//! ```
//!
//! and the bending energy is `U = ½·EI·∫₀ᴸ (dθ/ds)² ds`. Shapes are found by
//! minimising `U` subject to the endpoint closure `x(L) = ∫cos θ`, `z(L) = ∫sin θ`,
//! the base angle `θ(0) = θ₀` and optionally the tip angle `θ(L) = θ₂`.

mod quadrature;
mod solver;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use quadrature::{simpson, Simpson};
pub use solver::SolveOptions;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DloError {
    #[error("invalid branch parameters: {0}")]
    InvalidParams(String),
    #[error("basis index {index} out of range 1..={size}")]
    InvalidBasisIndex { index: usize, size: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { got: usize, expected: usize },
    #[error("invalid endpoint target: {0}")]
    InvalidTarget(String),
    #[error("target at distance {distance:.6} m exceeds reachable radius {limit:.6} m")]
    Unreachable { distance: f64, limit: f64 },
    #[error("shape solve failed after {iterations} iterations (residual {residual:.3e}{})", if *.timed_out { ", timed out" } else { "" })]
    SolveFailed {
        iterations: usize,
        residual: f64,
        timed_out: bool,
    },
}

/// Physical description of a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    /// Arc length from the fixed base to the grasp point, metres.
    pub length: f64,
    /// Flexural rigidity EI, N·m².
    pub flexural_rigidity: f64,
    /// Tangent angle at the base, radians.
    pub base_angle: f64,
    /// Number of sine/cosine pairs; the basis has `2·num_harmonics + 2` terms.
    pub num_harmonics: usize,
    /// Number of Simpson intervals over `[0, L]`.
    pub quadrature_points: usize,
}

impl Default for BranchParams {
    fn default() -> Self {
        Self {
            length: 0.6,
            flexural_rigidity: 0.5,
            base_angle: FRAC_PI_2,
            num_harmonics: 5,
            quadrature_points: 100,
        }
    }
}

impl BranchParams {
    pub fn new(length: f64, flexural_rigidity: f64) -> Result<Self, DloError> {
        let p = Self {
            length,
            flexural_rigidity,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DloError> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(DloError::InvalidParams(format!("length_L must be > 0, got {}", self.length)));
        }
        if !(self.flexural_rigidity.is_finite() && self.flexural_rigidity > 0.0) {
            return Err(DloError::InvalidParams(format!(
                "flexural_rigidity_EI must be > 0, got {}",
                self.flexural_rigidity
            )));
        }
        if !self.base_angle.is_finite() {
            return Err(DloError::InvalidParams("base_angle_theta0 must be finite".into()));
        }
        if self.num_harmonics < 1 {
            return Err(DloError::InvalidParams("num_harmonics must be >= 1".into()));
        }
        if self.quadrature_points < 10 || !self.quadrature_points.is_multiple_of(2) {
            return Err(DloError::InvalidParams(format!(
                "quadrature_points must be even and >= 10, got {}",
                self.quadrature_points
            )));
        }
        Ok(())
    }

    pub fn basis_size(&self) -> usize {
        2 * self.num_harmonics + 2
    }

    /// Coefficients of the straight rest shape `θ ≡ θ₀`.
    pub fn rest_coefficients(&self) -> BasisCoefficients {
        let mut a = vec![0.0; self.basis_size()];
        a[0] = self.base_angle;
        BasisCoefficients(a)
    }

    fn check_coefficients(&self, coeffs: &BasisCoefficients) -> Result<(), DloError> {
        if coeffs.len() != self.basis_size() {
            return Err(DloError::CoefficientLength {
                got: coeffs.len(),
                expected: self.basis_size(),
            });
        }
        Ok(())
    }
}

/// Desired grasp-point position in the branch plane and optional tip angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointTarget {
    pub x: f64,
    pub z: f64,
    pub tip_angle: Option<f64>,
}

impl EndpointTarget {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z, tip_angle: None }
    }

    pub fn with_tip_angle(x: f64, z: f64, tip_angle: f64) -> Self {
        Self {
            x,
            z,
            tip_angle: Some(tip_angle),
        }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.z)
    }

    pub fn validate(&self) -> Result<(), DloError> {
        if !(self.x.is_finite() && self.z.is_finite()) {
            return Err(DloError::InvalidTarget("non-finite coordinates".into()));
        }
        if let Some(t) = self.tip_angle {
            if !(t > -PI && t <= PI) {
                return Err(DloError::InvalidTarget(format!("tip angle {t} outside (-pi, pi]")));
            }
        }
        Ok(())
    }
}

/// Weights on the basis functions, in basis order `e₁, e₂, e₃, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCoefficients(pub Vec<f64>);

impl BasisCoefficients {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Coefficients of the shape reflected through the local z axis
    /// (`θ ↦ π − θ`, i.e. `x ↦ −x`).
    pub fn mirrored(&self) -> Self {
        let mut a: Vec<f64> = self.0.iter().map(|v| -v).collect();
        a[0] += PI;
        Self(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleResiduals {
    pub base: f64,
    pub tip: Option<f64>,
}

impl AngleResiduals {
    pub fn max(&self) -> f64 {
        self.tip.map_or(self.base, |t| self.base.max(t))
    }
}

/// A solved branch shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSolution {
    pub coefficients: BasisCoefficients,
    pub s_grid: Vec<f64>,
    pub theta: Vec<f64>,
    /// `(x, z)` at each grid node; the first entry is exactly `(0, 0)`.
    pub positions: Vec<[f64; 2]>,
    /// Bending energy, joules.
    pub energy: f64,
    /// Distance between the curve end `P(L)` and the requested target, metres.
    pub endpoint_residual: f64,
    pub angle_residuals: AngleResiduals,
    /// Lagrange multipliers of the endpoint constraints in newtons. They equal
    /// `−∂U*/∂(x, z)`, the in-plane force the branch exerts on the grasp.
    pub endpoint_multipliers: [f64; 2],
    /// First-order optimality norm (scaled units) at the returned point.
    pub optimality: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ShapeSolution {
    pub fn endpoint(&self) -> [f64; 2] {
        *self.positions.last().expect("non-empty grid")
    }

    pub fn max_z(&self) -> f64 {
        self.positions.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn harmonic(index: usize) -> usize {
    (index - 1) / 2
}

fn basis_value(length: f64, index: usize, s: f64) -> f64 {
    match index {
        1 => 1.0,
        2 => s,
        _ => {
            let w = 2.0 * PI * harmonic(index) as f64 / length;
            if index % 2 == 1 {
                (w * s).sin()
            } else {
                (w * s).cos()
            }
        }
    }
}

fn basis_derivative(length: f64, index: usize, s: f64) -> f64 {
    match index {
        1 => 0.0,
        2 => 1.0,
        _ => {
            let w = 2.0 * PI * harmonic(index) as f64 / length;
            if index % 2 == 1 {
                w * (w * s).cos()
            } else {
                -w * (w * s).sin()
            }
        }
    }
}

/// Value of basis function `index` (1-based) at arc length `s`.
pub fn basis_eval(params: &BranchParams, index: usize, s: f64) -> Result<f64, DloError> {
    let size = params.basis_size();
    if index < 1 || index > size {
        return Err(DloError::InvalidBasisIndex { index, size });
    }
    Ok(basis_value(params.length, index, s))
}

/// `θ(s) = Σ aᵢ eᵢ(s)`.
pub fn theta_of_s(params: &BranchParams, coeffs: &BasisCoefficients, s: f64) -> Result<f64, DloError> {
    params.check_coefficients(coeffs)?;
    Ok(theta_at(params.length, coeffs.as_slice(), s))
}

fn theta_at(length: f64, a: &[f64], s: f64) -> f64 {
    a.iter()
        .enumerate()
        .map(|(j, aj)| aj * basis_value(length, j + 1, s))
        .sum()
}

fn dtheta_at(length: f64, a: &[f64], s: f64) -> f64 {
    a.iter()
        .enumerate()
        .map(|(j, aj)| aj * basis_derivative(length, j + 1, s))
        .sum()
}

/// `(x(s), z(s)) = (∫₀ˢ cos θ, ∫₀ˢ sin θ)` by composite Simpson with
/// `quadrature_points` intervals over `[0, s]`.
pub fn position_of_s(
    params: &BranchParams,
    coeffs: &BasisCoefficients,
    s: f64,
) -> Result<(f64, f64), DloError> {
    params.check_coefficients(coeffs)?;
    if s == 0.0 {
        return Ok((0.0, 0.0));
    }
    let a = coeffs.as_slice();
    let n = params.quadrature_points;
    let x = simpson(|u| theta_at(params.length, a, u).cos(), 0.0, s, n);
    let z = simpson(|u| theta_at(params.length, a, u).sin(), 0.0, s, n);
    Ok((x, z))
}

/// `U = ½·EI·∫₀ᴸ (dθ/ds)² ds` with analytic `dθ/ds` and Simpson quadrature.
pub fn potential_energy(params: &BranchParams, coeffs: &BasisCoefficients) -> Result<f64, DloError> {
    params.check_coefficients(coeffs)?;
    let a = coeffs.as_slice();
    let integral = simpson(
        |s| dtheta_at(params.length, a, s).powi(2),
        0.0,
        params.length,
        params.quadrature_points,
    );
    Ok(0.5 * params.flexural_rigidity * integral)
}

/// Solve for the minimum-energy shape with default [`SolveOptions`].
pub fn solve_shape(
    params: &BranchParams,
    target: &EndpointTarget,
    init: Option<&BasisCoefficients>,
) -> Result<ShapeSolution, DloError> {
    ShapeModel::new(*params)?.solve(target, init, &SolveOptions::default())
}

/// `atan2`-wrapped angle difference in `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.sin().atan2(a.cos());
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Basis tables and quadrature for one [`BranchParams`], reused across solves.
#[derive(Debug, Clone)]
pub struct ShapeModel {
    params: BranchParams,
    quad: Simpson,
    /// Row-major `(grid × basis)` table of `eⱼ(sₖ)`.
    basis: Vec<f64>,
    /// Row-major `(grid × basis)` table of `eⱼ'(sₖ)`.
    dbasis: Vec<f64>,
    /// The basis table as a `(grid × basis)` matrix.
    basis_mat: DMatrix<f64>,
    /// `EI·∫ eⱼ' eₖ'`; the energy is `½ aᵀ Q a`.
    energy_hessian: DMatrix<f64>,
}

impl ShapeModel {
    pub fn new(params: BranchParams) -> Result<Self, DloError> {
        params.validate()?;
        let m = params.basis_size();
        let quad = Simpson::new(params.length, params.quadrature_points);
        let mut basis = Vec::with_capacity(quad.len() * m);
        let mut dbasis = Vec::with_capacity(quad.len() * m);
        for &s in quad.nodes() {
            for j in 1..=m {
                basis.push(basis_value(params.length, j, s));
                dbasis.push(basis_derivative(params.length, j, s));
            }
        }
        let mut q = DMatrix::zeros(m, m);
        for (k, w) in quad.weights().iter().enumerate() {
            let row = &dbasis[k * m..(k + 1) * m];
            for i in 0..m {
                for j in 0..m {
                    q[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        q *= params.flexural_rigidity;
        let basis_mat = DMatrix::from_row_slice(quad.len(), m, &basis);
        Ok(Self {
            params,
            quad,
            basis,
            dbasis,
            basis_mat,
            energy_hessian: q,
        })
    }

    pub fn params(&self) -> &BranchParams {
        &self.params
    }

    pub fn quadrature(&self) -> &Simpson {
        &self.quad
    }

    pub fn basis_size(&self) -> usize {
        self.params.basis_size()
    }

    pub(crate) fn basis_matrix(&self) -> &DMatrix<f64> {
        &self.basis_mat
    }

    pub(crate) fn basis_row(&self, k: usize) -> &[f64] {
        let m = self.basis_size();
        &self.basis[k * m..(k + 1) * m]
    }

    pub fn theta_grid(&self, a: &[f64]) -> Vec<f64> {
        (0..self.quad.len())
            .map(|k| dot(self.basis_row(k), a))
            .collect()
    }

    pub fn dtheta_grid(&self, a: &[f64]) -> Vec<f64> {
        let m = self.basis_size();
        (0..self.quad.len())
            .map(|k| dot(&self.dbasis[k * m..(k + 1) * m], a))
            .collect()
    }

    /// Bending energy of the discretized objective and its gradient.
    pub fn objective(&self, a: &[f64]) -> (f64, DVector<f64>) {
        let av = DVector::from_column_slice(a);
        let g = &self.energy_hessian * &av;
        (0.5 * av.dot(&g), g)
    }

    pub fn energy(&self, a: &[f64]) -> f64 {
        let d = self.dtheta_grid(a);
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        0.5 * self.params.flexural_rigidity * self.quad.integrate(&sq)
    }

    pub fn energy_hessian(&self) -> &DMatrix<f64> {
        &self.energy_hessian
    }

    /// `(x(L), z(L))` of the discretized closure integrals.
    pub fn endpoint(&self, a: &[f64]) -> (f64, f64) {
        let theta = &self.basis_mat * DVector::from_column_slice(a);
        theta
            .iter()
            .zip(self.quad.weights())
            .fold((0.0, 0.0), |(x, z), (t, w)| {
                let (st, ct) = t.sin_cos();
                (x + w * ct, z + w * st)
            })
    }

    /// Cumulative positions at every grid node.
    pub fn positions(&self, theta: &[f64]) -> Vec<[f64; 2]> {
        let c: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
        let s: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let xs = self.quad.cumulative(&c);
        let zs = self.quad.cumulative(&s);
        xs.into_iter().zip(zs).map(|(x, z)| [x, z]).collect()
    }

    /// Equality constraints in physical units and their Jacobian.
    ///
    /// Rows: `x(L) − x_d`, `z(L) − z_d`, `θ(0) − θ₀`, and `wrap(θ(L) − θ₂)` when a
    /// tip angle is requested.
    pub fn constraints(&self, a: &[f64], target: &EndpointTarget) -> (DVector<f64>, DMatrix<f64>) {
        let (c, jac, _) = self.constraints_weighted(a, target);
        (c, jac)
    }

    /// As [`ShapeModel::constraints`], also returning the quadrature-weighted
    /// `(w·cos θ, w·sin θ)` at each node.
    pub(crate) fn constraints_weighted(
        &self,
        a: &[f64],
        target: &EndpointTarget,
    ) -> (DVector<f64>, DMatrix<f64>, [DVector<f64>; 2]) {
        let m = self.basis_size();
        let p = if target.tip_angle.is_some() { 4 } else { 3 };
        let mut c = DVector::zeros(p);
        let mut jac = DMatrix::zeros(p, m);
        let theta = &self.basis_mat * DVector::from_column_slice(a);
        let n = theta.len();
        let mut wc = DVector::zeros(n);
        let mut ws = DVector::zeros(n);
        for (k, wk) in self.quad.weights().iter().enumerate() {
            let (st, ct) = theta[k].sin_cos();
            wc[k] = wk * ct;
            ws[k] = wk * st;
        }
        c[0] = wc.sum() - target.x;
        c[1] = ws.sum() - target.z;
        let dx = self.basis_mat.tr_mul(&ws);
        let dz = self.basis_mat.tr_mul(&wc);
        for j in 0..m {
            jac[(0, j)] = -dx[j];
            jac[(1, j)] = dz[j];
        }
        let first = self.basis_row(0);
        c[2] = dot(first, a) - self.params.base_angle;
        for j in 0..m {
            jac[(2, j)] = first[j];
        }
        if let Some(tip) = target.tip_angle {
            let last = self.basis_row(self.quad.len() - 1);
            c[3] = wrap_angle(dot(last, a) - tip);
            for j in 0..m {
                jac[(3, j)] = last[j];
            }
        }
        (c, jac, [wc, ws])
    }

    /// Constraint values only.
    pub(crate) fn constraint_values(&self, a: &[f64], target: &EndpointTarget) -> DVector<f64> {
        let p = if target.tip_angle.is_some() { 4 } else { 3 };
        let mut c = DVector::zeros(p);
        let (x, z) = self.endpoint(a);
        c[0] = x - target.x;
        c[1] = z - target.z;
        c[2] = dot(self.basis_row(0), a) - self.params.base_angle;
        if let Some(tip) = target.tip_angle {
            c[3] = wrap_angle(dot(self.basis_row(self.quad.len() - 1), a) - tip);
        }
        c
    }

    /// Straight-rest coefficients bent by a single linear term toward `target`.
    ///
    /// The bend `Θ = a₂·L` is the larger of the turn that points the chord of a
    /// circular arc at the target and the turn whose chord matches the target
    /// distance. The construction is equivariant under `x ↦ −x`.
    pub fn initial_guess(&self, target: &EndpointTarget) -> BasisCoefficients {
        let l = self.params.length;
        let mut a = self.params.rest_coefficients();
        let heading = wrap_angle(target.z.atan2(target.x) - self.params.base_angle);
        let turn_dir = 2.0 * heading;
        let turn_chord = chord_turn((target.norm() / l).min(1.0));
        let mag = turn_dir.abs().max(turn_chord);
        let sign = if heading > 0.0 { 1.0 } else { -1.0 };
        a.0[1] = sign * mag / l;
        a
    }

    /// Build the full solution record for coefficients `a`.
    pub(crate) fn solution(
        &self,
        a: Vec<f64>,
        target: &EndpointTarget,
        multipliers: [f64; 2],
        optimality: f64,
        converged: bool,
        iterations: usize,
    ) -> ShapeSolution {
        let theta = self.theta_grid(&a);
        let mut positions = self.positions(&theta);
        positions[0] = [0.0, 0.0];
        let (ex, ez) = self.endpoint(&a);
        let endpoint_residual = (ex - target.x).hypot(ez - target.z);
        let base = (theta[0] - self.params.base_angle).abs();
        let tip = target
            .tip_angle
            .map(|t| wrap_angle(theta[theta.len() - 1] - t).abs());
        ShapeSolution {
            energy: self.energy(&a),
            coefficients: BasisCoefficients(a),
            s_grid: self.quad.nodes().to_vec(),
            theta,
            positions,
            endpoint_residual,
            angle_residuals: AngleResiduals { base, tip },
            endpoint_multipliers: multipliers,
            optimality,
            converged,
            iterations,
        }
    }
}

/// Total turn `Θ ∈ [0, 2π)` of a circular arc of unit length whose chord is `ratio`.
fn chord_turn(ratio: f64) -> f64 {
    if ratio >= 1.0 {
        return 0.0;
    }
    // chord/L = sin(Θ/2)/(Θ/2), decreasing on [0, 2π)
    let (mut lo, mut hi) = (0.0_f64, 2.0 * PI - 1e-9);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * mid;
        let r = if half == 0.0 { 1.0 } else { half.sin() / half };
        if r > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_params() -> BranchParams {
        BranchParams {
            length: 1.0,
            flexural_rigidity: 1.0,
            ..BranchParams::default()
        }
    }

    fn coeffs(p: &BranchParams, head: &[f64]) -> BasisCoefficients {
        let mut a = vec![0.0; p.basis_size()];
        a[..head.len()].copy_from_slice(head);
        BasisCoefficients(a)
    }

    #[test]
    fn basis_examples() {
        let p = BranchParams::default();
        let l = p.length;
        assert_eq!(basis_eval(&p, 1, 0.3).unwrap(), 1.0);
        assert!((basis_eval(&p, 3, l / 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(basis_eval(&p, 4, 0.0).unwrap(), 1.0);
        assert_eq!(basis_eval(&p, 2, 0.25).unwrap(), 0.25);
        // i = 2 pair
        assert!((basis_eval(&p, 5, l / 8.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((basis_eval(&p, 6, l / 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn basis_index_out_of_range() {
        let p = BranchParams::default();
        assert_eq!(
            basis_eval(&p, 0, 0.1),
            Err(DloError::InvalidBasisIndex { index: 0, size: 12 })
        );
        assert!(matches!(basis_eval(&p, 13, 0.1), Err(DloError::InvalidBasisIndex { .. })));
    }

    #[test]
    fn theta_examples() {
        let p = unit_params();
        let c = coeffs(&p, &[FRAC_PI_2]);
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(theta_of_s(&p, &c, s).unwrap(), FRAC_PI_2);
        }
        let c = coeffs(&p, &[0.0, 1.0]);
        assert_eq!(theta_of_s(&p, &c, 0.5).unwrap(), 0.5);
        let c = coeffs(&p, &[FRAC_PI_2, 0.0, 0.1]);
        assert!((theta_of_s(&p, &c, 0.25).unwrap() - (FRAC_PI_2 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn theta_rejects_wrong_length() {
        let p = unit_params();
        let c = BasisCoefficients(vec![1.0; 3]);
        assert_eq!(
            theta_of_s(&p, &c, 0.0),
            Err(DloError::CoefficientLength { got: 3, expected: 12 })
        );
    }

    #[test]
    fn position_examples() {
        let p = BranchParams::default();
        let vertical = p.rest_coefficients();
        let (x, z) = position_of_s(&p, &vertical, 0.4).unwrap();
        assert!(x.abs() < 1e-15 && (z - 0.4).abs() < 1e-14);
        let flat = coeffs(&p, &[0.0]);
        let (x, z) = position_of_s(&p, &flat, p.length).unwrap();
        assert!((x - p.length).abs() < 1e-14 && z.abs() < 1e-15);
        assert_eq!(position_of_s(&p, &flat, 0.0).unwrap(), (0.0, 0.0));

        // θ = (π/2)(1 − s): x(1) = z(1) = 2/π
        let u = unit_params();
        let c = coeffs(&u, &[FRAC_PI_2, -FRAC_PI_2]);
        let (x, z) = position_of_s(&u, &c, 1.0).unwrap();
        let expect = 2.0 / PI;
        assert!((x - expect).abs() < 1e-8, "{x}");
        assert!((z - expect).abs() < 1e-8, "{z}");
    }

    #[test]
    fn energy_examples() {
        let p = BranchParams::default();
        assert_eq!(potential_energy(&p, &p.rest_coefficients()).unwrap(), 0.0);
        let q = BranchParams {
            length: 1.0,
            flexural_rigidity: 2.0,
            ..BranchParams::default()
        };
        for c in [0.5, 1.0, -3.0] {
            let u = potential_energy(&q, &coeffs(&q, &[0.0, c])).unwrap();
            assert!((u - c * c).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn model_tables_agree_with_free_functions() {
        let p = BranchParams::default();
        let model = ShapeModel::new(p).unwrap();
        let a: Vec<f64> = (0..p.basis_size()).map(|j| 0.1 * (j as f64 + 1.0).sin()).collect();
        let c = BasisCoefficients(a.clone());
        let (x, z) = model.endpoint(&a);
        let (x2, z2) = position_of_s(&p, &c, p.length).unwrap();
        assert!((x - x2).abs() < 1e-13 && (z - z2).abs() < 1e-13);
        let u = potential_energy(&p, &c).unwrap();
        assert!((model.energy(&a) - u).abs() < 1e-12 * u.max(1.0));
        assert!((model.objective(&a).0 - u).abs() < 1e-10 * u.max(1.0));
        let th = model.theta_grid(&a);
        for (k, s) in model.quadrature().nodes().iter().enumerate() {
            assert!((th[k] - theta_of_s(&p, &c, *s).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn mirrored_coefficients_reflect_shape() {
        let p = BranchParams::default();
        let model = ShapeModel::new(p).unwrap();
        let a = BasisCoefficients((0..12).map(|j| 0.05 * j as f64).collect());
        let b = a.mirrored();
        let (x1, z1) = model.endpoint(a.as_slice());
        let (x2, z2) = model.endpoint(b.as_slice());
        assert!((x1 + x2).abs() < 1e-13 && (z1 - z2).abs() < 1e-13);
        assert!((model.energy(a.as_slice()) - model.energy(b.as_slice())).abs() < 1e-12);
    }

    #[test]
    fn initial_guess_is_mirror_equivariant() {
        let model = ShapeModel::new(BranchParams::default()).unwrap();
        for (x, z) in [(0.2, 0.3), (0.4, -0.1), (0.05, 0.55)] {
            let a = model.initial_guess(&EndpointTarget::new(x, z));
            let b = model.initial_guess(&EndpointTarget::new(-x, z));
            let am = a.mirrored();
            for (u, v) in am.0.iter().zip(&b.0) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chord_turn_inverts_sinc() {
        for r in [0.2, 0.5, 0.9, 0.999] {
            let t = chord_turn(r);
            let h = 0.5 * t;
            assert!((h.sin() / h - r).abs() < 1e-9);
        }
        assert_eq!(chord_turn(1.0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(BranchParams::new(-1.0, 1.0).is_err());
        assert!(BranchParams::new(1.0, 0.0).is_err());
        let odd = BranchParams {
            quadrature_points: 11,
            ..BranchParams::default()
        };
        assert!(odd.validate().is_err());
        let few = BranchParams {
            quadrature_points: 8,
            ..BranchParams::default()
        };
        assert!(few.validate().is_err());
        let none = BranchParams {
            num_harmonics: 0,
            ..BranchParams::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
