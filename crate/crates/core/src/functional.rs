//! The energy `I_λ(u) = ½‖∇u‖² − (λ/2)∫V|u|² + (1/p)∫h|u|^p`, its first and
//! second variations and the Rayleigh quotient.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{integrate_weighted, power_fn, Field, Grid, GridSpec};
use crate::linalg::BandMatrix;
use crate::weights::{sample_weight, WeightField, WeightSpec};

/// Stopping rules shared by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Dual norm of the first variation at a converged critical point.
    pub residual: f64,
    /// Violation allowed in `∫Vu² = 1` and `∫h|u|^p ≤ 0`.
    pub constraint: f64,
    /// Relative accuracy of eigenvalues.
    pub eigen: f64,
    pub max_iterations: usize,
    /// E-norm beyond which a descent is declared unbounded.
    pub e_norm_cap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-6,
            constraint: 1e-8,
            eigen: 1e-10,
            max_iterations: 100_000,
            e_norm_cap: 1e6,
        }
    }
}

/// The problem `-Δu - λVu + h|u|^{p-2}u = 0` in data form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub grid: GridSpec,
    pub p: f64,
    pub lambda: f64,
    pub v: WeightSpec,
    pub h: WeightSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_h(&self, h: WeightSpec) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn with_grid(&self, grid: GridSpec) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    pub fn discretize(&self) -> Result<Problem> {
        let grid = self.grid.build()?;
        Problem::on_grid(self, &grid)
    }
}

/// A [`ProblemSpec`] sampled on its grid.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    grid: Arc<Grid>,
    v: Arc<WeightField>,
    h: Arc<WeightField>,
    warnings: Vec<String>,
}

impl Problem {
    /// Samples the weights of `spec` on an existing grid built from `spec.grid`.
    pub fn on_grid(spec: &ProblemSpec, grid: &Arc<Grid>) -> Result<Self> {
        if !(spec.p > 2.0) || !spec.p.is_finite() {
            return Err(LabError::invalid(format!("exponent p must exceed 2, got {}", spec.p)));
        }
        if !spec.lambda.is_finite() {
            return Err(LabError::invalid("lambda must be finite"));
        }
        if grid.spec() != &spec.grid {
            return Err(LabError::GridMismatch);
        }
        let v = sample_weight(&spec.v, grid)?;
        let h = sample_weight(&spec.h, grid)?;
        let mut warnings = Vec::new();
        if !v.has_positive_part() {
            warnings.push("V⁺ vanishes on the grid; eigenvalues are +inf".to_string());
        }
        if !h.has_positive_part() {
            warnings.push("h⁺ vanishes on the grid".to_string());
        }
        Ok(Self {
            spec: spec.clone(),
            grid: grid.clone(),
            v: Arc::new(v),
            h: Arc::new(h),
            warnings,
        })
    }

    /// Same grid and `V`, different `h`.
    pub fn with_h(&self, h: &WeightSpec) -> Result<Self> {
        Self::on_grid(&self.spec.with_h(h.clone()), &self.grid)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            spec: self.spec.with_lambda(lambda),
            ..self.clone()
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn v(&self) -> &Arc<WeightField> {
        &self.v
    }

    pub fn h(&self) -> &Arc<WeightField> {
        &self.h
    }

    pub fn p(&self) -> f64 {
        self.spec.p
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.spec.tolerances
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn state(&self, u: Field) -> Result<StateVector> {
        StateVector::new(self, u)
    }

    pub(crate) fn state_from(&self, values: Vec<f64>) -> StateVector {
        StateVector::build(self, Field::from_raw(&self.grid, values))
    }

    pub fn zero_state(&self) -> StateVector {
        self.state_from(vec![0.0; self.grid.len()])
    }
}

/// A candidate `u` with the integrals entering `I_λ` cached.
#[derive(Debug, Clone)]
pub struct StateVector {
    u: Field,
    v: Arc<WeightField>,
    h: Arc<WeightField>,
    p: f64,
    grad_sq: f64,
    v_l2: f64,
    v_minus_l2: f64,
    h_lp: f64,
    h_plus_lp: f64,
}

impl StateVector {
    pub fn new(problem: &Problem, u: Field) -> Result<Self> {
        if !u.grid().conforms(problem.grid()) {
            return Err(LabError::GridMismatch);
        }
        Ok(Self::build(problem, u))
    }

    fn build(problem: &Problem, u: Field) -> Self {
        let grid = problem.grid();
        let m = grid.mass();
        let x = u.values();
        let p = problem.p();
        let v = problem.v().clone();
        let h = problem.h().clone();
        Self {
            grad_sq: grid.dirichlet_energy(x),
            v_l2: integrate_weighted(m, v.values(), x, 2.0),
            v_minus_l2: integrate_weighted(m, v.negative_part(), x, 2.0),
            h_lp: integrate_weighted(m, h.values(), x, p),
            h_plus_lp: integrate_weighted(m, h.positive_part(), x, p),
            u,
            v,
            h,
            p,
        }
    }

    pub fn field(&self) -> &Field {
        &self.u
    }

    pub fn values(&self) -> &[f64] {
        self.u.values()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `‖∇u‖²`
    pub fn grad_sq(&self) -> f64 {
        self.grad_sq
    }

    /// `∫V|u|²`
    pub fn v_l2(&self) -> f64 {
        self.v_l2
    }

    /// `∫V⁻|u|²`
    pub fn v_minus_l2(&self) -> f64 {
        self.v_minus_l2
    }

    /// `∫h|u|^p`
    pub fn h_lp(&self) -> f64 {
        self.h_lp
    }

    /// `∫h⁺|u|^p`
    pub fn h_plus_lp(&self) -> f64 {
        self.h_plus_lp
    }

    /// `‖∇u‖₂ + ‖u‖_{L²(V⁻)} + ‖u‖_{L^p(h⁺)}`
    pub fn e_norm(&self) -> f64 {
        self.grad_sq.sqrt() + self.v_minus_l2.sqrt() + self.h_plus_lp.powf(1.0 / self.p)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.u.is_nonnegative()
    }

    /// State with the same weights at new values.
    pub fn with_values(&self, values: Vec<f64>) -> StateVector {
        let grid = self.u.grid();
        let m = grid.mass();
        let x = &values;
        Self {
            grad_sq: grid.dirichlet_energy(x),
            v_l2: integrate_weighted(m, self.v.values(), x, 2.0),
            v_minus_l2: integrate_weighted(m, self.v.negative_part(), x, 2.0),
            h_lp: integrate_weighted(m, self.h.values(), x, self.p),
            h_plus_lp: integrate_weighted(m, self.h.positive_part(), x, self.p),
            u: Field::from_raw(grid, values),
            v: self.v.clone(),
            h: self.h.clone(),
            p: self.p,
        }
    }

    pub fn scaled(&self, t: f64) -> StateVector {
        self.with_values(self.values().iter().map(|x| t * x).collect())
    }

    pub fn abs(&self) -> StateVector {
        self.with_values(self.values().iter().map(|x| x.abs()).collect())
    }

    pub fn v_field(&self) -> &WeightField {
        &self.v
    }

    pub fn h_field(&self) -> &WeightField {
        &self.h
    }
}

pub fn energy(s: &StateVector, lambda: f64) -> f64 {
    0.5 * s.grad_sq - 0.5 * lambda * s.v_l2 + s.h_lp / s.p
}

/// Nodal residual `r` with `⟨r, φ⟩ = I_λ'(u)φ`:
/// `r = K u − λ M V u + M h |u|^{p−2} u`.
pub fn first_variation(s: &StateVector, lambda: f64) -> Field {
    let grid = s.grid();
    let mut r = grid.apply_stiffness(s.values());
    let pm1 = power_fn(s.p - 1.0);
    for (i, ri) in r.iter_mut().enumerate() {
        let u = s.values()[i];
        let m = grid.mass()[i];
        *ri += m * (-lambda * s.v.values()[i] * u + s.h.values()[i] * u.signum() * pm1(u.abs()));
    }
    Field::from_raw(grid, r)
}

/// Dual norm `sqrt(rᵀK⁻¹r)` of the first variation.
pub fn residual_norm(s: &StateVector, lambda: f64) -> f64 {
    s.grid().dual_norm(first_variation(s, lambda).values())
}

/// Diagonal `−λ M V + (p−1) M h |u|^{p−2}` of the Hessian `K + diag(·)`.
/// `|u|^{p−2}` is taken as 0 where `u = 0`.
pub fn hessian_diagonal(s: &StateVector, lambda: f64) -> Vec<f64> {
    let grid = s.grid();
    let pm2 = power_fn(s.p - 2.0);
    (0..grid.len())
        .map(|i| {
            let u = s.values()[i].abs();
            let w = if u == 0.0 { 0.0 } else { pm2(u) };
            grid.mass()[i] * (-lambda * s.v.values()[i] + (s.p - 1.0) * s.h.values()[i] * w)
        })
        .collect()
}

pub fn hessian(s: &StateVector, lambda: f64) -> BandMatrix {
    let mut k = s.grid().stiffness().clone();
    k.add_diagonal(&hessian_diagonal(s, lambda));
    k
}

/// `‖∇φ‖² − λ∫Vφ² + (p−1)∫h|u|^{p−2}φ²`.
pub fn second_variation(s: &StateVector, lambda: f64, phi: &Field) -> Result<f64> {
    s.field().check_conforms(phi)?;
    let x = phi.values();
    let diag = hessian_diagonal(s, lambda);
    let quad: f64 = diag.iter().zip(x).map(|(d, y)| d * y * y).sum();
    Ok(s.grid().dirichlet_energy(x) + quad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayleighQuotient {
    Value(f64),
    /// `∫V|u|² ≤ 0`
    Inadmissible,
}

impl RayleighQuotient {
    pub fn value(self) -> Option<f64> {
        match self {
            RayleighQuotient::Value(v) => Some(v),
            RayleighQuotient::Inadmissible => None,
        }
    }
}

/// `‖∇u‖² / ∫V|u|²`.
pub fn rayleigh_quotient(u: &Field, v: &WeightField) -> Result<RayleighQuotient> {
    if !u.grid().conforms(v.grid()) {
        return Err(LabError::GridMismatch);
    }
    if u.is_zero() {
        return Err(LabError::invalid("Rayleigh quotient of the zero field"));
    }
    let denom = integrate_weighted(u.grid().mass(), v.values(), u.values(), 2.0);
    if denom > 0.0 {
        Ok(RayleighQuotient::Value(u.grid().dirichlet_energy(u.values()) / denom))
    } else {
        Ok(RayleighQuotient::Inadmissible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub residual_norm: f64,
    /// Direction name and `(I''(u)φ, φ)`.
    pub second_variation: Option<(String, f64)>,
}

pub fn energy_report(
    s: &StateVector,
    lambda: f64,
    direction: Option<(&str, &Field)>,
) -> Result<EnergyReport> {
    let second_variation = match direction {
        Some((name, phi)) => Some((name.to_string(), second_variation(s, lambda, phi)?)),
        None => None,
    };
    Ok(EnergyReport {
        energy: energy(s, lambda),
        residual_norm: residual_norm(s, lambda),
        second_variation,
    })
}
