//! Principal eigenvalue `λ1(Ω,V) = inf{‖∇u‖² : ∫V|u|² = 1, supp u ⊂ Ω}` for a
//! sign-changing weight `V`, optionally restricted to a region mask.
//!
//! With `D = diag(w V)`, the shifted operator `K − sD` is positive definite
//! exactly for `0 ≤ s < λ1`, so `λ1` is bracketed by Cholesky success. The
//! bracket is closed from above by Rayleigh quotients of shifted inverse
//! iterates, which converge to `e₁` because `(K − sD)⁻¹D` has `1/(λ1 − s)` as
//! its dominant eigenvalue once `s` is close to `λ1`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::functional::ProblemSpec;
use crate::grid::{Field, Grid, GridKind};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::weights::{sample_weight, MaskTag, RegionMask, WeightField};

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// `λ1`, or `+∞` when `V⁺` vanishes on the admissible region.
    pub value: f64,
    /// Nonnegative, `∫V e₁² = 1`, zero off the mask. `None` when the value is infinite.
    pub eigenfunction: Option<Field>,
    pub mask: Option<MaskTag>,
    /// Cholesky factorizations used.
    pub iterations: usize,
    /// Dual norm of `K e₁ − λ1 D e₁` after each inverse-iteration sweep.
    pub residual_history: Vec<f64>,
    pub residual: f64,
    /// `min e₁` over interior nodes of the region is positive.
    pub interior_positive: bool,
    pub diagnostics: Vec<String>,
}

impl EigenResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    fn infinite(mask: Option<MaskTag>, reason: &str) -> Self {
        Self {
            value: f64::INFINITY,
            eigenfunction: None,
            mask,
            iterations: 0,
            residual_history: Vec::new(),
            residual: 0.0,
            interior_positive: false,
            diagnostics: vec![reason.to_string()],
        }
    }
}

const MAX_FACTORIZATIONS: usize = 400;
const BRACKET_WIDTH: f64 = 1e-6;

struct Shifted<'a> {
    grid: &'a Grid,
    active: Vec<bool>,
    d: Vec<f64>,
}

impl Shifted<'_> {
    fn matrix(&self, s: f64) -> BandMatrix {
        let mut a: BandMatrix = self.grid.stiffness().clone();
        let diag: Vec<f64> = self.d.iter().map(|d| -s * d).collect();
        a.add_diagonal(&diag);
        for (i, &on) in self.active.iter().enumerate() {
            if !on {
                a.pin(i);
            }
        }
        a
    }

    fn factor(&self, s: f64) -> Option<BandCholesky> {
        self.matrix(s).cholesky()
    }

    fn d_norm(&self, x: &[f64]) -> f64 {
        self.d.iter().zip(x).map(|(d, v)| d * v * v).sum()
    }

    fn rayleigh(&self, x: &[f64]) -> Option<f64> {
        let den = self.d_norm(x);
        (den > 0.0).then(|| self.grid.dirichlet_energy(x) / den)
    }

    /// `x ← (K − sD)⁻¹ D x`, scaled to unit max-norm.
    fn inverse_step(&self, chol: &BandCholesky, x: &mut [f64]) {
        for (xi, d) in x.iter_mut().zip(&self.d) {
            *xi *= d;
        }
        chol.solve_in_place(x);
        let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            for xi in x.iter_mut() {
                *xi /= m;
            }
        }
    }

    fn residual(&self, x: &[f64], value: f64) -> f64 {
        let mut r = self.grid.apply_stiffness(x);
        for (i, ri) in r.iter_mut().enumerate() {
            if self.active[i] {
                *ri -= value * self.d[i] * x[i];
            } else {
                *ri = 0.0;
            }
        }
        self.grid.dual_norm(&r)
    }
}

/// `λ1(Ω, V)` on the grid, or on the nodes of `mask` when given.
pub fn principal_eigenpair(
    grid: &Arc<Grid>,
    v: &WeightField,
    mask: Option<&RegionMask>,
) -> Result<EigenResult> {
    principal_eigenpair_tol(grid, v, mask, 1e-10)
}

pub fn principal_eigenpair_tol(
    grid: &Arc<Grid>,
    v: &WeightField,
    mask: Option<&RegionMask>,
    tol: f64,
) -> Result<EigenResult> {
    if !grid.conforms(v.grid()) {
        return Err(LabError::GridMismatch);
    }
    let n = grid.len();
    let active: Vec<bool> = match mask {
        Some(m) => {
            if m.nodes().len() != n {
                return Err(LabError::GridMismatch);
            }
            m.nodes().to_vec()
        }
        None => vec![true; n],
    };
    let tag = mask.map(|m| m.tag);
    let d: Vec<f64> = (0..n)
        .map(|i| if active[i] { grid.mass()[i] * v.values()[i] } else { 0.0 })
        .collect();
    if !d.iter().any(|&x| x > 0.0) {
        return Ok(EigenResult::infinite(tag, "V⁺ vanishes on the admissible region"));
    }
    let op = Shifted { grid, active, d };

    // nodal hat functions give an upper bound
    let k = grid.stiffness();
    let mut hi = (0..n)
        .filter(|&i| op.d[i] > 0.0)
        .map(|i| k.get(i, i) / op.d[i])
        .fold(f64::INFINITY, f64::min);
    let mut lo = 0.0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| if op.active[i] { 1.0 } else { 0.0 })
        .collect();
    let mut factorizations = 0;
    let mut best_lo_factor: Option<BandCholesky> = None;

    while hi - lo > BRACKET_WIDTH * hi {
        if factorizations >= MAX_FACTORIZATIONS {
            return Err(LabError::failure("eigen", "shift bracketing did not converge"));
        }
        let s = if lo == 0.0 { 0.5 * hi } else { lo + 0.5 * (hi - lo) };
        factorizations += 1;
        match op.factor(s) {
            Some(chol) => {
                lo = s;
                for _ in 0..2 {
                    op.inverse_step(&chol, &mut x);
                }
                if let Some(rq) = op.rayleigh(&x) {
                    hi = hi.min(rq);
                }
                best_lo_factor = Some(chol);
            }
            None => hi = s,
        }
    }
    let chol = match best_lo_factor {
        Some(c) => c,
        None => {
            factorizations += 1;
            op.factor(lo)
                .ok_or_else(|| LabError::failure("eigen", "unshifted operator not positive definite"))?
        }
    };

    let mut value = op.rayleigh(&x).unwrap_or(hi);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..500 {
        op.inverse_step(&chol, &mut x);
        let Some(rq) = op.rayleigh(&x) else {
            continue;
        };
        let change = (rq - value).abs();
        value = rq;
        let norm = op.d_norm(&x).sqrt();
        let scaled: Vec<f64> = x.iter().map(|v| v / norm).collect();
        let res = op.residual(&scaled, value);
        history.push(res);
        if change <= tol * value && res <= tol.sqrt() * value.max(1.0) * 1e-2 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LabError::failure(
            "eigen",
            format!("inverse iteration stalled at λ = {value}"),
        ));
    }

    let mut e: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let norm = op.d_norm(&e);
    if !(norm > 0.0) {
        return Err(LabError::failure("eigen", "eigenvector left the admissible cone"));
    }
    let scale = 1.0 / norm.sqrt();
    for v in e.iter_mut() {
        *v *= scale;
    }
    let value = op.rayleigh(&e).expect("normalized");
    let residual = op.residual(&e, value);
    let mut diagnostics = Vec::new();
    let v_plus: f64 = (0..n)
        .map(|i| if op.active[i] { grid.mass()[i] * v.positive_part()[i] * e[i] * e[i] } else { 0.0 })
        .sum();
    if v_plus > 1e3 {
        diagnostics.push(format!(
            "normalization reached only at ∫V⁺e₁² = {v_plus:.3e}; the infimum may not be attained in the limit"
        ));
    }
    let interior_positive = interior_positive(grid, &op.active, &e);
    Ok(EigenResult {
        value,
        eigenfunction: Some(Field::from_raw(grid, e)),
        mask: tag,
        iterations: factorizations,
        residual_history: history,
        residual,
        interior_positive,
        diagnostics,
    })
}

/// Minimum of `u` over region nodes all of whose neighbours are in the region is positive.
pub(crate) fn interior_positive(grid: &Grid, active: &[bool], u: &[f64]) -> bool {
    let mut interior = active.to_vec();
    for (a, b, _) in grid.edges() {
        if !active[a] || !active[b] {
            interior[a] = false;
            interior[b] = false;
        }
    }
    for (i, &c) in grid.boundary_coupling().iter().enumerate() {
        if c > 0.0 {
            interior[i] = false;
        }
    }
    let mut any = false;
    for i in 0..u.len() {
        if interior[i] {
            any = true;
            if !(u[i] > 0.0) {
                return false;
            }
        }
    }
    any
}

/// `λ1(B_R, V)` for each `R`, solved concurrently.
pub fn eigen_convergence_sweep(spec: &ProblemSpec, r_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if spec.grid.build()?.kind() != GridKind::Radial {
        return Err(LabError::invalid("eigen_convergence_sweep needs a radial grid"));
    }
    r_values
        .par_iter()
        .map(|&r| {
            let grid = spec.grid.with_extent(r).build()?;
            let v = sample_weight(&spec.v, &grid)?;
            let e = principal_eigenpair_tol(&grid, &v, None, spec.tolerances.eigen)?;
            Ok((r, e.value))
        })
        .collect()
}

/// Power-law extrapolation `λ1(R) ≈ c R^k` through the last two sweep points.
pub fn extrapolate_sweep(sweep: &[(f64, f64)], r: f64) -> Option<f64> {
    let [.., (r0, l0), (r1, l1)] = sweep else {
        return None;
    };
    if !(l0 > &0.0 && l1 > &0.0) || r0 == r1 {
        return None;
    }
    let k = (l1 / l0).ln() / (r1 / r0).ln();
    Some(l1 * (r / r1).powf(k))
}

/// `‖∇φ‖²` for `∫Vφ² = 1` after normalization; `None` when `∫Vφ² ≤ 0`.
pub fn normalized_dirichlet_energy(phi: &Field, v: &WeightField) -> Option<f64> {
    let m = phi.grid().mass();
    let den: f64 = (0..phi.len())
        .map(|i| m[i] * v.values()[i] * phi.values()[i] * phi.values()[i])
        .sum();
    (den > 0.0).then(|| phi.grid().dirichlet_energy(phi.values()) / den)
}
