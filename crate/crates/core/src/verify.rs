//! Self-checks: a manufactured solution with known `u*` and finite-difference
//! checks of the first and second variation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::functional::{energy, first_variation, residual_norm, second_variation, Problem, ProblemSpec, Tolerances};
use crate::grid::{build_radial_grid, Field, GridKind, GridSpec};
use crate::linalg::dot;
use crate::weights::{WeightComponent, WeightSpec};

/// `u* = (1 − r²)²` on the unit ball of `ℝ³`.
pub fn manufactured_u(r: f64) -> f64 {
    let t = 1.0 - r * r;
    if t > 0.0 {
        t * t
    } else {
        0.0
    }
}

/// `h = (Δu* + λV u*)/u*^{p−1}` for `V ≡ 1`, `λ = 1`, `p = 4`, with
/// `Δu* = 20r² − 12`.
pub fn manufactured_h(r: f64) -> f64 {
    let u = manufactured_u(r);
    (20.0 * r * r - 12.0 + u) / u.powi(3)
}

/// Problem whose exact solution at `λ = 1` is [`manufactured_u`]; `h` is
/// tabulated at the unknowns of the `nodes`-cell radial grid and is `+1`
/// beyond the ball.
pub fn manufactured_spec(nodes: usize) -> Result<ProblemSpec> {
    let grid = build_radial_grid(3, 1.0, nodes, 1.0)?;
    let radii = grid.dof_radius().to_vec();
    let values = radii.iter().map(|&r| manufactured_h(r)).collect();
    Ok(ProblemSpec {
        grid: GridSpec::Radial {
            dim: 3,
            r_max: 1.0,
            nodes,
            stretch: 1.0,
        },
        p: 4.0,
        lambda: 1.0,
        v: WeightSpec::constant(1.0),
        h: WeightSpec::new(vec![WeightComponent::Tabulated {
            radii,
            values,
            outside: 1.0,
        }]),
        tolerances: Tolerances::default(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ManufacturedReport {
    pub nodes: usize,
    /// Dual norm of `I_1'(u*)`.
    pub residual: f64,
    /// `‖∇u*‖₂`
    pub u_norm: f64,
    pub relative: f64,
}

pub fn check_manufactured(nodes: usize) -> Result<ManufacturedReport> {
    let pr = manufactured_spec(nodes)?.discretize()?;
    let u = Field::from_fn(pr.grid(), |_, r| manufactured_u(r));
    let s = pr.state(u)?;
    let residual = residual_norm(&s, 1.0);
    let u_norm = s.grad_sq().sqrt();
    Ok(ManufacturedReport {
        nodes,
        residual,
        u_norm,
        relative: residual / u_norm,
    })
}

/// Manufactured residuals at `nodes`, `2·nodes`, … and the observed orders
/// `log₂(res_k / res_{k+1})`.
pub fn manufactured_refinement(nodes: usize, levels: usize) -> Result<(Vec<ManufacturedReport>, Vec<f64>)> {
    let reports: Vec<ManufacturedReport> = (0..levels)
        .map(|k| check_manufactured(nodes << k))
        .collect::<Result<_>>()?;
    let orders = reports
        .windows(2)
        .map(|w| (w[0].residual / w[1].residual).log2())
        .collect();
    Ok((reports, orders))
}

#[derive(Debug, Clone, Serialize)]
pub struct FdCheck {
    /// `⟨I'(u), φ⟩` or `(I''(u)φ, φ)`
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdSuite {
    pub lambda: f64,
    pub epsilon: f64,
    pub gradient: Vec<FdCheck>,
    pub hessian: Vec<FdCheck>,
}

impl FdSuite {
    pub fn worst(&self) -> f64 {
        self.gradient
            .iter()
            .chain(&self.hessian)
            .map(|c| c.relative_error)
            .fold(0.0, f64::max)
    }
}

/// Random field `Σ a_k (1 − s_k²)²` of a few bumps with amplitudes in `amp`.
fn random_bumps(problem: &Problem, rng: &mut ChaCha8Rng, amp: (f64, f64)) -> Field {
    let grid = problem.grid();
    let r_max = grid.extent();
    let radial = grid.kind() == GridKind::Radial;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                if radial { rng.gen_range(0.0..r_max) } else { rng.gen_range(-r_max..r_max) },
                rng.gen_range(-r_max..r_max),
                rng.gen_range(0.3 * r_max..r_max),
                rng.gen_range(amp.0..amp.1),
            )
        })
        .collect();
    Field::from_fn(grid, |pt, r| {
        bumps
            .iter()
            .map(|&(c0, c1, w, a)| {
                let d = if radial {
                    (r - c0).abs()
                } else {
                    ((pt[0] - c0).powi(2) + (pt[1] - c1).powi(2)).sqrt()
                };
                let s = d / w;
                if s < 1.0 {
                    a * (1.0 - s * s).powi(2)
                } else {
                    0.0
                }
            })
            .sum()
    })
}

/// Central differences of `I_λ` against [`first_variation`] and
/// [`second_variation`] over `pairs` random `(u, φ)` with `u > 0` and
/// `u ± εφ ≥ 0`.
pub fn fd_suite(problem: &Problem, lambda: f64, pairs: usize, seed: u64) -> Result<FdSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-3;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    let mut gradient = Vec::with_capacity(pairs);
    let mut hessian = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let u = random_bumps(problem, &mut rng, (0.5, 2.0));
        let u = Field::from_values(problem.grid(), u.values().iter().map(|x| x + 0.05).collect())?;
        let phi = random_bumps(problem, &mut rng, (-1.0, 1.0));
        let s = problem.state(u.clone())?;
        let shifted = |t: f64| -> Result<f64> {
            Ok(energy(&problem.state(u.add_scaled(t, &phi)?)?, lambda))
        };
        let (ep, e0, em) = (shifted(eps)?, energy(&s, lambda), shifted(-eps)?);
        let g = dot(first_variation(&s, lambda).values(), phi.values());
        let gfd = (ep - em) / (2.0 * eps);
        gradient.push(FdCheck {
            analytic: g,
            finite_difference: gfd,
            relative_error: rel(g, gfd),
        });
        let h = second_variation(&s, lambda, &phi)?;
        let hfd = (ep - 2.0 * e0 + em) / (eps * eps);
        hessian.push(FdCheck {
            analytic: h,
            finite_difference: hfd,
            relative_error: rel(h, hfd),
        });
    }
    Ok(FdSuite {
        lambda,
        epsilon: eps,
        gradient,
        hessian,
    })
}
