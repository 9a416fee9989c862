//! Solution branch `λ ↦ u_λ`, blow-up rate at the right end of the window,
//! the `μ`-sweep of `λ1(Ω,V,h_μ)`, bracketing of `λ*` and nonexistence
//! certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{interior_positive, principal_eigenpair_tol, EigenResult};
use crate::error::{LabError, Result};
use crate::functional::{energy, residual_norm, Problem, ProblemSpec, StateVector};
use crate::grid::{integrate_weighted, Field, GridKind};
use crate::minimize::{lambda1_constrained, local_minimize_with, MinimizeOptions, MinimizeReport};
use crate::weights::{perturb_h, MaskTag};

/// `(λ1(Ω,V), λ1(Ω,V,h), λ1(Ω^{−0},V))` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub lambda1_v: f64,
    pub lambda1_vh: f64,
    pub lambda1_minus_zero: f64,
}

impl Window {
    /// `J = (λ1(Ω,V), λ1(Ω^{−0},V))`.
    pub fn branch_interval(&self) -> (f64, f64) {
        (self.lambda1_v, self.lambda1_minus_zero)
    }

    pub fn branch_width(&self) -> f64 {
        self.lambda1_minus_zero - self.lambda1_v
    }

    /// `λ1(Ω,V) < λ1(Ω,V,h)`: the existence window of local minimizers is non-empty.
    pub fn existence_window_open(&self) -> bool {
        self.lambda1_v < self.lambda1_vh
    }
}

pub fn compute_window(problem: &Problem) -> Result<Window> {
    let c = lambda1_constrained(problem)?;
    Ok(Window {
        lambda1_v: c.lambda1_v,
        lambda1_vh: c.value,
        lambda1_minus_zero: c.lambda1_minus_zero,
    })
}

/// The window at `R_max` and at `2 R_max` (node count doubled with it).
#[derive(Debug, Clone, Serialize)]
pub struct WindowStudy {
    pub r_max: f64,
    pub window: Window,
    pub doubled_r_max: f64,
    pub doubled: Window,
    /// `|w(2R) − w(R)| / |w(R)|` per entry, `NaN` for infinite entries.
    pub relative_change: [f64; 3],
}

pub fn window_rmax_study(spec: &ProblemSpec) -> Result<WindowStudy> {
    let r = spec.grid.extent();
    let doubled_grid = match &spec.grid {
        crate::grid::GridSpec::Radial { dim, r_max, nodes, stretch } => crate::grid::GridSpec::Radial {
            dim: *dim,
            r_max: 2.0 * r_max,
            nodes: 2 * nodes,
            stretch: *stretch,
        },
        crate::grid::GridSpec::Box { half_width, nodes_per_axis } => crate::grid::GridSpec::Box {
            half_width: 2.0 * half_width,
            nodes_per_axis: 2 * nodes_per_axis,
        },
    };
    let (a, b) = rayon::join(
        || spec.discretize().and_then(|p| compute_window(&p)),
        || spec.with_grid(doubled_grid).discretize().and_then(|p| compute_window(&p)),
    );
    let (a, b) = (a?, b?);
    let rel = |x: f64, y: f64| {
        if x.is_finite() && y.is_finite() {
            (y - x).abs() / x.abs()
        } else {
            f64::NAN
        }
    };
    Ok(WindowStudy {
        r_max: r,
        window: a,
        doubled_r_max: 2.0 * r,
        doubled: b,
        relative_change: [
            rel(a.lambda1_v, b.lambda1_v),
            rel(a.lambda1_vh, b.lambda1_vh),
            rel(a.lambda1_minus_zero, b.lambda1_minus_zero),
        ],
    })
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub lambda: f64,
    pub state: StateVector,
    /// `σ(λ) = I_λ(u_λ)`
    pub sigma: f64,
    pub residual: f64,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

impl BranchPoint {
    pub fn e_norm(&self) -> f64 {
        self.state.e_norm()
    }

    /// `‖∇u‖₂`
    pub fn grad_norm(&self) -> f64 {
        self.state.grad_sq().sqrt()
    }

    /// `(∫V⁺u²)^{1/2}`
    pub fn vp_norm(&self) -> f64 {
        (self.state.v_l2() + self.state.v_minus_l2()).max(0.0).sqrt()
    }

    /// `(∫h⁺|u|^p)^{1/p}`
    pub fn hp_norm(&self) -> f64 {
        self.state.h_plus_lp().powf(1.0 / self.state.p())
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    /// Sorted by `λ`.
    pub points: Vec<BranchPoint>,
    pub window: Window,
    pub v_nonnegative: bool,
    pub h_nonnegative: bool,
    pub warnings: Vec<String>,
    /// Set when continuation stopped at an interior `λ`.
    pub failure: Option<String>,
}

impl Branch {
    /// Largest violation of `u_λ ≥ u_μ` over stored pairs `μ < λ` (0 when ordered).
    pub fn order_violation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                let (lo, hi) = (self.points[i].state.values(), self.points[j].state.values());
                for (a, b) in lo.iter().zip(hi) {
                    worst = worst.max(a - b);
                }
            }
        }
        worst
    }

    /// Largest increase of `σ` along increasing `λ` (0 when non-increasing).
    pub fn sigma_increase(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].sigma - w[0].sigma)
            .fold(0.0, f64::max)
    }
}

/// Continues `u_λ` along `lambdas`, warm-starting each solve from the previous one.
pub fn continue_branch(problem: &Problem, lambdas: &[f64]) -> Result<Branch> {
    let window = compute_window(problem)?;
    let eig = principal_eigenpair_tol(problem.grid(), problem.v(), None, problem.tolerances().eigen)?;
    continue_branch_in(problem, lambdas, window, &eig)
}

pub fn continue_branch_in(problem: &Problem, lambdas: &[f64], window: Window, eig: &EigenResult) -> Result<Branch> {
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(LabError::invalid("λ values must be finite"));
    }
    let (lo, hi) = window.branch_interval();
    let mut warnings = Vec::new();
    let mut ls: Vec<f64> = Vec::new();
    for &l in lambdas {
        if l > lo && l < hi {
            ls.push(l);
        } else {
            warnings.push(format!("λ = {l} outside J = ({lo}, {hi}); dropped"));
        }
    }
    ls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ls.dedup();
    let mut branch = Branch {
        points: Vec::new(),
        window,
        v_nonnegative: !problem.v().has_negative_part(),
        h_nonnegative: !problem.h().has_negative_part(),
        warnings,
        failure: None,
    };
    let mut warm: Option<Field> = None;
    for l in ls {
        let rep = local_minimize_with(
            problem,
            l,
            &MinimizeOptions {
                init: warm.clone(),
                eigen: Some(eig.clone()),
                ..Default::default()
            },
        )?;
        match rep.solution() {
            Some(s) if s.is_nonnegative() => {
                warm = Some(s.field().clone());
                branch.points.push(BranchPoint {
                    lambda: l,
                    state: s.clone(),
                    sigma: rep.sigma,
                    residual: rep.residual,
                    iterations: rep.iterations,
                    diagnostics: rep.diagnostics.clone(),
                });
            }
            _ => {
                branch.failure = Some(format!(
                    "no converged local minimizer at λ = {l}: {}",
                    rep.diagnostics.join("; ")
                ));
                break;
            }
        }
    }
    Ok(branch)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupCheck {
    pub lambda: f64,
    /// `(λ − μ) C / (λ1(Ω^{−0},V) − λ)`
    pub coefficient: f64,
    /// `min (u_λ − coefficient·e₁ − u_μ)` over `Ω^{−0}` nodes.
    pub min_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupFit {
    /// Slope of `log ‖u_λ‖_E` against `log(λ1(Ω^{−0},V) − λ)`.
    pub exponent: f64,
    pub constant: f64,
    pub points_used: usize,
    pub lambda1_minus_zero: f64,
    /// Base point of the pointwise bound.
    pub mu: f64,
    /// Largest `C` with `u_μ ≥ C e₁` on `Ω^{−0}`.
    pub calibration: f64,
    pub checks: Vec<BlowupCheck>,
}

/// `count` values `λ1(Ω^{−0},V) − ½|J|·0.6^k` accumulating at the right end of `J`.
pub fn blowup_lambdas(window: &Window, count: usize) -> Vec<f64> {
    let half = 0.5 * window.branch_width();
    (0..count)
        .map(|k| window.lambda1_minus_zero - half * 0.6_f64.powi(k as i32))
        .collect()
}

/// Fits the growth of `‖u_λ‖_E` near `λ1(Ω^{−0},V)` and checks the pointwise
/// lower bound `u_λ ≥ (λ−μ)C/(λ1(Ω^{−0},V)−λ)·e₁ + u_μ`.
pub fn fit_blowup(branch: &Branch, e1: &EigenResult) -> Result<BlowupFit> {
    if !(branch.v_nonnegative && branch.h_nonnegative) {
        return Err(LabError::refused("blow-up fit needs V ≥ 0 and h ≥ 0"));
    }
    if e1.mask != Some(MaskTag::MinusZero) {
        return Err(LabError::refused("e₁ must be the principal eigenfunction of Ω^{−0}"));
    }
    let Some(e) = e1.eigenfunction.as_ref().filter(|_| e1.is_finite()) else {
        return Err(LabError::refused("λ1(Ω^{−0},V) is infinite"));
    };
    let l1 = e1.value;
    let (lo, _) = branch.window.branch_interval();
    let cut = l1 - 0.2 * (l1 - lo);
    let tail: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| p.lambda >= cut && p.lambda < l1)
        .collect();
    if tail.len() < 5 {
        return Err(LabError::refused(format!(
            "{} branch points in the last 20% of the window, need 5",
            tail.len()
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|p| (l1 - p.lambda).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.e_norm().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let constant = (my - exponent * mx).exp();

    let base = &branch.points[0];
    if !e.grid().conforms(base.state.grid()) {
        return Err(LabError::GridMismatch);
    }
    let ev = e.values();
    let calibration = base
        .state
        .values()
        .iter()
        .zip(ev)
        .filter(|(_, &w)| w > 0.0)
        .map(|(u, w)| u / w)
        .fold(f64::INFINITY, f64::min);
    let region: Vec<bool> = ev.iter().map(|&w| w > 0.0).collect();
    let checks = branch.points[1..]
        .iter()
        .filter(|p| p.lambda < l1)
        .map(|p| {
            let coefficient = (p.lambda - base.lambda) * calibration / (l1 - p.lambda);
            let min_margin = p
                .state
                .values()
                .iter()
                .zip(base.state.values())
                .zip(ev)
                .zip(&region)
                .filter(|(_, &r)| r)
                .map(|(((u, um), w), _)| u - coefficient * w - um)
                .fold(f64::INFINITY, f64::min);
            BlowupCheck {
                lambda: p.lambda,
                coefficient,
                min_margin,
            }
        })
        .collect();
    Ok(BlowupFit {
        exponent,
        constant,
        points_used: tail.len(),
        lambda1_minus_zero: l1,
        mu: base.lambda,
        calibration,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MuSweep {
    /// `(μ, λ1(Ω,V,h_μ))`
    pub values: Vec<(f64, f64)>,
    pub target: f64,
    pub lambda1_v: f64,
    /// Largest decrease between consecutive entries.
    pub max_decrease: f64,
    /// Largest excess over `λ1(Ω^{−0},V)`.
    pub max_excess: f64,
    /// `(target − last)/target`
    pub final_gap: f64,
}

impl MuSweep {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.max_decrease <= tol
    }
}

/// `λ1(Ω,V,h_μ)` for each `μ`, with `h_μ = μh⁺ − h⁻`, solved concurrently.
pub fn sweep_mu(problem: &Problem, mus: &[f64]) -> Result<MuSweep> {
    if mus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::invalid("μ values must be strictly increasing"));
    }
    let base = lambda1_constrained(problem)?;
    if !base.value.is_finite() {
        return Err(LabError::refused("λ1(Ω,V,h) is infinite at μ = 1"));
    }
    let h = problem.spec().h.clone();
    let values: Vec<(f64, f64)> = mus
        .par_iter()
        .map(|&mu| -> Result<(f64, f64)> {
            if mu == 1.0 {
                return Ok((mu, base.value));
            }
            let pr = problem.with_h(&perturb_h(&h, mu)?)?;
            Ok((mu, lambda1_constrained(&pr)?.value))
        })
        .collect::<Result<_>>()?;
    let target = base.lambda1_minus_zero;
    let max_decrease = values.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max);
    let max_excess = values.iter().map(|v| v.1 - target).fold(f64::NEG_INFINITY, f64::max);
    let last = values.last().map_or(f64::NAN, |v| v.1);
    Ok(MuSweep {
        values,
        target,
        lambda1_v: base.lambda1_v,
        max_decrease,
        max_excess,
        final_gap: (target - last) / target,
    })
}

#[derive(Debug, Clone)]
pub struct LambdaStarReport {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Solution at `lambda_lo`.
    pub solution: Option<MinimizeReport>,
    /// Why the solve at `lambda_hi` did not count as a solution.
    pub failure_at_hi: Vec<String>,
    pub window: Window,
    pub solves: usize,
    /// `ℝ^N ∖ supp h⁺` connected (on the grid, the exterior of the ball counted).
    pub complement_connected: bool,
    /// `V ≥ 0` and `∫h⁻ e₁(Ω^{−0},V)^p`.
    pub v_nonnegative: bool,
    pub h_minus_e1_integral: f64,
}

/// Outcome of one attempt to solve at `λ`.
fn solvable(problem: &Problem, lambda: f64, warm: Option<&Field>, eig: &EigenResult) -> Result<(bool, MinimizeReport)> {
    let rep = local_minimize_with(
        problem,
        lambda,
        &MinimizeOptions {
            init: warm.cloned(),
            eigen: Some(eig.clone()),
            ..Default::default()
        },
    )?;
    let ok = match rep.solution() {
        Some(s) => {
            let e = energy(s, lambda);
            s.is_nonnegative() && e < 0.0 && smoothed_interior_positive(problem, s)
        }
        None => false,
    };
    Ok((ok, rep))
}

/// Interior positivity after one Jacobi sweep `u_i ← Σ_j k_ij u_j / k_ii`
/// of the discrete Laplacian over grid edges.
fn smoothed_interior_positive(problem: &Problem, s: &StateVector) -> bool {
    let grid = problem.grid();
    let u = s.values();
    let k = grid.stiffness();
    let mut sm = vec![0.0; u.len()];
    for (a, b, c) in grid.edges() {
        sm[a] += c * u[b] / k.get(a, a);
        sm[b] += c * u[a] / k.get(b, b);
    }
    interior_positive(grid, &vec![true; u.len()], &sm)
}

/// Bisection for `λ* = sup{λ : a positive solution exists}` on
/// `[λ1(Ω,V,h), λ1(Ω^{−0},V)]`.
pub fn estimate_lambda_star(problem: &Problem, resolution: Option<f64>) -> Result<LambdaStarReport> {
    let window = compute_window(problem)?;
    if !window.existence_window_open() {
        return Err(LabError::refused(format!(
            "empty window: λ1(Ω,V) = {} ≥ λ1(Ω,V,h) = {}",
            window.lambda1_v, window.lambda1_vh
        )));
    }
    if !window.lambda1_minus_zero.is_finite() {
        return Err(LabError::refused("λ1(Ω^{−0},V) is infinite"));
    }
    let res = resolution.unwrap_or(1e-3 * window.branch_width());
    if !(res > 0.0) {
        return Err(LabError::invalid("resolution must be positive"));
    }
    let tols = problem.tolerances();
    let eig = principal_eigenpair_tol(problem.grid(), problem.v(), None, tols.eigen)?;
    let mz = principal_eigenpair_tol(
        problem.grid(),
        problem.v(),
        Some(problem.h().minus_zero_mask()),
        tols.eigen,
    )?;
    let p = problem.p();
    let h_minus_e1_integral = mz.eigenfunction.as_ref().map_or(0.0, |e| {
        integrate_weighted(problem.grid().mass(), problem.h().negative_part(), e.values(), p)
    });

    // left end: λ1(Ω,V,h), or the middle of J when h ≥ 0 (then λ1(Ω,V,h) = λ1(Ω^{−0},V))
    let mut lo = if window.lambda1_vh < window.lambda1_minus_zero {
        window.lambda1_vh
    } else {
        0.5 * (window.lambda1_v + window.lambda1_minus_zero)
    };
    let mut hi = window.lambda1_minus_zero;
    let (ok, rep) = solvable(problem, lo, None, &eig)?;
    let mut solves = 1;
    if !ok {
        return Err(LabError::failure(
            "estimate_lambda_star",
            format!(
                "no positive solution at λ = {lo} (left end of the bracket): {}",
                rep.diagnostics.join("; ")
            ),
        ));
    }
    let mut best = rep;
    let mut failure_at_hi = vec![format!(
        "λ ≥ λ1(Ω^{{−0}},V) = {hi}: no positive solution by the threshold certificate"
    )];
    while hi - lo > res {
        let mid = 0.5 * (lo + hi);
        let warm = best.state.as_ref().map(|s| s.field().clone());
        let (ok, rep) = solvable(problem, mid, warm.as_ref(), &eig)?;
        solves += 1;
        if ok {
            lo = mid;
            best = rep;
        } else {
            hi = mid;
            let mut why = rep.diagnostics.clone();
            if rep.converged {
                why.push(format!("converged with σ = {:.3e} (needs < 0, positive interior)", rep.sigma));
            }
            failure_at_hi = why;
        }
    }
    Ok(LambdaStarReport {
        lambda_lo: lo,
        lambda_hi: hi,
        solution: Some(best),
        failure_at_hi,
        window,
        solves,
        complement_connected: complement_of_h_plus_connected(problem),
        v_nonnegative: !problem.v().has_negative_part(),
        h_minus_e1_integral,
    })
}

/// Connectivity of the grid nodes with `h ≤ 0`; nodes next to the Dirichlet
/// boundary are joined through the exterior when `h ≤ 0` is assumed there.
fn complement_of_h_plus_connected(problem: &Problem) -> bool {
    let grid = problem.grid();
    let h = problem.h().values();
    let n = h.len();
    let outside = n;
    let mut adj = vec![Vec::new(); n + 1];
    for (a, b, _) in grid.edges() {
        if h[a] <= 0.0 && h[b] <= 0.0 {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let ext_free = problem
        .spec()
        .h
        .eval_radial(grid.extent() * 1.5, grid.dim())
        <= 0.0;
    if ext_free {
        for (i, &c) in grid.boundary_coupling().iter().enumerate() {
            if c > 0.0 && h[i] <= 0.0 {
                adj[i].push(outside);
                adj[outside].push(i);
            }
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&i| h[i] <= 0.0).collect();
    let Some(&start) = nodes.first() else { return true };
    let mut seen = vec![false; n + 1];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    nodes.iter().all(|&i| seen[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    NonexistenceAboveThreshold,
    CandidateViolation,
    None,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub lambda: f64,
    /// Test function; `None` for the `None` kind.
    pub phi: Option<Field>,
    /// `∫kφ²` with `k = λV` (threshold) or `k = λV − h u^{p−2}` (candidate).
    pub lhs: f64,
    /// `‖∇φ‖²`
    pub rhs: f64,
    pub checks: usize,
    /// Largest `(lhs − rhs)/rhs` seen.
    pub worst_ratio: f64,
    pub candidate: Option<StateVector>,
}

impl Certificate {
    /// Recomputes both sides from the stored fields and the weights.
    pub fn verify(&self, problem: &Problem) -> bool {
        let Some(phi) = &self.phi else {
            return self.kind == CertificateKind::None;
        };
        let grid = problem.grid();
        if !phi.grid().conforms(grid) {
            return false;
        }
        let x = phi.values();
        let rhs = grid.dirichlet_energy(x);
        match self.kind {
            CertificateKind::NonexistenceAboveThreshold => {
                let inside = problem.h().minus_zero_mask().nodes();
                let supported = x.iter().zip(inside).all(|(v, &m)| *v == 0.0 || m);
                let lhs = self.lambda * integrate_weighted(grid.mass(), problem.v().values(), x, 2.0);
                supported && lhs > rhs
            }
            CertificateKind::CandidateViolation => {
                let Some(u) = &self.candidate else { return false };
                let k = potential(problem, self.lambda, u.values());
                integrate_weighted(grid.mass(), &k, x, 2.0) > rhs * (1.0 + SPOT_TOL)
            }
            CertificateKind::None => false,
        }
    }
}

pub const SPOT_CHECKS: usize = 100;
/// Relative slack in `∫kφ² ≤ (1 + SPOT_TOL)‖∇φ‖²`.
pub const SPOT_TOL: f64 = 1e-6;

/// `k = λV − h|u|^{p−2}`
fn potential(problem: &Problem, lambda: f64, u: &[f64]) -> Vec<f64> {
    let p = problem.p();
    problem
        .v()
        .values()
        .iter()
        .zip(problem.h().values())
        .zip(u)
        .map(|((v, h), x)| lambda * v - if *x == 0.0 { 0.0 } else { h * x.abs().powf(p - 2.0) })
        .collect()
}

/// Random nonnegative bumps, preceded by `e₁(Ω^{−0},V)` and `e₁(Ω,V)`.
fn test_functions(problem: &Problem, seed: u64, count: usize, e: &[&EigenResult]) -> Vec<Field> {
    let grid = problem.grid();
    let mut out: Vec<Field> = e.iter().filter_map(|r| r.eigenfunction.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_max = grid.extent();
    let min_width = 4.0 * r_max / grid.len().max(1) as f64;
    while out.len() < count {
        let (c0, c1) = (rng.gen_range(-r_max..r_max), rng.gen_range(-r_max..r_max));
        let width = rng.gen_range(min_width.min(r_max)..=r_max);
        let amp = rng.gen_range(0.5..2.0);
        let radial = grid.kind() == GridKind::Radial;
        let c0 = if radial { c0.abs() } else { c0 };
        let f = Field::from_fn(grid, |pt, r| {
            let d = if radial {
                (r - c0).abs()
            } else {
                ((pt[0] - c0).powi(2) + (pt[1] - c1).powi(2)).sqrt()
            };
            let s = d / width;
            if s < 1.0 {
                amp * (1.0 - s * s).powi(2)
            } else {
                0.0
            }
        });
        if !f.is_zero() {
            out.push(f);
        }
    }
    out.truncate(count);
    out
}

/// Threshold certificate for `λ > λ1(Ω^{−0},V)`, or spot checks of the
/// spectral inequality `∫(λV − h u^{p−2})φ² ≤ ‖∇φ‖²` for a candidate `u > 0`.
pub fn certify_nonexistence(
    problem: &Problem,
    lambda: f64,
    candidate: Option<&StateVector>,
    seed: u64,
) -> Result<Certificate> {
    let grid = problem.grid();
    let tols = problem.tolerances();
    let mz = principal_eigenpair_tol(grid, problem.v(), Some(problem.h().minus_zero_mask()), tols.eigen)?;
    let mut cert = Certificate {
        kind: CertificateKind::None,
        lambda,
        phi: None,
        lhs: f64::NAN,
        rhs: f64::NAN,
        checks: 0,
        worst_ratio: f64::NEG_INFINITY,
        candidate: candidate.cloned(),
    };
    if let Some(u) = candidate {
        if !u.grid().conforms(grid) {
            return Err(LabError::GridMismatch);
        }
        let full = principal_eigenpair_tol(grid, problem.v(), None, tols.eigen)?;
        let k = potential(problem, lambda, u.values());
        let phis = test_functions(problem, seed, SPOT_CHECKS, &[&mz, &full]);
        let sides: Vec<(f64, f64)> = phis
            .par_iter()
            .map(|f| {
                let x = f.values();
                (integrate_weighted(grid.mass(), &k, x, 2.0), grid.dirichlet_energy(x))
            })
            .collect();
        cert.checks = sides.len();
        let mut worst: Option<usize> = None;
        for (i, (l, r)) in sides.iter().enumerate() {
            let ratio = (l - r) / r;
            if ratio > cert.worst_ratio {
                cert.worst_ratio = ratio;
                worst = Some(i);
            }
        }
        if let Some(i) = worst {
            if cert.worst_ratio > SPOT_TOL {
                cert.kind = CertificateKind::CandidateViolation;
                cert.phi = Some(phis[i].clone());
                (cert.lhs, cert.rhs) = sides[i];
                return Ok(cert);
            }
        }
    }
    if let Some(e) = mz.eigenfunction.as_ref().filter(|_| mz.is_finite()) {
        let x = e.values();
        let lhs = lambda * integrate_weighted(grid.mass(), problem.v().values(), x, 2.0);
        let rhs = grid.dirichlet_energy(x);
        if lhs > rhs {
            cert.kind = CertificateKind::NonexistenceAboveThreshold;
            cert.phi = Some(e.clone());
            cert.lhs = lhs;
            cert.rhs = rhs;
            if !cert.verify(problem) {
                return Err(LabError::failure("certify_nonexistence", "certificate does not re-verify"));
            }
        }
    }
    Ok(cert)
}

/// Residual of a stored solution, recomputed from its field.
pub fn reverify_residual(problem: &Problem, lambda: f64, u: &Field) -> Result<f64> {
    Ok(residual_norm(&problem.state(u.clone())?, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{nonnegative_ball, sign_changing_ball};

    #[test]
    fn window_of_reference_problem() {
        let pr = sign_changing_ball(200).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        assert!(w.lambda1_v < w.lambda1_vh && w.lambda1_vh < w.lambda1_minus_zero);
    }

    #[test]
    fn nonnegative_branch_is_ordered_and_grows() {
        let pr = nonnegative_ball(200).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        let (a, b) = w.branch_interval();
        let ls: Vec<f64> = (1..=8).map(|k| a + (b - a) * k as f64 / 9.0).collect();
        let br = continue_branch(&pr, &ls).unwrap();
        assert!(br.failure.is_none(), "{:?}", br.failure);
        assert_eq!(br.points.len(), 8);
        assert!(br.points.windows(2).all(|w| w[1].e_norm() > w[0].e_norm()));
        assert!(br.order_violation() <= 1e-6);
        assert!(br.sigma_increase() <= 1e-10);
        for p in &br.points {
            assert!(p.residual <= 1e-6);
        }
    }

    #[test]
    fn blowup_fit_meets_the_lower_bound() {
        let pr = nonnegative_ball(400).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        let br = continue_branch(&pr, &blowup_lambdas(&w, 10)).unwrap();
        assert!(br.failure.is_none(), "{:?}", br.failure);
        let e1 = principal_eigenpair_tol(pr.grid(), pr.v(), Some(pr.h().minus_zero_mask()), 1e-10).unwrap();
        let fit = fit_blowup(&br, &e1).unwrap();
        assert!(fit.exponent <= -0.85, "{}", fit.exponent);
        assert!(fit.checks.iter().rev().take(3).all(|c| c.min_margin >= -1e-6));
    }

    #[test]
    fn blowup_fit_refuses_sign_changing_h() {
        let pr = sign_changing_ball(100).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        let br = continue_branch(&pr, &[0.5 * (w.lambda1_v + w.lambda1_vh)]).unwrap();
        let e1 = principal_eigenpair_tol(pr.grid(), pr.v(), Some(pr.h().minus_zero_mask()), 1e-10).unwrap();
        assert!(matches!(fit_blowup(&br, &e1), Err(LabError::Refused(_))));
    }

    #[test]
    fn out_of_window_lambdas_are_dropped_with_warning() {
        let pr = nonnegative_ball(100).discretize().unwrap();
        let br = continue_branch(&pr, &[1.0, 20.0, 100.0]).unwrap();
        assert_eq!(br.points.len(), 1);
        assert_eq!(br.warnings.len(), 2);
    }

    #[test]
    fn certificate_above_threshold_reverifies() {
        let pr = sign_changing_ball(200).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        let c = certify_nonexistence(&pr, 1.1 * w.lambda1_minus_zero, None, 7).unwrap();
        assert_eq!(c.kind, CertificateKind::NonexistenceAboveThreshold);
        assert!(c.verify(&pr));
        let c = certify_nonexistence(&pr, 0.9 * w.lambda1_minus_zero, None, 7).unwrap();
        assert_eq!(c.kind, CertificateKind::None);
    }

    #[test]
    fn eigenfunction_candidate_is_rejected_above_threshold() {
        let pr = sign_changing_ball(200).discretize().unwrap();
        let w = compute_window(&pr).unwrap();
        let e = principal_eigenpair_tol(pr.grid(), pr.v(), None, 1e-10).unwrap();
        let u = pr.state(e.eigenfunction.unwrap()).unwrap();
        let c = certify_nonexistence(&pr, 1.1 * w.lambda1_minus_zero, Some(&u), 3).unwrap();
        assert_eq!(c.kind, CertificateKind::CandidateViolation);
        assert!(c.verify(&pr));
    }

    #[test]
    fn test_functions_are_seed_deterministic() {
        let pr = sign_changing_ball(100).discretize().unwrap();
        let a = test_functions(&pr, 11, 20, &[]);
        let b = test_functions(&pr, 11, 20, &[]);
        let c = test_functions(&pr, 12, 20, &[]);
        assert!(a.iter().zip(&b).all(|(x, y)| x.values() == y.values()));
        assert!(a.iter().zip(&c).any(|(x, y)| x.values() != y.values()));
    }
}
