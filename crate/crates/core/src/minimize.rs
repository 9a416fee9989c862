//! The constrained eigenvalue `λ1(Ω,V,h)` and the local minimizer realizing
//! `σ(λ) = inf{I_λ(u) : ‖∇u‖² < λ∫V|u|²}`.

use crate::eigen::{principal_eigenpair_tol, EigenResult};
use crate::error::{LabError, Result};
use crate::functional::{
    energy, first_variation, hessian, Problem, StateVector,
};
use crate::grid::{power_fn, Field, Grid};
use crate::linalg::{dot, BandMatrix};

/// Outcome of [`lambda1_constrained`].
#[derive(Debug, Clone)]
pub struct ConstrainedEigResult {
    /// `λ1(Ω,V,h)`, `+∞` when the feasible set is empty.
    pub value: f64,
    /// Nonnegative `u₀` with `∫V u₀² = 1` and `∫h|u₀|^p ≤ 0`.
    pub minimizer: Option<Field>,
    /// Multipliers in `K u₀ = σ₁ D u₀ + σ₂ M h |u₀|^{p−2} u₀`.
    pub sigma1: f64,
    pub sigma2: Option<f64>,
    /// `α u₀` with `α = (−σ₂)^{1/(p−2)}`, a solution at `λ = value`.
    pub threshold_solution: Option<Field>,
    pub threshold_residual: Option<f64>,
    /// `∫h|u₀|^p`
    pub constraint_value: f64,
    /// `∫h|u₀|^p` vanishes to tolerance (and the unconstrained `e₁` is infeasible).
    pub constraint_active: bool,
    /// Dual norm of the Lagrange residual `K u₀ − σ₁ D u₀ − σ₂ g(u₀)`.
    pub kkt_residual: f64,
    pub lambda1_v: f64,
    pub lambda1_minus_zero: f64,
    pub iterations: usize,
    pub newton_polished: bool,
    pub diagnostics: Vec<String>,
}

struct Constraint<'a> {
    grid: &'a Grid,
    d: Vec<f64>,
    mh: Vec<f64>,
    p: f64,
}

impl Constraint<'_> {
    fn new(problem: &Problem) -> Constraint<'_> {
        let grid = problem.grid().as_ref();
        let m = grid.mass();
        Constraint {
            grid,
            d: m.iter().zip(problem.v().values()).map(|(a, b)| a * b).collect(),
            mh: m.iter().zip(problem.h().values()).map(|(a, b)| a * b).collect(),
            p: problem.p(),
        }
    }

    fn vnorm(&self, u: &[f64]) -> f64 {
        self.d.iter().zip(u).map(|(d, x)| d * x * x).sum()
    }

    /// `(Σ M h⁻ |u|^p, Σ M h⁺ |u|^p)`
    fn split(&self, u: &[f64]) -> (f64, f64) {
        let pw = power_fn(self.p);
        let mut neg = 0.0;
        let mut pos = 0.0;
        for (w, x) in self.mh.iter().zip(u) {
            let t = w * pw(x.abs());
            if *w < 0.0 {
                neg -= t;
            } else {
                pos += t;
            }
        }
        (neg, pos)
    }

    fn c(&self, u: &[f64]) -> f64 {
        let (n, p) = self.split(u);
        p - n
    }

    /// `M h |u|^{p−2} u`, the gradient of `c/p`.
    fn g(&self, u: &[f64]) -> Vec<f64> {
        let pw = power_fn(self.p - 1.0);
        self.mh
            .iter()
            .zip(u)
            .map(|(w, x)| w * x.signum() * pw(x.abs()))
            .collect()
    }

    fn rq(&self, u: &[f64]) -> Option<f64> {
        let den = self.vnorm(u);
        (den > 0.0).then(|| self.grid.dirichlet_energy(u) / den)
    }

    /// `|u|`, the `h > 0` part scaled onto `c = 0` when violated, then `∫Vu² = 1`.
    fn project(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut x: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        let (neg, pos) = self.split(&x);
        if pos > neg {
            let t = (neg / pos).powf(1.0 / self.p);
            for (xi, w) in x.iter_mut().zip(&self.mh) {
                if *w > 0.0 {
                    *xi *= t;
                }
            }
        }
        let n = self.vnorm(&x);
        if !(n > 0.0) {
            return None;
        }
        let s = 1.0 / n.sqrt();
        Some(x.into_iter().map(|v| v * s).collect())
    }

    fn ksolve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.grid.solve_stiffness(&mut x);
        x
    }

    /// Least-squares multipliers in the dual norm and the residual left over.
    fn multipliers(&self, u: &[f64]) -> (f64, f64, f64) {
        let ku = self.grid.apply_stiffness(u);
        let du: Vec<f64> = self.d.iter().zip(u).map(|(d, x)| d * x).collect();
        let g = self.g(u);
        let kdu = self.ksolve(&du);
        let kg = self.ksolve(&g);
        let a11 = dot(&du, &kdu);
        let a12 = dot(&du, &kg);
        let a22 = dot(&g, &kg);
        // Kᵀ⁻¹ K u = u
        let b1 = dot(&du, u);
        let b2 = dot(&g, u);
        let det = a11 * a22 - a12 * a12;
        let (s1, s2) = if det.abs() > 1e-14 * a11 * a22 {
            ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
        } else {
            (b1 / a11, 0.0)
        };
        let r: Vec<f64> = (0..u.len()).map(|i| ku[i] - s1 * du[i] - s2 * g[i]).collect();
        (s1, s2, self.grid.dual_norm(&r))
    }
}

/// `λ1(Ω,V,h) = inf{‖∇u‖² : ∫V|u|² = 1, ∫h|u|^p ≤ 0}`.
pub fn lambda1_constrained(problem: &Problem) -> Result<ConstrainedEigResult> {
    let tol = problem.tolerances().eigen;
    let grid = problem.grid();
    let e_full = principal_eigenpair_tol(grid, problem.v(), None, tol)?;
    let e_mz = principal_eigenpair_tol(grid, problem.v(), Some(problem.h().minus_zero_mask()), tol)?;
    lambda1_constrained_with(problem, &e_full, &e_mz)
}

/// As [`lambda1_constrained`], reusing `e₁(Ω,V)` and `e₁(Ω^{−0},V)`.
pub fn lambda1_constrained_with(
    problem: &Problem,
    e_full: &EigenResult,
    e_mz: &EigenResult,
) -> Result<ConstrainedEigResult> {
    let con = Constraint::new(problem);
    let p = problem.p();
    let ctol = problem.tolerances().constraint;
    let mut result = ConstrainedEigResult {
        value: f64::INFINITY,
        minimizer: None,
        sigma1: f64::INFINITY,
        sigma2: None,
        threshold_solution: None,
        threshold_residual: None,
        constraint_value: 0.0,
        constraint_active: false,
        kkt_residual: 0.0,
        lambda1_v: e_full.value,
        lambda1_minus_zero: e_mz.value,
        iterations: 0,
        newton_polished: false,
        diagnostics: Vec::new(),
    };
    let Some(e1) = &e_full.eigenfunction else {
        result.diagnostics.push("V⁺ vanishes: feasible set is empty".into());
        return Ok(result);
    };

    // unconstrained minimizer already feasible
    let c_full = con.c(e1.values());
    if c_full <= 0.0 {
        result.value = e_full.value;
        result.minimizer = Some(e1.clone());
        result.sigma1 = e_full.value;
        result.sigma2 = Some(0.0);
        result.constraint_value = c_full;
        result.kkt_residual = e_full.residual;
        result.diagnostics.push("e₁(Ω,V) is feasible; the constraint is inactive".into());
        return Ok(result);
    }

    if !problem.h().has_negative_part() {
        // c(u) ≤ 0 forces u = 0 on {h > 0}: the problem is the masked eigenproblem
        if let Some(e) = &e_mz.eigenfunction {
            result.value = e_mz.value;
            result.minimizer = Some(e.clone());
            result.sigma1 = e_mz.value;
            result.constraint_value = con.c(e.values());
            result.constraint_active = true;
            result.kkt_residual = e_mz.residual;
            result
                .diagnostics
                .push("h⁻ ≡ 0: the constraint restricts the support to Ω^{-0}".into());
        } else {
            result.diagnostics.push("h⁻ ≡ 0 and V⁺ vanishes on Ω^{-0}: feasible set is empty".into());
        }
        return Ok(result);
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(u) = con.project(e1.values()) {
        starts.push(u);
    }
    if let Some(e) = &e_mz.eigenfunction {
        starts.push(e.values().to_vec());
    }
    let Some(mut u) = starts
        .into_iter()
        .filter_map(|u| con.rq(&u).map(|r| (r, u)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, u)| u)
    else {
        result.diagnostics.push("no admissible starting point; feasible set treated as empty".into());
        return Ok(result);
    };

    let (iters, mut rq) = projected_gradient(&con, &mut u, 20_000, 1e-9);
    result.iterations = iters;

    if let Some((v, r)) = kkt_newton(&con, &u) {
        if r <= rq + 1e-12 * rq {
            u = v;
            rq = r;
            result.newton_polished = true;
        }
    }
    if !result.newton_polished {
        result
            .diagnostics
            .push("Newton polish rejected; value from projected gradient only".into());
    }

    let (s1, s2, kkt) = con.multipliers(&u);
    result.value = rq;
    result.sigma1 = s1;
    result.sigma2 = Some(s2);
    result.kkt_residual = kkt;
    result.constraint_value = con.c(&u);
    let (neg, _) = con.split(&u);
    result.constraint_active = result.constraint_value.abs() <= ctol * neg;
    if s2 >= 0.0 {
        result.diagnostics.push(format!(
            "inconsistent multipliers: σ₂ = {s2:.3e} ≥ 0 at an active-constraint minimizer"
        ));
    } else {
        let alpha = (-s2).powf(1.0 / (p - 2.0));
        let t: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let state = problem.state_from(t);
        result.threshold_residual = Some(crate::functional::residual_norm(&state, rq));
        result.threshold_solution = Some(state.field().clone());
    }
    result.minimizer = Some(Field::from_raw(problem.grid(), u));
    Ok(result)
}

/// Riemannian gradient descent of the Rayleigh quotient in the `K` metric on
/// `{∫Vu² = 1, ∫h|u|^p ≤ 0}`; the gradient is projected onto the tangent of
/// `∫h|u|^p = 0` when that constraint is binding. Returns iterations and the
/// final quotient.
fn projected_gradient(con: &Constraint, u: &mut Vec<f64>, max_iter: usize, rtol: f64) -> (usize, f64) {
    let mut rq = con.rq(u).expect("admissible start");
    let mut tau = 0.5;
    let active_tol = 1e-10;
    for it in 0..max_iter {
        let du: Vec<f64> = con.d.iter().zip(u.iter()).map(|(d, x)| d * x).collect();
        let kdu = con.ksolve(&du);
        let dn = con.vnorm(u);
        // K-gradient of RQ: 2 (u − RQ K⁻¹ D u) / uᵀDu
        let mut grad: Vec<f64> = (0..u.len()).map(|i| 2.0 * (u[i] - rq * kdu[i]) / dn).collect();
        let (neg, pos) = con.split(u);
        let binding = pos - neg > -active_tol * neg;
        if binding {
            let g = con.g(u);
            let gg = dot(&g, &grad);
            if gg < 0.0 {
                let kg = con.ksolve(&g);
                let mu = gg / dot(&g, &kg);
                for (x, y) in grad.iter_mut().zip(&kg) {
                    *x -= mu * y;
                }
            }
        }
        let slope = con.grid.dirichlet_energy(&grad);
        if slope <= (rtol * rq).powi(2) {
            return (it, rq);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - tau * g).collect();
            if let Some(v) = con.project(&trial) {
                if let Some(r) = con.rq(&v) {
                    if r <= rq - 1e-4 * tau * slope {
                        *u = v;
                        rq = r;
                        accepted = true;
                        break;
                    }
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            return (it, rq);
        }
        tau = (tau * 2.0).min(4.0);
    }
    (max_iter, rq)
}

/// Newton on the KKT system `K u − σ₁ D u − σ₂ g(u) = 0`, `uᵀDu = 1`,
/// `∫h|u|^p = 0`, eliminating the two multipliers with one banded LU per step.
fn kkt_newton(con: &Constraint, u0: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p = con.p;
    let n = u0.len();
    let mut u = u0.to_vec();
    let (mut s1, mut s2, _) = con.multipliers(&u);
    let scale = con.grid.apply_stiffness(&u).iter().map(|x| x.abs()).fold(0.0, f64::max);
    for _ in 0..40 {
        let ku = con.grid.apply_stiffness(&u);
        let du: Vec<f64> = con.d.iter().zip(&u).map(|(d, x)| d * x).collect();
        let g = con.g(&u);
        let f1: Vec<f64> = (0..n).map(|i| ku[i] - s1 * du[i] - s2 * g[i]).collect();
        let f2 = 0.5 * (dot(&du, &u) - 1.0);
        let f3 = con.c(&u) / p;
        let fnorm = f1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if fnorm <= 1e-13 * scale.max(1.0) && f2.abs() <= 1e-14 && f3.abs() <= 1e-14 {
            break;
        }
        let pw = power_fn(p - 2.0);
        let mut h: BandMatrix = con.grid.stiffness().clone();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let a = u[i].abs();
                let w = if a == 0.0 { 0.0 } else { pw(a) };
                -s1 * con.d[i] - s2 * (p - 1.0) * con.mh[i] * w
            })
            .collect();
        h.add_diagonal(&diag);
        let lu = h.lu()?;
        let x0 = lu.solve(&f1);
        let x1 = lu.solve(&du);
        let x2 = lu.solve(&g);
        let m = [[dot(&du, &x1), dot(&du, &x2)], [dot(&g, &x1), dot(&g, &x2)]];
        let rhs = [-f2 + dot(&du, &x0), -f3 + dot(&g, &x0)];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            return None;
        }
        let a = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
        let b = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        for i in 0..n {
            u[i] += -x0[i] + a * x1[i] + b * x2[i];
        }
        s1 += a;
        s2 += b;
        if u.iter().any(|x| !x.is_finite()) {
            return None;
        }
    }
    // the polished point must stay in the cone of nonnegative feasible fields
    let floor = u.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 1e-10;
    if u.iter().any(|&x| x < -floor) {
        return None;
    }
    let v = con.project(&u)?;
    let (neg, pos) = con.split(&v);
    if (pos - neg).abs() > 1e-9 * neg {
        return None;
    }
    con.rq(&v).map(|r| (v, r))
}

/// Options for [`local_minimize_with`].
#[derive(Debug, Clone, Default)]
pub struct MinimizeOptions {
    /// Starting field (made nonnegative); `e₁(Ω,V)` scaled optimally when absent.
    pub init: Option<Field>,
    /// Upper obstacle `u ≤ ψ` kept during the descent.
    pub obstacle: Option<Vec<f64>>,
    /// Precomputed `e₁(Ω,V)`.
    pub eigen: Option<EigenResult>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub lambda: f64,
    /// The cone `{‖∇u‖² < λ∫V|u|²}` is non-empty.
    pub feasible: bool,
    pub unbounded: bool,
    pub converged: bool,
    /// `σ(λ) = I_λ(u_λ)` when converged.
    pub sigma: f64,
    pub state: Option<StateVector>,
    pub residual: f64,
    pub iterations: usize,
    /// `(λ∫Vu² − ‖∇u‖²)/‖∇u‖²`, positive inside the cone.
    pub cone_margin: f64,
    /// Minimizer on the cone boundary with `∫h|u|^p ≥ 0`.
    pub boundary_contradiction: bool,
    /// The Hessian at the final iterate is positive definite (free nodes only under an obstacle).
    pub hessian_pd: bool,
    pub lambda1_v: f64,
    pub diagnostics: Vec<String>,
}

impl MinimizeReport {
    pub fn solution(&self) -> Option<&StateVector> {
        self.state.as_ref().filter(|_| self.converged)
    }
}

pub fn local_minimize(problem: &Problem, init: Option<&Field>) -> Result<MinimizeReport> {
    local_minimize_with(
        problem,
        problem.lambda(),
        &MinimizeOptions {
            init: init.cloned(),
            ..Default::default()
        },
    )
}

pub fn local_minimize_with(problem: &Problem, lambda: f64, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    let grid = problem.grid();
    let tols = problem.tolerances().clone();
    let p = problem.p();
    let e_full = match &opts.eigen {
        Some(e) => e.clone(),
        None => principal_eigenpair_tol(grid, problem.v(), None, tols.eigen)?,
    };
    let mut report = MinimizeReport {
        lambda,
        feasible: false,
        unbounded: false,
        converged: false,
        sigma: f64::NAN,
        state: None,
        residual: f64::INFINITY,
        iterations: 0,
        cone_margin: f64::NAN,
        boundary_contradiction: false,
        hessian_pd: false,
        lambda1_v: e_full.value,
        diagnostics: Vec::new(),
    };
    if !(lambda > e_full.value) {
        report
            .diagnostics
            .push(format!("λ = {lambda} ≤ λ1(Ω,V) = {}: the cone is empty", e_full.value));
        return Ok(report);
    }
    report.feasible = true;
    if let Some(ob) = &opts.obstacle {
        if ob.len() != grid.len() {
            return Err(LabError::GridMismatch);
        }
    }
    let cap = |x: Vec<f64>| -> Vec<f64> {
        match &opts.obstacle {
            Some(ob) => x.iter().zip(ob).map(|(a, b)| a.abs().min(*b)).collect(),
            None => x.iter().map(|a| a.abs()).collect(),
        }
    };
    let in_cone = |s: &StateVector| s.grad_sq() < lambda * s.v_l2() && s.v_l2() > 0.0;

    let default_init = || -> StateVector {
        let e = e_full.eigenfunction.as_ref().expect("finite eigenvalue");
        let base = problem.state_from(e.values().to_vec());
        let hl = base.h_lp();
        let t = if hl > 0.0 {
            ((lambda - e_full.value) * base.v_l2() / hl).powf(1.0 / (p - 2.0))
        } else {
            1.0
        };
        let mut s = problem.state_from(cap(base.scaled(t).values().to_vec()));
        // under an obstacle the capped bump may leave the cone; shrink it
        let mut k = 0;
        while !in_cone(&s) && k < 60 {
            s = problem.state_from(cap(base.scaled(t * 0.5_f64.powi(k)).values().to_vec()));
            k += 1;
        }
        s
    };
    let mut s = match &opts.init {
        Some(f) => {
            if !f.grid().conforms(grid) {
                return Err(LabError::GridMismatch);
            }
            let s = problem.state_from(cap(f.values().to_vec()));
            if in_cone(&s) {
                s
            } else {
                report
                    .diagnostics
                    .push("initial field outside the cone; using the scaled e₁(Ω,V)".into());
                default_init()
            }
        }
        None => default_init(),
    };
    if !in_cone(&s) {
        return Err(LabError::failure("local_minimize", "no starting point inside the cone"));
    }

    let max_iter = opts.max_iterations.unwrap_or(tols.max_iterations);
    let upper = opts.obstacle.as_deref();
    let mut tau_grad = 1.0_f64;
    let mut it = 0;
    loop {
        let r = first_variation(&s, lambda).into_values();
        let (free, proj_r) = projected_residual(s.values(), &r, upper);
        let res = grid.dual_norm(&proj_r);
        report.residual = res;
        if res <= tols.residual {
            report.converged = true;
            break;
        }
        if s.e_norm() > tols.e_norm_cap {
            report.unbounded = true;
            report.diagnostics.push(format!(
                "E-norm {:.3e} exceeds the cap {:.1e}; descent is unbounded",
                s.e_norm(),
                tols.e_norm_cap
            ));
            break;
        }
        if it >= max_iter {
            report.diagnostics.push(format!("no convergence in {max_iter} iterations"));
            break;
        }
        it += 1;
        let i0 = energy(&s, lambda);
        let mut next = None;

        // Newton on the free nodes when the reduced Hessian is positive definite
        let mut hmat = hessian(&s, lambda);
        for (i, &f) in free.iter().enumerate() {
            if !f {
                hmat.pin(i);
            }
        }
        if let Some(ch) = hmat.cholesky() {
            let mut delta = proj_r.clone();
            ch.solve_in_place(&mut delta);
            for d in delta.iter_mut() {
                *d = -*d;
            }
            let slope = dot(&proj_r, &delta);
            let mut t = 1.0;
            for _ in 0..30 {
                let target = i0 + 1e-4 * t * slope;
                if target >= i0 {
                    break;
                }
                let trial = problem.state_from(cap(
                    s.values().iter().zip(&delta).map(|(u, d)| u + t * d).collect(),
                ));
                let e = energy(&trial, lambda);
                if in_cone(&trial) && e <= target {
                    next = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            if next.is_none() {
                // near the solution the energy decrease drops below the
                // roundoff of I_λ; take the full step if the residual halves
                let trial = problem.state_from(cap(
                    s.values().iter().zip(&delta).map(|(u, d)| u + d).collect(),
                ));
                let e = energy(&trial, lambda);
                if in_cone(&trial) && e <= i0 + 1e-12 * i0.abs().max(1.0) {
                    let (_, tr) = projected_residual(
                        trial.values(),
                        first_variation(&trial, lambda).values(),
                        upper,
                    );
                    if grid.dual_norm(&tr) < 0.5 * res {
                        next = Some(trial);
                    }
                }
            }
        }
        if next.is_none() {
            // Sobolev gradient step
            let mut delta = proj_r.clone();
            grid.solve_stiffness(&mut delta);
            for d in delta.iter_mut() {
                *d = -*d;
            }
            let slope = dot(&proj_r, &delta);
            let mut t = tau_grad;
            for _ in 0..60 {
                let trial = problem.state_from(cap(
                    s.values().iter().zip(&delta).map(|(u, d)| u + t * d).collect(),
                ));
                let e = energy(&trial, lambda);
                if in_cone(&trial) && e <= i0 + 1e-4 * t * slope {
                    next = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            tau_grad = (t * 2.0).min(1e3);
        }
        match next {
            Some(n) => {
                if n.values() == s.values() {
                    report.diagnostics.push("descent stalled".into());
                    s = n;
                    break;
                }
                s = n;
            }
            None => {
                report.diagnostics.push("line search failed".into());
                break;
            }
        }
    }
    report.iterations = it;
    let (free, _) = projected_residual(
        s.values(),
        first_variation(&s, lambda).values(),
        upper,
    );
    let mut hmat = hessian(&s, lambda);
    for (i, &f) in free.iter().enumerate() {
        if !f {
            hmat.pin(i);
        }
    }
    report.hessian_pd = hmat.cholesky().is_some();
    report.cone_margin = (lambda * s.v_l2() - s.grad_sq()) / s.grad_sq();
    if report.cone_margin.abs() <= 1e-8 && s.h_lp() >= 0.0 {
        report.boundary_contradiction = true;
        report
            .diagnostics
            .push("minimizer on the cone boundary with ∫h|u|^p ≥ 0".into());
    }
    if report.converged {
        report.sigma = energy(&s, lambda);
    }
    report.state = Some(s);
    Ok(report)
}

/// Residual with the components blocked by the bounds `0 ≤ u ≤ ψ` removed,
/// and the mask of nodes free to move.
fn projected_residual(u: &[f64], r: &[f64], upper: Option<&[f64]>) -> (Vec<bool>, Vec<f64>) {
    let mut free = vec![true; u.len()];
    let mut out = r.to_vec();
    for i in 0..u.len() {
        let at_upper = upper.is_some_and(|ob| u[i] >= ob[i]);
        let blocked = (at_upper && r[i] < 0.0) || (u[i] <= 0.0 && r[i] > 0.0);
        if blocked || (at_upper && upper.is_some_and(|ob| ob[i] <= 0.0)) {
            free[i] = false;
            out[i] = 0.0;
        }
    }
    (free, out)
}

/// Result of [`energy_monotonicity_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityCheck {
    pub ok: bool,
    /// First pair `(i, j)`, `λ_i < λ_j`, with `σ(λ_j) > σ(λ_i) + tol`.
    pub violation: Option<(usize, usize)>,
}

/// Checks `σ(λ′) ≤ σ(λ)` for every pair `λ ≤ λ′`.
pub fn energy_monotonicity_check(points: &[(f64, &MinimizeReport)], tol: f64) -> Result<MonotonicityCheck> {
    if points.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(LabError::invalid("branch points must be sorted by λ"));
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[j].1.sigma > points[i].1.sigma + tol {
                return Ok(MonotonicityCheck {
                    ok: false,
                    violation: Some((i, j)),
                });
            }
        }
    }
    Ok(MonotonicityCheck {
        ok: true,
        violation: None,
    })
}
