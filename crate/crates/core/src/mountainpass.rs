//! Second positive solution by a discrete mountain pass between `0` and an
//! endpoint `φ₀` with `I_λ(φ₀) ≤ 0`.
//!
//! A piecewise-linear path of `path_nodes` fields is deformed by
//! `K⁻¹`-preconditioned descent of its interior nodes, with one global step
//! size accepted only when the path maximum does not increase. The path is
//! redistributed by E-norm arclength every [`REPARAM_EVERY`] iterations, and
//! the path maximum is polished by Newton's method on `I_λ' = 0`.

use crate::eigen::principal_eigenpair_tol;
use crate::error::{LabError, Result};
use crate::functional::{energy, first_variation, hessian, residual_norm, second_variation, Problem, StateVector};
use crate::grid::{Field, GridKind};
use crate::linalg::dot;
use crate::minimize::{lambda1_constrained, local_minimize_with, MinimizeOptions, MinimizeReport};

pub const REPARAM_EVERY: usize = 10;
pub const DEFAULT_PATH_NODES: usize = 33;

/// `(1 − s²)²` on `|s| < 1`, the endpoint profile.
fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t
    }
}

/// Endpoint `φ₀` concentrated where `h < 0`, satisfying
/// `λ1(Ω,V,h)∫Vφ₀² < ‖∇φ₀‖²` and `I_λ(φ₀) ≤ 0`.
pub fn find_endpoint(problem: &Problem, lambda: f64) -> Result<Field> {
    let l1h = lambda1_constrained(problem)?.value;
    find_endpoint_with(problem, lambda, l1h)
}

pub fn find_endpoint_with(problem: &Problem, lambda: f64, lambda1_h: f64) -> Result<Field> {
    let h = problem.h();
    if !h.has_negative_part() {
        return Err(LabError::refused(
            "h⁻ ≡ 0: the positive solution is unique, there is no second one",
        ));
    }
    let grid = problem.grid();
    let neg: Vec<bool> = h.values().iter().map(|&v| v < 0.0).collect();
    let (center, mut radius): ([f64; 2], f64) = match grid.kind() {
        GridKind::Radial => {
            // longest run of consecutive nodes with h < 0
            let r = grid.dof_radius();
            let (mut best, mut cur) = ((0, 0), None::<usize>);
            for i in 0..=neg.len() {
                let on = i < neg.len() && neg[i];
                match (on, cur) {
                    (true, None) => cur = Some(i),
                    (false, Some(s)) => {
                        if i - s > best.1 - best.0 {
                            best = (s, i);
                        }
                        cur = None;
                    }
                    _ => {}
                }
            }
            if best.1 == best.0 {
                return Err(LabError::refused("{h < 0} contains no grid cell"));
            }
            let lo = if best.0 == 0 { 0.0 } else { r[best.0] };
            let hi = r[best.1 - 1];
            ([0.5 * (lo + hi), 0.0], 0.5 * (hi - lo))
        }
        GridKind::Box => {
            // deepest node of {h < 0}: largest distance to {h ≥ 0} and the boundary
            let pts: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.dof_point(i)).collect();
            let w = grid.extent();
            let mut best = (0.0, [0.0, 0.0]);
            for (i, p) in pts.iter().enumerate() {
                if !neg[i] {
                    continue;
                }
                let mut d = (w - p[0].abs()).min(w - p[1].abs());
                for (j, q) in pts.iter().enumerate() {
                    if !neg[j] {
                        d = d.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                    }
                }
                if d > best.0 {
                    best = (d, *p);
                }
            }
            (best.1, best.0)
        }
    };
    if !(radius > 0.0) {
        return Err(LabError::refused("{h < 0} contains no grid cell"));
    }
    let radial = grid.kind() == GridKind::Radial;
    for _ in 0..40 {
        let phi = Field::from_fn(grid, |p, r| {
            let s = if radial {
                (r - center[0]) / radius
            } else {
                ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() / radius
            };
            bump_profile(s)
        });
        if phi.is_zero() {
            break;
        }
        let s = problem.state(phi.clone())?;
        let rq_ok = lambda1_h * s.v_l2() < s.grad_sq();
        let hp = s.h_lp();
        if rq_ok && hp < 0.0 {
            let q = s.grad_sq() - lambda * s.v_l2();
            let p = problem.p();
            let t = if q <= 0.0 {
                1.0
            } else {
                2.0 * (-p * q / (2.0 * hp)).powf(1.0 / (p - 2.0))
            };
            let end = s.scaled(t);
            if lambda1_h * end.v_l2() < end.grad_sq() && energy(&end, lambda) <= 0.0 {
                return Ok(end.field().clone());
            }
        }
        radius *= 0.8;
    }
    Err(LabError::refused("no bump inside {h < 0} satisfies the endpoint conditions"))
}

#[derive(Debug, Clone)]
pub struct MountainPassReport {
    pub lambda: f64,
    /// `c = I_λ(v)`.
    pub level: f64,
    pub critical_point: Option<StateVector>,
    pub residual: f64,
    pub converged: bool,
    pub endpoint: Field,
    /// Snapshots of the path after each redistribution.
    pub path_history: Vec<Vec<Field>>,
    /// Path maximum after each iteration.
    pub max_history: Vec<f64>,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

pub fn mountain_pass(problem: &Problem, lambda: f64, endpoint: &Field, path_nodes: usize) -> Result<MountainPassReport> {
    if path_nodes < 8 {
        return Err(LabError::invalid(format!("path_nodes must be >= 8, got {path_nodes}")));
    }
    let grid = problem.grid();
    if !endpoint.grid().conforms(grid) {
        return Err(LabError::GridMismatch);
    }
    let end = problem.state(endpoint.abs())?;
    if energy(&end, lambda) > 0.0 {
        return Err(LabError::refused("endpoint has I_λ(φ₀) > 0"));
    }
    let tols = problem.tolerances().clone();
    let m = path_nodes;
    let mut path: Vec<StateVector> = (0..m)
        .map(|k| end.scaled(k as f64 / (m - 1) as f64))
        .collect();
    // endpoints are kept bit-identical
    path[0] = problem.zero_state();
    path[m - 1] = end.clone();
    let mut energies: Vec<f64> = path.iter().map(|s| energy(s, lambda)).collect();
    let mut report = MountainPassReport {
        lambda,
        level: f64::NAN,
        critical_point: None,
        residual: f64::INFINITY,
        converged: false,
        endpoint: end.field().clone(),
        path_history: vec![path.iter().map(|s| s.field().clone()).collect()],
        max_history: Vec::new(),
        iterations: 0,
        diagnostics: Vec::new(),
    };
    let mut tau = 1.0;
    let mut stalls = 0;
    let mut top = polyline_max(&path, &energies, lambda);
    let max_iter = tols.max_iterations.min(5_000);
    for it in 0..max_iter {
        report.iterations = it;
        report.max_history.push(top.value);

        if it > 0 && it % REPARAM_EVERY == 0 {
            let before = report.max_history[it - REPARAM_EVERY];
            if before - top.value <= 1e-3 * top.value.abs() {
                if let Some((v, e)) = try_newton(&top, lambda, tols.residual) {
                    report.level = e;
                    report.critical_point = Some(v);
                    report.converged = true;
                    break;
                }
            }
            if let Some((np, ne)) = reparametrize(&path, lambda) {
                let nt = polyline_max(&np, &ne, lambda);
                if nt.value <= top.value {
                    path = np;
                    energies = ne;
                    top = nt;
                }
            }
            report
                .path_history
                .push(path.iter().map(|s| s.field().clone()).collect());
        }

        // K⁻¹-gradients with the component along the path tangent removed;
        // nodes already at or below level 0 stay put
        let grads: Vec<(Vec<f64>, f64)> = (1..m - 1)
            .map(|k| {
                if energies[k] <= 0.0 {
                    return (vec![0.0; grid.len()], 0.0);
                }
                let r = first_variation(&path[k], lambda).into_values();
                let mut d = r.clone();
                grid.solve_stiffness(&mut d);
                let t: Vec<f64> = path[k + 1]
                    .values()
                    .iter()
                    .zip(path[k - 1].values())
                    .map(|(a, b)| a - b)
                    .collect();
                let tt = grid.dirichlet_form(&t, &t);
                let mut slope = dot(&r, &d);
                if tt > 0.0 {
                    let c = dot(&r, &t) / tt;
                    for (di, ti) in d.iter_mut().zip(&t) {
                        *di -= c * ti;
                    }
                    slope -= c * c * tt;
                }
                (d, slope.max(0.0))
            })
            .collect();
        let total_slope: f64 = grads.iter().map(|g| g.1).sum();
        let total: f64 = energies.iter().sum();
        let mut accepted = false;
        for _ in 0..50 {
            let mut trial = path.clone();
            let mut te = energies.clone();
            for k in 1..m - 1 {
                let d = &grads[k - 1].0;
                trial[k] = path[k].with_values(
                    path[k].values().iter().zip(d).map(|(u, g)| (u - tau * g).abs()).collect(),
                );
                te[k] = energy(&trial[k], lambda);
            }
            let new_total: f64 = te.iter().sum();
            let bounded = trial.iter().all(|s| s.e_norm() <= tols.e_norm_cap);
            if bounded && new_total <= total - 1e-4 * tau * total_slope {
                let nt = polyline_max(&trial, &te, lambda);
                if nt.value <= top.value {
                    path = trial;
                    energies = te;
                    top = nt;
                    accepted = true;
                    break;
                }
            }
            tau *= 0.5;
        }
        if accepted {
            stalls = 0;
            tau = (tau * 1.5).min(1e3);
            continue;
        }
        if let Some((v, e)) = try_newton(&top, lambda, tols.residual) {
            report.level = e;
            report.critical_point = Some(v);
            report.converged = true;
            break;
        }
        stalls += 1;
        if stalls > 1 {
            report.diagnostics.push(format!("path deformation stalled at iteration {it}"));
            break;
        }
        tau = 1.0;
        if let Some((np, ne)) = reparametrize(&path, lambda) {
            let nt = polyline_max(&np, &ne, lambda);
            if nt.value <= top.value {
                path = np;
                energies = ne;
                top = nt;
            }
        }
    }
    if let Some(v) = &report.critical_point {
        report.residual = residual_norm(v, lambda);
    }

    if !report.converged {
        report.residual = residual_norm(&top.point, lambda);
        report.level = top.value;
        report.critical_point = Some(top.point.clone());
        report.diagnostics.push("no critical point reached; returning the path maximum".into());
    }
    report.path_history.push(path.iter().map(|s| s.field().clone()).collect());
    if report.converged && report.level <= 1e-8 {
        report.converged = false;
        report
            .diagnostics
            .push(format!("mountain-pass level collapsed to {:.3e}", report.level));
    }
    Ok(report)
}

/// Highest point found along the piecewise-linear path.
struct PathMax {
    value: f64,
    point: StateVector,
}

/// Maximum of `I_λ` along the polyline: each segment is sampled at eighths
/// and the best sample refined by golden-section search.
fn polyline_max(path: &[StateVector], energies: &[f64], lambda: f64) -> PathMax {
    let at = |k: usize, s: f64| {
        let vals = path[k]
            .values()
            .iter()
            .zip(path[k + 1].values())
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        path[k].with_values(vals)
    };
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
    // first segment is the ray t·γ₁ from 0: I = ½t²Q + tᵖP/p exactly
    let first = &path[1];
    let (q, pp, p) = (first.grad_sq() - lambda * first.v_l2(), first.h_lp(), first.p());
    let ray = |t: f64| 0.5 * t * t * q + t.powf(p) * pp / p;
    let mut ts = vec![0.0, 1.0];
    if q > 0.0 && pp < 0.0 {
        let t = (q / -pp).powf(1.0 / (p - 2.0));
        if t < 1.0 {
            ts.push(t);
        }
    }
    for t in ts {
        if ray(t) > best.0 {
            best = (ray(t), 0, t);
        }
    }
    for k in 1..path.len() - 1 {
        if energies[k] > best.0 {
            best = (energies[k], k, 0.0);
        }
        for j in 1..8 {
            let s = j as f64 / 8.0;
            let e = energy(&at(k, s), lambda);
            if e > best.0 {
                best = (e, k, s);
            }
        }
    }
    let last = path.len() - 1;
    if energies[last] > best.0 {
        return PathMax { value: energies[last], point: path[last].clone() };
    }
    let (_, k, s0) = best;
    if k == 0 {
        return PathMax { value: best.0, point: at(0, s0) };
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = ((s0 - 0.125).max(0.0), (s0 + 0.125).min(1.0));
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = energy(&at(k, x1), lambda);
    let mut f2 = energy(&at(k, x2), lambda);
    for _ in 0..20 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = energy(&at(k, x1), lambda);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = energy(&at(k, x2), lambda);
        }
    }
    let cands = [(best.0, s0), (f1, x1), (f2, x2)];
    let (value, s) = cands
        .into_iter()
        .fold((f64::NEG_INFINITY, 0.0), |acc, c| if c.0 > acc.0 { c } else { acc });
    PathMax { value, point: at(k, s) }
}

/// Newton from the path maximum, accepted when it lands on a positive level
/// in `[0.8, 1.05]` times that maximum (the polyline maximum bounds `c` from
/// above up to sampling error).
fn try_newton(top: &PathMax, lambda: f64, tol: f64) -> Option<(StateVector, f64)> {
    let v = newton_critical_point(lambda, &top.point, tol)?;
    let e = energy(&v, lambda);
    (e > 1e-8 && e >= 0.8 * top.value && e <= 1.05 * top.value).then_some((v, e))
}

/// Damped Newton for `I_λ'(u) = 0` from `start`, with the dual residual
/// norm as merit function. `None` unless the residual reaches `tol`.
fn newton_critical_point(lambda: f64, start: &StateVector, tol: f64) -> Option<StateVector> {
    let mut s = start.clone();
    let mut res = residual_norm(&s, lambda);
    for _ in 0..60 {
        if res <= tol {
            return Some(s);
        }
        let r = first_variation(&s, lambda).into_values();
        let lu = hessian(&s, lambda).lu()?;
        let delta = lu.solve(&r);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = s.with_values(
                s.values().iter().zip(&delta).map(|(u, d)| (u - t * d).abs()).collect(),
            );
            let tr = residual_norm(&trial, lambda);
            if tr < (1.0 - 1e-4 * t) * res {
                s = trial;
                res = tr;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    (res <= tol).then_some(s)
}

/// Redistributes interior nodes at equal E-norm arclength along the polyline.
fn reparametrize(path: &[StateVector], lambda: f64) -> Option<(Vec<StateVector>, Vec<f64>)> {
    let m = path.len();
    let mut cum = vec![0.0; m];
    for k in 1..m {
        let diff: Vec<f64> = path[k]
            .values()
            .iter()
            .zip(path[k - 1].values())
            .map(|(a, b)| a - b)
            .collect();
        cum[k] = cum[k - 1] + path[k].with_values(diff).e_norm();
    }
    let total = cum[m - 1];
    if !(total > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(m);
    out.push(path[0].clone());
    let mut seg = 1;
    for k in 1..m - 1 {
        let target = total * k as f64 / (m - 1) as f64;
        while seg < m - 1 && cum[seg] < target {
            seg += 1;
        }
        let (a, b) = (cum[seg - 1], cum[seg]);
        let w = if b > a { (target - a) / (b - a) } else { 0.0 };
        let vals = path[seg - 1]
            .values()
            .iter()
            .zip(path[seg].values())
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        out.push(path[0].with_values(vals));
    }
    out.push(path[m - 1].clone());
    let e = out.iter().map(|s| energy(s, lambda)).collect();
    Some((out, e))
}

/// Local minimizer below `v`: descent from `min(u_λ, v)` under the obstacle `u ≤ v`.
pub fn order_pair(problem: &Problem, lambda: f64, u: &StateVector, v: &StateVector) -> Result<MinimizeReport> {
    let init: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a.min(*b)).collect();
    local_minimize_with(
        problem,
        lambda,
        &MinimizeOptions {
            init: Some(Field::from_values(problem.grid(), init)?),
            obstacle: Some(v.values().to_vec()),
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone)]
pub struct ThresholdPair {
    pub lambda: f64,
    /// Local minimizer below `u₁`.
    pub lower: MinimizeReport,
    /// `α u₀` from the constrained eigenproblem.
    pub upper: StateVector,
    pub lower_energy: f64,
    pub upper_energy: f64,
    pub upper_residual: f64,
    /// `(I''(u₁)u₁, u₁)`
    pub upper_second_variation: f64,
    pub upper_h_lp: f64,
    /// `u₀ ≤ u₁` at every node.
    pub ordered: bool,
}

/// The pair `u₀ < u₁` at `λ = λ1(Ω,V,h)`, with `I(u₀) < 0 = I(u₁) = (I''(u₁)u₁, u₁)`.
pub fn threshold_pair(problem: &Problem) -> Result<ThresholdPair> {
    if !problem.h().has_negative_part() {
        return Err(LabError::refused("h⁻ ≡ 0: no threshold solution"));
    }
    let c = lambda1_constrained(problem)?;
    if !c.value.is_finite() {
        return Err(LabError::refused("λ1(Ω,V,h) is infinite"));
    }
    if !(c.value > c.lambda1_v * (1.0 + 1e-9)) {
        return Err(LabError::refused(format!(
            "λ1(Ω,V) = {} is not below λ1(Ω,V,h) = {}",
            c.lambda1_v, c.value
        )));
    }
    let Some(u1) = c.threshold_solution.clone() else {
        return Err(LabError::failure("threshold_pair", "constrained minimizer has σ₂ ≥ 0"));
    };
    let lambda = c.value;
    let upper = problem.state(u1)?;
    let eig = principal_eigenpair_tol(problem.grid(), problem.v(), None, problem.tolerances().eigen)?;
    let lower = local_minimize_with(
        problem,
        lambda,
        &MinimizeOptions {
            obstacle: Some(upper.values().to_vec()),
            eigen: Some(eig),
            ..Default::default()
        },
    )?;
    let Some(low) = lower.state.clone() else {
        return Err(LabError::failure("threshold_pair", "no local minimizer below u₁"));
    };
    let ordered = low.values().iter().zip(upper.values()).all(|(a, b)| a <= b);
    Ok(ThresholdPair {
        lambda,
        lower_energy: energy(&low, lambda),
        upper_energy: energy(&upper, lambda),
        upper_residual: residual_norm(&upper, lambda),
        upper_second_variation: second_variation(&upper, lambda, upper.field())?,
        upper_h_lp: upper.h_lp(),
        ordered,
        lower,
        upper,
    })
}
