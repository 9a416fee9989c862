//! One function per subcommand. Each returns the `result` object of the
//! report, an optional CSV table and whether the solver delivered.

use anyhow::Result;
use ell_lab_core::branch::{
    blowup_lambdas, certify_nonexistence, compute_window, continue_branch_in, estimate_lambda_star, fit_blowup,
    sweep_mu, Branch, Window,
};
use ell_lab_core::eigen::{eigen_convergence_sweep, extrapolate_sweep, principal_eigenpair_tol, EigenResult};
use ell_lab_core::functional::{energy, second_variation, Problem, StateVector};
use ell_lab_core::grid::Field;
use ell_lab_core::minimize::{lambda1_constrained, local_minimize_with, MinimizeOptions, MinimizeReport};
use ell_lab_core::mountainpass::{find_endpoint, mountain_pass};
use ell_lab_core::verify::{fd_suite, manufactured_refinement};
use ell_lab_core::weights::check_embedding;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::report::{num, nums, object, opt, Table};

pub const DEFAULT_BRANCH_POINTS: usize = 8;
pub const DEFAULT_BLOWUP_POINTS: usize = 10;
pub const DEFAULT_PATH_NODES: usize = 33;
pub const DEFAULT_MUS: [f64; 5] = [1.0, 4.0, 16.0, 64.0, 256.0];

pub struct Outcome {
    pub result: Value,
    pub table: Option<Table>,
    /// `Some(reason)` when the solver did not deliver.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Self {
            result,
            table: None,
            failure: None,
        }
    }
}

/// Inputs shared by all subcommands.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub problem: &'a Problem,
    pub window: Window,
    pub seed: u64,
}

impl Context<'_> {
    fn lambda(&self) -> f64 {
        self.problem.lambda()
    }

    fn eigen(&self, masked: bool) -> Result<EigenResult> {
        let mask = masked.then(|| self.problem.h().minus_zero_mask());
        Ok(principal_eigenpair_tol(
            self.problem.grid(),
            self.problem.v(),
            mask,
            self.problem.tolerances().eigen,
        )?)
    }
}

pub fn window_of(problem: &Problem) -> Result<Window> {
    Ok(compute_window(problem)?)
}

fn radii(problem: &Problem) -> Value {
    nums(problem.grid().dof_radius())
}

fn field(f: &Field) -> Value {
    nums(f.values())
}

fn minimize_json(rep: &MinimizeReport) -> Value {
    let s = rep.state.as_ref();
    json!({
        "lambda": num(rep.lambda),
        "feasible": rep.feasible,
        "converged": rep.converged,
        "unbounded": rep.unbounded,
        "sigma": num(rep.sigma),
        "residual": num(rep.residual),
        "iterations": rep.iterations,
        "cone_margin": num(rep.cone_margin),
        "hessian_positive_definite": rep.hessian_pd,
        "boundary_contradiction": rep.boundary_contradiction,
        "nonnegative": s.map(|s| s.is_nonnegative()),
        "e_norm": opt(s.map(|s| s.e_norm())),
        "diagnostics": rep.diagnostics,
        "solution": s.map(|s| field(s.field())),
    })
}

pub fn eigen(cx: &Context) -> Result<Outcome> {
    let masked = cx.config.run.masked;
    let e = cx.eigen(masked)?;
    let mut result = json!({
        "masked": masked,
        "lambda1": num(e.value),
        "residual": num(e.residual),
        "eigen_tolerance": num(cx.problem.tolerances().eigen),
        "factorizations": e.iterations,
        "interior_positive": e.interior_positive,
        "diagnostics": e.diagnostics,
        "radius": radii(cx.problem),
        "eigenfunction": e.eigenfunction.as_ref().map(field),
    });
    let mut table = None;
    let sweep_radii = &cx.config.run.r_max_sweep;
    if !sweep_radii.is_empty() {
        let sweep = eigen_convergence_sweep(&cx.problem.spec().clone(), sweep_radii)?;
        let extrapolated = cx.config.run.extrapolate_to.map(|r| (r, extrapolate_sweep(&sweep, r)));
        result["sweep"] = Value::Array(
            sweep
                .iter()
                .map(|&(r, l)| json!({"r_max": num(r), "lambda1": num(l)}))
                .collect(),
        );
        if let Some((r, x)) = extrapolated {
            result["extrapolated"] = json!({"r_max": num(r), "lambda1": opt(x)});
        }
        table = Some(Table {
            header: vec!["r_max", "lambda1"],
            rows: sweep.iter().map(|&(r, l)| vec![r, l]).collect(),
        });
    }
    Ok(Outcome {
        result,
        table,
        failure: None,
    })
}

pub fn lambda1h(cx: &Context) -> Result<Outcome> {
    let c = lambda1_constrained(cx.problem)?;
    Ok(Outcome::ok(json!({
        "lambda1_vh": num(c.value),
        "sigma1": num(c.sigma1),
        "sigma2": opt(c.sigma2),
        "constraint_value": num(c.constraint_value),
        "constraint_active": c.constraint_active,
        "constraint_tolerance": num(cx.problem.tolerances().constraint),
        "kkt_residual": num(c.kkt_residual),
        "threshold_residual": opt(c.threshold_residual),
        "newton_polished": c.newton_polished,
        "iterations": c.iterations,
        "diagnostics": c.diagnostics,
        "radius": radii(cx.problem),
        "minimizer": c.minimizer.as_ref().map(field),
        "threshold_solution": c.threshold_solution.as_ref().map(field),
    })))
}

pub fn minimize(cx: &Context) -> Result<Outcome> {
    let rep = local_minimize_with(cx.problem, cx.lambda(), &MinimizeOptions::default())?;
    if !rep.feasible {
        return Err(refused(rep.diagnostics.join("; ")));
    }
    let mut result = minimize_json(&rep);
    result["residual_tolerance"] = num(cx.problem.tolerances().residual);
    result["radius"] = radii(cx.problem);
    let failure = (!rep.converged).then(|| format!("local minimizer did not converge: {}", rep.diagnostics.join("; ")));
    Ok(Outcome {
        result,
        table: None,
        failure,
    })
}

fn refused(msg: String) -> anyhow::Error {
    ell_lab_core::LabError::Refused(msg).into()
}

pub fn mountain_pass_cmd(cx: &Context) -> Result<Outcome> {
    let lambda = cx.lambda();
    let nodes = cx.config.run.path_nodes.unwrap_or(DEFAULT_PATH_NODES);
    let endpoint = find_endpoint(cx.problem, lambda)?;
    let rep = mountain_pass(cx.problem, lambda, &endpoint, nodes)?;
    let lower = local_minimize_with(cx.problem, lambda, &MinimizeOptions::default())?;
    let v = rep.critical_point.as_ref();
    let curvature = match v {
        Some(v) => Some(second_variation(v, lambda, v.field())?),
        None => None,
    };
    let result = json!({
        "lambda": num(lambda),
        "path_nodes": nodes,
        "level": num(rep.level),
        "converged": rep.converged,
        "residual": num(rep.residual),
        "residual_tolerance": num(cx.problem.tolerances().residual),
        "iterations": rep.iterations,
        "max_history": nums(&rep.max_history),
        "second_variation_along_v": opt(curvature),
        "critical_point_nonnegative": v.map(|v| v.is_nonnegative()),
        "local_minimizer": minimize_json(&lower),
        "diagnostics": rep.diagnostics,
        "radius": radii(cx.problem),
        "critical_point": v.map(|v| field(v.field())),
        "endpoint": field(&rep.endpoint),
    });
    let table = Table {
        header: vec!["iteration", "path_max"],
        rows: rep
            .max_history
            .iter()
            .enumerate()
            .map(|(i, &m)| vec![i as f64, m])
            .collect(),
    };
    let failure = (!rep.converged).then(|| format!("mountain pass did not converge: {}", rep.diagnostics.join("; ")));
    Ok(Outcome {
        result,
        table: Some(table),
        failure,
    })
}

fn evenly_spaced(w: &Window, count: usize) -> Vec<f64> {
    let (a, b) = w.branch_interval();
    (1..=count).map(|k| a + (b - a) * k as f64 / (count + 1) as f64).collect()
}

fn branch_json(b: &Branch) -> Value {
    Value::Array(
        b.points
            .iter()
            .map(|p| {
                json!({
                    "lambda": num(p.lambda),
                    "sigma": num(p.sigma),
                    "energy": num(energy(&p.state, p.lambda)),
                    "e_norm": num(p.e_norm()),
                    "grad_norm": num(p.grad_norm()),
                    "vp_norm": num(p.vp_norm()),
                    "hp_norm": num(p.hp_norm()),
                    "residual": num(p.residual),
                    "iterations": p.iterations,
                })
            })
            .collect(),
    )
}

fn branch_table(b: &Branch) -> Table {
    Table {
        header: vec!["lambda", "sigma", "energy", "e_norm", "grad_norm", "vp_norm", "hp_norm", "residual"],
        rows: b
            .points
            .iter()
            .map(|p| {
                vec![
                    p.lambda,
                    p.sigma,
                    energy(&p.state, p.lambda),
                    p.e_norm(),
                    p.grad_norm(),
                    p.vp_norm(),
                    p.hp_norm(),
                    p.residual,
                ]
            })
            .collect(),
    }
}

fn run_branch(cx: &Context, default: impl Fn(&Window, usize) -> Vec<f64>, default_count: usize) -> Result<Branch> {
    let lambdas = if cx.config.run.lambdas.is_empty() {
        default(&cx.window, cx.config.run.branch_points.unwrap_or(default_count))
    } else {
        cx.config.run.lambdas.clone()
    };
    Ok(continue_branch_in(cx.problem, &lambdas, cx.window, &cx.eigen(false)?)?)
}

pub fn branch(cx: &Context) -> Result<Outcome> {
    let b = run_branch(cx, evenly_spaced, DEFAULT_BRANCH_POINTS)?;
    let result = json!({
        "points": branch_json(&b),
        "residual_tolerance": num(cx.problem.tolerances().residual),
        "order_violation": num(b.order_violation()),
        "sigma_increase": num(b.sigma_increase()),
        "v_nonnegative": b.v_nonnegative,
        "h_nonnegative": b.h_nonnegative,
        "warnings": b.warnings,
        "failure": b.failure,
    });
    Ok(Outcome {
        table: Some(branch_table(&b)),
        failure: b.failure.clone(),
        result,
    })
}

pub fn blowup(cx: &Context) -> Result<Outcome> {
    let b = run_branch(cx, blowup_lambdas, DEFAULT_BLOWUP_POINTS)?;
    let fit = fit_blowup(&b, &cx.eigen(true)?)?;
    let checks: Vec<Value> = fit
        .checks
        .iter()
        .map(|c| json!({"lambda": num(c.lambda), "coefficient": num(c.coefficient), "min_margin": num(c.min_margin)}))
        .collect();
    let result = json!({
        "exponent": num(fit.exponent),
        "constant": num(fit.constant),
        "points_used": fit.points_used,
        "mu": num(fit.mu),
        "calibration": num(fit.calibration),
        "checks": checks,
        "points": branch_json(&b),
        "warnings": b.warnings,
        "failure": b.failure,
    });
    Ok(Outcome {
        table: Some(branch_table(&b)),
        failure: b.failure.clone(),
        result,
    })
}

pub fn sweep(cx: &Context) -> Result<Outcome> {
    let mus = if cx.config.run.mus.is_empty() {
        DEFAULT_MUS.to_vec()
    } else {
        cx.config.run.mus.clone()
    };
    let s = sweep_mu(cx.problem, &mus)?;
    let result = json!({
        "values": s.values.iter().map(|&(m, l)| json!({"mu": num(m), "lambda1_vh": num(l)})).collect::<Vec<_>>(),
        "target": num(s.target),
        "lambda1_v": num(s.lambda1_v),
        "max_decrease": num(s.max_decrease),
        "max_excess": num(s.max_excess),
        "final_gap": num(s.final_gap),
        "eigen_tolerance": num(cx.problem.tolerances().eigen),
    });
    Ok(Outcome {
        table: Some(Table {
            header: vec!["mu", "lambda1_vh"],
            rows: s.values.iter().map(|&(m, l)| vec![m, l]).collect(),
        }),
        failure: None,
        result,
    })
}

pub fn lambda_star(cx: &Context) -> Result<Outcome> {
    let r = estimate_lambda_star(cx.problem, cx.config.run.resolution)?;
    Ok(Outcome::ok(json!({
        "lambda_lo": num(r.lambda_lo),
        "lambda_hi": num(r.lambda_hi),
        "solves": r.solves,
        "failure_at_hi": r.failure_at_hi,
        "complement_connected": r.complement_connected,
        "v_nonnegative": r.v_nonnegative,
        "h_minus_e1_integral": num(r.h_minus_e1_integral),
        "solution": r.solution.as_ref().map(minimize_json),
    })))
}

pub fn certify(cx: &Context) -> Result<Outcome> {
    let lambda = cx.lambda();
    // below the threshold, the local minimizer (if any) is the candidate
    let candidate: Option<StateVector> = if lambda < cx.window.lambda1_minus_zero {
        let rep = local_minimize_with(cx.problem, lambda, &MinimizeOptions::default())?;
        rep.solution().cloned()
    } else {
        None
    };
    let c = certify_nonexistence(cx.problem, lambda, candidate.as_ref(), cx.seed)?;
    let kind = serde_json::to_value(c.kind)?;
    Ok(Outcome::ok(object(vec![
        ("kind", kind),
        ("lambda", num(c.lambda)),
        ("lhs", num(c.lhs)),
        ("rhs", num(c.rhs)),
        ("checks", json!(c.checks)),
        ("worst_ratio", num(c.worst_ratio)),
        ("verified", json!(c.verify(cx.problem))),
        ("candidate_used", json!(candidate.is_some())),
        ("radius", radii(cx.problem)),
        ("phi", c.phi.as_ref().map_or(Value::Null, field)),
    ])))
}

pub fn embedding(cx: &Context) -> Result<Outcome> {
    let spec = cx.problem.spec();
    let r = check_embedding(&spec.v, &spec.h, spec.dim(), spec.p, cx.problem.grid())?;
    Ok(Outcome::ok(serde_json::to_value(r)?))
}

pub fn verify(cx: &Context) -> Result<Outcome> {
    let run = &cx.config.run;
    let (reports, orders) = manufactured_refinement(run.verify_nodes.unwrap_or(1000), run.verify_levels.unwrap_or(3))?;
    let suite = fd_suite(cx.problem, cx.lambda(), run.fd_pairs.unwrap_or(20), cx.seed)?;
    Ok(Outcome::ok(json!({
        "manufactured": serde_json::to_value(&reports)?,
        "manufactured_orders": nums(&orders),
        "finite_differences": serde_json::to_value(&suite)?,
        "worst_fd_relative_error": num(suite.worst()),
    })))
}
