//! Independent oracles: radial ODE shooting and dense symmetric eigensolvers.

use ell_lab_core::benchmarks::{sign_changing_ball, OUTER_AMPLITUDE};
use ell_lab_core::eigen::principal_eigenpair;
use ell_lab_core::functional::ProblemSpec;
use ell_lab_core::grid::GridSpec;
use ell_lab_core::minimize::lambda1_constrained;
use ell_lab_core::weights::WeightSpec;

/// RK4 for `u'' = −(N−1)/r u' − f(r, u)` from a series start at small `r`.
/// Returns the radius of the first sign change of `u` in `(0, r_max]`, or `None`,
/// together with `∫ g(r) u^4 r^{N−1} dr` up to that radius.
fn shoot(
    dim: usize,
    r_max: f64,
    steps: usize,
    a: f64,
    f: &dyn Fn(f64, f64) -> f64,
    g: &dyn Fn(f64) -> f64,
) -> (Option<f64>, f64) {
    let nd = dim as f64;
    let hstep = r_max / steps as f64;
    let r0 = hstep;
    let c = f(0.0, a);
    let mut r = r0;
    let mut y = [a - c * r0 * r0 / (2.0 * nd), -c * r0 / nd];
    let rhs = |r: f64, y: [f64; 2]| [y[1], -(nd - 1.0) / r * y[1] - f(r, y[0])];
    let mut integral = 0.0;
    for _ in 1..steps {
        let k1 = rhs(r, y);
        let k2 = rhs(r + hstep / 2.0, [y[0] + hstep / 2.0 * k1[0], y[1] + hstep / 2.0 * k1[1]]);
        let k3 = rhs(r + hstep / 2.0, [y[0] + hstep / 2.0 * k2[0], y[1] + hstep / 2.0 * k2[1]]);
        let k4 = rhs(r + hstep, [y[0] + hstep * k3[0], y[1] + hstep * k3[1]]);
        let next = [
            y[0] + hstep / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + hstep / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        let mid = r + hstep / 2.0;
        let um = 0.5 * (y[0] + next[0]);
        integral += hstep * g(mid) * um.powi(4) * mid.powf(nd - 1.0);
        if next[0] <= 0.0 {
            let t = y[0] / (y[0] - next[0]);
            return (Some(r + t * hstep), integral);
        }
        y = next;
        r += hstep;
        if !y[0].is_finite() {
            return (None, integral);
        }
    }
    (None, integral)
}

/// Dirichlet eigenvalue of `−Δu = λVu` on `B_{r_max}` by shooting and bisection.
fn shooting_eigenvalue(dim: usize, r_max: f64, v: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let zero_before_end = |lam: f64| {
        let f = |r: f64, u: f64| lam * v(r) * u;
        shoot(dim, r_max, 20_000, 1.0, &f, &|_| 0.0).0.is_some_and(|z| z < r_max)
    };
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if zero_before_end(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ball(nodes: usize, v: WeightSpec, h: WeightSpec) -> ProblemSpec {
    ProblemSpec {
        grid: GridSpec::Radial {
            dim: 3,
            r_max: 1.0,
            nodes,
            stretch: 1.0,
        },
        p: 4.0,
        lambda: 20.0,
        v,
        h,
        tolerances: Default::default(),
    }
}

#[test]
fn eigenvalue_matches_shooting_for_variable_weight() {
    // V = 1 + r² on the unit ball of ℝ³
    let reference = shooting_eigenvalue(3, 1.0, &|r| 1.0 + r * r, 1.0, 30.0);
    let spec = ball(800, WeightSpec::constant(1.0).plus(WeightSpec::power_law(2.0, 1.0)), WeightSpec::constant(1.0));
    let pr = spec.discretize().unwrap();
    let e = principal_eigenpair(pr.grid(), pr.v(), None).unwrap();
    assert!((e.value - reference).abs() <= 1e-3 * reference, "{} vs {}", e.value, reference);
}

#[test]
fn eigenvalue_matches_shooting_in_two_dimensions() {
    // first zero of J₀ squared
    let reference = shooting_eigenvalue(2, 1.0, &|_| 1.0, 1.0, 30.0);
    assert!((reference - 2.404_825_557_695_773_f64.powi(2)).abs() < 1e-6);
    let spec = ProblemSpec {
        grid: GridSpec::Radial {
            dim: 2,
            r_max: 1.0,
            nodes: 800,
            stretch: 1.0,
        },
        ..ball(800, WeightSpec::constant(1.0), WeightSpec::constant(1.0))
    };
    let pr = spec.discretize().unwrap();
    let e = principal_eigenpair(pr.grid(), pr.v(), None).unwrap();
    assert!((e.value - reference).abs() <= 1e-3 * reference, "{} vs {}", e.value, reference);
}

/// Smallest eigenvalue of `D^{-1/2} K D^{-1/2}` over the nodes with `D > 0`,
/// other nodes pinned to zero.
fn dense_lambda1(k: &ell_lab_core::linalg::BandMatrix, d: &[f64], active: &[bool]) -> f64 {
    let idx: Vec<usize> = (0..d.len()).filter(|&i| active[i] && d[i] > 0.0).collect();
    let m = nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        let (i, j) = (idx[a], idx[b]);
        k.get(i, j) / (d[i] * d[j]).sqrt()
    });
    m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn banded_eigensolver_matches_dense_solver() {
    let pr = sign_changing_ball(500).discretize().unwrap();
    let g = pr.grid();
    let d: Vec<f64> = g.mass().iter().zip(pr.v().values()).map(|(m, v)| m * v).collect();
    let full = dense_lambda1(g.stiffness(), &d, &vec![true; d.len()]);
    let masked = dense_lambda1(g.stiffness(), &d, pr.h().minus_zero_mask().nodes());
    let c = lambda1_constrained(&pr).unwrap();
    assert!((c.lambda1_v - full).abs() <= 1e-8 * full, "{} vs {}", c.lambda1_v, full);
    assert!((c.lambda1_minus_zero - masked).abs() <= 1e-8 * masked);
    assert!(full <= c.value && c.value <= masked);
}

/// `λ1(Ω,V,h)` is the `λ` at which the upper positive radial solution of
/// `−Δu = λu − h u³` on `B₁` has `∫h u⁴ = 0` (equivalently `I_λ = 0`).
fn shooting_threshold(h: &dyn Fn(f64) -> f64, lam_lo: f64, lam_hi: f64) -> f64 {
    let steps = 20_000;
    // for fixed λ: upper positive solution and its ∫h u⁴
    let upper = |lam: f64| -> Option<f64> {
        let f = |r: f64, u: f64| lam * u - h(r) * u.powi(3);
        let miss = |a: f64| {
            let (z, _) = shoot(3, 1.0, steps, a, &f, h);
            z.map_or(1.0, |z| z - 1.0)
        };
        // scan amplitudes from the top down for the first crossing of z(a) = 1
        let amps: Vec<f64> = (0..400).map(|k| 1e3 * (1e-5f64).powf(k as f64 / 399.0)).collect();
        let mut prev = (amps[0], miss(amps[0]));
        for &a in &amps[1..] {
            let cur = (a, miss(a));
            if (prev.1 > 0.0) != (cur.1 > 0.0) {
                let (mut lo, mut hi) = (cur.0, prev.0);
                let s_lo = cur.1 > 0.0;
                for _ in 0..60 {
                    let mid = (lo * hi).sqrt();
                    if (miss(mid) > 0.0) == s_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (_, integral) = shoot(3, 1.0, steps, 0.5 * (lo + hi), &f, h);
                return Some(integral);
            }
            prev = cur;
        }
        None
    };
    let (mut lo, mut hi) = (lam_lo, lam_hi);
    let sign_lo = upper(lo).expect("solution at the lower λ") > 0.0;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match upper(mid) {
            Some(v) if (v > 0.0) == sign_lo => lo = mid,
            _ => hi = mid,
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn constrained_eigenvalue_matches_radial_shooting() {
    let h = |r: f64| {
        if r < 0.3 {
            -1.0
        } else if r <= 0.5 {
            0.0
        } else {
            OUTER_AMPLITUDE
        }
    };
    // the jumps of h make the grid value first order in the spacing, so
    // compare the Richardson extrapolation of n = 400 and n = 800
    let c = lambda1_constrained(&sign_changing_ball(400).discretize().unwrap()).unwrap();
    let fine = lambda1_constrained(&sign_changing_ball(800).discretize().unwrap()).unwrap();
    let extrapolated = 2.0 * fine.value - c.value;
    let reference = shooting_threshold(&h, c.lambda1_v + 0.5, c.lambda1_minus_zero - 0.5);
    assert!(
        (extrapolated - reference).abs() <= 5e-4 * reference,
        "grid {} / {} (extrapolated {}) vs shooting {}",
        c.value,
        fine.value,
        extrapolated,
        reference
    );
}
