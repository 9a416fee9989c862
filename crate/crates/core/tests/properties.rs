//! Invariants checked over random inputs.

use ell_lab_core::branch::{certify_nonexistence, CertificateKind};
use ell_lab_core::eigen::principal_eigenpair;
use ell_lab_core::functional::{energy, first_variation, Problem, ProblemSpec};
use ell_lab_core::grid::{build_radial_grid, unit_sphere_area, Field, GridSpec};
use ell_lab_core::linalg::dot;
use ell_lab_core::minimize::lambda1_constrained;
use ell_lab_core::weights::{perturb_h, sample_weight, WeightSpec};
use proptest::prelude::*;

fn ball(nodes: usize, v: WeightSpec, h: WeightSpec) -> ProblemSpec {
    ProblemSpec {
        grid: GridSpec::Radial {
            dim: 3,
            r_max: 1.0,
            nodes,
            stretch: 1.0,
        },
        p: 4.0,
        lambda: 15.0,
        v,
        h,
        tolerances: Default::default(),
    }
}

/// Piecewise `h` with a negative core, a zero shell and a positive outside.
fn sign_changing_h() -> impl Strategy<Value = WeightSpec> {
    (0.15..0.35f64, 0.05..0.25f64, 0.2..3.0f64, 1.0..80.0f64)
        .prop_map(|(a, gap, neg, pos)| WeightSpec::piecewise(vec![a, a + gap], vec![-neg, 0.0, pos]))
}

fn positive_field(problem: &Problem, coeffs: &[f64]) -> Field {
    Field::from_fn(problem.grid(), |_, r| {
        let base = 1.0 - r * r;
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * base * (k as f64 * r).cos().abs())
            .sum::<f64>()
            .abs()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn eigenvalue_is_inverse_homogeneous_in_the_weight(c in 0.1..10.0f64, bump in 0.0..3.0f64) {
        let v = WeightSpec::constant(1.0).plus(WeightSpec::bump(0.4, 0.3, 1.0, bump));
        let pr = ball(120, v.clone(), WeightSpec::constant(1.0)).discretize().unwrap();
        let scaled = ball(120, WeightSpec::new(v.components.iter().cloned().map(|comp| match comp {
            ell_lab_core::weights::WeightComponent::PowerLaw { exponent, amplitude } =>
                ell_lab_core::weights::WeightComponent::PowerLaw { exponent, amplitude: c * amplitude },
            ell_lab_core::weights::WeightComponent::Bump { center, radius, sign, amplitude } =>
                ell_lab_core::weights::WeightComponent::Bump { center, radius, sign, amplitude: c * amplitude },
            other => other,
        }).collect()), WeightSpec::constant(1.0)).discretize().unwrap();
        let a = principal_eigenpair(pr.grid(), pr.v(), None).unwrap().value;
        let b = principal_eigenpair(scaled.grid(), scaled.v(), None).unwrap().value;
        prop_assert!((a / c - b).abs() <= 1e-8 * b, "{} {}", a / c, b);
    }

    #[test]
    fn energy_along_rays_is_a_two_term_polynomial(
        coeffs in prop::collection::vec(0.1..2.0f64, 1..4),
        t in 0.0..4.0f64,
        lambda in 0.0..40.0f64,
        h in sign_changing_h(),
    ) {
        let pr = ball(100, WeightSpec::constant(1.0), h).discretize().unwrap();
        let s = pr.state(positive_field(&pr, &coeffs)).unwrap();
        let q = s.grad_sq() - lambda * s.v_l2();
        let p = s.h_lp();
        let expected = 0.5 * t * t * q + t.powi(4) * p / 4.0;
        let got = energy(&s.scaled(t), lambda);
        prop_assert!((got - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        // ⟨I'(u), u⟩ = Q + P
        let pairing = dot(first_variation(&s, lambda).values(), s.values());
        prop_assert!((pairing - (q + p)).abs() <= 1e-9 * (1.0 + q.abs() + p.abs()));
    }

    #[test]
    fn dirichlet_form_is_symmetric_and_matches_the_stiffness(
        a in prop::collection::vec(-2.0..2.0f64, 3),
        b in prop::collection::vec(-2.0..2.0f64, 3),
    ) {
        let grid = build_radial_grid(3, 1.0, 80, 1.0).unwrap();
        let f = |c: &Vec<f64>| Field::from_fn(&grid, |_, r| c[0] + c[1] * r + c[2] * (3.0 * r).sin());
        let (u, v) = (f(&a), f(&b));
        let uv = grid.dirichlet_form(u.values(), v.values());
        prop_assert!((uv - grid.dirichlet_form(v.values(), u.values())).abs() <= 1e-12 * (1.0 + uv.abs()));
        let ku = grid.apply_stiffness(u.values());
        prop_assert!((dot(&ku, v.values()) - uv).abs() <= 1e-10 * (1.0 + uv.abs()));
        prop_assert!(grid.dirichlet_energy(u.values()) >= 0.0);
    }

    #[test]
    fn radial_weights_integrate_the_ball_volume(dim in 1usize..5, r_max in 0.2..8.0f64, nodes in 16usize..400) {
        let grid = build_radial_grid(dim, r_max, nodes, 1.0).unwrap();
        let total: f64 = grid.weights().iter().sum();
        let exact = unit_sphere_area(dim) * r_max.powi(dim as i32) / dim as f64;
        prop_assert!((total - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn perturbation_scales_only_the_positive_part(mu in 0.0..50.0f64, h in sign_changing_h()) {
        let grid = build_radial_grid(3, 1.0, 60, 1.0).unwrap();
        let base = sample_weight(&h, &grid).unwrap();
        let pert = sample_weight(&perturb_h(&h, mu).unwrap(), &grid).unwrap();
        for (a, b) in base.values().iter().zip(pert.values()) {
            let expected = if *a > 0.0 { mu * a } else { *a };
            prop_assert!((b - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn constrained_eigenvalue_is_sandwiched(h in sign_changing_h()) {
        let pr = ball(120, WeightSpec::constant(1.0), h).discretize().unwrap();
        let c = lambda1_constrained(&pr).unwrap();
        let tol = 1e-6 * c.value;
        prop_assert!(c.lambda1_v <= c.value + tol);
        prop_assert!(c.value <= c.lambda1_minus_zero + tol);
    }

    #[test]
    fn threshold_certificates_always_reverify(factor in 1.01..3.0f64, h in sign_changing_h(), seed in any::<u64>()) {
        let pr = ball(100, WeightSpec::constant(1.0), h).discretize().unwrap();
        let mz = principal_eigenpair(pr.grid(), pr.v(), Some(pr.h().minus_zero_mask())).unwrap();
        let cert = certify_nonexistence(&pr, factor * mz.value, None, seed).unwrap();
        prop_assert_eq!(cert.kind, CertificateKind::NonexistenceAboveThreshold);
        prop_assert!(cert.verify(&pr));
        prop_assert!(cert.lhs > cert.rhs);
    }
}
