//! Reference problems on the unit ball in `ℝ³` with `V ≡ 1` and `p = 4`.

use crate::functional::{ProblemSpec, Tolerances};
use crate::grid::GridSpec;
use crate::weights::WeightSpec;

/// Amplitude of `h` on `|x| > 1/2` in [`sign_changing_ball`].
pub const OUTER_AMPLITUDE: f64 = 50.0;

fn ball(nodes: usize, h: WeightSpec) -> ProblemSpec {
    ProblemSpec {
        grid: GridSpec::Radial {
            dim: 3,
            r_max: 1.0,
            nodes,
            stretch: 1.0,
        },
        p: 4.0,
        lambda: 20.0,
        v: WeightSpec::constant(1.0),
        h,
        tolerances: Tolerances::default(),
    }
}

/// `h = −1` on `|x| < 0.3`, `0` on `0.3 ≤ |x| ≤ 0.5`, [`OUTER_AMPLITUDE`] beyond.
///
/// With an outer amplitude of 1 the unconstrained `e₁` already satisfies
/// `∫h e₁⁴ < 0`, which collapses `λ1(Ω,V,h)` onto `λ1(Ω,V)`; the larger
/// amplitude opens the window `(λ1(Ω,V), λ1(Ω,V,h))`.
pub fn sign_changing_ball(nodes: usize) -> ProblemSpec {
    ball(
        nodes,
        WeightSpec::piecewise(vec![0.3, 0.5], vec![-1.0, 0.0, OUTER_AMPLITUDE]),
    )
}

/// `h = 0` on `|x| ≤ 0.5` and `1` beyond.
pub fn nonnegative_ball(nodes: usize) -> ProblemSpec {
    ball(nodes, WeightSpec::piecewise(vec![0.5], vec![0.0, 1.0]))
}
