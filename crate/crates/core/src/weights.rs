//! Weight families for `V` and `h`, their sign decompositions, the regions
//! `{h ≤ 0}` / `{h = 0}`, and analytic verdicts on the compact-embedding
//! conditions for power-law tails.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{unit_sphere_area, Field, Grid, GridKind};

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// One additive piece of a weight. Radial families are functions of `|x|`
/// and may be sampled on either grid kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightComponent {
    /// `amplitude · |x|^exponent`
    PowerLaw {
        exponent: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Smooth shell bump `sign · amplitude · exp(1 - 1/(1 - s²))`, `s = (|x| - center)/radius`,
    /// exactly zero for `|s| ≥ 1`.
    Bump {
        center: f64,
        radius: f64,
        sign: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `values[k]` on the k-th interval cut by `breakpoints`. At a breakpoint
    /// the piece of smaller magnitude wins, so zero plateaus are closed sets.
    PiecewiseRadial {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Linear interpolation of `values` at `radii`, `values[0]` below the
    /// first radius and `outside` beyond the last.
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
        outside: f64,
    },
    /// Non-radial expression for the box grid.
    BoxExpression { terms: Vec<BoxTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum BoxTerm {
    Constant { value: f64 },
    /// `value` on the closed disc, zero outside.
    Disc {
        center: [f64; 2],
        radius: f64,
        value: f64,
    },
    Gaussian {
        center: [f64; 2],
        width: f64,
        amplitude: f64,
    },
    Linear { coefficients: [f64; 2] },
}

/// A weight `f = Σ components`, with its positive part rescaled by
/// `positive_scale`: the sampled value is `positive_scale · f⁺ − f⁻`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub components: Vec<WeightComponent>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub positive_scale: f64,
}

impl WeightSpec {
    pub fn new(components: Vec<WeightComponent>) -> Self {
        Self {
            components,
            positive_scale: 1.0,
        }
    }

    pub fn power_law(exponent: f64, amplitude: f64) -> Self {
        Self::new(vec![WeightComponent::PowerLaw {
            exponent,
            amplitude,
        }])
    }

    pub fn constant(value: f64) -> Self {
        Self::power_law(0.0, value)
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Self {
        Self::new(vec![WeightComponent::PiecewiseRadial {
            breakpoints,
            values,
        }])
    }

    pub fn bump(center: f64, radius: f64, sign: f64, amplitude: f64) -> Self {
        Self::new(vec![WeightComponent::Bump {
            center,
            radius,
            sign,
            amplitude,
        }])
    }

    pub fn plus(mut self, other: WeightSpec) -> Self {
        assert!(
            self.positive_scale == 1.0 && other.positive_scale == 1.0,
            "sums of rescaled weights are ambiguous"
        );
        self.components.extend(other.components);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(LabError::invalid("weight has no components"));
        }
        if !(self.positive_scale >= 0.0) || !self.positive_scale.is_finite() {
            return Err(LabError::invalid("positive_scale must be finite and >= 0"));
        }
        for c in &self.components {
            match c {
                WeightComponent::PowerLaw {
                    exponent,
                    amplitude,
                } => {
                    if !exponent.is_finite() || !amplitude.is_finite() {
                        return Err(LabError::invalid("power_law parameters must be finite"));
                    }
                }
                WeightComponent::Bump {
                    center,
                    radius,
                    sign,
                    amplitude,
                } => {
                    if !(*radius > 0.0) || !center.is_finite() || !amplitude.is_finite() {
                        return Err(LabError::invalid("bump needs finite center/amplitude and radius > 0"));
                    }
                    if *sign != 1.0 && *sign != -1.0 {
                        return Err(LabError::invalid("bump sign must be +1 or -1"));
                    }
                }
                WeightComponent::PiecewiseRadial {
                    breakpoints,
                    values,
                } => {
                    if values.len() != breakpoints.len() + 1 {
                        return Err(LabError::invalid(
                            "piecewise_radial needs exactly one more value than breakpoints",
                        ));
                    }
                    if breakpoints.windows(2).any(|w| !(w[0] < w[1]))
                        || breakpoints.iter().chain(values).any(|v| !v.is_finite())
                    {
                        return Err(LabError::invalid(
                            "piecewise_radial breakpoints must be finite and strictly increasing",
                        ));
                    }
                }
                WeightComponent::Tabulated { radii, values, outside } => {
                    if radii.is_empty() || radii.len() != values.len() {
                        return Err(LabError::invalid("tabulated needs equally many radii and values, at least one"));
                    }
                    if radii.windows(2).any(|w| !(w[0] < w[1]))
                        || radii.iter().chain(values).chain([outside]).any(|v| !v.is_finite())
                    {
                        return Err(LabError::invalid(
                            "tabulated radii must be finite and strictly increasing",
                        ));
                    }
                }
                WeightComponent::BoxExpression { terms } => {
                    for t in terms {
                        let ok = match t {
                            BoxTerm::Constant { value } => value.is_finite(),
                            BoxTerm::Disc { radius, value, .. } => *radius > 0.0 && value.is_finite(),
                            BoxTerm::Gaussian { width, amplitude, .. } => {
                                *width > 0.0 && amplitude.is_finite()
                            }
                            BoxTerm::Linear { coefficients } => {
                                coefficients.iter().all(|c| c.is_finite())
                            }
                        };
                        if !ok {
                            return Err(LabError::invalid("malformed box_expression term"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn has_box_expression(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c, WeightComponent::BoxExpression { .. }))
    }

    /// Raw value `Σ components` at a point, before the positive rescaling.
    /// `origin_cell` is the radius of the dual cell when the point is the
    /// origin; singular power laws are replaced there by their cell average.
    fn raw_value(&self, x: [f64; 2], r: f64, dim: usize, origin_cell: Option<f64>) -> f64 {
        let mut v = 0.0;
        for c in &self.components {
            v += match c {
                WeightComponent::PowerLaw {
                    exponent,
                    amplitude,
                } => {
                    if *amplitude == 0.0 {
                        0.0
                    } else if *exponent == 0.0 {
                        *amplitude
                    } else if r == 0.0 && *exponent < 0.0 {
                        let rho = origin_cell.unwrap_or(0.0);
                        let nd = dim as f64;
                        amplitude * nd / (nd + exponent) * rho.powf(*exponent)
                    } else {
                        amplitude * r.powf(*exponent)
                    }
                }
                WeightComponent::Bump {
                    center,
                    radius,
                    sign,
                    amplitude,
                } => {
                    let s = (r - center) / radius;
                    if s.abs() >= 1.0 {
                        0.0
                    } else {
                        sign * amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp()
                    }
                }
                WeightComponent::PiecewiseRadial {
                    breakpoints,
                    values,
                } => piecewise_value(breakpoints, values, r),
                WeightComponent::Tabulated { radii, values, outside } => tabulated_value(radii, values, *outside, r),
                WeightComponent::BoxExpression { terms } => terms
                    .iter()
                    .map(|t| match t {
                        BoxTerm::Constant { value } => *value,
                        BoxTerm::Disc {
                            center,
                            radius,
                            value,
                        } => {
                            let d = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                            if d <= *radius {
                                *value
                            } else {
                                0.0
                            }
                        }
                        BoxTerm::Gaussian {
                            center,
                            width,
                            amplitude,
                        } => {
                            let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                            amplitude * (-d2 / (width * width)).exp()
                        }
                        BoxTerm::Linear { coefficients } => {
                            coefficients[0] * x[0] + coefficients[1] * x[1]
                        }
                    })
                    .sum(),
            };
        }
        v
    }

    /// Value of the weight at radius `r` for radial specs.
    pub fn eval_radial(&self, r: f64, dim: usize) -> f64 {
        self.rescale(self.raw_value([r, 0.0], r, dim, None))
    }

    fn rescale(&self, v: f64) -> f64 {
        if v > 0.0 {
            self.positive_scale * v
        } else {
            v
        }
    }

    /// Leading power-law term as `|x| → ∞`. `None` when the spec contains a
    /// non-radial expression. An amplitude of zero means the weight vanishes
    /// identically outside a bounded set.
    pub fn tail(&self) -> Option<PowerTerm> {
        if self.has_box_expression() {
            return None;
        }
        let mut terms: Vec<(f64, f64)> = Vec::new();
        for c in &self.components {
            match c {
                WeightComponent::PowerLaw {
                    exponent,
                    amplitude,
                } => terms.push((*exponent, *amplitude)),
                WeightComponent::PiecewiseRadial { values, .. } => {
                    terms.push((0.0, *values.last().expect("validated")))
                }
                WeightComponent::Tabulated { outside, .. } => terms.push((0.0, *outside)),
                WeightComponent::Bump { .. } | WeightComponent::BoxExpression { .. } => {}
            }
        }
        Some(self.scaled_term(leading(&terms, |a, b| a > b)))
    }

    /// Most singular power-law term at the origin (negative exponents only).
    pub fn origin_singularity(&self) -> Option<PowerTerm> {
        let terms: Vec<(f64, f64)> = self
            .components
            .iter()
            .filter_map(|c| match c {
                WeightComponent::PowerLaw {
                    exponent,
                    amplitude,
                } if *exponent < 0.0 => Some((*exponent, *amplitude)),
                _ => None,
            })
            .collect();
        let t = leading(&terms, |a, b| a < b);
        (t.amplitude != 0.0).then(|| self.scaled_term(t))
    }

    fn scaled_term(&self, t: PowerTerm) -> PowerTerm {
        PowerTerm {
            exponent: t.exponent,
            amplitude: self.rescale(t.amplitude),
        }
    }

    /// Radius beyond which the weight is positive, when it can be read off
    /// the components: a single power law or a single piecewise profile.
    fn analytic_positivity_radius(&self) -> Option<f64> {
        if self.components.len() != 1 {
            return None;
        }
        match &self.components[0] {
            WeightComponent::PowerLaw { amplitude, .. } if *amplitude > 0.0 => Some(0.0),
            WeightComponent::PiecewiseRadial {
                breakpoints,
                values,
            } => {
                let mut r = None;
                for k in (0..values.len()).rev() {
                    if values[k] > 0.0 {
                        r = Some(if k == 0 { 0.0 } else { breakpoints[k - 1] });
                    } else {
                        break;
                    }
                }
                r
            }
            _ => None,
        }
    }
}

fn tabulated_value(radii: &[f64], values: &[f64], outside: f64, r: f64) -> f64 {
    let last = radii.len() - 1;
    if r > radii[last] {
        return outside;
    }
    if r <= radii[0] {
        return values[0];
    }
    let k = radii.partition_point(|&x| x < r);
    if radii[k] == r {
        return values[k];
    }
    let t = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
    (1.0 - t) * values[k - 1] + t * values[k]
}

fn piecewise_value(breakpoints: &[f64], values: &[f64], r: f64) -> f64 {
    let k = breakpoints.partition_point(|&b| b < r);
    if k < breakpoints.len() && breakpoints[k] == r {
        let (a, b) = (values[k], values[k + 1]);
        if b.abs() < a.abs() {
            b
        } else {
            a
        }
    } else {
        values[k]
    }
}

/// `amplitude · |x|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub exponent: f64,
    pub amplitude: f64,
}

fn leading(terms: &[(f64, f64)], dominates: impl Fn(f64, f64) -> bool) -> PowerTerm {
    let mut best: Option<PowerTerm> = None;
    let mut exps: Vec<f64> = terms.iter().map(|t| t.0).collect();
    exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    exps.dedup();
    for e in exps {
        let amp: f64 = terms.iter().filter(|t| t.0 == e).map(|t| t.1).sum();
        if amp == 0.0 {
            continue;
        }
        if best.map_or(true, |b| dominates(e, b.exponent)) {
            best = Some(PowerTerm {
                exponent: e,
                amplitude: amp,
            });
        }
    }
    best.unwrap_or(PowerTerm {
        exponent: f64::NEG_INFINITY,
        amplitude: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTag {
    /// `{h ≤ 0}`
    MinusZero,
    /// `{h = 0}`
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub tag: MaskTag,
    nodes: Vec<bool>,
}

impl RegionMask {
    pub fn new(tag: MaskTag, nodes: Vec<bool>) -> Self {
        Self { tag, nodes }
    }

    pub fn nodes(&self) -> &[bool] {
        &self.nodes
    }

    pub fn count(&self) -> usize {
        self.nodes.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.nodes.iter().zip(&other.nodes).all(|(&a, &b)| !a || b)
    }
}

/// A weight sampled at the unknowns of a grid.
#[derive(Debug, Clone)]
pub struct WeightField {
    spec: WeightSpec,
    values: Field,
    positive: Vec<f64>,
    negative: Vec<f64>,
    minus_zero: RegionMask,
    zero: RegionMask,
}

pub fn sample_weight(spec: &WeightSpec, grid: &Arc<Grid>) -> Result<WeightField> {
    spec.validate()?;
    if spec.has_box_expression() && grid.kind() == GridKind::Radial {
        return Err(LabError::invalid("box_expression weights need a box grid"));
    }
    let dim = grid.dim();
    let omega = unit_sphere_area(dim);
    let mut vals = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let r = grid.dof_radius()[i];
        let cell = (r == 0.0).then(|| (dim as f64 * grid.mass()[i] / omega).powf(1.0 / dim as f64));
        let v = spec.rescale(spec.raw_value(grid.dof_point(i), r, dim, cell));
        if !v.is_finite() {
            return Err(LabError::invalid(format!(
                "weight is not finite at |x| = {r}; power laws need exponent > -dim"
            )));
        }
        vals.push(v);
    }
    Ok(WeightField::from_values(spec.clone(), Field::from_raw(grid, vals)))
}

impl WeightField {
    fn from_values(spec: WeightSpec, values: Field) -> Self {
        let positive: Vec<f64> = values.values().iter().map(|v| v.max(0.0)).collect();
        let negative: Vec<f64> = values.values().iter().map(|v| (-v).max(0.0)).collect();
        let minus_zero = RegionMask::new(
            MaskTag::MinusZero,
            values.values().iter().map(|&v| v <= 0.0).collect(),
        );
        let zero = RegionMask::new(MaskTag::Zero, values.values().iter().map(|&v| v == 0.0).collect());
        Self {
            spec,
            values,
            positive,
            negative,
            minus_zero,
            zero,
        }
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn field(&self) -> &Field {
        &self.values
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.values.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.values.values()
    }

    pub fn positive_part(&self) -> &[f64] {
        &self.positive
    }

    pub fn negative_part(&self) -> &[f64] {
        &self.negative
    }

    pub fn minus_zero_mask(&self) -> &RegionMask {
        &self.minus_zero
    }

    pub fn zero_mask(&self) -> &RegionMask {
        &self.zero
    }

    pub fn has_positive_part(&self) -> bool {
        self.positive.iter().any(|&v| v > 0.0)
    }

    pub fn has_negative_part(&self) -> bool {
        self.negative.iter().any(|&v| v > 0.0)
    }
}

/// `μ h⁺ − h⁻`.
pub fn perturb_h(spec: &WeightSpec, mu: f64) -> Result<WeightSpec> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(LabError::invalid(format!("mu must be finite and >= 0, got {mu}")));
    }
    let mut s = spec.clone();
    s.positive_scale *= mu;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Undetermined,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }
}

/// Verdicts on the sufficient conditions for the two compact embeddings
/// `D^{1,2} ⊂⊂ L^p(h⁻)` and `D^{1,2} ∩ L^p(h⁺) ⊂⊂ L²(V⁺)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub dim: usize,
    pub p: f64,
    /// `2N/(N-2)`; `None` (infinite) for `N ≤ 2`.
    pub critical_sobolev_exponent: Option<f64>,
    pub h_minus_vanishes: bool,
    /// `p < 2*` and `h⁻ ∈ L^{2*/(2*-p)}`.
    pub h_minus_integrable: Verdict,
    /// `p < 2*`, `h⁻` bounded and `h⁻(x)|x|^{(N-2)p/2-N} → 0`.
    pub h_minus_decay: Verdict,
    /// `h > 0` outside a ball `B_R` and `∫_{|x|>R} V⁺ (V⁺/h)^{2/(p-2)} < ∞`.
    pub ratio_integrability: Verdict,
    /// `V⁺ ∈ L^{N/2}`.
    pub v_plus_integrability: Verdict,
    /// Compactness into `L^p(h⁻)`, from the two sufficient conditions above or `h⁻ ≡ 0`.
    pub h_minus_embedding: Verdict,
    /// Compactness into `L²(V⁺)`; decided both ways for power laws with `α ≥ N - 4`.
    pub v_plus_embedding: Verdict,
    /// `(β - α, (N/2 + α/2)(p - 2))` when both tails are power laws.
    pub exponent_comparison: Option<(f64, f64)>,
    pub evidence: EmbeddingEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEvidence {
    pub v_tail: Option<PowerTerm>,
    pub h_tail: Option<PowerTerm>,
    /// Inner radius of the ratio integral.
    pub ratio_radius: Option<f64>,
    /// Quadrature of `V⁺ (V⁺/h)^{2/(p-2)}` over `R < |x| < R_max`.
    pub ratio_integral_grid: Option<f64>,
    /// Analytic value over `|x| > R_max` (`None` when divergent or not a power law).
    pub ratio_integral_tail: Option<f64>,
    /// Largest `h⁻(x)|x|^{(N-2)p/2-N}` over the outer half of the grid.
    pub decay_proxy: f64,
    /// Quadrature of `(V⁺)^{N/2}` on the grid.
    pub v_plus_norm_grid: f64,
}

pub fn check_embedding(
    spec_v: &WeightSpec,
    spec_h: &WeightSpec,
    dim: usize,
    p: f64,
    grid: &Arc<Grid>,
) -> Result<EmbeddingReport> {
    if !(p > 2.0) {
        return Err(LabError::invalid(format!("exponent p must exceed 2, got {p}")));
    }
    let v = sample_weight(spec_v, grid)?;
    let h = sample_weight(spec_h, grid)?;
    let n = dim as f64;
    let crit = (dim > 2).then(|| 2.0 * n / (n - 2.0));
    let subcritical = crit.map_or(true, |c| p < c);
    let lebesgue_q = crit.map_or(1.0, |c| c / (c - p));

    let v_tail = spec_v.tail();
    let h_tail = spec_h.tail();
    let h_sing = spec_h.origin_singularity();
    let v_sing = spec_v.origin_singularity();

    let h_minus_vanishes = !h.has_negative_part()
        && spec_h.components.iter().all(|c| component_nonnegative(c));

    // locally, h⁻ is unbounded only through a negative singular power law
    let h_minus_local_ok = |q: f64| match h_sing {
        Some(t) if t.amplitude < 0.0 => t.exponent * q + n > 0.0,
        _ => true,
    };

    let h_minus_integrable = match h_tail {
        None => Verdict::Undetermined,
        Some(t) => {
            let tail_ok = if t.amplitude < 0.0 {
                t.exponent * lebesgue_q + n < 0.0
            } else {
                true
            };
            Verdict::from_bool(subcritical && tail_ok && h_minus_local_ok(lebesgue_q))
        }
    };

    let decay_power = (n - 2.0) * p / 2.0 - n;
    let h_minus_decay = match h_tail {
        None => Verdict::Undetermined,
        Some(t) => {
            let bounded_locally = !matches!(h_sing, Some(s) if s.amplitude < 0.0);
            let tail_ok = if t.amplitude < 0.0 {
                t.exponent <= 0.0 && t.exponent + decay_power < 0.0
            } else {
                true
            };
            Verdict::from_bool(subcritical && bounded_locally && tail_ok)
        }
    };

    let ratio_integrability = match (v_tail, h_tail) {
        (Some(vt), Some(ht)) => {
            if ht.amplitude <= 0.0 {
                Verdict::Fails
            } else if vt.amplitude <= 0.0 {
                Verdict::Holds
            } else {
                Verdict::from_bool(2.0 * (ht.exponent - vt.exponent) / (p - 2.0) > n + vt.exponent)
            }
        }
        _ => Verdict::Undetermined,
    };

    let v_plus_integrability = match v_tail {
        None => Verdict::Undetermined,
        Some(t) => {
            let tail_ok = t.amplitude <= 0.0 || t.exponent < -2.0;
            let local_ok = match v_sing {
                Some(s) if s.amplitude > 0.0 => s.exponent > -2.0,
                _ => true,
            };
            Verdict::from_bool(tail_ok && local_ok)
        }
    };

    let h_minus_embedding = if h_minus_vanishes
        || h_minus_integrable == Verdict::Holds
        || h_minus_decay == Verdict::Holds
    {
        Verdict::Holds
    } else {
        Verdict::Undetermined
    };

    let power_law_pair = match (v_tail, h_tail) {
        (Some(vt), Some(ht)) if vt.amplitude > 0.0 && ht.amplitude > 0.0 => Some((vt, ht)),
        _ => None,
    };
    let v_plus_embedding =
        if ratio_integrability == Verdict::Holds || v_plus_integrability == Verdict::Holds {
            Verdict::Holds
        } else {
            match power_law_pair {
                Some((vt, _)) if vt.exponent > -2.0 && vt.exponent >= n - 4.0 => Verdict::Fails,
                _ => Verdict::Undetermined,
            }
        };
    let exponent_comparison =
        power_law_pair.map(|(vt, ht)| (ht.exponent - vt.exponent, (n / 2.0 + vt.exponent / 2.0) * (p - 2.0)));

    // numeric evidence
    let radii = grid.dof_radius();
    let mass = grid.mass();
    let r_max = grid.extent();
    let ratio_radius = spec_h.analytic_positivity_radius().or_else(|| {
        let mut r = None;
        for i in (0..grid.len()).rev() {
            if h.values()[i] > 0.0 {
                r = Some(radii[i]);
            } else {
                break;
            }
        }
        r
    });
    // keep the inner radius away from the origin so only the tail is measured
    let ratio_radius = ratio_radius.map(|r| r.max(1.0_f64.min(r_max / 4.0)));
    let ratio_exp = 2.0 / (p - 2.0);
    let ratio_integral_grid = ratio_radius.map(|r0| {
        (0..grid.len())
            .filter(|&i| radii[i] > r0 && h.values()[i] > 0.0)
            .map(|i| {
                let vp = v.positive_part()[i];
                mass[i] * vp * (vp / h.values()[i]).powf(ratio_exp)
            })
            .sum::<f64>()
    });
    let ratio_integral_tail = match (v_tail, h_tail, grid.kind()) {
        (Some(vt), Some(ht), GridKind::Radial) if ht.amplitude > 0.0 => {
            if vt.amplitude <= 0.0 {
                Some(0.0)
            } else {
                let c = vt.amplitude * (vt.amplitude / ht.amplitude).powf(ratio_exp);
                let k = vt.exponent + ratio_exp * (vt.exponent - ht.exponent) + n;
                (k < 0.0).then(|| unit_sphere_area(dim) * c * r_max.powf(k) / (-k))
            }
        }
        _ => None,
    };
    let decay_proxy = (0..grid.len())
        .filter(|&i| radii[i] >= 0.5 * r_max)
        .map(|i| h.negative_part()[i] * radii[i].powf(decay_power))
        .fold(0.0, f64::max);
    let v_plus_norm_grid = (0..grid.len())
        .map(|i| mass[i] * v.positive_part()[i].powf(n / 2.0))
        .sum();

    Ok(EmbeddingReport {
        dim,
        p,
        critical_sobolev_exponent: crit,
        h_minus_vanishes,
        h_minus_integrable,
        h_minus_decay,
        ratio_integrability,
        v_plus_integrability,
        h_minus_embedding,
        v_plus_embedding,
        exponent_comparison,
        evidence: EmbeddingEvidence {
            v_tail,
            h_tail,
            ratio_radius,
            ratio_integral_grid,
            ratio_integral_tail,
            decay_proxy,
            v_plus_norm_grid,
        },
    })
}

fn component_nonnegative(c: &WeightComponent) -> bool {
    match c {
        WeightComponent::PowerLaw { amplitude, .. } => *amplitude >= 0.0,
        WeightComponent::Bump { sign, amplitude, .. } => sign * amplitude >= 0.0,
        WeightComponent::PiecewiseRadial { values, .. } => values.iter().all(|&v| v >= 0.0),
        WeightComponent::Tabulated { values, outside, .. } => *outside >= 0.0 && values.iter().all(|&v| v >= 0.0),
        WeightComponent::BoxExpression { terms } => terms.iter().all(|t| match t {
            BoxTerm::Constant { value } | BoxTerm::Disc { value, .. } => *value >= 0.0,
            BoxTerm::Gaussian { amplitude, .. } => *amplitude >= 0.0,
            BoxTerm::Linear { coefficients } => coefficients == &[0.0, 0.0],
        }),
    }
}
