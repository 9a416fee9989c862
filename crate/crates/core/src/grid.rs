//! Truncated domains, quadrature and the discrete Laplacian.
//!
//! Both grid kinds are discretized as a finite-volume graph: each node owns a
//! dual cell (its quadrature weight) and each pair of neighbouring nodes is
//! joined by a face with a conductance. The stiffness matrix `K` built from
//! the conductances defines
//!
//! * the Dirichlet energy `‖∇u‖² = uᵀ K u`,
//! * the Laplacian `(Δu)_i = -(K u)_i / w_i`,
//!
//! so the discrete Green identity `Σ w_i (Δu)_i u_i = -‖∇u‖²` holds exactly.
//! Dirichlet nodes (the outer sphere or the box boundary) carry no unknown.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{BandCholesky, BandMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Radial,
    Box,
}

fn default_stretch() -> f64 {
    1.0
}

/// Construction parameters of a grid.
///
/// `nodes` counts the unknowns: a radial grid with `nodes = n` has cells
/// `[r_i, r_{i+1}]` for `i < n`, the origin as node 0 and the Dirichlet node
/// at `r_n = r_max`. A box grid has `nodes_per_axis` cells per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Radial {
        dim: usize,
        r_max: f64,
        nodes: usize,
        #[serde(default = "default_stretch")]
        stretch: f64,
    },
    Box {
        half_width: f64,
        nodes_per_axis: usize,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<Grid>> {
        match *self {
            GridSpec::Radial {
                dim,
                r_max,
                nodes,
                stretch,
            } => build_radial_grid(dim, r_max, nodes, stretch),
            GridSpec::Box {
                half_width,
                nodes_per_axis,
            } => build_box_grid(half_width, nodes_per_axis),
        }
    }

    /// Same grid family with the outer radius (or half-width) replaced.
    pub fn with_extent(&self, extent: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            GridSpec::Radial { r_max, .. } => *r_max = extent,
            GridSpec::Box { half_width, .. } => *half_width = extent,
        }
        s
    }

    pub fn extent(&self) -> f64 {
        match *self {
            GridSpec::Radial { r_max, .. } => r_max,
            GridSpec::Box { half_width, .. } => half_width,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            GridSpec::Radial { dim, .. } => dim,
            GridSpec::Box { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    conductance: f64,
}

#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    boundary: Vec<bool>,
    dof_nodes: Vec<usize>,
    dof_radius: Vec<f64>,
    mass: Vec<f64>,
    edges: Vec<Edge>,
    boundary_coupling: Vec<f64>,
    stiffness: BandMatrix,
    stiffness_factor: BandCholesky,
}

/// Area of the unit sphere in `ℝ^dim`; the half-line convention `1` for `dim = 1`.
pub fn unit_sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 1.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        d => unit_sphere_area(d - 2) * 2.0 * PI / (d as f64 - 2.0),
    }
}

pub fn build_radial_grid(dim: usize, r_max: f64, nodes: usize, stretch: f64) -> Result<Arc<Grid>> {
    if dim < 1 {
        return Err(LabError::invalid("radial grid needs dimension >= 1"));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(LabError::invalid(format!("r_max must be positive, got {r_max}")));
    }
    if nodes < 16 {
        return Err(LabError::invalid(format!("radial grid needs >= 16 nodes, got {nodes}")));
    }
    if !(stretch >= 1.0) || !stretch.is_finite() {
        return Err(LabError::invalid(format!("stretch must be >= 1, got {stretch}")));
    }
    let n = nodes;
    let mut r = Vec::with_capacity(n + 1);
    if stretch == 1.0 {
        for i in 0..=n {
            r.push(r_max * i as f64 / n as f64);
        }
    } else {
        let h0 = r_max * (stretch - 1.0) / (stretch.powi(n as i32) - 1.0);
        let mut acc = 0.0;
        let mut h = h0;
        for _ in 0..n {
            r.push(acc);
            acc += h;
            h *= stretch;
        }
        r.push(r_max);
    }
    r[n] = r_max;

    let omega = unit_sphere_area(dim);
    let nd = dim as f64;
    let ball = |x: f64| omega * x.powi(dim as i32) / nd;
    let mid: Vec<f64> = (0..n).map(|i| 0.5 * (r[i] + r[i + 1])).collect();

    let mut weights = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let lo = if i == 0 { 0.0 } else { mid[i - 1] };
        let hi = if i == n { r[n] } else { mid[i] };
        weights.push(ball(hi) - ball(lo));
    }
    let conductance: Vec<f64> = (0..n)
        .map(|i| omega * mid[i].powi(dim as i32 - 1) / (r[i + 1] - r[i]))
        .collect();

    let mut edges = Vec::with_capacity(n);
    let mut boundary_coupling = vec![0.0; n];
    for (i, &c) in conductance.iter().enumerate() {
        if i + 1 < n {
            edges.push(Edge {
                a: i,
                b: i + 1,
                conductance: c,
            });
        } else {
            boundary_coupling[i] += c;
        }
    }
    let mut boundary = vec![false; n + 1];
    boundary[n] = true;
    let points = r.iter().map(|&x| [x, 0.0]).collect();
    let dof_nodes: Vec<usize> = (0..n).collect();
    let dof_radius = r[..n].to_vec();
    let mass = weights[..n].to_vec();
    Ok(Arc::new(Grid::assemble(
        GridSpec::Radial {
            dim,
            r_max,
            nodes,
            stretch,
        },
        points,
        weights,
        boundary,
        dof_nodes,
        dof_radius,
        mass,
        edges,
        boundary_coupling,
        1,
    )))
}

pub fn build_box_grid(half_width: f64, nodes_per_axis: usize) -> Result<Arc<Grid>> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(LabError::invalid(format!(
            "box half-width must be positive, got {half_width}"
        )));
    }
    if nodes_per_axis < 8 {
        return Err(LabError::invalid(format!(
            "box grid needs >= 8 nodes per axis, got {nodes_per_axis}"
        )));
    }
    let n = nodes_per_axis;
    let h = 2.0 * half_width / n as f64;
    let coord = |i: usize| -half_width + 2.0 * half_width * i as f64 / n as f64;
    let node = |i: usize, j: usize| i * (n + 1) + j;
    let m = n - 1;
    let dof = |i: usize, j: usize| (i - 1) * m + (j - 1);

    let mut points = Vec::with_capacity((n + 1) * (n + 1));
    let mut weights = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            points.push([coord(i), coord(j)]);
            let fx = if i == 0 || i == n { 0.5 } else { 1.0 };
            let fy = if j == 0 || j == n { 0.5 } else { 1.0 };
            weights.push(h * h * fx * fy);
            boundary.push(i == 0 || i == n || j == 0 || j == n);
        }
    }
    let mut dof_nodes = Vec::with_capacity(m * m);
    let mut dof_radius = Vec::with_capacity(m * m);
    let mut mass = Vec::with_capacity(m * m);
    let mut edges = Vec::new();
    let mut boundary_coupling = vec![0.0; m * m];
    for i in 1..n {
        for j in 1..n {
            let k = node(i, j);
            dof_nodes.push(k);
            let [x, y] = points[k];
            dof_radius.push((x * x + y * y).sqrt());
            mass.push(weights[k]);
            let d = dof(i, j);
            // conductance = face length / node distance = 1 in 2D
            for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                if ni == n || nj == n {
                    boundary_coupling[d] += 1.0;
                } else {
                    edges.push(Edge {
                        a: d,
                        b: dof(ni, nj),
                        conductance: 1.0,
                    });
                }
            }
            if i == 1 {
                boundary_coupling[d] += 1.0;
            }
            if j == 1 {
                boundary_coupling[d] += 1.0;
            }
        }
    }
    Ok(Arc::new(Grid::assemble(
        GridSpec::Box {
            half_width,
            nodes_per_axis,
        },
        points,
        weights,
        boundary,
        dof_nodes,
        dof_radius,
        mass,
        edges,
        boundary_coupling,
        m,
    )))
}

impl Grid {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: GridSpec,
        points: Vec<[f64; 2]>,
        weights: Vec<f64>,
        boundary: Vec<bool>,
        dof_nodes: Vec<usize>,
        dof_radius: Vec<f64>,
        mass: Vec<f64>,
        edges: Vec<Edge>,
        boundary_coupling: Vec<f64>,
        bandwidth: usize,
    ) -> Self {
        let n = dof_nodes.len();
        let mut stiffness = BandMatrix::zeros(n, bandwidth);
        for e in &edges {
            stiffness.add(e.a, e.a, e.conductance);
            stiffness.add(e.b, e.b, e.conductance);
            stiffness.add(e.a, e.b, -e.conductance);
            stiffness.add(e.b, e.a, -e.conductance);
        }
        stiffness.add_diagonal(&boundary_coupling);
        let stiffness_factor = stiffness
            .cholesky()
            .expect("Dirichlet stiffness matrix is positive definite");
        Self {
            spec,
            points,
            weights,
            boundary,
            dof_nodes,
            dof_radius,
            mass,
            edges,
            boundary_coupling,
            stiffness,
            stiffness_factor,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn kind(&self) -> GridKind {
        match self.spec {
            GridSpec::Radial { .. } => GridKind::Radial,
            GridSpec::Box { .. } => GridKind::Box,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Outer radius (radial) or half-width (box).
    pub fn extent(&self) -> f64 {
        self.spec.extent()
    }

    /// Coordinates of every node, Dirichlet nodes included. Radial nodes are `[r, 0]`.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Quadrature weights of every node, Dirichlet nodes included.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Number of unknowns (non-Dirichlet nodes).
    pub fn len(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_nodes.is_empty()
    }

    pub fn dof_point(&self, dof: usize) -> [f64; 2] {
        self.points[self.dof_nodes[dof]]
    }

    /// `|x|` at each unknown.
    pub fn dof_radius(&self) -> &[f64] {
        &self.dof_radius
    }

    /// Quadrature weights restricted to the unknowns.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn stiffness(&self) -> &BandMatrix {
        &self.stiffness
    }

    /// Solves `K x = b` in place.
    pub fn solve_stiffness(&self, b: &mut [f64]) {
        self.stiffness_factor.solve_in_place(b);
    }

    /// Two grids conform when they were built from the same parameters.
    pub fn conforms(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.spec == other.spec
    }

    /// Neighbour pairs `(a, b, conductance)` between unknowns.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|e| (e.a, e.b, e.conductance))
    }

    /// Conductance from each unknown to the Dirichlet boundary.
    pub fn boundary_coupling(&self) -> &[f64] {
        &self.boundary_coupling
    }

    /// `Σ_edges c (u_a - u_b)² + Σ_i c_i u_i²`, the discrete `‖∇u‖²`.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let inner: f64 = self
            .edges
            .iter()
            .map(|e| {
                let d = u[e.a] - u[e.b];
                e.conductance * d * d
            })
            .sum();
        let bnd: f64 = self
            .boundary_coupling
            .iter()
            .zip(u)
            .map(|(c, x)| c * x * x)
            .sum();
        inner + bnd
    }

    /// Bilinear form `uᵀ K v`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let inner: f64 = self
            .edges
            .iter()
            .map(|e| e.conductance * (u[e.a] - u[e.b]) * (v[e.a] - v[e.b]))
            .sum();
        let bnd: f64 = self
            .boundary_coupling
            .iter()
            .zip(u.iter().zip(v))
            .map(|(c, (x, y))| c * x * y)
            .sum();
        inner + bnd
    }

    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.stiffness.mul_vec(u, &mut y);
        y
    }

    /// Discrete H¹₀-dual norm `sqrt(rᵀ K⁻¹ r)` of a nodal residual.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        let mut z = r.to_vec();
        self.solve_stiffness(&mut z);
        crate::linalg::dot(r, &z).max(0.0).sqrt()
    }
}

/// Nodal values at the unknowns of a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::invalid(format!(
                "field has {} values, grid has {} unknowns",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::invalid("field contains non-finite values"));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f(point, |x|)` at every unknown.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(grid.dof_point(i), grid.dof_radius()[i]))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| t * v).collect())
    }

    pub fn abs(&self) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| v.abs()).collect())
    }

    /// `self + t * other`.
    pub fn add_scaled(&self, t: f64, other: &Field) -> Result<Self> {
        self.check_conforms(other)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
        ))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn check_conforms(&self, other: &Field) -> Result<()> {
        if self.grid.conforms(&other.grid) {
            Ok(())
        } else {
            Err(LabError::GridMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub fn gradient_norm_sq(u: &Field) -> f64 {
    u.grid.dirichlet_energy(&u.values)
}

/// `Σ w_i · weight_i · |u_i|^q` over the unknowns.
pub fn weighted_integral(weight: &Field, u: &Field, q: f64) -> Result<f64> {
    weight.check_conforms(u)?;
    if !(q >= 1.0) {
        return Err(LabError::invalid(format!("exponent q must be >= 1, got {q}")));
    }
    Ok(integrate_weighted(u.grid.mass(), &weight.values, &u.values, q))
}

pub(crate) fn integrate_weighted(mass: &[f64], weight: &[f64], u: &[f64], q: f64) -> f64 {
    let pow = power_fn(q);
    mass.iter()
        .zip(weight)
        .zip(u)
        .map(|((m, w), x)| m * w * pow(x.abs()))
        .sum()
}

/// `|x|^q` with exact integer fast paths, so that `|t u|^2 = t² |u|^2` bit-for-bit
/// whenever the products are exact.
pub(crate) fn power_fn(q: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if q == 2.0 {
            x * x
        } else if q == 1.0 {
            x
        } else if q.fract() == 0.0 && q.abs() < 32.0 {
            x.powi(q as i32)
        } else {
            x.powf(q)
        }
    }
}

pub fn laplacian_apply(u: &Field) -> Field {
    let ku = u.grid.apply_stiffness(&u.values);
    let vals = ku
        .iter()
        .zip(u.grid.mass())
        .map(|(k, m)| -k / m)
        .collect();
    Field::from_raw(&u.grid, vals)
}
