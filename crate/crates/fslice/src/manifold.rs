//! Catalog of compact model manifolds.
//!
//! Three models are supported, each with one canonical global chart:
//!
//! * `Circle(L)` — arc-length coordinate x ∈ [0, L), flat metric g = 1.
//! * `FlatTorus(L₁, …, Lₙ)` — angle coordinates xᵢ ∈ [0, Lᵢ), g = identity.
//! * `RoundSphere(r)` — colatitude–longitude (θ, φ), g = diag(r², r² sin²θ),
//!   scalar curvature R = 2/r².
//!
//! Sphere computations near the poles go through a [`ChartFrame`]: a rotation
//! taking the pair of interest onto the equator, where 1/sin θ stays bounded.
//! All quantities returned by higher layers are transformed back to the
//! canonical chart.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sphere chart admissibility band: θ ∈ [margin, π − margin].
pub const SPHERE_POLE_MARGIN: f64 = 0.2;

/// A compact model Riemannian manifold with its canonical chart.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldModel {
    Circle { circumference: f64 },
    FlatTorus { periods: Vec<f64> },
    RoundSphere { radius: f64 },
}

/// Metric data of the canonical chart at one point.
#[derive(Debug, Clone)]
pub struct MetricData {
    /// Metric components g_{jk}.
    pub g: DMatrix<f64>,
    /// Inverse metric g^{jk}.
    pub g_inv: DMatrix<f64>,
    /// √det g, the volume density in chart coordinates.
    pub sqrt_det_g: f64,
    /// Christoffel symbols Γ^i_{jk}; `christoffel[i][(j, k)]`.
    pub christoffel: Vec<DMatrix<f64>>,
    /// Scalar curvature R at the point.
    pub scalar_curvature: f64,
}

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Quadrature nodes with volume weights: Σ wⱼ f(xⱼ) ≈ ∫_M f vol_g.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub resolution: Vec<usize>,
    id: u64,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Stable identity used by operator caches and grid-mismatch checks.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl ManifoldModel {
    pub fn circle(circumference: f64) -> Result<Self> {
        if !(circumference > 0.0) {
            return Err(Error::InvalidManifold(format!(
                "circle circumference must be positive, got {circumference}"
            )));
        }
        Ok(Self::Circle { circumference })
    }

    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() || periods.len() > 2 {
            return Err(Error::InvalidManifold(format!(
                "flat torus supports dimension 1 or 2, got {}",
                periods.len()
            )));
        }
        if periods.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidManifold(format!(
                "torus periods must be positive, got {periods:?}"
            )));
        }
        Ok(Self::FlatTorus { periods })
    }

    pub fn round_sphere(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidManifold(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        Ok(Self::RoundSphere { radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Circle { .. } => 1,
            Self::FlatTorus { periods } => periods.len(),
            Self::RoundSphere { .. } => 2,
        }
    }

    /// Riemannian volume of the whole manifold.
    pub fn volume(&self) -> f64 {
        match self {
            Self::Circle { circumference } => *circumference,
            Self::FlatTorus { periods } => periods.iter().product(),
            Self::RoundSphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }

    /// Circle(L) → L/2; FlatTorus → min period / 2; RoundSphere(r) → πr.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Self::Circle { circumference } => circumference / 2.0,
            Self::FlatTorus { periods } => periods.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0,
            Self::RoundSphere { radius } => std::f64::consts::PI * radius,
        }
    }

    /// True when `x` lies in the canonical chart's admissible region.
    ///
    /// Periodic charts accept every real coordinate; the sphere chart requires
    /// θ to stay a pole margin away from {0, π}.
    pub fn chart_admissible(&self, x: &[f64]) -> bool {
        match self {
            Self::Circle { .. } | Self::FlatTorus { .. } => x.len() == self.dim(),
            Self::RoundSphere { .. } => {
                x.len() == 2
                    && x[0] >= SPHERE_POLE_MARGIN
                    && x[0] <= std::f64::consts::PI - SPHERE_POLE_MARGIN
            }
        }
    }

    fn chart_check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::ChartDomain {
                point: x.to_vec(),
                reason: format!("expected dimension {}, got {}", self.dim(), x.len()),
            });
        }
        if !self.chart_admissible(x) {
            return Err(Error::ChartDomain {
                point: x.to_vec(),
                reason: format!(
                    "sphere chart requires theta in [{:.2}, {:.2}]",
                    SPHERE_POLE_MARGIN,
                    std::f64::consts::PI - SPHERE_POLE_MARGIN
                ),
            });
        }
        Ok(())
    }

    /// Exact analytic metric data at a chart point.
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricData> {
        self.chart_check(x)?;
        match self {
            Self::Circle { .. } => Ok(MetricData {
                g: DMatrix::identity(1, 1),
                g_inv: DMatrix::identity(1, 1),
                sqrt_det_g: 1.0,
                christoffel: vec![DMatrix::zeros(1, 1)],
                scalar_curvature: 0.0,
            }),
            Self::FlatTorus { periods } => {
                let n = periods.len();
                Ok(MetricData {
                    g: DMatrix::identity(n, n),
                    g_inv: DMatrix::identity(n, n),
                    sqrt_det_g: 1.0,
                    christoffel: vec![DMatrix::zeros(n, n); n],
                    scalar_curvature: 0.0,
                })
            }
            Self::RoundSphere { radius } => {
                let r2 = radius * radius;
                let (sin_t, cos_t) = x[0].sin_cos();
                let g = DMatrix::from_diagonal(&nalgebra::dvector![r2, r2 * sin_t * sin_t]);
                let g_inv =
                    DMatrix::from_diagonal(&nalgebra::dvector![1.0 / r2, 1.0 / (r2 * sin_t * sin_t)]);
                // Γ^θ_{φφ} = −sinθ cosθ, Γ^φ_{θφ} = Γ^φ_{φθ} = cotθ.
                let mut gamma_theta = DMatrix::zeros(2, 2);
                gamma_theta[(1, 1)] = -sin_t * cos_t;
                let mut gamma_phi = DMatrix::zeros(2, 2);
                gamma_phi[(0, 1)] = cos_t / sin_t;
                gamma_phi[(1, 0)] = cos_t / sin_t;
                Ok(MetricData {
                    g,
                    g_inv,
                    sqrt_det_g: r2 * sin_t,
                    christoffel: vec![gamma_theta, gamma_phi],
                    scalar_curvature: 2.0 / r2,
                })
            }
        }
    }

    /// Wrap a chart point into the fundamental domain (periodic coordinates).
    pub fn wrap_point(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Circle { circumference } => vec![x[0].rem_euclid(*circumference)],
            Self::FlatTorus { periods } => x
                .iter()
                .zip(periods)
                .map(|(&xi, &p)| xi.rem_euclid(p))
                .collect(),
            Self::RoundSphere { .. } => {
                vec![x[0], x[1].rem_euclid(2.0 * std::f64::consts::PI)]
            }
        }
    }

    /// Shortest representative of a chart displacement (periodic directions
    /// wrapped into (−L/2, L/2]; sphere θ left untouched, φ wrapped).
    pub fn wrap_displacement(&self, dx: &[f64]) -> Vec<f64> {
        let wrap = |d: f64, p: f64| {
            let mut w = d.rem_euclid(p);
            if w > p / 2.0 {
                w -= p;
            }
            w
        };
        match self {
            Self::Circle { circumference } => vec![wrap(dx[0], *circumference)],
            Self::FlatTorus { periods } => dx
                .iter()
                .zip(periods)
                .map(|(&d, &p)| wrap(d, p))
                .collect(),
            Self::RoundSphere { .. } => {
                vec![dx[0], wrap(dx[1], 2.0 * std::f64::consts::PI)]
            }
        }
    }

    /// Riemannian distance between two chart points.
    pub fn geodesic_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Circle { .. } | Self::FlatTorus { .. } => {
                let d = self.wrap_displacement(
                    &x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>(),
                );
                d.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            Self::RoundSphere { radius } => {
                let ex = embed(x);
                let ey = embed(y);
                let cross = cross3(&ex, &ey);
                radius * norm3(&cross).atan2(dot3(&ex, &ey))
            }
        }
    }

    /// Inverse of the unit-time scaled geodesic map: the covector η at `y`
    /// with |η|_g = d(x,y) whose geodesic reaches `x` at time one.
    pub fn log_map(&self, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let d = self.geodesic_distance(x, y);
        let inj = self.injectivity_radius();
        if d >= inj {
            return Err(Error::NoUniqueGeodesic {
                distance: d,
                injectivity: inj,
            });
        }
        match self {
            // Flat periodic charts: covector components equal the shortest displacement.
            Self::Circle { .. } | Self::FlatTorus { .. } => Ok(self.wrap_displacement(
                &x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>(),
            )),
            Self::RoundSphere { radius } => {
                self.chart_check(y)?;
                if d == 0.0 {
                    return Ok(vec![0.0, 0.0]);
                }
                let ex = embed(x);
                let ey = embed(y);
                // Unit tangent at y toward x.
                let c = dot3(&ex, &ey);
                let mut u = [ex[0] - c * ey[0], ex[1] - c * ey[1], ex[2] - c * ey[2]];
                let nu = norm3(&u);
                for v in &mut u {
                    *v /= nu;
                }
                let (dth, dph) = d_embed(y);
                Ok(vec![radius * d * dot3(&u, &dth), radius * d * dot3(&u, &dph)])
            }
        }
    }

    /// Covector norm |η|_g at `x`.
    pub fn covector_norm(&self, x: &[f64], eta: &[f64]) -> f64 {
        match self {
            Self::Circle { .. } | Self::FlatTorus { .. } => {
                eta.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            Self::RoundSphere { radius } => {
                let r2 = radius * radius;
                let s = x[0].sin();
                (eta[0] * eta[0] / r2 + eta[1] * eta[1] / (r2 * s * s)).sqrt()
            }
        }
    }

    /// Quadrature grid with volume weights.
    ///
    /// Circle/FlatTorus: uniform (trapezoid) nodes; RoundSphere: Gauss–Legendre
    /// nodes in cos θ tensored with 2·resolution uniform φ nodes.
    pub fn build_grid(&self, resolution: &[usize]) -> Result<QuadratureGrid> {
        if resolution.iter().any(|&r| r < 4) {
            return Err(Error::InvalidManifold(format!(
                "grid resolution must be >= 4 per dimension, got {resolution:?}"
            )));
        }
        let id = NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed);
        match self {
            Self::Circle { circumference } => {
                let n = match resolution {
                    [n] => *n,
                    _ => {
                        return Err(Error::InvalidManifold(
                            "circle grid takes one resolution entry".into(),
                        ))
                    }
                };
                let h = circumference / n as f64;
                Ok(QuadratureGrid {
                    nodes: (0..n).map(|k| vec![k as f64 * h]).collect(),
                    weights: vec![h; n],
                    resolution: vec![n],
                    id,
                })
            }
            Self::FlatTorus { periods } => {
                let res: Vec<usize> = match (resolution.len(), periods.len()) {
                    (1, n) => vec![resolution[0]; n],
                    (a, n) if a == n => resolution.to_vec(),
                    _ => {
                        return Err(Error::InvalidManifold(format!(
                            "torus grid resolution must have 1 or {} entries",
                            periods.len()
                        )))
                    }
                };
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                let cell: f64 = periods
                    .iter()
                    .zip(&res)
                    .map(|(&p, &n)| p / n as f64)
                    .product();
                match periods.len() {
                    1 => {
                        for i in 0..res[0] {
                            nodes.push(vec![i as f64 * periods[0] / res[0] as f64]);
                            weights.push(cell);
                        }
                    }
                    2 => {
                        for i in 0..res[0] {
                            for j in 0..res[1] {
                                nodes.push(vec![
                                    i as f64 * periods[0] / res[0] as f64,
                                    j as f64 * periods[1] / res[1] as f64,
                                ]);
                                weights.push(cell);
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                Ok(QuadratureGrid {
                    nodes,
                    weights,
                    resolution: res,
                    id,
                })
            }
            Self::RoundSphere { radius } => {
                let n_theta = match resolution {
                    [n] => *n,
                    _ => {
                        return Err(Error::InvalidManifold(
                            "sphere grid takes one resolution entry (theta count; phi = 2x)".into(),
                        ))
                    }
                };
                let n_phi = 2 * n_theta;
                let (gl_nodes, gl_weights) = gauss_legendre(n_theta);
                let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
                let r2 = radius * radius;
                let mut nodes = Vec::with_capacity(n_theta * n_phi);
                let mut weights = Vec::with_capacity(n_theta * n_phi);
                for (z, w) in gl_nodes.iter().zip(&gl_weights) {
                    let theta = z.acos();
                    for j in 0..n_phi {
                        nodes.push(vec![theta, j as f64 * dphi]);
                        weights.push(r2 * w * dphi);
                    }
                }
                Ok(QuadratureGrid {
                    nodes,
                    weights,
                    resolution: vec![n_theta, n_phi],
                    id,
                })
            }
        }
    }

    /// Characteristic node spacing, used by the phase-sampling heuristic.
    pub fn grid_spacing(&self, grid: &QuadratureGrid) -> f64 {
        match self {
            Self::Circle { circumference } => circumference / grid.resolution[0] as f64,
            Self::FlatTorus { periods } => periods
                .iter()
                .zip(&grid.resolution)
                .map(|(&p, &n)| p / n as f64)
                .fold(0.0, f64::max),
            Self::RoundSphere { radius } => {
                radius * std::f64::consts::PI / grid.resolution[0] as f64
            }
        }
    }

    /// Chart frame mapping the pair (x, y) into a rotation-safe region.
    ///
    /// Identity on flat manifolds; on the sphere, a rotation taking y to the
    /// equator point (π/2, 0) and the great circle through x and y onto the
    /// equator.
    pub fn frame_for_pair(&self, x: &[f64], y: &[f64]) -> ChartFrame {
        match self {
            Self::Circle { .. } | Self::FlatTorus { .. } => ChartFrame::Identity,
            Self::RoundSphere { .. } => {
                let ex = embed(x);
                let ey = embed(y);
                let mut n = cross3(&ey, &ex);
                if norm3(&n) < 1e-12 {
                    // Coincident (or antipodal) pair: any great circle through y.
                    n = cross3(&ey, &[0.0, 0.0, 1.0]);
                    if norm3(&n) < 1e-8 {
                        n = cross3(&ey, &[1.0, 0.0, 0.0]);
                    }
                }
                let nn = norm3(&n);
                for v in &mut n {
                    *v /= nn;
                }
                let e1 = ey;
                let e3 = n;
                let e2 = cross3(&e3, &e1);
                ChartFrame::Rotation { rows: [e1, e2, e3] }
            }
        }
    }
}

/// Chart transformation used for computations away from the canonical chart's
/// safe region. Tensor components move between frames via the chart-transition
/// Jacobian.
#[derive(Debug, Clone)]
pub enum ChartFrame {
    Identity,
    /// Rotation of the sphere's embedding; `rows` are the orthonormal images
    /// of the canonical axes (row-matrix form, v ↦ R v).
    Rotation { rows: [[f64; 3]; 3] },
}

impl ChartFrame {
    pub fn is_identity(&self) -> bool {
        matches!(self, ChartFrame::Identity)
    }

    /// Map a canonical chart point into frame coordinates.
    pub fn to_frame(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ChartFrame::Identity => x.to_vec(),
            ChartFrame::Rotation { rows } => chart(&apply_rows(rows, &embed(x))),
        }
    }

    /// Map a frame chart point back to the canonical chart.
    pub fn from_frame(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ChartFrame::Identity => x.to_vec(),
            ChartFrame::Rotation { rows } => chart(&apply_rows_t(rows, &embed(x))),
        }
    }

    /// Jacobian J_{aj} = ∂x'_a/∂x_j of the transition map at canonical point x.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            ChartFrame::Identity => DMatrix::identity(x.len(), x.len()),
            ChartFrame::Rotation { rows } => {
                let v = apply_rows(rows, &embed(x));
                let (dth, dph) = d_embed(x);
                let rd_th = apply_rows(rows, &dth);
                let rd_ph = apply_rows(rows, &dph);
                let (grad_th, grad_ph) = d_chart(&v);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        dot3(&grad_th, &rd_th),
                        dot3(&grad_th, &rd_ph),
                        dot3(&grad_ph, &rd_th),
                        dot3(&grad_ph, &rd_ph),
                    ],
                )
            }
        }
    }

    /// Pull a covector given in frame components at frame point x' back to
    /// canonical components at the canonical point x: η = Jᵀ η'.
    pub fn covector_to_canonical(&self, x_canonical: &[f64], eta_frame: &[f64]) -> Vec<f64> {
        match self {
            ChartFrame::Identity => eta_frame.to_vec(),
            ChartFrame::Rotation { .. } => {
                let j = self.jacobian(x_canonical);
                (0..2)
                    .map(|k| (0..2).map(|a| j[(a, k)] * eta_frame[a]).sum())
                    .collect()
            }
        }
    }
}

/// Per-point chart geometry in fixed-size form for the flow integrator's
/// right-hand side (n ≤ 2).
#[derive(Debug, Clone, Copy)]
pub(crate) enum ChartGeom {
    Flat { n: usize },
    Sphere { r2: f64 },
}

impl ManifoldModel {
    /// Drift coefficients bᵏ = (1/√g)∂ⱼ(√g gʲᵏ) of the Laplace–Beltrami
    /// operator Δf = gʲᵏ∂ⱼ∂ₖf + bᵏ∂ₖf in chart coordinates.
    pub(crate) fn laplace_drift(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Circle { .. } | Self::FlatTorus { .. } => vec![0.0; self.dim()],
            Self::RoundSphere { radius } => {
                vec![x[0].cos() / (x[0].sin() * radius * radius), 0.0]
            }
        }
    }

    pub(crate) fn chart_geom(&self) -> ChartGeom {
        match self {
            Self::Circle { .. } => ChartGeom::Flat { n: 1 },
            Self::FlatTorus { periods } => ChartGeom::Flat { n: periods.len() },
            Self::RoundSphere { radius } => ChartGeom::Sphere {
                r2: radius * radius,
            },
        }
    }
}

// Embedding helpers for the unit sphere (the radius only scales the metric,
// not the angle chart).

pub(crate) fn embed(x: &[f64]) -> [f64; 3] {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    [st * cp, st * sp, ct]
}

pub(crate) fn chart(v: &[f64; 3]) -> Vec<f64> {
    let rho = (v[0] * v[0] + v[1] * v[1]).sqrt();
    vec![rho.atan2(v[2]), v[1].atan2(v[0])]
}

fn d_embed(x: &[f64]) -> ([f64; 3], [f64; 3]) {
    let (st, ct) = x[0].sin_cos();
    let (sp, cp) = x[1].sin_cos();
    ([ct * cp, ct * sp, -st], [-st * sp, st * cp, 0.0])
}

/// Gradients of (θ', φ') as functions on the embedded sphere.
fn d_chart(v: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let rho = (v[0] * v[0] + v[1] * v[1]).sqrt();
    (
        [v[2] * v[0] / rho, v[2] * v[1] / rho, -rho],
        [-v[1] / (rho * rho), v[0] / (rho * rho), 0.0],
    )
}

fn apply_rows(rows: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [dot3(&rows[0], v), dot3(&rows[1], v), dot3(&rows[2], v)]
}

fn apply_rows_t(rows: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        rows[0][0] * v[0] + rows[1][0] * v[1] + rows[2][0] * v[2],
        rows[0][1] * v[0] + rows[1][1] * v[1] + rows[2][1] * v[2],
        rows[0][2] * v[0] + rows[1][2] * v[1] + rows[2][2] * v[2],
    ]
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// (P_n(x), P'_n(x)) via the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    fn circle() -> ManifoldModel {
        ManifoldModel::circle(TWO_PI).unwrap()
    }

    fn torus() -> ManifoldModel {
        ManifoldModel::flat_torus(vec![TWO_PI, TWO_PI]).unwrap()
    }

    fn sphere() -> ManifoldModel {
        ManifoldModel::round_sphere(1.0).unwrap()
    }

    fn random_admissible(m: &ManifoldModel, rng: &mut impl Rng) -> Vec<f64> {
        match m {
            ManifoldModel::Circle { circumference } => vec![rng.gen::<f64>() * circumference],
            ManifoldModel::FlatTorus { periods } => {
                periods.iter().map(|&p| rng.gen::<f64>() * p).collect()
            }
            ManifoldModel::RoundSphere { .. } => {
                let band = PI - 2.0 * (SPHERE_POLE_MARGIN + 0.01);
                vec![
                    SPHERE_POLE_MARGIN + 0.01 + rng.gen::<f64>() * band,
                    rng.gen::<f64>() * TWO_PI,
                ]
            }
        }
    }

    #[test]
    fn construction_rejects_bad_sizes() {
        assert!(ManifoldModel::circle(0.0).is_err());
        assert!(ManifoldModel::round_sphere(-1.0).is_err());
        assert!(ManifoldModel::flat_torus(vec![1.0, -2.0]).is_err());
        assert!(ManifoldModel::flat_torus(vec![1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn metric_flat_models() {
        let m = circle();
        let md = m.metric_at(&[1.3]).unwrap();
        assert_eq!(md.g[(0, 0)], 1.0);
        assert_eq!(md.scalar_curvature, 0.0);

        let t = torus();
        let md = t.metric_at(&[0.4, 5.0]).unwrap();
        assert_eq!(md.g, DMatrix::identity(2, 2));
        assert!(md.christoffel.iter().all(|c| c.iter().all(|&v| v == 0.0)));
        assert_eq!(md.scalar_curvature, 0.0);
    }

    #[test]
    fn metric_sphere_curvature_and_chart_domain() {
        let s = sphere();
        let md = s.metric_at(&[1.1, 0.3]).unwrap();
        assert_relative_eq!(md.scalar_curvature, 2.0);
        assert_relative_eq!(md.sqrt_det_g, (1.1f64).sin(), epsilon = 1e-15);
        assert!(s.metric_at(&[0.05, 0.0]).is_err());

        let s2 = ManifoldModel::round_sphere(2.0).unwrap();
        assert_relative_eq!(s2.metric_at(&[1.0, 0.0]).unwrap().scalar_curvature, 0.5);
    }

    #[test]
    fn metric_positive_definite_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [circle(), torus(), sphere()] {
            for _ in 0..1000 {
                let x = random_admissible(&m, &mut rng);
                let md = m.metric_at(&x).unwrap();
                // Symmetric PD via leading principal minors, and g·g⁻¹ = I.
                assert!(md.g[(0, 0)] > 0.0);
                if m.dim() == 2 {
                    assert!(md.g.determinant() > 0.0);
                    assert_relative_eq!(md.g[(0, 1)], md.g[(1, 0)]);
                }
                let prod = &md.g * &md.g_inv;
                assert!((prod - DMatrix::identity(m.dim(), m.dim())).amax() < 1e-12);
                // Christoffel symmetry in the lower indices.
                for c in &md.christoffel {
                    assert!((c - c.transpose()).amax() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_relative_eq!(
            circle().geodesic_distance(&[0.1], &[6.0]),
            TWO_PI - 5.9,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            sphere().geodesic_distance(&[PI / 2.0, 0.0], &[PI / 2.0, PI / 2.0]),
            PI / 2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            torus().geodesic_distance(&[0.0, 0.0], &[0.3, 0.4]),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn distance_triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [circle(), torus(), sphere()] {
            for _ in 0..300 {
                let a = random_admissible(&m, &mut rng);
                let b = random_admissible(&m, &mut rng);
                let c = random_admissible(&m, &mut rng);
                let ab = m.geodesic_distance(&a, &b);
                let bc = m.geodesic_distance(&b, &c);
                let ac = m.geodesic_distance(&a, &c);
                assert!(ac <= ab + bc + 1e-12);
                assert_relative_eq!(ab, m.geodesic_distance(&b, &a), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn log_map_examples() {
        let m = circle();
        assert_relative_eq!(m.log_map(&[0.0], &[0.5]).unwrap()[0], 0.5);
        assert_relative_eq!(m.log_map(&[0.0], &[TWO_PI - 0.5]).unwrap()[0], -0.5);

        let s = sphere();
        let eta = s.log_map(&[PI / 2.0, 0.0], &[PI / 2.0, 1.0]).unwrap();
        assert_relative_eq!(eta[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(eta[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.covector_norm(&[PI / 2.0, 0.0], &eta), 1.0, epsilon = 1e-12);

        // Beyond the injectivity radius there is no unique geodesic.
        assert!(m.log_map(&[0.0], &[PI]).is_err());
    }

    #[test]
    fn injectivity_radii() {
        assert_relative_eq!(circle().injectivity_radius(), PI);
        assert_relative_eq!(
            ManifoldModel::flat_torus(vec![TWO_PI, PI]).unwrap().injectivity_radius(),
            PI / 2.0
        );
        assert_relative_eq!(sphere().injectivity_radius(), PI);
    }

    #[test]
    fn grid_weights_sum_to_volume() {
        let g = circle().build_grid(&[8]).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.weights.iter().all(|&w| (w - TWO_PI / 8.0).abs() < 1e-15));
        assert_relative_eq!(g.total_weight(), TWO_PI, max_relative = 1e-12);

        let g = torus().build_grid(&[16, 16]).unwrap();
        assert_eq!(g.len(), 256);
        assert_relative_eq!(g.total_weight(), 4.0 * PI * PI, max_relative = 1e-12);

        for res in [6, 17, 48] {
            let g = sphere().build_grid(&[res]).unwrap();
            assert_relative_eq!(g.total_weight(), 4.0 * PI, max_relative = 1e-10);
            assert!(g.weights.iter().all(|&w| w > 0.0));
        }
        assert!(circle().build_grid(&[3]).is_err());
    }

    #[test]
    fn circle_grid_integrates_trig_polynomials_exactly() {
        let n = 16;
        let g = circle().build_grid(&[n]).unwrap();
        for k in 1..(n / 2) {
            let re: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(x, w)| w * (k as f64 * x[0]).cos())
                .sum();
            let im: f64 = g
                .nodes
                .iter()
                .zip(&g.weights)
                .map(|(x, w)| w * (k as f64 * x[0]).sin())
                .sum();
            assert!(re.abs() < 1e-12 && im.abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn gauss_legendre_matches_low_order_closed_forms() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3.0f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-14);
        let (x, w) = gauss_legendre(64);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        // Exact for polynomials up to degree 2n−1.
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(integral, 2.0 / 11.0, epsilon = 1e-13);
    }

    #[test]
    fn sphere_frame_moves_pair_to_equator() {
        let s = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            // Arbitrary pair, including near-pole points.
            let x = vec![rng.gen::<f64>() * PI, rng.gen::<f64>() * TWO_PI];
            let y = vec![rng.gen::<f64>() * PI, rng.gen::<f64>() * TWO_PI];
            if s.geodesic_distance(&x, &y) > 0.95 * PI {
                continue;
            }
            let f = s.frame_for_pair(&x, &y);
            let yf = f.to_frame(&y);
            let xf = f.to_frame(&x);
            assert_relative_eq!(yf[0], PI / 2.0, epsilon = 1e-10);
            assert!(yf[1].abs() < 1e-10);
            assert_relative_eq!(xf[0], PI / 2.0, epsilon = 1e-10);
            // Distances are rotation invariant.
            assert_relative_eq!(
                s.geodesic_distance(&xf, &yf),
                s.geodesic_distance(&x, &y),
                epsilon = 1e-12
            );
            // Round trip.
            let back = f.from_frame(&xf);
            assert_relative_eq!(
                s.geodesic_distance(&back, &x),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn frame_covector_transform_preserves_norm_and_pairing() {
        let s = sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x = random_admissible(&s, &mut rng);
            let y = random_admissible(&s, &mut rng);
            if s.geodesic_distance(&x, &y) > 0.9 * PI || s.geodesic_distance(&x, &y) < 1e-3 {
                continue;
            }
            let f = s.frame_for_pair(&x, &y);
            let yf = f.to_frame(&y);
            let xf = f.to_frame(&x);
            // log in frame, pulled back, equals log in canonical chart.
            let eta_f = s.log_map(&yf, &xf).unwrap();
            let eta = f.covector_to_canonical(&y, &eta_f);
            let eta_direct = s.log_map(&y, &x).unwrap();
            assert_relative_eq!(eta[0], eta_direct[0], epsilon = 1e-9);
            assert_relative_eq!(eta[1], eta_direct[1], epsilon = 1e-9);
            assert_relative_eq!(
                s.covector_norm(&y, &eta),
                s.covector_norm(&yf, &eta_f),
                epsilon = 1e-10
            );
        }
    }

    // Test-only curvature oracle: scalar curvature from centered finite
    // differences of the Christoffel symbols,
    // R = g^{jk}(∂_i Γ^i_{jk} − ∂_j Γ^i_{ik} + Γ^i_{ip}Γ^p_{jk} − Γ^i_{jp}Γ^p_{ik}).
    fn curvature_fd_oracle(m: &ManifoldModel, x: &[f64], h: f64) -> f64 {
        let n = m.dim();
        let gamma = |pt: &[f64]| m.metric_at(pt).unwrap().christoffel;
        let md = m.metric_at(x).unwrap();
        let g0 = gamma(x);
        let mut dgamma = vec![vec![vec![vec![0.0; n]; n]; n]; n]; // [d][i][j][k]
        for d in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[d] += h;
            xm[d] -= h;
            let gp = gamma(&xp);
            let gm = gamma(&xm);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        dgamma[d][i][j][k] = (gp[i][(j, k)] - gm[i][(j, k)]) / (2.0 * h);
                    }
                }
            }
        }
        let mut r = 0.0;
        for j in 0..n {
            for k in 0..n {
                let mut ric = 0.0;
                for i in 0..n {
                    ric += dgamma[i][i][j][k] - dgamma[j][i][i][k];
                    for p in 0..n {
                        ric += g0[i][(i, p)] * g0[p][(j, k)] - g0[i][(j, p)] * g0[p][(i, k)];
                    }
                }
                r += md.g_inv[(j, k)] * ric;
            }
        }
        r
    }

    #[test]
    fn scalar_curvature_matches_christoffel_fd_oracle_on_sphere() {
        let s = sphere();
        for &theta in &[0.7, 1.2, PI / 2.0, 2.3] {
            let x = [theta, 0.9];
            let r = curvature_fd_oracle(&s, &x, 1e-4);
            assert!((r - 2.0).abs() < 1e-6, "theta = {theta}: R_fd = {r}");
        }
        let t = torus();
        assert!(curvature_fd_oracle(&t, &[0.3, 0.4], 1e-4).abs() < 1e-10);
    }
}
