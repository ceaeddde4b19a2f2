//! The action jet and its diagnostics.
//!
//! For an admissible triple (t, x, y) the jet bundles everything the slice
//! kernel needs at one point:
//!
//! * the scaled action Φ(t,x,y) and physical action S = Φ/t,
//! * its gradients, from the generating-function relations
//!   d_xΦ = p₁, d_yΦ = −p₀ (endpoint and initial momentum of the scaled flow),
//! * the mixed Hessian ∂²S/∂x∂y from the flow's variational block
//!   ∂²Φ/∂x∂y = −(∂x₁/∂η)⁻ᵀ, obtained by differentiating dΦ = p₁dx − p₀dy,
//! * the Morette–Van Vleck determinant
//!   D = g(x)^{−1/2} g(y)^{−1/2} det(−∂²S/∂x∂y),
//! * the normalized amplitude a = t^{n/2}√D, which is 1 on flat manifolds
//!   and tends to 1 at the diagonal.
//!
//! The module also carries the smooth distance cutoff χ and finite-difference
//! residuals of the Hamilton–Jacobi and transport equations, the r₀/r₁
//! amplitude remainders, and the diagonal Laplacian of a whose t → 0 limit is
//! R/6.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::{shoot_lowest_energy, LowestEnergyPath};
use crate::error::{Error, Result};
use crate::manifold::ManifoldModel;
use crate::potential::Potential;

/// Condition-number ceiling on ∂x₁/∂η before a conjugate point is reported.
pub const CONJUGATE_COND_LIMIT: f64 = 1e10;

/// FD step for spatial Laplacians (Richardson levels h, h/2).
pub const SPATIAL_FD_STEP: f64 = 1e-3;

/// FD step for time derivatives.
pub const TEMPORAL_FD_STEP: f64 = 1e-4;

/// The bundle (Φ, S, ∇ₓS, ∇ᵧS, ∂²S/∂x∂y, D, a) at one (t, x, y).
#[derive(Debug, Clone)]
pub struct ActionJet {
    pub t: f64,
    pub phi: f64,
    pub s_action: f64,
    /// d_xS in canonical chart components at x.
    pub grad_x_s: Vec<f64>,
    /// d_yS in canonical chart components at y.
    pub grad_y_s: Vec<f64>,
    /// ∂²S/∂xⱼ∂yₖ, canonical chart components.
    pub mixed_hessian: DMatrix<f64>,
    pub vanvleck_d: f64,
    pub amplitude_a: f64,
}

/// Smooth bump cutoff in geodesic distance: χ ≡ 1 for d ≤ r_in, χ ≡ 0 for
/// d ≥ r_out, and the standard exp(−1/s) glue in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub r_in: f64,
    pub r_out: f64,
}

impl CutoffSpec {
    pub fn new(r_in: f64, r_out: f64) -> Result<Self> {
        if !(0.0 < r_in && r_in < r_out) {
            return Err(Error::InvalidCutoff(format!(
                "need 0 < r_in < r_out, got r_in = {r_in}, r_out = {r_out}"
            )));
        }
        Ok(CutoffSpec { r_in, r_out })
    }

    /// Default plateau: r_out = 0.9 × injectivity radius, r_in = r_out/2.
    pub fn default_for(m: &ManifoldModel) -> Self {
        let r_out = 0.9 * m.injectivity_radius();
        CutoffSpec {
            r_in: 0.5 * r_out,
            r_out,
        }
    }

    /// The radii must stay inside the manifold's injectivity proxy.
    pub fn validate_for(&self, m: &ManifoldModel) -> Result<()> {
        let limit = 0.9 * m.injectivity_radius();
        if self.r_out > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidCutoff(format!(
                "r_out = {} exceeds 0.9 x injectivity radius = {limit}",
                self.r_out
            )));
        }
        Ok(())
    }

    /// χ(d) ∈ [0, 1].
    pub fn value(&self, d: f64) -> f64 {
        if d <= self.r_in {
            1.0
        } else if d >= self.r_out {
            0.0
        } else {
            smooth_step((d - self.r_in) / (self.r_out - self.r_in))
        }
    }
}

/// h(s) = f(1−s)/(f(1−s)+f(s)) with f(s) = exp(−1/s) for s > 0: C^∞, monotone,
/// h(0) = 1, h(1) = 0, h(1/2) = 1/2.
fn smooth_step(s: f64) -> f64 {
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let a = f(1.0 - s);
    a / (a + f(s))
}

/// Cutoff evaluated at a distance (free function form).
pub fn cutoff_value(spec: &CutoffSpec, d: f64) -> f64 {
    spec.value(d)
}

/// Compute the full action jet by solving the boundary value problem.
pub fn action_jet(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<ActionJet> {
    let mu = crate::dynamics::default_momentum_bound(m);
    let path = shoot_lowest_energy(m, v, t, x, y, mu)?;
    jet_from_path(m, &path)
}

/// Same as [`action_jet`] with an explicit momentum bound.
pub fn action_jet_with_bound(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    mu: f64,
) -> Result<ActionJet> {
    let path = shoot_lowest_energy(m, v, t, x, y, mu)?;
    jet_from_path(m, &path)
}

/// Assemble the jet from a converged lowest-energy path.
pub fn jet_from_path(m: &ManifoldModel, path: &LowestEnergyPath) -> Result<ActionJet> {
    let n = m.dim();
    let t = path.t;
    let phi = path.flow.action_phi;
    let s_action = phi / t;

    let jac = &path.flow.jac_x_eta;
    let cond = condition_number(jac);
    if !cond.is_finite() || cond > CONJUGATE_COND_LIMIT {
        return Err(Error::ConjugatePoint { cond });
    }
    let inv = jac.clone().try_inverse().ok_or(Error::ConjugatePoint {
        cond: f64::INFINITY,
    })?;

    // Frame-chart quantities first.
    let xf = path.frame.to_frame(&path.x);
    let yf = path.frame.to_frame(&path.y);
    // ∂²Φ/∂xⱼ∂yₖ = −(J_η⁻¹)ₖⱼ.
    let mixed_phi_frame = DMatrix::from_fn(n, n, |j, k| -inv[(k, j)]);

    // D is chart-invariant; evaluate with frame densities.
    let gx = m.metric_at(&xf)?;
    let gy = m.metric_at(&yf)?;
    let det_neg_s = (-&mixed_phi_frame / t).determinant();
    let vanvleck_d = det_neg_s / (gx.sqrt_det_g * gy.sqrt_det_g);
    if !(vanvleck_d > 0.0) {
        return Err(Error::NonPositiveVanVleck { d: vanvleck_d });
    }
    let amplitude_a = t.powf(n as f64 / 2.0) * vanvleck_d.sqrt();

    // Gradients via the generating relations, pulled back to the canonical chart.
    let p1 = &path.flow.endpoint.xi;
    let grad_x_s: Vec<f64> = path
        .frame
        .covector_to_canonical(&path.x, p1)
        .iter()
        .map(|v| v / t)
        .collect();
    let grad_y_s: Vec<f64> = path.eta0.iter().map(|v| -v / t).collect();

    // Mixed Hessian back to canonical components: J_xᵀ (∂²S') J_y.
    let jx = path.frame.jacobian(&path.x);
    let jy = path.frame.jacobian(&path.y);
    let mixed_hessian = jx.transpose() * (&mixed_phi_frame / t) * jy;

    Ok(ActionJet {
        t,
        phi,
        s_action,
        grad_x_s,
        grad_y_s,
        mixed_hessian,
        vanvleck_d,
        amplitude_a,
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Independent Van Vleck oracle: D from second-order central differences of S
/// in every (xⱼ, yₖ) pair, assembled with the same density factors.
pub fn vanvleck_fd_oracle(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64> {
    let n = m.dim();
    let s_at = |xp: &[f64], yp: &[f64]| -> Result<f64> {
        Ok(action_jet(m, v, t, xp, yp)?.s_action)
    };
    let mut neg_hess = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[k] += h;
            ym[k] -= h;
            let spp = s_at(&xp, &yp)?;
            let spm = s_at(&xp, &ym)?;
            let smp = s_at(&xm, &yp)?;
            let smm = s_at(&xm, &ym)?;
            neg_hess[(j, k)] = -(spp - spm - smp + smm) / (4.0 * h * h);
        }
    }
    let gx = m.metric_at(x)?;
    let gy = m.metric_at(y)?;
    Ok(neg_hess.determinant() / (gx.sqrt_det_g * gy.sqrt_det_g))
}

/// Laplace–Beltrami of a scalar field by central differences with Richardson
/// extrapolation (levels h and h/2), using the analytic metric coefficients.
fn metric_laplacian_fd<F>(m: &ManifoldModel, f: &F, x: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let lap_h = |h: f64| -> Result<f64> {
        let n = m.dim();
        let md = m.metric_at(x)?;
        let drift = m.laplace_drift(x);
        let f0 = f(x)?;
        let mut second = DMatrix::zeros(n, n);
        let mut first = vec![0.0; n];
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fp = f(&xp)?;
            let fm = f(&xm)?;
            second[(j, j)] = (fp - 2.0 * f0 + fm) / (h * h);
            first[j] = (fp - fm) / (2.0 * h);
        }
        for j in 0..n {
            for k in (j + 1)..n {
                let mut pp = x.to_vec();
                let mut pm = x.to_vec();
                let mut mp = x.to_vec();
                let mut mm = x.to_vec();
                pp[j] += h;
                pp[k] += h;
                pm[j] += h;
                pm[k] -= h;
                mp[j] -= h;
                mp[k] += h;
                mm[j] -= h;
                mm[k] -= h;
                let d = (f(&pp)? - f(&pm)? - f(&mp)? + f(&mm)?) / (4.0 * h * h);
                second[(j, k)] = d;
                second[(k, j)] = d;
            }
        }
        let mut lap = 0.0;
        for j in 0..n {
            for k in 0..n {
                lap += md.g_inv[(j, k)] * second[(j, k)];
            }
            lap += drift[j] * first[j];
        }
        Ok(lap)
    };
    // Richardson: error O(h²) per level, so (4L(h/2) − L(h))/3 is O(h⁴).
    let l1 = lap_h(h)?;
    let l2 = lap_h(h / 2.0)?;
    Ok((4.0 * l2 - l1) / 3.0)
}

/// Fourth-order central time derivative; S and √D scale like powers of 1/t,
/// so the second-order stencil's truncation would swamp the residuals.
fn dt_central<F>(f: &F, t: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    Ok((-f(t + 2.0 * h)? + 8.0 * f(t + h)? - 8.0 * f(t - h)? + f(t - 2.0 * h)?) / (12.0 * h))
}

/// |∂ₜS + ½|d_xS|²_g + V(x)| — the Hamilton–Jacobi residual, ∂ₜ by central FD.
pub fn hj_residual(m: &ManifoldModel, v: &Potential, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let h = TEMPORAL_FD_STEP;
    let jet = action_jet(m, v, t, x, y)?;
    let dt_s = dt_central(&|tt| Ok(action_jet(m, v, tt, x, y)?.s_action), t, h)?;
    let md = m.metric_at(x)?;
    let mut grad_sq = 0.0;
    for j in 0..m.dim() {
        for k in 0..m.dim() {
            grad_sq += md.g_inv[(j, k)] * jet.grad_x_s[j] * jet.grad_x_s[k];
        }
    }
    Ok((dt_s + 0.5 * grad_sq + v.value(x)).abs())
}

/// |∂ₜ√D + g(∇ₓS, ∇ₓ√D) + ½√D·ΔₓS| — the transport residual; the time and
/// space derivatives of √D and the Laplacian of S by central differences.
pub fn transport_residual(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let n = m.dim();
    let jet = action_jet(m, v, t, x, y)?;
    let sqrt_d = |tt: f64, xx: &[f64]| -> Result<f64> {
        Ok(action_jet(m, v, tt, xx, y)?.vanvleck_d.sqrt())
    };
    let ht = TEMPORAL_FD_STEP;
    let dt_sqrt_d = dt_central(&|tt| sqrt_d(tt, x), t, ht)?;

    let hx = SPATIAL_FD_STEP;
    let mut grad_sqrt_d = vec![0.0; n];
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += hx;
        xm[j] -= hx;
        grad_sqrt_d[j] = (sqrt_d(t, &xp)? - sqrt_d(t, &xm)?) / (2.0 * hx);
    }
    let md = m.metric_at(x)?;
    let mut pairing = 0.0;
    for j in 0..n {
        for k in 0..n {
            pairing += md.g_inv[(j, k)] * jet.grad_x_s[j] * grad_sqrt_d[k];
        }
    }
    let lap_s = metric_laplacian_fd(
        m,
        &|xx: &[f64]| Ok(action_jet(m, v, t, xx, y)?.s_action),
        x,
        hx,
    )?;
    Ok((dt_sqrt_d + pairing + 0.5 * jet.vanvleck_d.sqrt() * lap_s).abs())
}

/// The amplitude remainders of the approximate WKB identity:
/// r₀ = χ(x,y)(½Δₓa − R(x)a/12) and
/// r₁ = g(i·a·∇ₓΦ + t·∇ₓa, ∇ₓχ) + (t/2)·a·Δₓχ, returned as (r₀, |r₁|).
pub fn residual_amplitudes_r0_r1(
    m: &ManifoldModel,
    v: &Potential,
    spec: &CutoffSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, f64)> {
    let n = m.dim();
    let jet = action_jet(m, v, t, x, y)?;
    let md = m.metric_at(x)?;
    let hx = SPATIAL_FD_STEP;

    let a_at = |xx: &[f64]| -> Result<f64> { Ok(action_jet(m, v, t, xx, y)?.amplitude_a) };
    let chi_at = |xx: &[f64]| -> Result<f64> { Ok(spec.value(m.geodesic_distance(xx, y))) };

    let lap_a = metric_laplacian_fd(m, &a_at, x, hx)?;
    let chi = chi_at(x)?;
    let r0 = chi * (0.5 * lap_a - md.scalar_curvature / 12.0 * jet.amplitude_a);

    let mut grad_a = vec![0.0; n];
    let mut grad_chi = vec![0.0; n];
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += hx;
        xm[j] -= hx;
        grad_a[j] = (a_at(&xp)? - a_at(&xm)?) / (2.0 * hx);
        grad_chi[j] = (chi_at(&xp)? - chi_at(&xm)?) / (2.0 * hx);
    }
    let lap_chi = metric_laplacian_fd(m, &chi_at, x, hx)?;

    let mut inner = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            // ∇ₓΦ = t·∇ₓS.
            let lead = Complex64::new(t * grad_a[j], jet.amplitude_a * t * jet.grad_x_s[j]);
            inner += md.g_inv[(j, k)] * lead * grad_chi[k];
        }
    }
    let r1 = inner + Complex64::new(0.5 * t * jet.amplitude_a * lap_chi, 0.0);
    Ok((r0, r1.norm()))
}

/// Richardson-extrapolated FD Laplacian of x ↦ a(0, x, x₀) at x = x₀, with the
/// t → 0 limit taken by a linear fit in t² over two small times (the amplitude
/// is even in t). Tends to R(x₀)/6.
pub fn diagonal_laplacian_of_a(
    m: &ManifoldModel,
    v: &Potential,
    x0: &[f64],
    h: f64,
) -> Result<f64> {
    let lap_at = |t: f64| -> Result<f64> {
        metric_laplacian_fd(
            m,
            &|xx: &[f64]| Ok(action_jet(m, v, t, xx, x0)?.amplitude_a),
            x0,
            h,
        )
    };
    let (t1, t2) = (0.01, 0.005);
    let l1 = lap_at(t1)?;
    let l2 = lap_at(t2)?;
    // a(t) = a₀ + c·t² + O(t⁴) ⇒ extrapolate linearly in t².
    Ok((t1 * t1 * l2 - t2 * t2 * l1) / (t1 * t1 - t2 * t2))
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

    #[test]
    fn flat_jets_have_unit_amplitude() {
        let jet = action_jet(&circle(), &Potential::zero(), 0.1, &[1.0], &[0.7]).unwrap();
        assert_relative_eq!(jet.s_action, 0.45, epsilon = 1e-12);
        assert_relative_eq!(jet.vanvleck_d, 10.0, epsilon = 1e-9);
        assert_relative_eq!(jet.amplitude_a, 1.0, epsilon = 1e-11);
        assert_relative_eq!(jet.phi, 0.045, epsilon = 1e-13);

        let jet = action_jet(&torus(), &Potential::zero(), 0.2, &[0.3, 0.1], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(jet.s_action, 0.25, epsilon = 1e-12);
        assert_relative_eq!(jet.vanvleck_d, 25.0, epsilon = 1e-8);
        assert_relative_eq!(jet.amplitude_a, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn sphere_amplitude_matches_jacobi_field_oracle() {
        // Free transverse Jacobi field on the unit sphere: J(θ) = sin θ/θ,
        // so a = √(θ/sin θ).
        let theta = 0.8;
        let jet = action_jet(
            &sphere(),
            &Potential::zero(),
            0.05,
            &[PI / 2.0, theta],
            &[PI / 2.0, 0.0],
        )
        .unwrap();
        let oracle = (theta / theta.sin()).sqrt();
        assert!(
            (jet.amplitude_a - oracle).abs() < 1e-9,
            "a = {}, oracle = {}",
            jet.amplitude_a,
            oracle
        );
        assert_relative_eq!(jet.s_action, theta * theta / (2.0 * 0.05), epsilon = 1e-9);
    }

    #[test]
    fn gradients_match_fd_of_phi() {
        // d_xΦ = p₁ and d_yΦ = −p₀ checked against central differences of Φ.
        let cases: Vec<(ManifoldModel, Potential, Vec<f64>, Vec<f64>)> = vec![
            (circle(), Potential::cosine(1.0, vec![1.0]), vec![0.4], vec![0.0]),
            (
                sphere(),
                Potential::zero(),
                vec![1.3, 0.5],
                vec![1.1, 0.1],
            ),
        ];
        let t = 0.1;
        for (m, v, x, y) in cases {
            let n = m.dim();
            let jet = action_jet(&m, &v, t, &x, &y).unwrap();
            let h = 1e-5;
            for j in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd =
                    (action_jet(&m, &v, t, &xp, &y).unwrap().phi
                        - action_jet(&m, &v, t, &xm, &y).unwrap().phi)
                        / (2.0 * h);
                assert!(
                    (fd - t * jet.grad_x_s[j]).abs() < 1e-8,
                    "d_xPhi[{j}] fd {fd} vs {}",
                    t * jet.grad_x_s[j]
                );
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                let fd =
                    (action_jet(&m, &v, t, &x, &yp).unwrap().phi
                        - action_jet(&m, &v, t, &x, &ym).unwrap().phi)
                        / (2.0 * h);
                assert!(
                    (fd - t * jet.grad_y_s[j]).abs() < 1e-8,
                    "d_yPhi[{j}] fd {fd} vs {}",
                    t * jet.grad_y_s[j]
                );
            }
        }
    }

    #[test]
    fn generating_relation_ties_grad_y_to_shot_momentum() {
        let m = circle();
        let v = Potential::cosine(1.0, vec![1.0]);
        let t = 0.1;
        let path = shoot_lowest_energy(&m, &v, t, &[0.4], &[0.0], 0.9 * PI).unwrap();
        let jet = jet_from_path(&m, &path).unwrap();
        assert!((-(jet.grad_y_s[0]) - path.eta0[0] / t).abs() < 1e-9);
    }

    #[test]
    fn vanvleck_symmetric_under_swap_for_free_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for m in [circle(), torus(), sphere()] {
            let v = Potential::zero();
            for _ in 0..10 {
                let (x, y) = random_pair(&m, &mut rng, 0.7);
                let t = 0.05 + 0.1 * rng.gen::<f64>();
                let dxy = action_jet(&m, &v, t, &x, &y).unwrap().vanvleck_d;
                let dyx = action_jet(&m, &v, t, &y, &x).unwrap().vanvleck_d;
                assert!(
                    ((dxy - dyx) / dxy).abs() < 1e-8,
                    "D swap asymmetry {:.3e}",
                    ((dxy - dyx) / dxy).abs()
                );
            }
        }
    }

    fn random_pair(m: &ManifoldModel, rng: &mut impl Rng, frac: f64) -> (Vec<f64>, Vec<f64>) {
        loop {
            let y: Vec<f64> = match m {
                ManifoldModel::RoundSphere { .. } => {
                    vec![0.8 + 1.5 * rng.gen::<f64>(), rng.gen::<f64>() * TWO_PI]
                }
                _ => (0..m.dim()).map(|_| rng.gen::<f64>() * TWO_PI).collect(),
            };
            let x: Vec<f64> = match m {
                ManifoldModel::RoundSphere { .. } => {
                    vec![0.8 + 1.5 * rng.gen::<f64>(), rng.gen::<f64>() * TWO_PI]
                }
                _ => (0..m.dim()).map(|_| rng.gen::<f64>() * TWO_PI).collect(),
            };
            let d = m.geodesic_distance(&x, &y);
            if d < frac * m.injectivity_radius() && d > 1e-3 {
                return (x, y);
            }
        }
    }

    #[test]
    fn jet_vanvleck_matches_fd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cases: Vec<(ManifoldModel, Potential)> = vec![
            (circle(), Potential::cosine(1.0, vec![1.0])),
            (sphere(), Potential::zero()),
        ];
        for (m, v) in cases {
            for _ in 0..5 {
                let (x, y) = random_pair(&m, &mut rng, 0.6);
                let t = 0.05 + 0.1 * rng.gen::<f64>();
                let jet = action_jet(&m, &v, t, &x, &y).unwrap();
                let fd = vanvleck_fd_oracle(&m, &v, t, &x, &y, 1e-4).unwrap();
                assert!(
                    ((jet.vanvleck_d - fd) / fd).abs() < 1e-5,
                    "D = {}, FD oracle = {}",
                    jet.vanvleck_d,
                    fd
                );
            }
        }
    }

    #[test]
    fn cutoff_plateau_midpoint_and_smoothness() {
        let spec = CutoffSpec::new(0.5, 1.0).unwrap();
        assert_eq!(spec.value(0.2), 1.0);
        assert_eq!(spec.value(1.3), 0.0);
        assert_relative_eq!(spec.value(0.75), 0.5, epsilon = 1e-14);
        // Monotone decreasing across the transition.
        let mut prev = 1.0;
        for i in 0..=100 {
            let d = 0.5 + 0.5 * i as f64 / 100.0;
            let v = spec.value(d);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert!(CutoffSpec::new(1.0, 0.5).is_err());
        assert!(CutoffSpec::new(2.0, 3.2).unwrap().validate_for(&circle()).is_err());
    }

    #[test]
    fn hamilton_jacobi_residuals_are_small() {
        // Flat free case is analytic: −d²/2t² + d²/2t² = 0.
        let r = hj_residual(&circle(), &Potential::zero(), 0.1, &[1.0], &[0.7]).unwrap();
        assert!(r < 1e-8, "circle free HJ residual {r:.3e}");
        let r = hj_residual(
            &sphere(),
            &Potential::zero(),
            0.05,
            &[PI / 2.0, 0.8],
            &[PI / 2.0, 0.0],
        )
        .unwrap();
        assert!(r < 1e-7, "sphere HJ residual {r:.3e}");
        let r = hj_residual(&circle(), &Potential::cosine(1.0, vec![1.0]), 0.1, &[0.4], &[0.0])
            .unwrap();
        assert!(r < 1e-7, "circle cosine HJ residual {r:.3e}");
    }

    #[test]
    fn transport_residuals_are_small() {
        let r = transport_residual(&circle(), &Potential::zero(), 0.1, &[1.0], &[0.7]).unwrap();
        assert!(r < 1e-6, "circle transport residual {r:.3e}");
        let r = transport_residual(
            &torus(),
            &Potential::zero(),
            0.1,
            &[0.3, 0.2],
            &[0.0, 0.0],
        )
        .unwrap();
        assert!(r < 1e-6, "torus transport residual {r:.3e}");
        let r = transport_residual(
            &sphere(),
            &Potential::zero(),
            0.05,
            &[PI / 2.0, 0.8],
            &[PI / 2.0, 0.0],
        )
        .unwrap();
        assert!(r < 1e-5, "sphere transport residual {r:.3e}");
    }

    #[test]
    fn r1_vanishes_on_the_cutoff_plateau() {
        let spec = CutoffSpec::default_for(&circle());
        let (_, r1) = residual_amplitudes_r0_r1(
            &circle(),
            &Potential::zero(),
            &spec,
            0.1,
            &[1.0],
            &[0.7],
        )
        .unwrap();
        assert_eq!(r1, 0.0);
    }

    #[test]
    fn r0_vanishes_where_curvature_terms_cancel() {
        // Flat: a ≡ 1 and R ≡ 0.
        let spec = CutoffSpec::default_for(&circle());
        let (r0, _) =
            residual_amplitudes_r0_r1(&circle(), &Potential::zero(), &spec, 0.02, &[0.3], &[0.3])
                .unwrap();
        assert!(r0.abs() < 1e-8, "flat r0 = {r0:.3e}");
        // Sphere diagonal at t → 0: ½·(R/6) − R/12 = 0.
        let s = sphere();
        let spec = CutoffSpec::default_for(&s);
        let x0 = [PI / 2.0, 1.0];
        let lap1 = {
            let (r0a, _) = residual_amplitudes_r0_r1(&s, &Potential::zero(), &spec, 0.01, &x0, &x0)
                .unwrap();
            r0a
        };
        let lap2 = {
            let (r0b, _) =
                residual_amplitudes_r0_r1(&s, &Potential::zero(), &spec, 0.005, &x0, &x0).unwrap();
            r0b
        };
        // Extrapolate the even-in-t remainder to t = 0.
        let r0_limit = (0.01f64.powi(2) * lap2 - 0.005f64.powi(2) * lap1)
            / (0.01f64.powi(2) - 0.005f64.powi(2));
        assert!(r0_limit.abs() < 1e-4, "sphere diagonal r0 limit {r0_limit:.3e}");
    }

    #[test]
    fn diagonal_laplacian_recovers_curvature_over_six() {
        let lap = diagonal_laplacian_of_a(&torus(), &Potential::zero(), &[0.3, 0.4], 1e-3).unwrap();
        assert!(lap.abs() < 1e-5, "torus diag laplacian {lap:.3e}");

        let lap =
            diagonal_laplacian_of_a(&sphere(), &Potential::zero(), &[PI / 2.0, 0.7], 1e-3).unwrap();
        assert!(
            (lap - 1.0 / 3.0).abs() < 2e-3,
            "sphere diag laplacian {lap} (expect 1/3)"
        );

        let lap = diagonal_laplacian_of_a(
            &circle(),
            &Potential::cosine(1.0, vec![1.0]),
            &[0.0],
            1e-3,
        )
        .unwrap();
        assert!(lap.abs() < 1e-4, "circle-with-potential diag laplacian {lap:.3e}");
    }

    #[test]
    fn phi_minus_half_distance_squared_is_order_t_squared() {
        let m = circle();
        let v = Potential::cosine(1.0, vec![1.0]);
        let (x, y) = (vec![0.9], vec![0.2]);
        let d = m.geodesic_distance(&x, &y);
        let ts = [0.02, 0.04, 0.08];
        let feats: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let jet = action_jet(&m, &v, t, &x, &y).unwrap();
                (t.ln(), (jet.phi - d * d / 2.0).abs().ln())
            })
            .collect();
        let slope = (feats[2].1 - feats[0].1) / (feats[2].0 - feats[0].0);
        assert!(slope >= 1.9, "log-log slope {slope}");
    }

    #[test]
    fn amplitude_tends_to_one_at_the_diagonal() {
        for m in [circle(), torus(), sphere()] {
            let x = match &m {
                ManifoldModel::RoundSphere { .. } => vec![PI / 2.0, 0.4],
                ManifoldModel::FlatTorus { .. } => vec![0.3, 1.0],
                _ => vec![0.3],
            };
            let jet = action_jet(&m, &Potential::zero(), 0.01, &x, &x).unwrap();
            assert!(
                (jet.amplitude_a - 1.0).abs() <= 1e-6,
                "a(0.01, x, x) = {} on {m:?}",
                jet.amplitude_a
            );
        }
    }
}
