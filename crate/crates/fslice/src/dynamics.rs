//! Scaled Hamiltonian flow and the two-point boundary value problem.
//!
//! The slice machinery never integrates the physical Hamiltonian
//! H = ½|ξ|²_g + V over [0, t] directly. It integrates the scaled Hamiltonian
//!
//! ```text
//! H_t(x, ξ) = ½|ξ|²_g + t²V(x)
//! ```
//!
//! over unit time s ∈ [0, 1]; the physical flow is recovered by the scaling
//! φ_s = Θ_t ∘ φ^t_{s/t} ∘ Θ_t⁻¹ with Θ_t(x, ξ) = (x, ξ/t). The variational
//! (Jacobi) equations ride along as an augmented state so endpoint Jacobians
//! come out with integrator accuracy rather than finite differences, and the
//! scaled action Φ = ∫₀¹ (½|dq/ds|²_g − t²V) ds accumulates in the same pass.
//!
//! The integrator is the fixed-step order-8 Prince–Dormand core (12 stages,
//! propagation weights only). Fixed stepping keeps the flow a deterministic,
//! smooth function of (t, y, η), which the shooting Jacobians and the
//! finite-difference oracles rely on.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{ChartFrame, ChartGeom, ManifoldModel, SPHERE_POLE_MARGIN};
use crate::potential::Potential;

/// Default integrator steps per unit scaled time.
pub const DEFAULT_FLOW_STEPS: usize = 64;

/// Shooting residual tolerance in chart coordinates.
pub const SHOOTING_TOL: f64 = 1e-11;

/// Maximum Newton iterations before reporting failure.
pub const MAX_NEWTON_ITERS: usize = 50;

/// A point of phase space T*M in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Result of flowing H_t over s ∈ [0, 1] with variational equations attached.
#[derive(Debug, Clone)]
pub struct ScaledFlowResult {
    /// φ^t_1(y, η).
    pub endpoint: PhasePoint,
    /// ∂x(1)/∂η.
    pub jac_x_eta: DMatrix<f64>,
    /// ∂ξ(1)/∂η.
    pub jac_xi_eta: DMatrix<f64>,
    /// ∂x(1)/∂y.
    pub jac_x_y: DMatrix<f64>,
    /// Full 2n×2n variational matrix ∂(x(1), ξ(1))/∂(y, η); symplectic, so
    /// its determinant is 1 up to integrator accuracy.
    pub variational: DMatrix<f64>,
    /// Scaled action Φ accumulated along the trajectory.
    pub action_phi: f64,
    /// Sampled states at the integrator's internal steps (steps + 1 entries).
    pub trajectory: Vec<PhasePoint>,
}

/// The unique classical path of Γ^{H_t}_{1,x,y}(μ) found by Newton shooting,
/// carried in scaled form.
#[derive(Debug, Clone)]
pub struct LowestEnergyPath {
    pub t: f64,
    /// Endpoints in the canonical chart.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Scaled initial momentum η = p^t_0(x, y), canonical chart components.
    pub eta0: Vec<f64>,
    /// The converged flow. Coordinates live in `frame`; on flat manifolds the
    /// frame is the identity and they coincide with the canonical chart.
    pub flow: ScaledFlowResult,
    /// Chart frame the flow was solved in (equator rotation on the sphere).
    pub frame: ChartFrame,
    /// η in frame components (what `flow` was integrated from).
    pub eta0_frame: Vec<f64>,
    /// Flow evaluations spent by the shooting loop.
    pub newton_iters: usize,
    /// Final boundary mismatch norm in chart coordinates.
    pub residual: f64,
}

/// Default momentum bound μ = 0.9 × injectivity radius (scaled units).
pub fn default_momentum_bound(m: &ManifoldModel) -> f64 {
    0.9 * m.injectivity_radius()
}

/// Scaled energy H_t(x, ξ) = ½|ξ|²_g + t²V(x).
pub fn scaled_energy(m: &ManifoldModel, v: &Potential, t: f64, p: &PhasePoint) -> f64 {
    let nrm = m.covector_norm(&p.x, &p.xi);
    0.5 * nrm * nrm + t * t * v.value(&p.x)
}

/// Integrate the flow of H_t from `start` over s ∈ [0, 1].
pub fn scaled_hamiltonian_flow(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    start: &PhasePoint,
    steps: usize,
) -> Result<ScaledFlowResult> {
    let n = m.dim();
    if start.x.len() != n || start.xi.len() != n {
        return Err(Error::ChartDomain {
            point: start.x.clone(),
            reason: format!("phase point dimension mismatch (manifold dimension {n})"),
        });
    }
    if steps < 8 {
        return Err(Error::Config(format!(
            "flow requires at least 8 steps, got {steps}"
        )));
    }
    if !m.chart_admissible(&start.x) {
        return Err(Error::ChartDomain {
            point: start.x.clone(),
            reason: "flow start outside admissible chart region".into(),
        });
    }
    v.validate_for(m)?;
    integrate(m, v, t, &start.x, &start.xi, steps)
}

/// Solve the two-point boundary value problem: find the unique η with
/// |η|_g < μ such that the H_t-flow from (y, η) reaches x at s = 1.
///
/// Newton iteration on η with the flow's own variational Jacobian, starting
/// from the log-map guess; plain steps with a halving line search on residual
/// increase. On the sphere the solve runs in an equator-aligned chart frame
/// and η is transformed back to canonical components.
pub fn shoot_lowest_energy(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    mu: f64,
) -> Result<LowestEnergyPath> {
    shoot_with_steps(m, v, t, x, y, mu, DEFAULT_FLOW_STEPS)
}

pub fn shoot_with_steps(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    mu: f64,
    steps: usize,
) -> Result<LowestEnergyPath> {
    shoot_impl(m, v, t, x, y, mu, steps, true)
}

/// Assembly-path shooting: identical solve, but the converged flow carries an
/// empty trajectory (kernel assembly reads only endpoint data and Jacobians,
/// and recording costs allocations per entry).
pub(crate) fn shoot_for_assembly(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    mu: f64,
) -> Result<LowestEnergyPath> {
    shoot_impl(m, v, t, x, y, mu, DEFAULT_FLOW_STEPS, false)
}

#[allow(clippy::too_many_arguments)]
fn shoot_impl(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &[f64],
    mu: f64,
    steps: usize,
    record: bool,
) -> Result<LowestEnergyPath> {
    v.validate_for(m)?;
    let n = m.dim();
    let frame = m.frame_for_pair(x, y);
    let xf = frame.to_frame(x);
    let yf = frame.to_frame(y);
    let mut eta = m.log_map(&yf, &xf)?;
    let mut evals = 0usize;

    let mut flow = integrate_opt(m, v, t, &yf, &eta, steps, record)?;
    evals += 1;
    let mut rvec = residual_vec(m, &xf, &flow);
    let mut res = norm(&rvec);

    while res > SHOOTING_TOL {
        if evals >= MAX_NEWTON_ITERS {
            return Err(Error::ShootingFailure {
                iterations: evals,
                residual: res,
            });
        }
        let jac = flow.jac_x_eta.clone();
        let delta = jac
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&rvec))
            .ok_or(Error::ShootingFailure {
                iterations: evals,
                residual: res,
            })?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let cand: Vec<f64> = eta
                .iter()
                .zip(delta.iter())
                .map(|(e, d)| e + step * d)
                .collect();
            let cflow = integrate_opt(m, v, t, &yf, &cand, steps, record)?;
            evals += 1;
            let crvec = residual_vec(m, &xf, &cflow);
            let cres = norm(&crvec);
            if cres < res {
                eta = cand;
                flow = cflow;
                rvec = crvec;
                res = cres;
                accepted = true;
                break;
            }
            step /= 2.0;
            if evals >= MAX_NEWTON_ITERS {
                break;
            }
        }
        if !accepted {
            return Err(Error::ShootingFailure {
                iterations: evals,
                residual: res,
            });
        }
    }

    let eta_norm = m.covector_norm(&yf, &eta);
    if eta_norm >= mu {
        return Err(Error::MomentumBound {
            norm: eta_norm,
            bound: mu,
        });
    }
    let eta0 = frame.covector_to_canonical(y, &eta);
    debug_assert_eq!(eta0.len(), n);
    Ok(LowestEnergyPath {
        t,
        x: x.to_vec(),
        y: y.to_vec(),
        eta0,
        flow,
        frame,
        eta0_frame: eta,
        newton_iters: evals,
        residual: res,
    })
}

fn residual_vec(m: &ManifoldModel, target: &[f64], flow: &ScaledFlowResult) -> Vec<f64> {
    let diff: Vec<f64> = target
        .iter()
        .zip(&flow.endpoint.x)
        .map(|(a, b)| a - b)
        .collect();
    m.wrap_displacement(&diff)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Augmented state and the fixed-step RK8 core.
// ---------------------------------------------------------------------------

/// Augmented flow state: (x, ξ), the 2n×2n variational matrix, and Φ.
/// Fixed 2-dimension storage; only the leading n (2n) entries are live.
#[derive(Debug, Clone, Copy)]
struct AugState {
    x: [f64; 2],
    xi: [f64; 2],
    m: [[f64; 4]; 4],
    phi: f64,
}

impl AugState {
    fn zeros() -> Self {
        AugState {
            x: [0.0; 2],
            xi: [0.0; 2],
            m: [[0.0; 4]; 4],
            phi: 0.0,
        }
    }

    #[inline]
    fn axpy(&mut self, c: f64, o: &AugState) {
        for i in 0..2 {
            self.x[i] += c * o.x[i];
            self.xi[i] += c * o.xi[i];
        }
        for i in 0..4 {
            for j in 0..4 {
                self.m[i][j] += c * o.m[i][j];
            }
        }
        self.phi += c * o.phi;
    }
}

/// Prince–Dormand RK8(7) propagation tableau (order-8 core; the embedded
/// error-estimator rows are not needed at fixed step; the system is
/// autonomous, so the c abscissae never enter).
const RK8_A: [&[f64]; 11] = [
    &[5.26001519587677318785587544488E-2],
    &[
        1.97250569845378994544595329183E-2,
        5.91751709536136983633785987549E-2,
    ],
    &[
        2.95875854768068491816892993775E-2,
        0.0,
        8.87627564304205475450678981324E-2,
    ],
    &[
        2.41365134159266685502369798665E-1,
        0.0,
        -8.84549479328286085344864962717E-1,
        9.24834003261792003115737966543E-1,
    ],
    &[
        3.7037037037037037037037037037E-2,
        0.0,
        0.0,
        1.70828608729473871279604482173E-1,
        1.25467687566822425016691814123E-1,
    ],
    &[
        3.7109375E-2,
        0.0,
        0.0,
        1.70252211019544039314978060272E-1,
        6.02165389804559606850219397283E-2,
        -1.7578125E-2,
    ],
    &[
        3.70920001185047927108779319836E-2,
        0.0,
        0.0,
        1.70383925712239993810214054705E-1,
        1.07262030446373284651809199168E-1,
        -1.53194377486244017527936158236E-2,
        8.27378916381402288758473766002E-3,
    ],
    &[
        6.24110958716075717114429577812E-1,
        0.0,
        0.0,
        -3.36089262944694129406857109825E0,
        -8.68219346841726006818189891453E-1,
        2.75920996994467083049415600797E1,
        2.01540675504778934086186788979E1,
        -4.34898841810699588477366255144E1,
    ],
    &[
        4.77662536438264365890433908527E-1,
        0.0,
        0.0,
        -2.48811461997166764192642586468E0,
        -5.90290826836842996371446475743E-1,
        2.12300514481811942347288949897E1,
        1.52792336328824235832596922938E1,
        -3.32882109689848629194453265587E1,
        -2.03312017085086261358222928593E-2,
    ],
    &[
        -9.3714243008598732571704021658E-1,
        0.0,
        0.0,
        5.18637242884406370830023853209E0,
        1.09143734899672957818500254654E0,
        -8.14978701074692612513997267357E0,
        -1.85200656599969598641566180701E1,
        2.27394870993505042818970056734E1,
        2.49360555267965238987089396762E0,
        -3.0467644718982195003823669022E0,
    ],
    &[
        2.27331014751653820792359768449E0,
        0.0,
        0.0,
        -1.05344954667372501984066689879E1,
        -2.00087205822486249909675718444E0,
        -1.79589318631187989172765950534E1,
        2.79488845294199600508499808837E1,
        -2.85899827713502369474065508674E0,
        -8.87285693353062954433549289258E0,
        1.23605671757943030647266201528E1,
        6.43392746015763530355970484046E-1,
    ],
];

const RK8_B: [f64; 12] = [
    5.42937341165687622380535766363E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566E0,
    1.89151789931450038304281599044E0,
    -5.8012039600105847814672114227E0,
    3.1116436695781989440891606237E-1,
    -1.52160949662516078556178806805E-1,
    2.01365400804030348374776537501E-1,
    4.47106157277725905176885569043E-2,
];

struct Rhs<'a> {
    geom: ChartGeom,
    potential: &'a Potential,
    has_potential: bool,
    t2: f64,
    n: usize,
}

impl Rhs<'_> {
    #[inline]
    fn eval(&self, s: &AugState, out: &mut AugState) {
        match self.geom {
            ChartGeom::Flat { n } => self.eval_flat(n, s, out),
            ChartGeom::Sphere { r2 } => self.eval_sphere(r2, s, out),
        }
    }

    #[inline]
    fn eval_flat(&self, n: usize, s: &AugState, out: &mut AugState) {
        let mut grad = [0.0; 2];
        let mut hess = [0.0; 4];
        let mut vval = 0.0;
        if self.has_potential {
            self.potential.gradient(&s.x[..n], &mut grad[..n]);
            self.potential.hessian(&s.x[..n], &mut hess[..n * n]);
            vval = self.potential.value(&s.x[..n]);
        }
        let mut kinetic = 0.0;
        for j in 0..n {
            out.x[j] = s.xi[j];
            out.xi[j] = -self.t2 * grad[j];
            kinetic += s.xi[j] * s.xi[j];
        }
        out.phi = 0.5 * kinetic - self.t2 * vval;
        // dM = A·M with A = [[0, I], [−t²V″, 0]].
        for k in 0..2 * n {
            for j in 0..n {
                out.m[j][k] = s.m[n + j][k];
            }
            for a in 0..n {
                let mut acc = 0.0;
                for b in 0..n {
                    acc -= self.t2 * hess[a * n + b] * s.m[b][k];
                }
                out.m[n + a][k] = acc;
            }
        }
    }

    #[inline]
    fn eval_sphere(&self, r2: f64, s: &AugState, out: &mut AugState) {
        let n = 2;
        let (st, ct) = s.x[0].sin_cos();
        let inv_s2 = 1.0 / (st * st);
        let a = 1.0 / r2;
        let u = inv_s2 / r2;
        let up = -2.0 * ct * inv_s2 / (r2 * st);
        let upp = (6.0 * ct * ct * inv_s2 * inv_s2 + 2.0 * inv_s2) / r2;

        let mut grad = [0.0; 2];
        let mut hess = [0.0; 4];
        let mut vval = 0.0;
        if self.has_potential {
            self.potential.gradient(&s.x, &mut grad);
            self.potential.hessian(&s.x, &mut hess);
            vval = self.potential.value(&s.x);
        }

        out.x[0] = a * s.xi[0];
        out.x[1] = u * s.xi[1];
        out.xi[0] = -(0.5 * up * s.xi[1] * s.xi[1] + self.t2 * grad[0]);
        out.xi[1] = -self.t2 * grad[1];
        out.phi = 0.5 * (a * s.xi[0] * s.xi[0] + u * s.xi[1] * s.xi[1]) - self.t2 * vval;

        // A rows for (x₀, x₁, ξ₀, ξ₁); only nonzero entries written out.
        let a10 = up * s.xi[1];
        let a20 = -(0.5 * upp * s.xi[1] * s.xi[1] + self.t2 * hess[0]);
        let a21 = -self.t2 * hess[1];
        let a23 = -up * s.xi[1];
        let a30 = -self.t2 * hess[2];
        let a31 = -self.t2 * hess[3];
        for k in 0..2 * n {
            out.m[0][k] = a * s.m[2][k];
            out.m[1][k] = a10 * s.m[0][k] + u * s.m[3][k];
            out.m[2][k] = a20 * s.m[0][k] + a21 * s.m[1][k] + a23 * s.m[3][k];
            out.m[3][k] = a30 * s.m[0][k] + a31 * s.m[1][k];
        }
    }
}

fn integrate(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    y0: &[f64],
    eta0: &[f64],
    steps: usize,
) -> Result<ScaledFlowResult> {
    integrate_opt(m, v, t, y0, eta0, steps, true)
}

fn integrate_opt(
    m: &ManifoldModel,
    v: &Potential,
    t: f64,
    y0: &[f64],
    eta0: &[f64],
    steps: usize,
    record: bool,
) -> Result<ScaledFlowResult> {
    let n = m.dim();
    let rhs = Rhs {
        geom: m.chart_geom(),
        potential: v,
        has_potential: !v.is_zero(),
        t2: t * t,
        n,
    };
    let _ = rhs.n;
    let sphere = matches!(rhs.geom, ChartGeom::Sphere { .. });
    let h = 1.0 / steps as f64;

    let mut state = AugState::zeros();
    state.x[..n].copy_from_slice(y0);
    state.xi[..n].copy_from_slice(eta0);
    for i in 0..2 * n {
        state.m[i][i] = 1.0;
    }

    let mut trajectory = Vec::with_capacity(if record { steps + 1 } else { 0 });
    if record {
        trajectory.push(PhasePoint {
            x: y0.to_vec(),
            xi: eta0.to_vec(),
        });
    }

    let mut k = [AugState::zeros(); 12];
    for step in 0..steps {
        rhs.eval(&state, &mut k[0]);
        for s in 1..12 {
            let mut stage = state;
            let row = RK8_A[s - 1];
            for (j, &aij) in row.iter().enumerate() {
                if aij != 0.0 {
                    stage.axpy(h * aij, &k[j]);
                }
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            rhs.eval(&stage, &mut tail[0]);
        }
        for (i, &bi) in RK8_B.iter().enumerate() {
            if bi != 0.0 {
                state.axpy(h * bi, &k[i]);
            }
        }
        if sphere
            && (state.x[0] < SPHERE_POLE_MARGIN
                || state.x[0] > std::f64::consts::PI - SPHERE_POLE_MARGIN)
        {
            return Err(Error::ChartEscape {
                s: (step + 1) as f64 * h,
            });
        }
        if record {
            trajectory.push(PhasePoint {
                x: state.x[..n].to_vec(),
                xi: state.xi[..n].to_vec(),
            });
        }
    }

    let variational = DMatrix::from_fn(2 * n, 2 * n, |i, j| state.m[i][j]);
    let jac_x_y = DMatrix::from_fn(n, n, |i, j| state.m[i][j]);
    let jac_x_eta = DMatrix::from_fn(n, n, |i, j| state.m[i][n + j]);
    let jac_xi_eta = DMatrix::from_fn(n, n, |i, j| state.m[n + i][n + j]);
    Ok(ScaledFlowResult {
        endpoint: PhasePoint {
            x: state.x[..n].to_vec(),
            xi: state.xi[..n].to_vec(),
        },
        jac_x_eta,
        jac_xi_eta,
        jac_x_y,
        variational,
        action_phi: state.phi,
        trajectory,
    })
}
