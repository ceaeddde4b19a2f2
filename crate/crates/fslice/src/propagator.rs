//! Discretized short-time slice operators and their compositions.
//!
//! The slice kernel on a quadrature grid is
//!
//! ```text
//! K[i][j] = (2πiħt)^{−n/2} χ(d(xᵢ, yⱼ)) a(t, xᵢ, yⱼ) e^{iS(t, xᵢ, yⱼ)/ħ} wⱼ
//! ```
//!
//! with the principal branch (2πiħt)^{−n/2} = (2πħt)^{−n/2} e^{−iπn/4} and the
//! amplitude a = t^{n/2}√D carrying the t^{−n/2} into the prefactor. Entries
//! with d ≥ r_out are exact zeros and no boundary value problem is solved for
//! them. Assembly parallelizes over kernel rows; for V ≡ 0 the free flow is
//! time reversible, so the (x, y) and (y, x) jets coincide and the lower
//! triangle is mirrored from the upper with a weight swap.
//!
//! Operator norms are largest singular values with respect to the weighted
//! inner product ⟨u, v⟩ = Σⱼ wⱼ uⱼ conj(vⱼ), estimated by power iteration on
//! the weighted adjoint composition.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::action::{jet_from_path, CutoffSpec};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::manifold::{ManifoldModel, QuadratureGrid};
use crate::potential::Potential;

pub type C64 = Complex64;

/// Power-iteration convergence: relative change below this, or 500 iterations.
pub const NORM_TOL: f64 = 1e-8;
pub const NORM_MAX_ITERS: usize = 500;

/// A complex field sampled on a quadrature grid.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub values: DVector<C64>,
    pub grid: Arc<QuadratureGrid>,
}

impl WaveFunction {
    pub fn new(values: DVector<C64>, grid: Arc<QuadratureGrid>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.id(),
                found: grid.id(),
            });
        }
        Ok(WaveFunction { values, grid })
    }

    pub fn zeros(grid: Arc<QuadratureGrid>) -> Self {
        WaveFunction {
            values: DVector::zeros(grid.len()),
            grid,
        }
    }

    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn(&[f64]) -> C64) -> Self {
        let values = DVector::from_iterator(grid.len(), grid.nodes.iter().map(|x| f(x)));
        WaveFunction { values, grid }
    }

    /// Weighted L² norm.
    pub fn l2_norm(&self) -> f64 {
        weighted_norm(&self.values, &self.grid)
    }

    /// Weighted inner product ⟨u, v⟩ = Σ wⱼ uⱼ conj(vⱼ).
    pub fn inner(&self, other: &WaveFunction) -> C64 {
        weighted_inner(&self.values, &other.values, &self.grid)
    }
}

pub fn weighted_norm(u: &DVector<C64>, grid: &QuadratureGrid) -> f64 {
    u.iter()
        .zip(&grid.weights)
        .map(|(v, w)| w * v.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn weighted_inner(u: &DVector<C64>, v: &DVector<C64>, grid: &QuadratureGrid) -> C64 {
    u.iter()
        .zip(v.iter())
        .zip(&grid.weights)
        .map(|((a, b), w)| w * a * b.conj())
        .sum()
}

/// Structured warnings surfaced by assembly and spectral projection; the
/// report layer turns them into CSV rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Grid spacing exceeds πħt/r_out: the kernel phase advances by more than
    /// π per cell at the cutoff edge and aliasing may distort measurements.
    PhaseSampling {
        t: f64,
        hbar: f64,
        spacing: f64,
        bound: f64,
    },
    /// Spectral projection dropped more than the threshold share of a vector.
    Truncation { residual: f64, context: String },
}

impl Warning {
    pub fn describe(&self) -> String {
        match self {
            Warning::PhaseSampling {
                t,
                hbar,
                spacing,
                bound,
            } => format!(
                "phase-sampling: spacing {spacing:.4e} exceeds bound {bound:.4e} at t = {t:.4e} hbar = {hbar}"
            ),
            Warning::Truncation { residual, context } => {
                format!("truncation: projection residual {residual:.4e} in {context}")
            }
        }
    }
}

/// Dense discretized kernel of E^χ_ħ(t) over a quadrature grid (row-major).
#[derive(Debug, Clone)]
pub struct SliceOperator {
    pub t: f64,
    pub hbar: f64,
    /// Manifold dimension the prefactor branch was taken for.
    pub dim: usize,
    kernel: Vec<C64>,
    pub grid: Arc<QuadratureGrid>,
    /// The fixed complex constant (2πiħt)^{−n/2}, recorded for audit.
    pub prefactor_branch: C64,
    pub warnings: Vec<Warning>,
}

impl SliceOperator {
    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn kernel_entry(&self, i: usize, j: usize) -> C64 {
        self.kernel[i * self.size() + j]
    }

    /// Matrix–vector product (the weights are folded into the kernel).
    pub fn apply(&self, u: &WaveFunction) -> Result<WaveFunction> {
        if u.grid.id() != self.grid.id() {
            return Err(Error::GridMismatch {
                expected: self.grid.id(),
                found: u.grid.id(),
            });
        }
        Ok(WaveFunction {
            values: self.apply_values(&u.values),
            grid: self.grid.clone(),
        })
    }

    fn apply_values(&self, u: &DVector<C64>) -> DVector<C64> {
        let n = self.size();
        let mut out = vec![C64::new(0.0, 0.0); n];
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &self.kernel[i * n..(i + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (k, uj) in row.iter().zip(u.iter()) {
                acc += k * uj;
            }
            *o = acc;
        });
        DVector::from_vec(out)
    }

    /// Adjoint with respect to the weighted inner product:
    /// (E*v)ⱼ = wⱼ⁻¹ Σᵢ conj(K[i][j]) wᵢ vᵢ.
    fn apply_adjoint_values(&self, v: &DVector<C64>) -> DVector<C64> {
        let n = self.size();
        let w = &self.grid.weights;
        let mut out = vec![C64::new(0.0, 0.0); n];
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                acc += self.kernel[i * n + j].conj() * (w[i] * v[i]);
            }
            *o = acc / w[j];
        });
        DVector::from_vec(out)
    }
}

/// Assemble the discretized slice kernel for duration `t`.
pub fn assemble_slice(
    m: &ManifoldModel,
    v: &Potential,
    grid: &Arc<QuadratureGrid>,
    t: f64,
    cutoff: &CutoffSpec,
    hbar: f64,
) -> Result<SliceOperator> {
    assemble_slice_impl(m, v, grid, t, cutoff, hbar, v.is_zero())
}

/// Assembly core; `mirror` exploits free-flow time reversibility (V ≡ 0 only).
pub(crate) fn assemble_slice_impl(
    m: &ManifoldModel,
    v: &Potential,
    grid: &Arc<QuadratureGrid>,
    t: f64,
    cutoff: &CutoffSpec,
    hbar: f64,
    mirror: bool,
) -> Result<SliceOperator> {
    if !(t > 0.0) {
        return Err(Error::Config(format!("slice duration must be positive, got {t}")));
    }
    if !(hbar > 0.0) {
        return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
    }
    cutoff.validate_for(m)?;
    v.validate_for(m)?;

    let n = m.dim();
    let size = grid.len();
    let prefactor_branch = prefactor(n, hbar, t);
    // Assembly momentum bound: slightly above the default 0.9×inj so that
    // O(t²) momentum perturbations at the cutoff edge cannot trip the guard.
    let mu = 0.95 * m.injectivity_radius();

    let mut warnings = Vec::new();
    let spacing = m.grid_spacing(grid);
    let bound = std::f64::consts::PI * hbar * t / cutoff.r_out;
    if spacing > bound {
        warnings.push(Warning::PhaseSampling {
            t,
            hbar,
            spacing,
            bound,
        });
    }

    let mut kernel = vec![C64::new(0.0, 0.0); size * size];
    kernel
        .par_chunks_mut(size)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<()> {
            let xi = &grid.nodes[i];
            let j_start = if mirror { i } else { 0 };
            for j in j_start..size {
                let yj = &grid.nodes[j];
                let d = m.geodesic_distance(xi, yj);
                if d >= cutoff.r_out {
                    continue;
                }
                let chi = cutoff.value(d);
                let path = dynamics::shoot_for_assembly(m, v, t, xi, yj, mu).map_err(|e| {
                    Error::Assembly {
                        row: i,
                        col: j,
                        source: Box::new(e),
                    }
                })?;
                let jet = jet_from_path(m, &path).map_err(|e| Error::Assembly {
                    row: i,
                    col: j,
                    source: Box::new(e),
                })?;
                let phase = C64::from_polar(1.0, jet.s_action / hbar);
                row[j] = prefactor_branch * chi * jet.amplitude_a * phase * grid.weights[j];
            }
            Ok(())
        })?;

    if mirror {
        // K[i][j] = K[j][i]·(wⱼ/wᵢ): S and a are symmetric under the swap for
        // the time-reversible free flow; only the quadrature weight differs.
        for i in 0..size {
            for j in 0..i {
                let upper = kernel[j * size + i];
                kernel[i * size + j] = upper * (grid.weights[j] / grid.weights[i]);
            }
        }
    }

    Ok(SliceOperator {
        t,
        hbar,
        dim: n,
        kernel,
        grid: grid.clone(),
        prefactor_branch,
        warnings,
    })
}

/// Principal branch (2πiħt)^{−n/2} = (2πħt)^{−n/2} e^{−iπn/4}.
pub fn prefactor(n: usize, hbar: f64, t: f64) -> C64 {
    let modulus = (2.0 * std::f64::consts::PI * hbar * t).powf(-(n as f64) / 2.0);
    C64::from_polar(modulus, -std::f64::consts::FRAC_PI_4 * n as f64)
}

/// A partition Δ = (t₁, …, t_L) of positive slice durations.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    slices: Vec<f64>,
}

impl Partition {
    pub fn new(slices: Vec<f64>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidPartition("partition must not be empty".into()));
        }
        if slices.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidPartition(format!(
                "all slices must be positive, got {slices:?}"
            )));
        }
        Ok(Partition { slices })
    }

    /// Uniform partition of `total` into `l` equal slices.
    pub fn uniform(total: f64, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidPartition("need at least one slice".into()));
        }
        Partition::new(vec![total / l as f64; l])
    }

    pub fn slices(&self) -> &[f64] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.slices.iter().sum()
    }

    /// Mesh |Δ| = max slice.
    pub fn mesh(&self) -> f64 {
        self.slices.iter().cloned().fold(0.0, f64::max)
    }
}

/// Slice-operator cache keyed by (t, ħ, grid id, cutoff) with exact float
/// equality; uniform partitions assemble one operator and reuse it.
#[derive(Default)]
pub struct SliceCache {
    map: HashMap<(u64, u64, u64, u64, u64), Arc<SliceOperator>>,
}

impl SliceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get_or_assemble(
        &mut self,
        m: &ManifoldModel,
        v: &Potential,
        grid: &Arc<QuadratureGrid>,
        t: f64,
        cutoff: &CutoffSpec,
        hbar: f64,
    ) -> Result<Arc<SliceOperator>> {
        let key = (
            t.to_bits(),
            hbar.to_bits(),
            grid.id(),
            cutoff.r_in.to_bits(),
            cutoff.r_out.to_bits(),
        );
        if let Some(op) = self.map.get(&key) {
            return Ok(op.clone());
        }
        let op = Arc::new(assemble_slice(m, v, grid, t, cutoff, hbar)?);
        self.map.insert(key, op.clone());
        Ok(op)
    }
}

/// Apply E(Δ) = E(t_L)⋯E(t₁) to `u0` (t₁ first).
pub fn compose_partition(
    m: &ManifoldModel,
    v: &Potential,
    grid: &Arc<QuadratureGrid>,
    partition: &Partition,
    cutoff: &CutoffSpec,
    hbar: f64,
    u0: &WaveFunction,
    cache: &mut SliceCache,
) -> Result<WaveFunction> {
    let mut u = u0.clone();
    for &tj in partition.slices() {
        let op = cache.get_or_assemble(m, v, grid, tj, cutoff, hbar)?;
        u = op.apply(&u)?;
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Linear maps on grid vectors and the weighted operator norm.
// ---------------------------------------------------------------------------

/// A linear map on grid vectors together with its weighted-L² adjoint.
pub trait GridOp: Send + Sync {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>>;
    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>>;
    fn grid(&self) -> &Arc<QuadratureGrid>;
}

impl GridOp for SliceOperator {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(self.apply_values(u))
    }

    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(self.apply_adjoint_values(u))
    }

    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }
}

/// Identity map, mostly a power-iteration control.
pub struct IdentityOp {
    pub grid: Arc<QuadratureGrid>,
}

impl GridOp for IdentityOp {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(u.clone())
    }

    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(u.clone())
    }

    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }
}

/// Left-to-right composition: stages[0] acts first.
pub struct ComposedOp {
    pub stages: Vec<Arc<dyn GridOp>>,
    pub grid: Arc<QuadratureGrid>,
}

impl GridOp for ComposedOp {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        let mut v = u.clone();
        for s in &self.stages {
            v = s.apply_vec(&v)?;
        }
        Ok(v)
    }

    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        let mut v = u.clone();
        for s in self.stages.iter().rev() {
            v = s.apply_adjoint_vec(&v)?;
        }
        Ok(v)
    }

    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }
}

/// Difference a − b.
pub struct DiffOp {
    pub a: Arc<dyn GridOp>,
    pub b: Arc<dyn GridOp>,
    pub grid: Arc<QuadratureGrid>,
}

impl GridOp for DiffOp {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(self.a.apply_vec(u)? - self.b.apply_vec(u)?)
    }

    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        Ok(self.a.apply_adjoint_vec(u)? - self.b.apply_adjoint_vec(u)?)
    }

    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }
}

/// Repeated application of one slice operator (uniform E(Δ)).
pub struct RepeatedOp {
    pub op: Arc<SliceOperator>,
    pub times: usize,
}

impl GridOp for RepeatedOp {
    fn apply_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        let mut v = u.clone();
        for _ in 0..self.times {
            v = self.op.apply_vec(&v)?;
        }
        Ok(v)
    }

    fn apply_adjoint_vec(&self, u: &DVector<C64>) -> Result<DVector<C64>> {
        let mut v = u.clone();
        for _ in 0..self.times {
            v = self.op.apply_adjoint_vec(&v)?;
        }
        Ok(v)
    }

    fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.op.grid
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `op` in the weighted L² geometry, by power
/// iteration on A*A from a seeded start vector.
pub fn operator_norm(op: &dyn GridOp, seed: u64) -> Result<NormEstimate> {
    let grid = op.grid().clone();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let nv = weighted_norm(&v, &grid);
    v /= C64::new(nv, 0.0);

    let mut sigma_prev = -1.0;
    for it in 1..=NORM_MAX_ITERS {
        let av = op.apply_vec(&v)?;
        let sigma = weighted_norm(&av, &grid);
        if sigma == 0.0 {
            return Ok(NormEstimate {
                norm: 0.0,
                iterations: it,
                converged: true,
            });
        }
        if (sigma - sigma_prev).abs() <= NORM_TOL * sigma.max(1e-300) {
            return Ok(NormEstimate {
                norm: sigma,
                iterations: it,
                converged: true,
            });
        }
        sigma_prev = sigma;
        let mut z = op.apply_adjoint_vec(&av)?;
        let nz = weighted_norm(&z, &grid);
        if nz == 0.0 {
            return Ok(NormEstimate {
                norm: sigma,
                iterations: it,
                converged: true,
            });
        }
        z /= C64::new(nz, 0.0);
        v = z;
    }
    Ok(NormEstimate {
        norm: sigma_prev,
        iterations: NORM_MAX_ITERS,
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Kernel dump: "FSLC" | version u32 | N u32 | n u32 | t f64 | hbar f64 |
// row-major interleaved re/im f64 pairs; little-endian throughout.
// ---------------------------------------------------------------------------

pub const KERNEL_DUMP_MAGIC: &[u8; 4] = b"FSLC";
pub const KERNEL_DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDumpHeader {
    pub version: u32,
    pub size: u32,
    pub dim: u32,
    pub t: f64,
    pub hbar: f64,
}

pub fn write_kernel_dump<W: Write>(op: &SliceOperator, w: &mut W) -> Result<()> {
    w.write_all(KERNEL_DUMP_MAGIC)?;
    w.write_all(&KERNEL_DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(op.size() as u32).to_le_bytes())?;
    w.write_all(&(op.dim as u32).to_le_bytes())?;
    w.write_all(&op.t.to_le_bytes())?;
    w.write_all(&op.hbar.to_le_bytes())?;
    for entry in &op.kernel {
        w.write_all(&entry.re.to_le_bytes())?;
        w.write_all(&entry.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_kernel_dump<R: Read>(r: &mut R) -> Result<(KernelDumpHeader, Vec<C64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != KERNEL_DUMP_MAGIC {
        return Err(Error::Config(format!(
            "bad kernel dump magic {magic:?}, expected {KERNEL_DUMP_MAGIC:?}"
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    r.read_exact(&mut u32buf)?;
    let size = u32::from_le_bytes(u32buf);
    r.read_exact(&mut u32buf)?;
    let dim = u32::from_le_bytes(u32buf);
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf)?;
    let t = f64::from_le_bytes(f64buf);
    r.read_exact(&mut f64buf)?;
    let hbar = f64::from_le_bytes(f64buf);
    let mut kernel = Vec::with_capacity((size as usize) * (size as usize));
    for _ in 0..(size as usize * size as usize) {
        r.read_exact(&mut f64buf)?;
        let re = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let im = f64::from_le_bytes(f64buf);
        kernel.push(C64::new(re, im));
    }
    Ok((
        KernelDumpHeader {
            version,
            size,
            dim,
            t,
            hbar,
        },
        kernel,
    ))
}
