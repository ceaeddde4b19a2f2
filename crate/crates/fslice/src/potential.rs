//! Smooth potentials V: M → ℝ with the two derivative orders the flow's
//! variational equations need.

use crate::error::{Error, Result};
use crate::manifold::ManifoldModel;

/// Potential catalog. Cosine potentials live on periodic charts; tabulated
/// values are trigonometrically interpolated (circle only) so that off-grid
/// evaluation stays smooth.
#[derive(Debug, Clone)]
pub enum Potential {
    Zero,
    Cosine {
        amplitude: f64,
        wavevector: Vec<f64>,
    },
    /// Fourier interpolant through uniformly spaced samples on a circle of
    /// circumference `period`.
    Tabulated {
        period: f64,
        /// cos/sin coefficients per harmonic: V(x) = a₀ + Σ aₖcos(kωx) + bₖsin(kωx).
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
    },
}

impl Potential {
    pub fn zero() -> Self {
        Potential::Zero
    }

    pub fn cosine(amplitude: f64, wavevector: Vec<f64>) -> Self {
        Potential::Cosine {
            amplitude,
            wavevector,
        }
    }

    /// Build the trigonometric interpolant of uniform samples
    /// values[j] = V(j·period/len).
    pub fn tabulated(period: f64, values: &[f64]) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::Config(
                "tabulated potential needs at least 4 samples".into(),
            ));
        }
        let n = values.len();
        let half = n / 2;
        let mut cos_coeffs = vec![0.0; half + 1];
        let mut sin_coeffs = vec![0.0; half + 1];
        for k in 0..=half {
            let mut cr = 0.0;
            let mut ci = 0.0;
            for (j, &v) in values.iter().enumerate() {
                let ang = 2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                cr += v * ang.cos();
                ci += v * ang.sin();
            }
            let scale = if k == 0 || (k == half && n % 2 == 0) {
                1.0 / n as f64
            } else {
                2.0 / n as f64
            };
            cos_coeffs[k] = scale * cr;
            sin_coeffs[k] = scale * ci;
        }
        Ok(Potential::Tabulated {
            period,
            cos_coeffs,
            sin_coeffs,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    /// Reject combinations the chart machinery cannot support smoothly.
    pub fn validate_for(&self, m: &ManifoldModel) -> Result<()> {
        match (self, m) {
            (Potential::Zero, _) => Ok(()),
            (Potential::Cosine { wavevector, .. }, ManifoldModel::RoundSphere { .. }) => {
                let _ = wavevector;
                Err(Error::Unsupported(
                    "cosine potentials on chart coordinates are not smooth on the sphere; \
                     use the zero potential"
                        .into(),
                ))
            }
            (Potential::Cosine { wavevector, .. }, _) => {
                if wavevector.len() != m.dim() {
                    return Err(Error::Config(format!(
                        "cosine wavevector has {} entries, manifold dimension is {}",
                        wavevector.len(),
                        m.dim()
                    )));
                }
                Ok(())
            }
            (Potential::Tabulated { .. }, ManifoldModel::Circle { .. }) => Ok(()),
            (Potential::Tabulated { .. }, _) => Err(Error::Unsupported(
                "tabulated potentials are supported on the circle only".into(),
            )),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Cosine {
                amplitude,
                wavevector,
            } => {
                let phase: f64 = wavevector.iter().zip(x).map(|(k, x)| k * x).sum();
                amplitude * phase.cos()
            }
            Potential::Tabulated {
                period,
                cos_coeffs,
                sin_coeffs,
            } => {
                let omega = 2.0 * std::f64::consts::PI / period;
                let mut v = 0.0;
                for (k, (a, b)) in cos_coeffs.iter().zip(sin_coeffs).enumerate() {
                    let ang = k as f64 * omega * x[0];
                    v += a * ang.cos() + b * ang.sin();
                }
                v
            }
        }
    }

    /// Gradient ∂V/∂xⱼ into `out[..n]`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Potential::Cosine {
                amplitude,
                wavevector,
            } => {
                let phase: f64 = wavevector.iter().zip(x).map(|(k, x)| k * x).sum();
                let s = -amplitude * phase.sin();
                for (o, k) in out.iter_mut().zip(wavevector) {
                    *o = s * k;
                }
            }
            Potential::Tabulated {
                period,
                cos_coeffs,
                sin_coeffs,
            } => {
                let omega = 2.0 * std::f64::consts::PI / period;
                let mut d = 0.0;
                for (k, (a, b)) in cos_coeffs.iter().zip(sin_coeffs).enumerate() {
                    let w = k as f64 * omega;
                    let ang = w * x[0];
                    d += -a * w * ang.sin() + b * w * ang.cos();
                }
                out[0] = d;
            }
        }
    }

    /// Hessian ∂²V/∂xⱼ∂xₖ into the row-major `out[..n*n]`.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Potential::Cosine {
                amplitude,
                wavevector,
            } => {
                let n = wavevector.len();
                let phase: f64 = wavevector.iter().zip(x).map(|(k, x)| k * x).sum();
                let c = -amplitude * phase.cos();
                for j in 0..n {
                    for k in 0..n {
                        out[j * n + k] = c * wavevector[j] * wavevector[k];
                    }
                }
            }
            Potential::Tabulated {
                period,
                cos_coeffs,
                sin_coeffs,
            } => {
                let omega = 2.0 * std::f64::consts::PI / period;
                let mut d2 = 0.0;
                for (k, (a, b)) in cos_coeffs.iter().zip(sin_coeffs).enumerate() {
                    let w = k as f64 * omega;
                    let ang = w * x[0];
                    d2 += -w * w * (a * ang.cos() + b * ang.sin());
                }
                out[0] = d2;
            }
        }
    }
}
