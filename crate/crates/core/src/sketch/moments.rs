//! Raw-moment sketches and their calculus.
//!
//! Moments are stored raw, `m₀ = 1, m₁ = E[Z], …, m_N = E[Z^N]`. The
//! normalised view `ψₙ = mₙ / H^{n−1}` is only produced at the regression
//! boundary.

use super::SketchError;
use crate::distribution::CategoricalDistribution;
use nalgebra::{DMatrix, SymmetricEigen};

/// Relative tolerance for the Hankel positivity check.
pub const HANKEL_TOL: f64 = 1e-9;

/// Largest moment order for which the Hankel check runs.
const HANKEL_MAX_ORDER: usize = 16;

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Raw moments `m₀..m_N` of a law supported on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSketch {
    horizon: f64,
    raw: Vec<f64>,
}

impl MomentSketch {
    /// `raw` must start with `m₀ = 1`.
    pub fn new(horizon: f64, raw: Vec<f64>) -> Result<Self, SketchError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SketchError::BadSpec(format!(
                "horizon {horizon} must be positive"
            )));
        }
        match raw.first() {
            Some(&m0) if m0 == 1.0 => Ok(Self { horizon, raw }),
            Some(&m0) => Err(SketchError::BadZerothMoment(m0)),
            None => Err(SketchError::BadZerothMoment(f64::NAN)),
        }
    }

    /// Moments of `δ₀`.
    pub fn zero(n: usize, horizon: f64) -> Self {
        let mut raw = vec![0.0; n + 1];
        raw[0] = 1.0;
        Self { horizon, raw }
    }

    /// Exact moments `m₁..m_N` of `dist`, which must live on `[0, horizon]`.
    /// Also checks that the Hankel matrix of the sequence is positive
    /// semidefinite.
    pub fn from_distribution(
        dist: &CategoricalDistribution,
        n: usize,
        horizon: f64,
    ) -> Result<Self, SketchError> {
        for &x in dist.atoms() {
            if x < -1e-12 || x > horizon + 1e-12 {
                return Err(SketchError::OutOfSupport {
                    atom: x,
                    bound: horizon,
                });
            }
        }
        let mut raw = Vec::with_capacity(n + 1);
        raw.push(1.0);
        raw.extend((1..=n as u32).map(|k| dist.raw_moment(k)));
        let sketch = Self::new(horizon, raw)?;
        if n <= HANKEL_MAX_ORDER {
            let min_eig = sketch.hankel_min_eigenvalue();
            let scale = sketch.raw.iter().fold(1.0f64, |acc, m| acc.max(m.abs()));
            if min_eig < -HANKEL_TOL * scale {
                return Err(SketchError::InvalidMomentSequence(min_eig));
            }
        }
        Ok(sketch)
    }

    /// Smallest eigenvalue of the Hankel matrix `[m_{i+j}]` for
    /// `i, j ≤ ⌊N/2⌋`.
    pub fn hankel_min_eigenvalue(&self) -> f64 {
        let k = self.n() / 2 + 1;
        let h = DMatrix::from_fn(k, k, |i, j| self.raw[i + j]);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Highest moment order `N`.
    pub fn n(&self) -> usize {
        self.raw.len() - 1
    }

    /// `m₀..m_N`.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// `m₁..m_N`.
    pub fn moments(&self) -> &[f64] {
        &self.raw[1..]
    }

    pub fn mean(&self) -> f64 {
        self.raw.get(1).copied().unwrap_or(0.0)
    }
}

/// Moments of `r + Z`: `m'ₙ = Σ_{j≤n} C(n,j) m_j r^{n−j}`.
pub fn pushforward_moments(m: &MomentSketch, r: f64) -> MomentSketch {
    if r == 0.0 {
        return m.clone();
    }
    MomentSketch {
        horizon: m.horizon,
        raw: pushforward_raw(&m.raw, r),
    }
}

/// Binomial shift on a raw sequence `m₀..m_N` (with `m₀` included).
pub(crate) fn pushforward_raw(raw: &[f64], r: f64) -> Vec<f64> {
    (0..raw.len())
        .map(|n| {
            (0..=n)
                .map(|j| binomial(n, j) * raw[j] * r.powi((n - j) as i32))
                .sum()
        })
        .collect()
}

/// Moments of the mixture `Σ νᵢ ηᵢ`, which are the `ν`-weighted averages.
pub fn mixture_moments(components: &[(f64, MomentSketch)]) -> Result<MomentSketch, SketchError> {
    let (_, first) = components.first().ok_or(SketchError::EmptyInput)?;
    let total: f64 = components.iter().map(|c| c.0).sum();
    if components.iter().any(|c| !(c.0 >= 0.0))
        || (total - 1.0).abs() > 1e-12 * components.len() as f64
    {
        return Err(SketchError::WeightsNotSimplex);
    }
    if components
        .iter()
        .any(|(_, m)| m.n() != first.n() || m.horizon != first.horizon)
    {
        return Err(SketchError::MixedDimensions);
    }
    let mut raw = vec![0.0; first.n() + 1];
    raw[0] = 1.0;
    for (nu, m) in components {
        for (acc, x) in raw[1..].iter_mut().zip(&m.raw[1..]) {
            *acc += nu * x;
        }
    }
    Ok(MomentSketch {
        horizon: first.horizon,
        raw,
    })
}

/// `ψₙ = mₙ / H^{n−1}` for `n = 1..N`.
pub fn normalize_moments(m: &MomentSketch) -> Vec<f64> {
    (1..=m.n())
        .map(|n| m.raw[n] / m.horizon.powi(n as i32 - 1))
        .collect()
}

/// Inverse of [`normalize_moments`]. No validity check is made: regression
/// outputs need not be moment sequences.
pub fn denormalize_moments(psi: &[f64], horizon: f64) -> MomentSketch {
    let mut raw = Vec::with_capacity(psi.len() + 1);
    raw.push(1.0);
    raw.extend(
        psi.iter()
            .enumerate()
            .map(|(i, p)| p * horizon.powi(i as i32)),
    );
    MomentSketch { horizon, raw }
}

/// Central moments of orders `2..=N`; the first entry is the variance.
pub fn moments_to_central(m: &MomentSketch) -> Result<Vec<f64>, SketchError> {
    if m.n() < 2 {
        return Err(SketchError::NeedAtLeastTwoMoments);
    }
    let mu = m.mean();
    Ok((2..=m.n())
        .map(|n| {
            (0..=n)
                .map(|j| binomial(n, j) * m.raw[j] * (-mu).powi((n - j) as i32))
                .sum()
        })
        .collect())
}

/// Raw moments `m₁..m_N` from a mean and central moments of orders `2..=N`.
pub fn raw_from_central_with_mean(mean: f64, central: &[f64]) -> Vec<f64> {
    let n_max = central.len() + 1;
    // μ₀ = 1, μ₁ = 0, μ_k = central[k-2]
    let mu = |k: usize| match k {
        0 => 1.0,
        1 => 0.0,
        _ => central[k - 2],
    };
    (1..=n_max)
        .map(|n| {
            (0..=n)
                .map(|j| binomial(n, j) * mu(j) * mean.powi((n - j) as i32))
                .sum()
        })
        .collect()
}

/// Same as [`raw_from_central_with_mean`] but returns the whole sketch.
pub fn central_to_raw(mean: f64, central: &[f64], horizon: f64) -> MomentSketch {
    let mut raw = vec![1.0];
    raw.extend(raw_from_central_with_mean(mean, central));
    MomentSketch { horizon, raw }
}
