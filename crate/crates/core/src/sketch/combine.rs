//! Combiners: estimators of a mixture's sketch from the sketches of `k`
//! sampled components.

use super::moments::{binomial, raw_from_central_with_mean};
use super::{log_mean_exp, SketchError, SketchSpec};
use serde::{Deserialize, Serialize};

/// Estimator applied to `k` sampled sketch vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Component-wise sample average.
    Average,
    /// [`mean_variance_combine`].
    MeanVariance,
    /// [`mean_variance_combine_plugin`].
    MeanVariancePlugin,
    /// U-statistic for `(mean, central moments)` of the mixture.
    CentralMomentsU,
    /// Largest sampled value.
    SampleMax,
    /// Smallest sampled value.
    SampleMin,
    /// `(1/λ) log((1/k) Σ exp(λ uᵢ))`.
    LogMeanExp,
}

impl Combiner {
    /// The natural estimator for each sketch kind. For kinds without a known
    /// unbiased combiner this is the average, used as a null hypothesis.
    pub fn default_for(spec: &SketchSpec) -> Combiner {
        match spec {
            SketchSpec::MeanVariance => Combiner::MeanVariance,
            SketchSpec::CentralMoments {
                with_mean: true, ..
            } => Combiner::CentralMomentsU,
            SketchSpec::Max => Combiner::SampleMax,
            SketchSpec::Min => Combiner::SampleMin,
            SketchSpec::ExpUtility { .. } => Combiner::LogMeanExp,
            _ => Combiner::Average,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Combiner::Average => "average",
            Combiner::MeanVariance => "mean_variance",
            Combiner::MeanVariancePlugin => "mean_variance_plugin",
            Combiner::CentralMomentsU => "central_moments_u",
            Combiner::SampleMax => "sample_max",
            Combiner::SampleMin => "sample_min",
            Combiner::LogMeanExp => "log_mean_exp",
        }
    }

    /// Smallest sample count the combiner accepts for `spec`.
    pub fn min_samples(&self, spec: &SketchSpec) -> usize {
        match (self, spec) {
            (Combiner::CentralMomentsU, SketchSpec::CentralMoments { n, .. }) => *n,
            (Combiner::CentralMomentsU, SketchSpec::MeanVariance) => 2,
            _ => 1,
        }
    }

    pub fn check(&self, spec: &SketchSpec) -> Result<(), SketchError> {
        let ok = match self {
            Combiner::Average => true,
            Combiner::MeanVariance | Combiner::MeanVariancePlugin | Combiner::CentralMomentsU => {
                matches!(
                    spec,
                    SketchSpec::MeanVariance
                        | SketchSpec::CentralMoments {
                            with_mean: true,
                            ..
                        }
                ) && (*self == Combiner::CentralMomentsU || spec.dim() == 2)
            }
            Combiner::SampleMax => *spec == SketchSpec::Max,
            Combiner::SampleMin => *spec == SketchSpec::Min,
            Combiner::LogMeanExp => matches!(spec, SketchSpec::ExpUtility { .. }),
        };
        if ok {
            Ok(())
        } else {
            Err(SketchError::BadCombiner {
                combiner: self.name().into(),
                sketch: spec.name(),
            })
        }
    }

    /// Applies the combiner to sampled sketch vectors of `spec`.
    pub fn apply(&self, spec: &SketchSpec, samples: &[Vec<f64>]) -> Result<Vec<f64>, SketchError> {
        self.check(spec)?;
        if samples.is_empty() {
            return Err(SketchError::EmptyInput);
        }
        let dim = spec.dim();
        if let Some(bad) = samples.iter().find(|v| v.len() != dim) {
            return Err(SketchError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let need = self.min_samples(spec);
        if samples.len() < need {
            return Err(SketchError::TooFewSamples {
                need,
                got: samples.len(),
            });
        }
        let k = samples.len() as f64;
        Ok(match self {
            Combiner::Average => (0..dim)
                .map(|i| samples.iter().map(|v| v[i]).sum::<f64>() / k)
                .collect(),
            Combiner::MeanVariance | Combiner::MeanVariancePlugin => {
                let pairs: Vec<(f64, f64)> = samples.iter().map(|v| (v[0], v[1])).collect();
                let (m, var) = if *self == Combiner::MeanVariance {
                    mean_variance_combine(&pairs)?
                } else {
                    mean_variance_combine_plugin(&pairs)?
                };
                vec![m, var]
            }
            Combiner::CentralMomentsU => central_moments_u(samples)?,
            Combiner::SampleMax => vec![samples
                .iter()
                .map(|v| v[0])
                .fold(f64::NEG_INFINITY, f64::max)],
            Combiner::SampleMin => vec![samples.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min)],
            Combiner::LogMeanExp => {
                let SketchSpec::ExpUtility { lambda } = spec else {
                    unreachable!()
                };
                vec![log_mean_exp(
                    *lambda,
                    samples.iter().map(|v| (v[0], 1.0 / k)),
                )]
            }
        })
    }
}

/// Unbiased `(mean, variance)` of a mixture from `k` sampled component
/// `(mean, variance)` pairs: `σ̂² = (1/k)Σσᵢ² + (1/(k−1))Σ(μᵢ − μ̂)²`.
/// With a single sample the sample itself is returned.
pub fn mean_variance_combine(samples: &[(f64, f64)]) -> Result<(f64, f64), SketchError> {
    if samples.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    let k = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let within = samples.iter().map(|s| s.1).sum::<f64>() / k;
    if samples.len() == 1 {
        return Ok((mean, within));
    }
    let between = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((mean, within + between))
}

/// Plug-in form `σ̂² = (1/k)Σ[(μᵢ − μ̂)² + σᵢ²]`. Its expectation falls short
/// of the mixture variance by `Var(μ)/k`.
pub fn mean_variance_combine_plugin(samples: &[(f64, f64)]) -> Result<(f64, f64), SketchError> {
    if samples.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    let k = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let var = samples
        .iter()
        .map(|s| (s.0 - mean).powi(2) + s.1)
        .sum::<f64>()
        / k;
    Ok((mean, var))
}

/// Average of `f` over all ordered `k`-tuples of distinct indices in `0..n`.
pub fn u_statistic_over_indices(
    n: usize,
    k: usize,
    mut f: impl FnMut(&[usize]) -> f64,
) -> Result<f64, SketchError> {
    if k == 0 {
        return Err(SketchError::TooFewSamples { need: 1, got: 0 });
    }
    if n < k {
        return Err(SketchError::TooFewSamples { need: k, got: n });
    }
    let mut tuple = Vec::with_capacity(k);
    let mut used = vec![false; n];
    let mut total = 0.0;
    let mut count = 0u64;
    fn rec(
        n: usize,
        k: usize,
        tuple: &mut Vec<usize>,
        used: &mut [bool],
        f: &mut dyn FnMut(&[usize]) -> f64,
        total: &mut f64,
        count: &mut u64,
    ) {
        if tuple.len() == k {
            *total += f(tuple);
            *count += 1;
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                tuple.push(i);
                rec(n, k, tuple, used, f, total, count);
                tuple.pop();
                used[i] = false;
            }
        }
    }
    rec(n, k, &mut tuple, &mut used, &mut f, &mut total, &mut count);
    Ok(total / count as f64)
}

/// U-statistic of a degree-`k` kernel over scalar samples.
pub fn u_statistic_estimate(
    kernel: impl Fn(&[f64]) -> f64,
    k: usize,
    samples: &[f64],
) -> Result<f64, SketchError> {
    let mut buf = vec![0.0; k];
    u_statistic_over_indices(samples.len(), k, |idx| {
        for (b, &i) in buf.iter_mut().zip(idx) {
            *b = samples[i];
        }
        kernel(&buf)
    })
}

/// Unbiased `(mean, μ₂, …, μ_N)` of a mixture from sampled components of the
/// same layout. Each product `M_j M₁^{n−j}` of mixture raw moments is
/// estimated over distinct sample indices.
fn central_moments_u(samples: &[Vec<f64>]) -> Result<Vec<f64>, SketchError> {
    let n_max = samples[0].len();
    // raw[i][j] = E[Z^j] for sample i, j = 0..=N.
    let raw: Vec<Vec<f64>> = samples
        .iter()
        .map(|v| {
            let mut r = vec![1.0];
            r.extend(raw_from_central_with_mean(v[0], &v[1..]));
            r
        })
        .collect();
    let k = samples.len();
    let mean = raw.iter().map(|r| r[1]).sum::<f64>() / k as f64;
    let mut out = vec![mean];
    for n in 2..=n_max {
        let mut mu = 0.0;
        for j in 0..=n {
            let coef = binomial(n, j) * if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
            let term = if j == 0 {
                u_statistic_over_indices(k, n, |idx| idx.iter().map(|&i| raw[i][1]).product())?
            } else {
                u_statistic_over_indices(k, n - j + 1, |idx| {
                    raw[idx[0]][j] * idx[1..].iter().map(|&i| raw[i][1]).product::<f64>()
                })?
            };
            mu += coef * term;
        }
        out.push(mu);
    }
    Ok(out)
}
