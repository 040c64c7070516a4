//! Statistical functionals ("sketches") of return distributions.
//!
//! A [`SketchSpec`] names a finite vector of functionals; [`compute_sketch`]
//! evaluates it exactly on a [`CategoricalDistribution`]. The submodules
//! provide the raw-moment calculus, sketch Bellman backups for the families
//! that admit one, and sample combiners used to test unbiasedness.

mod backup;
mod combine;
mod moments;

pub use backup::{categorical_projected_backup, sketch_bellman_backup};
pub use combine::{
    mean_variance_combine, mean_variance_combine_plugin, u_statistic_estimate,
    u_statistic_over_indices, Combiner,
};
pub use moments::{
    central_to_raw, denormalize_moments, mixture_moments, moments_to_central, normalize_moments,
    pushforward_moments, raw_from_central_with_mean, MomentSketch, HANKEL_TOL,
};

use crate::distribution::{CategoricalDistribution, DistributionError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("bad sketch spec: {0}")]
    BadSpec(String),
    #[error("sketch `{0}` admits no exact Bellman backup")]
    NotBellmanClosed(String),
    #[error("mixture weights do not form a simplex")]
    WeightsNotSimplex,
    #[error("components disagree on moment count or horizon")]
    MixedDimensions,
    #[error("central moments need at least two raw moments")]
    NeedAtLeastTwoMoments,
    #[error("no samples supplied")]
    EmptyInput,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sketch value has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("atom {atom} outside [0, {bound}]")]
    OutOfSupport { atom: f64, bound: f64 },
    #[error("moment sequence fails the Hankel positivity check (min eigenvalue {0})")]
    InvalidMomentSequence(f64),
    #[error("combiner `{combiner}` does not apply to sketch `{sketch}`")]
    BadCombiner { combiner: String, sketch: String },
    #[error("zeroth moment must be exactly 1, got {0}")]
    BadZerothMoment(f64),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Which functionals a sketch collects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SketchSpec {
    /// Raw moments `E[Z], …, E[Z^N]`.
    Moments {
        #[serde(rename = "N")]
        n: usize,
    },
    /// Central moments of orders `2..=N`, optionally preceded by the mean.
    CentralMoments {
        #[serde(rename = "N")]
        n: usize,
        #[serde(default)]
        with_mean: bool,
    },
    /// `(mean, variance)`.
    MeanVariance,
    Quantile {
        alpha: f64,
    },
    Median,
    Max,
    Min,
    /// Mass moved to the nearest point of a sorted grid (ties go to the lower point).
    Categorical {
        grid: Vec<f64>,
    },
    /// `(1/λ) log E[exp(λ Z)]`.
    ExpUtility {
        lambda: f64,
    },
}

impl SketchSpec {
    pub fn validate(&self) -> Result<(), SketchError> {
        match self {
            SketchSpec::Moments { n } if *n == 0 => {
                Err(SketchError::BadSpec("moments need N >= 1".into()))
            }
            SketchSpec::CentralMoments { n, .. } if *n < 2 => {
                Err(SketchError::BadSpec("central moments need N >= 2".into()))
            }
            SketchSpec::Quantile { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => Err(
                SketchError::BadSpec(format!("quantile level {alpha} outside (0, 1)")),
            ),
            SketchSpec::Categorical { grid } => {
                if grid.is_empty() {
                    return Err(SketchError::BadSpec("categorical grid is empty".into()));
                }
                if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|x| !x.is_finite()) {
                    return Err(SketchError::BadSpec(
                        "categorical grid must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            SketchSpec::ExpUtility { lambda } if *lambda == 0.0 || !lambda.is_finite() => Err(
                SketchError::BadSpec("exp_utility needs a finite nonzero lambda".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Length of the sketch vector.
    pub fn dim(&self) -> usize {
        match self {
            SketchSpec::Moments { n } => *n,
            SketchSpec::CentralMoments { n, with_mean } => n - 1 + usize::from(*with_mean),
            SketchSpec::MeanVariance => 2,
            SketchSpec::Categorical { grid } => grid.len(),
            _ => 1,
        }
    }

    /// Short stable name used in reports.
    pub fn name(&self) -> String {
        match self {
            SketchSpec::Moments { n } => format!("moments({n})"),
            SketchSpec::CentralMoments {
                n,
                with_mean: false,
            } => format!("central_moments({n})"),
            SketchSpec::CentralMoments { n, with_mean: true } => {
                format!("mean_central_moments({n})")
            }
            SketchSpec::MeanVariance => "mean_variance".into(),
            SketchSpec::Quantile { alpha } => format!("quantile({alpha})"),
            SketchSpec::Median => "median".into(),
            SketchSpec::Max => "max".into(),
            SketchSpec::Min => "min".into(),
            SketchSpec::Categorical { grid } => format!("categorical({})", grid.len()),
            SketchSpec::ExpUtility { lambda } => format!("exp_utility({lambda})"),
        }
    }
}

/// Index of the grid point nearest to `x`; ties go to the lower point.
pub(crate) fn nearest_grid_index(grid: &[f64], x: f64) -> usize {
    let upper = grid.partition_point(|&g| g < x);
    if upper == 0 {
        return 0;
    }
    if upper == grid.len() {
        return grid.len() - 1;
    }
    if x - grid[upper - 1] <= grid[upper] - x {
        upper - 1
    } else {
        upper
    }
}

/// `(1/λ) log Σ wᵢ exp(λ xᵢ)`, shifted for stability.
pub(crate) fn log_mean_exp(lambda: f64, pairs: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let peak = pairs
        .clone()
        .filter(|(_, w)| *w > 0.0)
        .map(|(x, _)| lambda * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let acc: f64 = pairs.map(|(x, w)| w * (lambda * x - peak).exp()).sum();
    (peak + acc.ln()) / lambda
}

/// Evaluates the sketch exactly on a categorical distribution.
pub fn compute_sketch(
    dist: &CategoricalDistribution,
    spec: &SketchSpec,
) -> Result<Vec<f64>, SketchError> {
    spec.validate()?;
    Ok(match spec {
        SketchSpec::Moments { n } => (1..=*n as u32).map(|k| dist.raw_moment(k)).collect(),
        SketchSpec::CentralMoments { n, with_mean } => {
            let mean = dist.mean();
            let mut out = Vec::with_capacity(spec.dim());
            if *with_mean {
                out.push(mean);
            }
            for k in 2..=*n as i32 {
                out.push(dist.iter().map(|(x, w)| w * (x - mean).powi(k)).sum());
            }
            out
        }
        SketchSpec::MeanVariance => vec![dist.mean(), dist.variance()],
        SketchSpec::Quantile { alpha } => vec![dist.quantile(*alpha)],
        SketchSpec::Median => vec![dist.quantile(0.5)],
        SketchSpec::Max => vec![dist.max()],
        SketchSpec::Min => vec![dist.min()],
        SketchSpec::Categorical { grid } => {
            let mut mass = vec![0.0; grid.len()];
            for (x, w) in dist.iter() {
                mass[nearest_grid_index(grid, x)] += w;
            }
            mass
        }
        SketchSpec::ExpUtility { lambda } => vec![log_mean_exp(*lambda, dist.iter())],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat(atoms: &[f64], weights: &[f64]) -> CategoricalDistribution {
        CategoricalDistribution::new(atoms.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn dirac_moments() {
        let c = 1.7;
        let m = compute_sketch(
            &CategoricalDistribution::dirac(c),
            &SketchSpec::Moments { n: 3 },
        )
        .unwrap();
        assert_eq!(m, vec![c, c * c, c * c * c]);
    }

    #[test]
    fn two_point_mean_variance() {
        let mv = compute_sketch(&cat(&[0.0, 2.0], &[0.5, 0.5]), &SketchSpec::MeanVariance).unwrap();
        assert_eq!(mv, vec![1.0, 1.0]);
    }

    #[test]
    fn median_of_three_point_mixture_is_middle_atom() {
        for k in [0.1, 0.3, 0.7, 0.9] {
            let d = cat(&[0.0, k, 1.0], &[0.4, 0.2, 0.4]);
            assert_eq!(compute_sketch(&d, &SketchSpec::Median).unwrap(), vec![k]);
        }
    }

    #[test]
    fn max_min_and_categorical() {
        let d = cat(&[0.1, 0.45, 0.9], &[0.2, 0.3, 0.5]);
        assert_eq!(compute_sketch(&d, &SketchSpec::Max).unwrap(), vec![0.9]);
        assert_eq!(compute_sketch(&d, &SketchSpec::Min).unwrap(), vec![0.1]);
        let grid = SketchSpec::Categorical {
            grid: vec![0.0, 0.5, 1.0],
        };
        // 0.1 → 0.0, 0.45 → 0.5, 0.9 → 1.0
        assert_eq!(compute_sketch(&d, &grid).unwrap(), vec![0.2, 0.3, 0.5]);
        // Exactly halfway goes to the lower point.
        assert_eq!(nearest_grid_index(&[0.0, 0.5, 1.0], 0.25), 0);
        assert_eq!(nearest_grid_index(&[0.0, 0.5, 1.0], -3.0), 0);
        assert_eq!(nearest_grid_index(&[0.0, 0.5, 1.0], 3.0), 2);
    }

    #[test]
    fn exp_utility_matches_direct_formula() {
        let d = cat(&[0.0, 1.0], &[0.5, 0.5]);
        let got = compute_sketch(&d, &SketchSpec::ExpUtility { lambda: 2.0 }).unwrap()[0];
        let direct = (0.5 * (1.0f64 + 2.0f64.exp())).ln() / 2.0;
        assert!((got - direct).abs() < 1e-14);
        let neg = compute_sketch(&d, &SketchSpec::ExpUtility { lambda: -1.0 }).unwrap()[0];
        assert!((neg - (-(0.5 * (1.0 + (-1.0f64).exp())).ln())).abs() < 1e-14);
    }

    #[test]
    fn central_moments_layouts() {
        let d = cat(&[0.0, 2.0], &[0.5, 0.5]);
        let alone = compute_sketch(
            &d,
            &SketchSpec::CentralMoments {
                n: 4,
                with_mean: false,
            },
        )
        .unwrap();
        assert_eq!(alone, vec![1.0, 0.0, 1.0]);
        let with = compute_sketch(
            &d,
            &SketchSpec::CentralMoments {
                n: 3,
                with_mean: true,
            },
        )
        .unwrap();
        assert_eq!(with, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn bad_specs() {
        let d = CategoricalDistribution::dirac(0.0);
        for spec in [
            SketchSpec::Moments { n: 0 },
            SketchSpec::Quantile { alpha: 1.0 },
            SketchSpec::Categorical {
                grid: vec![1.0, 0.0],
            },
            SketchSpec::ExpUtility { lambda: 0.0 },
            SketchSpec::CentralMoments {
                n: 1,
                with_mean: true,
            },
        ] {
            assert!(
                matches!(compute_sketch(&d, &spec), Err(SketchError::BadSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn spec_json_layout() {
        let s: SketchSpec = serde_json::from_str(r#"{"kind":"moments","N":3}"#).unwrap();
        assert_eq!(s, SketchSpec::Moments { n: 3 });
        let q: SketchSpec = serde_json::from_str(r#"{"kind":"quantile","alpha":0.25}"#).unwrap();
        assert_eq!(q, SketchSpec::Quantile { alpha: 0.25 });
        let c: SketchSpec = serde_json::from_str(r#"{"kind":"central_moments","N":3}"#).unwrap();
        assert_eq!(
            c,
            SketchSpec::CentralMoments {
                n: 3,
                with_mean: false
            }
        );
    }

    fn arb_dist() -> impl Strategy<Value = CategoricalDistribution> {
        prop::collection::vec((0.0f64..5.0, 0.01f64..1.0), 1..6).prop_map(|pairs| {
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            CategoricalDistribution::from_pairs(pairs.into_iter().map(|(x, w)| (x, w / total)))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_level(d in arb_dist(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ql = compute_sketch(&d, &SketchSpec::Quantile { alpha: lo }).unwrap()[0];
            let qh = compute_sketch(&d, &SketchSpec::Quantile { alpha: hi }).unwrap()[0];
            prop_assert!(ql <= qh);
        }

        #[test]
        fn moments_are_linear_in_mixtures(d1 in arb_dist(), d2 in arb_dist(), nu in 0.0f64..1.0) {
            let spec = SketchSpec::Moments { n: 4 };
            let mix = CategoricalDistribution::mixture([(nu, &d1), (1.0 - nu, &d2)]).unwrap();
            let direct = compute_sketch(&mix, &spec).unwrap();
            let a = MomentSketch::from_distribution(&d1, 4, 5.0).unwrap();
            let b = MomentSketch::from_distribution(&d2, 4, 5.0).unwrap();
            let combined = mixture_moments(&[(nu, a), (1.0 - nu, b)]).unwrap();
            for (x, y) in direct.iter().zip(combined.moments()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn pushforward_matches_shifted_distribution(d in arb_dist(), r in 0.0f64..1.0) {
            let m = MomentSketch::from_distribution(&d, 4, 6.0).unwrap();
            let pushed = pushforward_moments(&m, r);
            let direct = compute_sketch(&d.shift(r), &SketchSpec::Moments { n: 4 }).unwrap();
            for (x, y) in direct.iter().zip(pushed.moments()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
