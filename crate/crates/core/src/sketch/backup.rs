//! Sketch Bellman backups: the sketch of `(B_r)# Σ pᵢ ηᵢ` computed from the
//! sketches of the `ηᵢ` alone, for the families where that is possible.

use super::moments::{pushforward_raw, raw_from_central_with_mean};
use super::{log_mean_exp, nearest_grid_index, SketchError, SketchSpec};

fn check_inputs(spec: &SketchSpec, next: &[(f64, Vec<f64>)]) -> Result<(), SketchError> {
    spec.validate()?;
    if next.is_empty() {
        return Err(SketchError::EmptyInput);
    }
    let total: f64 = next.iter().map(|c| c.0).sum();
    if next.iter().any(|c| !(c.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(SketchError::WeightsNotSimplex);
    }
    let dim = spec.dim();
    if let Some((_, v)) = next.iter().find(|(_, v)| v.len() != dim) {
        return Err(SketchError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok(())
}

fn mix_raw(next: &[(f64, Vec<f64>)], to_raw: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for (p, v) in next {
        let raw = to_raw(v);
        if acc.is_empty() {
            acc = vec![0.0; raw.len()];
        }
        for (a, x) in acc.iter_mut().zip(raw) {
            *a += p * x;
        }
    }
    acc
}

/// Raw `m₁..m_N` back to `(mean, μ₂..μ_N)`.
fn raw_to_mean_central(raw: &[f64]) -> Vec<f64> {
    let mu = raw[0];
    let mut out = vec![mu];
    for n in 2..=raw.len() {
        let m = |j: usize| if j == 0 { 1.0 } else { raw[j - 1] };
        out.push(
            (0..=n)
                .map(|j| super::moments::binomial(n, j) * m(j) * (-mu).powi((n - j) as i32))
                .sum(),
        );
    }
    out
}

/// Sketch of `(B_r)# Σ pᵢ ηᵢ` from `(pᵢ, ψ(ηᵢ))`, in the same coordinates
/// as [`compute_sketch`](super::compute_sketch).
///
/// Max and min only look at components with positive probability.
pub fn sketch_bellman_backup(
    spec: &SketchSpec,
    next: &[(f64, Vec<f64>)],
    r: f64,
) -> Result<Vec<f64>, SketchError> {
    check_inputs(spec, next)?;
    match spec {
        SketchSpec::Moments { .. } => {
            let mut raw = vec![1.0];
            raw.extend(mix_raw(next, |v| v.to_vec()));
            Ok(pushforward_raw(&raw, r)[1..].to_vec())
        }
        SketchSpec::MeanVariance
        | SketchSpec::CentralMoments {
            with_mean: true, ..
        } => {
            let mut raw = vec![1.0];
            raw.extend(mix_raw(next, |v| raw_from_central_with_mean(v[0], &v[1..])));
            Ok(raw_to_mean_central(&pushforward_raw(&raw, r)[1..]))
        }
        SketchSpec::Max => Ok(vec![
            r + next
                .iter()
                .filter(|c| c.0 > 0.0)
                .map(|c| c.1[0])
                .fold(f64::NEG_INFINITY, f64::max),
        ]),
        SketchSpec::Min => Ok(vec![
            r + next
                .iter()
                .filter(|c| c.0 > 0.0)
                .map(|c| c.1[0])
                .fold(f64::INFINITY, f64::min),
        ]),
        SketchSpec::ExpUtility { lambda } => Ok(vec![log_mean_exp(
            *lambda,
            next.iter().map(|(p, v)| (r + v[0], *p)),
        )]),
        SketchSpec::Quantile { .. }
        | SketchSpec::Median
        | SketchSpec::CentralMoments {
            with_mean: false, ..
        }
        | SketchSpec::Categorical { .. } => Err(SketchError::NotBellmanClosed(spec.name())),
    }
}

/// Candidate backup for the categorical sketch: mix the grid masses, shift
/// every grid point by `r`, and project back to the nearest grid point.
/// Agrees with the exact sketch only when shifts land on the grid.
pub fn categorical_projected_backup(
    grid: &[f64],
    next: &[(f64, Vec<f64>)],
    r: f64,
) -> Result<Vec<f64>, SketchError> {
    let spec = SketchSpec::Categorical {
        grid: grid.to_vec(),
    };
    check_inputs(&spec, next)?;
    let mixed = mix_raw(next, |v| v.to_vec());
    let mut out = vec![0.0; grid.len()];
    for (g, w) in grid.iter().zip(mixed) {
        out[nearest_grid_index(grid, g + r)] += w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::CategoricalDistribution;
    use crate::mdp::{exact_return_distribution, random_mdp, Policy};
    use crate::sketch::compute_sketch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments_identity_and_errors() {
        let v = vec![0.3, 0.2, 0.15];
        let spec = SketchSpec::Moments { n: 3 };
        assert_eq!(
            sketch_bellman_backup(&spec, &[(1.0, v.clone())], 0.0).unwrap(),
            v
        );
        assert_eq!(
            sketch_bellman_backup(
                &SketchSpec::Quantile { alpha: 0.5 },
                &[(1.0, vec![0.0])],
                0.0
            ),
            Err(SketchError::NotBellmanClosed("quantile(0.5)".into()))
        );
        assert_eq!(
            sketch_bellman_backup(&spec, &[(0.5, v.clone())], 0.0),
            Err(SketchError::WeightsNotSimplex)
        );
        assert_eq!(
            sketch_bellman_backup(&spec, &[(1.0, vec![0.1])], 0.0),
            Err(SketchError::DimensionMismatch {
                expected: 3,
                got: 1
            })
        );
    }

    #[test]
    fn max_two_terminals() {
        let (gamma, k) = (0.4, 4.0);
        let next = [(0.5, vec![gamma]), (0.5, vec![gamma + gamma / k])];
        assert_eq!(
            sketch_bellman_backup(&SketchSpec::Max, &next, 0.0).unwrap(),
            vec![gamma + gamma / k]
        );
        assert_eq!(
            sketch_bellman_backup(&SketchSpec::Min, &next, 0.25).unwrap(),
            vec![gamma + 0.25]
        );
        // Zero-probability components are ignored.
        let next = [(1.0, vec![0.1]), (0.0, vec![0.9])];
        assert_eq!(
            sketch_bellman_backup(&SketchSpec::Max, &next, 0.0).unwrap(),
            vec![0.1]
        );
    }

    fn random_components(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<CategoricalDistribution>) {
        let n = rng.random_range(1..4);
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let comps = (0..n)
            .map(|_| {
                let atoms: Vec<(f64, f64)> = (0..3)
                    .map(|_| (rng.random_range(0.0..2.0), 1.0 / 3.0))
                    .collect();
                CategoricalDistribution::from_pairs(atoms).unwrap()
            })
            .collect();
        (p, comps)
    }

    #[test]
    fn closed_families_match_exact_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let specs = [
            SketchSpec::Moments { n: 4 },
            SketchSpec::MeanVariance,
            SketchSpec::CentralMoments {
                n: 4,
                with_mean: true,
            },
            SketchSpec::Max,
            SketchSpec::Min,
            SketchSpec::ExpUtility { lambda: 0.7 },
            SketchSpec::ExpUtility { lambda: -1.3 },
        ];
        for _ in 0..200 {
            let (p, comps) = random_components(&mut rng);
            let r = rng.random_range(0.0..1.0);
            let truth = CategoricalDistribution::mixture(p.iter().copied().zip(&comps))
                .unwrap()
                .shift(r);
            for spec in &specs {
                let next: Vec<_> = p
                    .iter()
                    .zip(&comps)
                    .map(|(&w, d)| (w, compute_sketch(d, spec).unwrap()))
                    .collect();
                let got = sketch_bellman_backup(spec, &next, r).unwrap();
                let want = compute_sketch(&truth, spec).unwrap();
                for (a, b) in got.iter().zip(&want) {
                    assert!(
                        (a - b).abs() < 1e-10 * b.abs().max(1.0),
                        "{spec:?}: {got:?} vs {want:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn moment_backup_reproduces_exact_dp() {
        let spec = SketchSpec::Moments { n: 4 };
        for seed in 0..10 {
            let mdp = random_mdp(3, 2, 4, seed, 0.3).unwrap();
            let pi = Policy::constant(&mdp, (seed % 2) as usize);
            let exact = exact_return_distribution(&mdp, &pi).unwrap();
            let mut next: Vec<Vec<f64>> = vec![vec![0.0; 4]; 3];
            for h in (0..mdp.horizon()).rev() {
                let mut cur = Vec::new();
                for s in 0..3 {
                    for a in 0..2 {
                        let comps: Vec<_> = mdp
                            .transition(h, s, a)
                            .iter()
                            .copied()
                            .zip(next.iter().cloned())
                            .collect();
                        let got =
                            sketch_bellman_backup(&spec, &comps, mdp.reward(h, s, a)).unwrap();
                        let want = compute_sketch(&exact.action[h][s][a], &spec).unwrap();
                        for (x, y) in got.iter().zip(&want) {
                            assert!((x - y).abs() < 1e-9);
                        }
                        if a == pi.action(h, s) {
                            cur.push(got);
                        }
                    }
                }
                next = cur;
            }
        }
    }

    #[test]
    fn categorical_projection_misses_off_grid_shifts() {
        let grid = vec![0.0, 0.5, 1.0, 1.5];
        let spec = SketchSpec::Categorical { grid: grid.clone() };
        let d = CategoricalDistribution::new(vec![0.0, 0.3], vec![0.5, 0.5]).unwrap();
        let next = [(1.0, compute_sketch(&d, &spec).unwrap())];
        let got = categorical_projected_backup(&grid, &next, 0.3).unwrap();
        let want = compute_sketch(&d.shift(0.3), &spec).unwrap();
        assert_ne!(got, want);
        // On-grid shifts agree.
        let got = categorical_projected_backup(&grid, &next, 0.5).unwrap();
        assert_eq!(got, compute_sketch(&d.shift(0.5), &spec).unwrap());
    }
}
