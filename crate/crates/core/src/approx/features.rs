//! Feature maps `φ(h, s, a) ∈ ℝ^d` for linear function classes.

use super::ApproxError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

/// How to build a [`FeatureMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Indicator of `(h, s, a)`, or of `(s, a)` when `shared`.
    TabularOnehot {
        #[serde(default)]
        shared: bool,
    },
    /// `√(2/d) cos(wᵢ·x + bᵢ)` on the scaled coordinates
    /// `x = (h/H, s/S, a/A)`, with Gaussian `wᵢ` of scale `bandwidth`.
    RandomFourier {
        seed: u64,
        d: usize,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    /// Explicit table with shape `[H][S][A][d]`.
    Lookup { table: Vec<Vec<Vec<Vec<f64>>>> },
}

fn default_bandwidth() -> f64 {
    3.0
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec::TabularOnehot { shared: false }
    }
}

/// Precomputed features for every `(h, s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    shape: (usize, usize, usize),
    table: Vec<f64>,
    bound: f64,
    onehot: bool,
}

impl FeatureMap {
    pub fn build(
        spec: &FeatureSpec,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    ) -> Result<Self, ApproxError> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(ApproxError::BadShape("empty MDP shape".into()));
        }
        let cells = horizon * n_states * n_actions;
        let (dim, table) = match spec {
            FeatureSpec::TabularOnehot { shared } => {
                let dim = if *shared { n_states * n_actions } else { cells };
                let mut table = vec![0.0; cells * dim];
                for cell in 0..cells {
                    let col = if *shared {
                        cell % (n_states * n_actions)
                    } else {
                        cell
                    };
                    table[cell * dim + col] = 1.0;
                }
                (dim, table)
            }
            FeatureSpec::RandomFourier { seed, d, bandwidth } => {
                if *d == 0 {
                    return Err(ApproxError::BadShape("random_fourier needs d >= 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
                let freqs: Vec<[f64; 3]> = (0..*d)
                    .map(|_| {
                        let w: [f64; 3] = std::array::from_fn(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            bandwidth * z
                        });
                        w
                    })
                    .collect();
                let phases: Vec<f64> = (0..*d).map(|_| phase.sample(&mut rng)).collect();
                let scale = (2.0 / *d as f64).sqrt();
                let mut table = Vec::with_capacity(cells * d);
                for h in 0..horizon {
                    for s in 0..n_states {
                        for a in 0..n_actions {
                            let x = [
                                h as f64 / horizon as f64,
                                s as f64 / n_states as f64,
                                a as f64 / n_actions as f64,
                            ];
                            for (w, b) in freqs.iter().zip(&phases) {
                                let arg: f64 =
                                    w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                                table.push(scale * arg.cos());
                            }
                        }
                    }
                }
                (*d, table)
            }
            FeatureSpec::Lookup { table } => {
                let d = table
                    .first()
                    .and_then(|t| t.first())
                    .and_then(|t| t.first())
                    .map(|v| v.len())
                    .unwrap_or(0);
                let shape_ok = d > 0
                    && table.len() == horizon
                    && table.iter().all(|per_h| {
                        per_h.len() == n_states
                            && per_h.iter().all(|per_s| {
                                per_s.len() == n_actions && per_s.iter().all(|v| v.len() == d)
                            })
                    });
                if !shape_ok {
                    return Err(ApproxError::BadShape(format!(
                        "feature table must have shape [{horizon}][{n_states}][{n_actions}][d]"
                    )));
                }
                let flat: Vec<f64> = table
                    .iter()
                    .flatten()
                    .flatten()
                    .flatten()
                    .copied()
                    .collect();
                if flat.iter().any(|x| !x.is_finite()) {
                    return Err(ApproxError::BadShape(
                        "feature table has non-finite entries".into(),
                    ));
                }
                (d, flat)
            }
        };
        let bound = table
            .chunks(dim)
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        Ok(Self {
            dim,
            shape: (horizon, n_states, n_actions),
            table,
            bound,
            onehot: matches!(spec, FeatureSpec::TabularOnehot { .. }),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(H, S, A)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    /// Largest `‖φ(h, s, a)‖₂` over the table.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_onehot(&self) -> bool {
        self.onehot
    }

    pub fn phi(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let (_, n_s, n_a) = self.shape;
        let cell = (h * n_s + s) * n_a + a;
        &self.table[cell * self.dim..(cell + 1) * self.dim]
    }
}
