//! Ridge regression for linear vector-valued classes and the resulting
//! ellipsoidal confidence regions.

use super::{ApproxError, FeatureMap, RegressionDataset};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Accumulates the regularised Gram matrix `Λ = λI + Σ wᵢ φᵢφᵢᵀ` and the
/// right-hand sides `Σ wᵢ φᵢ yᵢᵀ` for `N` outputs.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    lambda: f64,
    gram: DMatrix<f64>,
    rhs: DMatrix<f64>,
}

impl RidgeSolver {
    pub fn new(dim: usize, n_outputs: usize, lambda: f64) -> Self {
        Self {
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            rhs: DMatrix::zeros(dim, n_outputs),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Rank-one update of the Gram matrix only.
    pub fn add_feature(&mut self, phi: &[f64], weight: f64) {
        let v = DVector::from_column_slice(phi);
        self.gram.ger(weight, &v, &v, 1.0);
    }

    /// Adds `weight · φ yᵀ` to the right-hand sides only.
    pub fn add_target(&mut self, phi: &[f64], target: &[f64], weight: f64) {
        for (j, y) in target.iter().enumerate() {
            for (i, p) in phi.iter().enumerate() {
                if *p != 0.0 {
                    self.rhs[(i, j)] += weight * p * y;
                }
            }
        }
    }

    pub fn add_row(&mut self, phi: &[f64], target: &[f64], weight: f64) {
        self.add_feature(phi, weight);
        self.add_target(phi, target, weight);
    }

    pub fn clear_targets(&mut self) {
        self.rhs.fill(0.0);
    }

    pub fn factor(&self) -> Result<GramFactor, ApproxError> {
        let chol = Cholesky::new(self.gram.clone()).ok_or(ApproxError::SingularGram)?;
        Ok(GramFactor { chol })
    }

    /// Weights `W` of shape `N × d`, one factorisation for all outputs.
    pub fn solve(&self, factor: &GramFactor) -> DMatrix<f64> {
        factor.chol.solve(&self.rhs).transpose()
    }
}

/// Cholesky factor of `Λ`.
#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
}

impl GramFactor {
    /// `‖φ‖_{Λ⁻¹}`.
    pub fn inverse_norm(&self, phi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(phi);
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&v)
            .expect("Cholesky factor has a positive diagonal");
        z.norm()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// `f^{(n)}(h, s, a) = ⟨W_n, φ(h, s, a)⟩`, clipped to `[−H, H]` on read.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctionClass {
    pub weights: DMatrix<f64>,
    pub horizon: f64,
}

impl LinearFunctionClass {
    pub fn zero(n_outputs: usize, dim: usize, horizon: f64) -> Self {
        Self {
            weights: DMatrix::zeros(n_outputs, dim),
            horizon,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Unclipped `⟨W_n, φ⟩`.
    pub fn eval_raw(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.weights.nrows())
            .map(|n| {
                self.weights
                    .row(n)
                    .iter()
                    .zip(phi)
                    .map(|(w, p)| w * p)
                    .sum()
            })
            .collect()
    }

    pub fn eval(&self, phi: &[f64]) -> Vec<f64> {
        self.eval_raw(phi)
            .into_iter()
            .map(|x| x.clamp(-self.horizon, self.horizon))
            .collect()
    }
}

/// Ridge fit of every output on `data`.
pub fn fit_linear(
    data: &RegressionDataset,
    features: &FeatureMap,
    lambda: f64,
) -> Result<(LinearFunctionClass, GramFactor), ApproxError> {
    if lambda < 0.0 {
        return Err(ApproxError::BadParams(format!(
            "ridge lambda {lambda} is negative"
        )));
    }
    let mut solver = RidgeSolver::new(features.dim(), data.n_outputs(), lambda);
    for row in data.rows() {
        solver.add_row(features.phi(row.h, row.s, row.a), &row.target, 1.0);
    }
    let factor = solver.factor()?;
    let weights = solver.solve(&factor);
    Ok((
        LinearFunctionClass {
            weights,
            horizon: data.horizon(),
        },
        factor,
    ))
}

/// Width of output 1 over `{W : Σ_n ‖W_n − W̃_n‖²_Λ ≤ β}`: the whole budget
/// goes to output 1, giving `2√β ‖φ‖_{Λ⁻¹}`.
pub fn linear_width(factor: &GramFactor, beta: f64, phi: &[f64]) -> f64 {
    2.0 * beta.max(0.0).sqrt() * factor.inverse_norm(phi)
}
