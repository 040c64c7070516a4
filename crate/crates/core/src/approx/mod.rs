//! Vector-valued function classes, moment least-squares regression,
//! confidence regions with their width function, and eluder dimension.

mod enumerated;
mod features;
mod linear;

pub use enumerated::{
    eluder_dimension, epsilon_dependent, EluderMode, EnumeratedFunctionClass, RawEnumeratedClass,
    EXACT_ELUDER_MAX_POINTS,
};
pub use features::{FeatureMap, FeatureSpec};
pub use linear::{fit_linear, linear_width, GramFactor, LinearFunctionClass, RidgeSolver};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("Gram matrix is singular; use a positive ridge lambda")]
    SingularGram,
    #[error("function class has no members")]
    EmptyClass,
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("target component {value} outside [-{bound}, {bound}]")]
    TargetOutOfRange { value: f64, bound: f64 },
    #[error("exact eluder search over {points} points exceeds the limit of {limit}")]
    InstanceTooLarge { points: usize, limit: usize },
}

/// One regression example: features at `(h, s, a)`, a target vector of
/// normalised moments, and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub target: Vec<f64>,
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    n_outputs: usize,
    horizon: f64,
    rows: Vec<RegressionRow>,
}

impl RegressionDataset {
    pub fn new(n_outputs: usize, horizon: f64) -> Self {
        Self {
            n_outputs,
            horizon,
            rows: Vec::new(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rows(&self) -> &[RegressionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Targets must lie in `[−H−1, H+1]`.
    pub fn push(&mut self, row: RegressionRow) -> Result<(), ApproxError> {
        if row.target.len() != self.n_outputs {
            return Err(ApproxError::BadShape(format!(
                "target has {} components, expected {}",
                row.target.len(),
                self.n_outputs
            )));
        }
        let bound = self.horizon + 1.0;
        if let Some(&value) = row.target.iter().find(|x| !(x.abs() <= bound)) {
            return Err(ApproxError::TargetOutOfRange { value, bound });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Distinct `(h, s, a)` triples, as points of `class`.
    pub fn points(&self, class: &EnumeratedFunctionClass) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| class.point_index(r.h, r.s, r.a))
            .collect()
    }
}

/// `β = c_scale · N · H² · (log(T/δ) + log_cover)`.
pub fn beta_threshold(
    n: usize,
    horizon: f64,
    t: f64,
    delta: f64,
    log_cover: f64,
    c_scale: f64,
) -> f64 {
    c_scale * n as f64 * horizon * horizon * ((t / delta).ln() + log_cover)
}

/// Log covering number bound `N · d · log(1 + T · H · B_φ)` for a bounded
/// linear class.
pub fn linear_log_cover(n: usize, dim: usize, t: f64, horizon: f64, feature_bound: f64) -> f64 {
    n as f64 * dim as f64 * (1.0 + t * horizon * feature_bound).ln()
}

/// A function class the regression can range over.
#[derive(Debug, Clone)]
pub enum FunctionClass {
    Linear(FeatureMap),
    Enumerated(EnumeratedFunctionClass),
}

/// Least-squares solution `f̃`.
#[derive(Debug, Clone)]
pub enum FittedFunction {
    Linear {
        function: LinearFunctionClass,
        factor: GramFactor,
    },
    Enumerated {
        index: usize,
        loss: f64,
    },
}

impl FittedFunction {
    /// `f̃(h, s, a)`, clipped to `[−H, H]` for linear classes.
    pub fn predict(&self, class: &FunctionClass, h: usize, s: usize, a: usize) -> Vec<f64> {
        match (self, class) {
            (FittedFunction::Linear { function, .. }, FunctionClass::Linear(features)) => {
                function.eval(features.phi(h, s, a))
            }
            (FittedFunction::Enumerated { index, .. }, FunctionClass::Enumerated(c)) => {
                c.value(*index, h, s, a).to_vec()
            }
            _ => panic!("fitted function does not belong to this class"),
        }
    }
}

/// Least-squares fit over `class`: ridge for linear classes, exhaustive
/// search (lowest index on ties) for enumerated ones.
pub fn fit_moment_regression(
    data: &RegressionDataset,
    class: &FunctionClass,
    lambda: f64,
) -> Result<FittedFunction, ApproxError> {
    match class {
        FunctionClass::Linear(features) => {
            let (function, factor) = fit_linear(data, features, lambda)?;
            Ok(FittedFunction::Linear { function, factor })
        }
        FunctionClass::Enumerated(c) => {
            let (index, loss) = c.fit(data)?;
            Ok(FittedFunction::Enumerated { index, loss })
        }
    }
}

/// `{f : ‖f − f̃‖²_𝒵 ≤ β}`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub center: FittedFunction,
    pub beta: f64,
    /// Enumerated classes: members inside the region.
    pub members: Vec<usize>,
}

impl ConfidenceRegion {
    pub fn new(
        center: FittedFunction,
        class: &FunctionClass,
        data: &RegressionDataset,
        beta: f64,
    ) -> Self {
        let members = match (&center, class) {
            (FittedFunction::Enumerated { index, .. }, FunctionClass::Enumerated(c)) => {
                c.region_members(*index, &data.points(c), beta)
            }
            _ => Vec::new(),
        };
        Self {
            center,
            beta,
            members,
        }
    }
}

/// Width of output 1 at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Width {
    pub value: f64,
    /// Set when an enumerated region had no members; the width is then 0.
    pub empty_region: bool,
}

pub fn width_first_component(
    region: &ConfidenceRegion,
    class: &FunctionClass,
    h: usize,
    s: usize,
    a: usize,
) -> Width {
    match (&region.center, class) {
        (FittedFunction::Linear { factor, .. }, FunctionClass::Linear(features)) => Width {
            value: linear_width(factor, region.beta, features.phi(h, s, a)),
            empty_region: false,
        },
        (FittedFunction::Enumerated { .. }, FunctionClass::Enumerated(c)) => {
            let (value, empty_region) = c.width(&region.members, c.point_index(h, s, a));
            if empty_region {
                log::warn!("empty confidence region at ({h}, {s}, {a}); using width 0");
            }
            Width {
                value,
                empty_region,
            }
        }
        _ => panic!("confidence region does not belong to this class"),
    }
}
