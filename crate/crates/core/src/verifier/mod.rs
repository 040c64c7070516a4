//! Empirical classification of sketches by mixture-consistency, Bellman
//! closedness and Bellman unbiasedness.
//!
//! Each check returns a small serialisable record; [`classify_functionals`]
//! runs all three over a fixed suite and assigns every sketch to one of four
//! regions.

mod closedness;
mod mixture;
mod unbiased;

pub use closedness::{
    backup_error, check_bellman_closedness, check_bellman_closedness_with_tol, random_instances,
    ClosednessCheck, CLOSEDNESS_TOL,
};
pub use mixture::{
    central_moments_witness, check_mixture_consistency, median_witness, quantile_witness,
    search_mixture_witness, MixtureCheck, WitnessPair, POSITIVE_TRIALS, WITNESS_GAP,
    WITNESS_MATCH_TOL,
};
pub use unbiased::{check_bellman_unbiasedness, BuFixture, UnbiasednessCheck, Z_THRESHOLD};

use crate::mdp::MdpError;
use crate::sketch::{Combiner, SketchError, SketchSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Expected region for every sketch in [`default_suite`].
pub const GOLDEN_REGIONS: &str = include_str!("golden_regions.json");

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

/// Where a sketch lands given its closedness and unbiasedness verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Bellman unbiased and Bellman closed.
    #[serde(rename = "BU_and_BC")]
    UnbiasedAndClosed,
    /// Closed but no unbiased combiner found (max, min).
    #[serde(rename = "A_BC_not_BU")]
    ClosedOnly,
    /// Unbiased but not closed (categorical).
    #[serde(rename = "BU_not_BC")]
    UnbiasedOnly,
    /// Neither (median, quantiles).
    #[serde(rename = "B_neither")]
    Neither,
}

impl Region {
    pub fn from_flags(unbiased: bool, closed: bool) -> Self {
        match (unbiased, closed) {
            (true, true) => Region::UnbiasedAndClosed,
            (false, true) => Region::ClosedOnly,
            (true, false) => Region::UnbiasedOnly,
            (false, false) => Region::Neither,
        }
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationConfig {
    pub seed: u64,
    /// Monte Carlo repetitions for the unbiasedness test.
    pub trials: usize,
    /// Next states sampled per repetition.
    pub k: usize,
    /// Random MDPs for the closedness test.
    pub closedness_instances: usize,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            trials: 100_000,
            k: 3,
            closedness_instances: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchClassification {
    pub sketch: String,
    pub spec: SketchSpec,
    pub mixture_consistent: MixtureCheck,
    pub bellman_closed: ClosednessCheck,
    pub bellman_unbiased: UnbiasednessCheck,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub sketch: String,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub config: ClassificationConfig,
    pub entries: Vec<SketchClassification>,
    /// Sketches reported closed yet not mixture-consistent. A closed sketch
    /// is always mixture-consistent, so this must stay empty.
    pub closed_but_inconsistent: Vec<String>,
    pub matches_golden: bool,
}

impl ClassificationReport {
    pub fn region_table(&self) -> Vec<RegionRow> {
        self.entries
            .iter()
            .map(|e| RegionRow {
                sketch: e.sketch.clone(),
                region: e.region,
            })
            .collect()
    }
}

/// Pretty JSON of a region table, the form stored in [`GOLDEN_REGIONS`].
pub fn region_table_json(rows: &[RegionRow]) -> String {
    serde_json::to_string_pretty(rows).expect("plain data") + "\n"
}

/// The sketches classified by [`classify_functionals`].
pub fn default_suite() -> Vec<SketchSpec> {
    vec![
        SketchSpec::Moments { n: 3 },
        SketchSpec::CentralMoments {
            n: 3,
            with_mean: true,
        },
        SketchSpec::MeanVariance,
        SketchSpec::Quantile { alpha: 0.25 },
        SketchSpec::Median,
        SketchSpec::Max,
        SketchSpec::Min,
        SketchSpec::Categorical {
            grid: (0..=12).map(|i| i as f64 * 0.25).collect(),
        },
        SketchSpec::ExpUtility { lambda: 1.0 },
        SketchSpec::CentralMoments {
            n: 3,
            with_mean: false,
        },
    ]
}

/// Runs the three checks on one sketch.
pub fn classify_sketch(
    spec: &SketchSpec,
    cfg: &ClassificationConfig,
) -> Result<SketchClassification, VerifierError> {
    let mixture_consistent = check_mixture_consistency(spec)?;
    let instances = random_instances(cfg.closedness_instances, 3, 2, 3, cfg.seed);
    let bellman_closed = check_bellman_closedness(spec, &instances)?;
    let combiner = Combiner::default_for(spec);
    let k = cfg.k.max(combiner.min_samples(spec));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb1a5);
    let bellman_unbiased = check_bellman_unbiasedness(
        spec,
        combiner,
        &BuFixture::standard(),
        k,
        cfg.trials,
        &mut rng,
    )?;
    let region = Region::from_flags(
        bellman_unbiased.verdict == Verdict::Yes,
        bellman_closed.verdict == Verdict::Yes,
    );
    Ok(SketchClassification {
        sketch: spec.name(),
        spec: spec.clone(),
        mixture_consistent,
        bellman_closed,
        bellman_unbiased,
        region,
    })
}

/// Classifies every sketch in [`default_suite`] and compares the region
/// table with [`GOLDEN_REGIONS`].
pub fn classify_functionals(
    cfg: &ClassificationConfig,
) -> Result<ClassificationReport, VerifierError> {
    let entries = default_suite()
        .iter()
        .map(|spec| classify_sketch(spec, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let closed_but_inconsistent = entries
        .iter()
        .filter(|e| {
            e.bellman_closed.verdict == Verdict::Yes && e.mixture_consistent.verdict == Verdict::No
        })
        .map(|e| e.sketch.clone())
        .collect();
    let mut report = ClassificationReport {
        config: cfg.clone(),
        entries,
        closed_but_inconsistent,
        matches_golden: false,
    };
    report.matches_golden = region_table_json(&report.region_table()) == GOLDEN_REGIONS;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_from_flags() {
        assert_eq!(Region::from_flags(true, true), Region::UnbiasedAndClosed);
        assert_eq!(Region::from_flags(false, true), Region::ClosedOnly);
        assert_eq!(Region::from_flags(true, false), Region::UnbiasedOnly);
        assert_eq!(Region::from_flags(false, false), Region::Neither);
        assert_eq!(
            serde_json::to_string(&Region::ClosedOnly).unwrap(),
            "\"A_BC_not_BU\""
        );
    }

    #[test]
    fn golden_table_parses_and_covers_suite() {
        let rows: Vec<RegionRow> = serde_json::from_str(GOLDEN_REGIONS).unwrap();
        let names: Vec<String> = default_suite().iter().map(|s| s.name()).collect();
        assert_eq!(
            rows.iter().map(|r| r.sketch.clone()).collect::<Vec<_>>(),
            names
        );
        assert_eq!(region_table_json(&rows), GOLDEN_REGIONS);
    }

    #[test]
    fn small_classification_run() {
        let cfg = ClassificationConfig {
            trials: 20_000,
            closedness_instances: 3,
            ..Default::default()
        };
        let report = classify_functionals(&cfg).unwrap();
        assert!(report.closed_but_inconsistent.is_empty());
        assert!(report.matches_golden, "{:#?}", report.region_table());
    }
}
