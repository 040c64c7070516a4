//! Finite function classes given as explicit tables. Fits, widths and
//! eluder dimensions are computed exactly by enumeration.

use super::{ApproxError, RegressionDataset};
use serde::{Deserialize, Serialize};

/// Largest number of `(h, s, a)` points the exact eluder search accepts.
pub const EXACT_ELUDER_MAX_POINTS: usize = 8;

/// Members `f_i` with values `f_i(h, s, a) ∈ ℝ^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedFunctionClass {
    shape: (usize, usize, usize, usize),
    /// Per member, flat `[H][S][A][N]`.
    tables: Vec<Vec<f64>>,
}

/// JSON layout: a list of member tables, each `[H][S][A][N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RawEnumeratedClass(pub Vec<Vec<Vec<Vec<Vec<f64>>>>>);

impl TryFrom<RawEnumeratedClass> for EnumeratedFunctionClass {
    type Error = ApproxError;

    fn try_from(raw: RawEnumeratedClass) -> Result<Self, ApproxError> {
        let first = raw.0.first().ok_or(ApproxError::EmptyClass)?;
        let h = first.len();
        let s = first.first().map_or(0, |t| t.len());
        let a = first.first().and_then(|t| t.first()).map_or(0, |t| t.len());
        let n = first
            .first()
            .and_then(|t| t.first())
            .and_then(|t| t.first())
            .map_or(0, |t| t.len());
        let shape = (h, s, a, n);
        let tables = raw
            .0
            .into_iter()
            .map(|table| {
                let flat: Vec<f64> = table
                    .iter()
                    .flatten()
                    .flatten()
                    .flatten()
                    .copied()
                    .collect();
                let ok = table.len() == h
                    && table.iter().all(|t| {
                        t.len() == s
                            && t.iter()
                                .all(|u| u.len() == a && u.iter().all(|v| v.len() == n))
                    });
                if ok && flat.iter().all(|x| x.is_finite()) {
                    Ok(flat)
                } else {
                    Err(ApproxError::BadShape(format!(
                        "every member must have shape [{h}][{s}][{a}][{n}]"
                    )))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(shape, tables)
    }
}

impl EnumeratedFunctionClass {
    /// `shape = (H, S, A, N)`; each table is flat `[H][S][A][N]`.
    pub fn new(
        shape: (usize, usize, usize, usize),
        tables: Vec<Vec<f64>>,
    ) -> Result<Self, ApproxError> {
        let (h, s, a, n) = shape;
        if tables.is_empty() {
            return Err(ApproxError::EmptyClass);
        }
        if h * s * a * n == 0 || tables.iter().any(|t| t.len() != h * s * a * n) {
            return Err(ApproxError::BadShape(format!(
                "every member must have {h}·{s}·{a}·{n} entries"
            )));
        }
        Ok(Self { shape, tables })
    }

    pub fn from_json(text: &str) -> Result<Self, ApproxError> {
        let raw: RawEnumeratedClass =
            serde_json::from_str(text).map_err(|e| ApproxError::BadShape(e.to_string()))?;
        raw.try_into()
    }

    /// Class with one output whose members are the given `H = 1` tables
    /// `f(s, a)`.
    pub fn scalar_bandit(
        n_states: usize,
        n_actions: usize,
        members: Vec<Vec<f64>>,
    ) -> Result<Self, ApproxError> {
        Self::new((1, n_states, n_actions, 1), members)
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// `(H, S, A, N)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        self.shape
    }

    /// Number of `(h, s, a)` points.
    pub fn n_points(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn point_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.shape.1 + s) * self.shape.2 + a
    }

    pub fn value_at(&self, member: usize, point: usize) -> &[f64] {
        let n = self.shape.3;
        &self.tables[member][point * n..(point + 1) * n]
    }

    pub fn value(&self, member: usize, h: usize, s: usize, a: usize) -> &[f64] {
        self.value_at(member, self.point_index(h, s, a))
    }

    /// `‖f_i − f_j‖²_𝒵 = Σ_{z∈𝒵} Σ_n (f_i^{(n)}(z) − f_j^{(n)}(z))²`.
    pub fn sq_distance(&self, i: usize, j: usize, points: &[usize]) -> f64 {
        points
            .iter()
            .map(|&p| {
                self.value_at(i, p)
                    .iter()
                    .zip(self.value_at(j, p))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Member minimising the squared loss on `data`; ties go to the lowest
    /// index. Returns `(index, loss)`.
    pub fn fit(&self, data: &RegressionDataset) -> Result<(usize, f64), ApproxError> {
        if data.n_outputs() != self.shape.3 {
            return Err(ApproxError::BadShape(format!(
                "dataset has {} outputs, class has {}",
                data.n_outputs(),
                self.shape.3
            )));
        }
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let loss: f64 = data
                .rows()
                .iter()
                .map(|r| {
                    self.value(i, r.h, r.s, r.a)
                        .iter()
                        .zip(&r.target)
                        .map(|(f, y)| (f - y) * (f - y))
                        .sum::<f64>()
                })
                .sum();
            if loss < best.1 {
                best = (i, loss);
            }
        }
        Ok(best)
    }

    /// Members within `β` of `center` in `‖·‖²_𝒵`.
    pub fn region_members(&self, center: usize, points: &[usize], beta: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.sq_distance(i, center, points) <= beta)
            .collect()
    }

    /// Exact `max |f^{(1)}(p) − g^{(1)}(p)|` over region members. An empty
    /// region yields `(0, true)`.
    pub fn width(&self, members: &[usize], point: usize) -> (f64, bool) {
        if members.is_empty() {
            return (0.0, true);
        }
        let (lo, hi) = members
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.value_at(i, point)[0];
                (lo.min(v), hi.max(v))
            });
        (hi - lo, false)
    }
}

/// Per unordered member pair: squared distance at each point and the
/// first-output gap at each point.
struct PairTable {
    sq: Vec<Vec<f64>>,
    gap: Vec<Vec<f64>>,
}

fn pair_table(class: &EnumeratedFunctionClass) -> PairTable {
    let m = class.len();
    let n_points = class.n_points();
    let mut sq = Vec::new();
    let mut gap = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            sq.push(
                (0..n_points)
                    .map(|p| class.sq_distance(i, j, &[p]))
                    .collect(),
            );
            gap.push(
                (0..n_points)
                    .map(|p| (class.value_at(i, p)[0] - class.value_at(j, p)[0]).abs())
                    .collect(),
            );
        }
    }
    PairTable { sq, gap }
}

/// Whether `point` is `ε`-dependent on `sequence`: every pair with
/// `‖f − g‖_sequence ≤ ε` has `|f^{(1)}(point) − g^{(1)}(point)| ≤ ε`.
pub fn epsilon_dependent(
    class: &EnumeratedFunctionClass,
    point: usize,
    sequence: &[usize],
    eps: f64,
) -> bool {
    let m = class.len();
    for i in 0..m {
        for j in i + 1..m {
            if class.sq_distance(i, j, sequence).sqrt() <= eps
                && (class.value_at(i, point)[0] - class.value_at(j, point)[0]).abs() > eps
            {
                return false;
            }
        }
    }
    true
}

/// For every subset `P` (bitmask) of the points, the mask of points that are
/// `ε`-independent of `P`.
fn independence_masks(table: &PairTable, n_points: usize, eps: f64) -> Vec<u32> {
    let subsets = 1usize << n_points;
    let mut masks = vec![0u32; subsets];
    let mut sums = vec![0.0f64; subsets];
    for (sq, gap) in table.sq.iter().zip(&table.gap) {
        let wide: u32 = (0..n_points)
            .filter(|&p| gap[p] > eps)
            .fold(0, |acc, p| acc | 1 << p);
        if wide == 0 {
            continue;
        }
        for set in 1..subsets {
            let low = set.trailing_zeros() as usize;
            sums[set] = sums[set & (set - 1)] + sq[low];
        }
        for (set, mask) in masks.iter_mut().enumerate() {
            if sums[set].sqrt() <= eps {
                *mask |= wide;
            }
        }
    }
    masks
}

fn exact_at(table: &PairTable, n_points: usize, eps: f64) -> usize {
    let masks = independence_masks(table, n_points, eps);
    let subsets = 1usize << n_points;
    let mut reachable = vec![false; subsets];
    reachable[0] = true;
    let mut best = 0;
    for set in 1..subsets {
        reachable[set] = (0..n_points).filter(|&p| set & (1 << p) != 0).any(|p| {
            let prev = set & !(1 << p);
            reachable[prev] && masks[prev] & (1 << p) != 0
        });
        if reachable[set] {
            best = best.max(set.count_ones() as usize);
        }
    }
    best
}

/// Points are `(h, s, a)` triples indexed by
/// [`EnumeratedFunctionClass::point_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EluderMode {
    /// Exhaustive search over predecessor sets at `ε′ = ε`.
    Exact,
    /// Exhaustive search, maximised over a finite sweep of `ε′ ≥ ε`: `ε`
    /// itself and values just below each first-output gap larger than `ε`.
    ExactSweep,
    /// Greedy extension from every start point; a lower bound.
    Greedy,
}

/// Length of the longest sequence whose elements are each independent of
/// their predecessors.
pub fn eluder_dimension(
    class: &EnumeratedFunctionClass,
    eps: f64,
    mode: EluderMode,
) -> Result<usize, ApproxError> {
    if !(eps > 0.0) {
        return Err(ApproxError::BadParams(format!(
            "eps {eps} must be positive"
        )));
    }
    let n_points = class.n_points();
    match mode {
        EluderMode::Exact | EluderMode::ExactSweep => {
            if n_points > EXACT_ELUDER_MAX_POINTS {
                return Err(ApproxError::InstanceTooLarge {
                    points: n_points,
                    limit: EXACT_ELUDER_MAX_POINTS,
                });
            }
            let table = pair_table(class);
            if mode == EluderMode::Exact {
                return Ok(exact_at(&table, n_points, eps));
            }
            let mut grid: Vec<f64> = table
                .gap
                .iter()
                .flatten()
                .copied()
                .filter(|&g| g > eps)
                .collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut best = exact_at(&table, n_points, eps);
            for g in grid {
                best = best.max(exact_at(&table, n_points, (g * (1.0 - 1e-12)).max(eps)));
            }
            Ok(best)
        }
        EluderMode::Greedy => {
            let mut best = 0;
            for start in 0..n_points {
                let mut seq: Vec<usize> = Vec::new();
                if epsilon_dependent(class, start, &seq, eps) {
                    continue;
                }
                seq.push(start);
                while let Some(next) = (0..n_points)
                    .find(|p| !seq.contains(p) && !epsilon_dependent(class, *p, &seq, eps))
                {
                    seq.push(next);
                }
                best = best.max(seq.len());
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::RegressionRow;

    /// All `2^m` tables with first-output entries in `{0, scale}`.
    fn binary_class(m: usize, scale: f64) -> EnumeratedFunctionClass {
        let tables = (0..1usize << m)
            .map(|code| {
                (0..m)
                    .map(|p| if code >> p & 1 == 1 { scale } else { 0.0 })
                    .collect()
            })
            .collect();
        EnumeratedFunctionClass::scalar_bandit(m, 1, tables).unwrap()
    }

    /// The `m` scaled indicator tables plus the zero table.
    fn indicator_class(m: usize, scale: f64) -> EnumeratedFunctionClass {
        let mut tables = vec![vec![0.0; m]];
        for p in 0..m {
            let mut t = vec![0.0; m];
            t[p] = scale;
            tables.push(t);
        }
        EnumeratedFunctionClass::scalar_bandit(m, 1, tables).unwrap()
    }

    #[test]
    fn json_round_trip_and_shape_errors() {
        let c = EnumeratedFunctionClass::from_json("[[[[[1.0,2.0]],[[3.0,4.0]]]]]").unwrap();
        assert_eq!(c.shape(), (1, 2, 1, 2));
        assert_eq!(c.value(0, 0, 1, 0), &[3.0, 4.0]);
        assert!(EnumeratedFunctionClass::from_json("[]").is_err());
        assert!(EnumeratedFunctionClass::from_json("[[[[[1.0]]]],[[[[1.0,2.0]]]]]").is_err());
    }

    #[test]
    fn fit_picks_lowest_loss_then_lowest_index() {
        let c = EnumeratedFunctionClass::scalar_bandit(
            2,
            1,
            vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let mut data = RegressionDataset::new(1, 1.0);
        data.push(RegressionRow {
            h: 0,
            s: 0,
            a: 0,
            target: vec![0.9],
            episode: 0,
            step: 0,
        })
        .unwrap();
        assert_eq!(c.fit(&data).unwrap().0, 1);
        assert_eq!(c.fit(&RegressionDataset::new(1, 1.0)).unwrap().0, 0);
    }

    #[test]
    fn two_member_width() {
        let c = EnumeratedFunctionClass::scalar_bandit(1, 2, vec![vec![0.1, 0.5], vec![0.1, 0.8]])
            .unwrap();
        let members = c.region_members(0, &[0], 1.0);
        assert_eq!(members, vec![0, 1]);
        let (w, empty) = c.width(&members, 1);
        assert!((w - 0.3).abs() < 1e-15 && !empty);
        // Point 1 observed: the second member leaves a tight region.
        assert_eq!(c.region_members(0, &[1], 0.01), vec![0]);
        assert_eq!(c.width(&[], 0), (0.0, true));
    }

    #[test]
    fn dependence_examples() {
        let eps = 0.1;
        let single =
            EnumeratedFunctionClass::scalar_bandit(3, 1, vec![vec![0.3, 0.2, 0.1]]).unwrap();
        assert!(epsilon_dependent(&single, 0, &[], eps));
        let ind = indicator_class(3, 2.0 * eps);
        assert!(!epsilon_dependent(&ind, 2, &[0, 1], eps));
        assert!(epsilon_dependent(&ind, 1, &[0, 1], eps));
    }

    #[test]
    fn eluder_examples() {
        let eps = 0.1;
        let single = EnumeratedFunctionClass::scalar_bandit(4, 1, vec![vec![0.0; 4]]).unwrap();
        for mode in [
            EluderMode::Exact,
            EluderMode::ExactSweep,
            EluderMode::Greedy,
        ] {
            assert_eq!(eluder_dimension(&single, eps, mode).unwrap(), 0);
        }
        for m in 1..=6 {
            let c = binary_class(m, 2.0 * eps);
            assert_eq!(eluder_dimension(&c, eps, EluderMode::Exact).unwrap(), m);
            assert_eq!(eluder_dimension(&c, eps, EluderMode::Greedy).unwrap(), m);
            let ind = indicator_class(m, 2.0 * eps);
            assert_eq!(eluder_dimension(&ind, eps, EluderMode::Exact).unwrap(), m);
        }
        assert!(matches!(
            eluder_dimension(&binary_class(9, 0.2), eps, EluderMode::Exact),
            Err(ApproxError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn sweep_never_below_fixed_eps() {
        // Differences of 0.15 at each point: independent at ε′ just below
        // 0.15 but dependent at ε = 0.2.
        let c = indicator_class(3, 0.15);
        assert_eq!(eluder_dimension(&c, 0.2, EluderMode::Exact).unwrap(), 0);
        let sweep = eluder_dimension(&c, 0.1, EluderMode::ExactSweep).unwrap();
        assert!(sweep >= eluder_dimension(&c, 0.1, EluderMode::Exact).unwrap());
        assert_eq!(sweep, 3);
    }

    #[test]
    fn greedy_is_a_lower_bound() {
        // Chains where greedy order matters: members differ on overlapping
        // pairs of points.
        let tables = vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.3, 0.3, 0.0, 0.0],
            vec![0.0, 0.3, 0.3, 0.0],
            vec![0.0, 0.0, 0.3, 0.3],
            vec![0.3, 0.0, 0.0, 0.3],
        ];
        let c = EnumeratedFunctionClass::scalar_bandit(4, 1, tables).unwrap();
        for eps in [0.05, 0.1, 0.2, 0.29, 0.31] {
            let g = eluder_dimension(&c, eps, EluderMode::Greedy).unwrap();
            let e = eluder_dimension(&c, eps, EluderMode::Exact).unwrap();
            assert!(g <= e, "eps {eps}: greedy {g} exact {e}");
        }
    }
}
