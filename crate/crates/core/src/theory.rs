//! Multiset-level model of one conjoint attention aggregation, used to show
//! which neighborhoods the aggregator cannot tell apart without its `ε` term
//! and that adding the term separates them.
//!
//! A neighborhood is a multiset `X = (S, μ)` of feature vectors containing the
//! center `c`. Every occurrence carries a feature logit and a structural score;
//! the aggregator computes
//!
//! ```text
//! h(c, X) = Σ_{x∈X} α_cx g(x)  +  (ε / |X|) g(c)
//! ```
//!
//! where the second term is present only when the `ε` term is enabled.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fusion strategies the lab reasons about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabStrategy {
    Implicit,
    Explicit,
}

impl fmt::Display for LabStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabStrategy::Implicit => "implicit",
            LabStrategy::Explicit => "explicit",
        })
    }
}

/// The map `g` applied to every element before summation.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    Identity,
    /// `g(x) = M x` for an `out × in` matrix.
    Linear(Tensor),
}

impl FeatureMap {
    /// Random `out × dim` matrix with entries uniform in `[-1, 1)`.
    pub fn random_linear<R: Rng + ?Sized>(out: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..out * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap::Linear(Tensor::new(out, dim, data).expect("length matches shape"))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureMap::Identity => Ok(x.to_vec()),
            FeatureMap::Linear(m) => {
                if m.cols() != x.len() {
                    return Err(Error::shape(
                        "feature_map",
                        format!("{}x{} map applied to length {}", m.rows(), m.cols(), x.len()),
                    ));
                }
                Ok((0..m.rows())
                    .map(|r| m.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorSpec {
    pub strategy: LabStrategy,
    pub include_eps_term: bool,
    /// Value of `ε` used when the term is included.
    pub epsilon: f64,
    /// Ratio `r_s / r_f` for the implicit strategy. For the explicit strategy
    /// it records the proportionality factor between the two multisets'
    /// exponentiated structural scores and does not enter the computation.
    pub q: f64,
    pub g: FeatureMap,
}

impl AggregatorSpec {
    pub fn new(strategy: LabStrategy) -> Self {
        AggregatorSpec {
            strategy,
            include_eps_term: false,
            epsilon: 0.5,
            q: 1.0,
            g: FeatureMap::Identity,
        }
    }

    /// `(r_f, r_s)` with `r_s / r_f = q` and `r_f + r_s = 1`.
    pub fn significance(&self) -> (f64, f64) {
        (1.0 / (1.0 + self.q), self.q / (1.0 + self.q))
    }

    fn check(&self) -> Result<()> {
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(Error::Argument(format!("q must be a positive number, got {}", self.q)));
        }
        if self.include_eps_term && !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Argument(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// A neighborhood as a multiset of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiset {
    ground_set: Vec<Vec<f64>>,
    multiplicity: Vec<usize>,
    center: usize,
    feature_logits: Vec<f64>,
    structural_scores: Vec<f64>,
}

impl Multiset {
    /// `center` indexes `ground_set`. All occurrence scores start at zero,
    /// which makes both attention distributions uniform.
    pub fn new(ground_set: Vec<Vec<f64>>, multiplicity: Vec<usize>, center: usize) -> Result<Self> {
        if ground_set.is_empty() {
            return Err(Error::Argument("empty multiset".into()));
        }
        if ground_set.len() != multiplicity.len() {
            return Err(Error::Argument(format!(
                "{} ground elements but {} multiplicities",
                ground_set.len(),
                multiplicity.len()
            )));
        }
        if multiplicity.contains(&0) {
            return Err(Error::Argument("multiplicities must be at least 1".into()));
        }
        if center >= ground_set.len() {
            return Err(Error::Argument(format!("center index {center} out of range")));
        }
        let dim = ground_set[0].len();
        if ground_set.iter().any(|x| x.len() != dim) {
            return Err(Error::Argument("ground elements differ in length".into()));
        }
        for (a, x) in ground_set.iter().enumerate() {
            if ground_set[..a].contains(x) {
                return Err(Error::Argument(format!("ground element {a} is a duplicate")));
            }
        }
        let size = multiplicity.iter().sum();
        Ok(Multiset {
            ground_set,
            multiplicity,
            center,
            feature_logits: vec![0.0; size],
            structural_scores: vec![0.0; size],
        })
    }

    /// Sets per-occurrence scores. Occurrences are ordered by ground element,
    /// each element repeated `μ` times.
    pub fn with_scores(mut self, feature_logits: Vec<f64>, structural_scores: Vec<f64>) -> Result<Self> {
        if feature_logits.len() != self.size() || structural_scores.len() != self.size() {
            return Err(Error::Argument(format!(
                "expected {} scores per stream, got {} and {}",
                self.size(),
                feature_logits.len(),
                structural_scores.len()
            )));
        }
        if feature_logits.iter().chain(&structural_scores).any(|v| !v.is_finite()) {
            return Err(Error::Argument("scores must be finite".into()));
        }
        self.feature_logits = feature_logits;
        self.structural_scores = structural_scores;
        Ok(self)
    }

    /// `|X| = Σ μ`.
    pub fn size(&self) -> usize {
        self.multiplicity.iter().sum()
    }

    pub fn ground_set(&self) -> &[Vec<f64>] {
        &self.ground_set
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn center(&self) -> &[f64] {
        &self.ground_set[self.center]
    }

    pub fn center_index(&self) -> usize {
        self.center
    }

    /// Ground-element index of every occurrence.
    pub fn occurrences(&self) -> Vec<usize> {
        self.multiplicity
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| std::iter::repeat_n(k, m))
            .collect()
    }

    pub fn feature_logits(&self) -> &[f64] {
        &self.feature_logits
    }

    pub fn structural_scores(&self) -> &[f64] {
        &self.structural_scores
    }
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-occurrence fused attention `α_cx`.
pub fn attention_weights(spec: &AggregatorSpec, m: &Multiset) -> Result<Vec<f64>> {
    spec.check()?;
    let f = softmax(&m.feature_logits);
    let s = softmax(&m.structural_scores);
    match spec.strategy {
        LabStrategy::Implicit => {
            let (r_f, r_s) = spec.significance();
            Ok(f.iter().zip(&s).map(|(f, s)| r_f * f + r_s * s).collect())
        }
        LabStrategy::Explicit => {
            let prod: Vec<f64> = f.iter().zip(&s).map(|(f, s)| f * s).collect();
            let mass: f64 = prod.iter().sum();
            if !(mass > crate::attention::EXPLICIT_FLOOR) {
                return Err(Error::DegenerateNormalizer {
                    op: "attention_weights",
                    segment: 0,
                });
            }
            Ok(prod.into_iter().map(|p| p / mass).collect())
        }
    }
}

/// Total attention on occurrences equal to the center's feature vector.
pub fn center_weight(spec: &AggregatorSpec, m: &Multiset) -> Result<f64> {
    let alpha = attention_weights(spec, m)?;
    Ok(m.occurrences()
        .iter()
        .zip(&alpha)
        .filter(|(&k, _)| k == m.center)
        .map(|(_, a)| a)
        .sum())
}

/// `h(c, X)` under `spec`.
pub fn aggregate_multiset(spec: &AggregatorSpec, m: &Multiset) -> Result<Vec<f64>> {
    let alpha = attention_weights(spec, m)?;
    let mapped = m
        .ground_set
        .iter()
        .map(|x| spec.g.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; mapped[0].len()];
    for (&k, a) in m.occurrences().iter().zip(&alpha) {
        for (o, v) in out.iter_mut().zip(&mapped[k]) {
            *o += a * v;
        }
    }
    if spec.include_eps_term {
        let w = spec.epsilon / m.size() as f64;
        for (o, v) in out.iter_mut().zip(&mapped[m.center]) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Which fusion condition the collision pair is built to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CollisionKind {
    /// Implicit fusion with equal feature and structural sums.
    Theorem1,
    /// Explicit fusion with proportional exponentiated structural scores.
    Theorem2,
}

impl CollisionKind {
    pub fn strategy(self) -> LabStrategy {
        match self {
            CollisionKind::Theorem1 => LabStrategy::Implicit,
            CollisionKind::Theorem2 => LabStrategy::Explicit,
        }
    }
}

impl fmt::Display for CollisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollisionKind::Theorem1 => "theorem1",
            CollisionKind::Theorem2 => "theorem2",
        })
    }
}

impl FromStr for CollisionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "theorem1" | "t1" | "1" => Ok(CollisionKind::Theorem1),
            "theorem2" | "t2" | "2" => Ok(CollisionKind::Theorem2),
            other => Err(format!("unknown collision kind `{other}`")),
        }
    }
}

/// Two multisets that the `ε`-free aggregator maps to the same vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionPair {
    pub kind: CollisionKind,
    pub sizes: (usize, usize),
    pub first: Multiset,
    pub second: Multiset,
    /// `ε`-free aggregator under which the pair collides.
    pub spec: AggregatorSpec,
}

/// Canonical pair: a single ground element `v = (1, 0)` that is also the
/// center, repeated `n1` and `n2` times, with uniform feature logits and equal
/// structural scores.
pub fn build_collision_pair(kind: CollisionKind, sizes: (usize, usize)) -> Result<CollisionPair> {
    build_collision_pair_with(kind, sizes, vec![1.0, 0.0])
}

/// [`build_collision_pair`] with a caller-chosen element `v`.
pub fn build_collision_pair_with(
    kind: CollisionKind,
    (n1, n2): (usize, usize),
    v: Vec<f64>,
) -> Result<CollisionPair> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Argument(format!("multiplicities must be >= 1, got ({n1}, {n2})")));
    }
    if n1 == n2 {
        return Err(Error::Argument(format!(
            "equal multiplicities ({n1}, {n2}) describe the same multiset"
        )));
    }
    let first = Multiset::new(vec![v.clone()], vec![n1], 0)?;
    let second = Multiset::new(vec![v], vec![n2], 0)?;
    let mut spec = AggregatorSpec::new(kind.strategy());
    if kind == CollisionKind::Theorem2 {
        spec.q = n2 as f64 / n1 as f64;
    }
    Ok(CollisionPair {
        kind,
        sizes: (n1, n2),
        first,
        second,
        spec,
    })
}

/// Outcome of [`verify_separation`]; carries both vectors as a counterexample
/// when a check fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationReport {
    pub kind: CollisionKind,
    pub strategy: LabStrategy,
    pub sizes: (usize, usize),
    pub epsilon: f64,
    pub include_eps_term: bool,
    /// Max-abs difference of the two `ε`-free outputs.
    pub collision_gap: f64,
    pub h_first: Vec<f64>,
    pub h_second: Vec<f64>,
    /// `h_first - h_second` with the configured `ε` setting.
    pub difference: Vec<f64>,
    /// `ε (1/n1 - 1/n2) α_cc g(c)`.
    pub predicted: Vec<f64>,
    /// Weight on the center element, taken from the first multiset.
    pub alpha_cc: f64,
    pub formula_error: f64,
    pub collided: bool,
    pub separated: bool,
    pub formula_holds: bool,
}

impl SeparationReport {
    pub fn passed(&self) -> bool {
        self.collided && self.separated && self.formula_holds
    }

    pub fn difference_norm(&self) -> f64 {
        self.difference.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

pub const COLLISION_TOL: f64 = 1e-12;
pub const FORMULA_TOL: f64 = 1e-9;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Checks that `pair` collides without the `ε` term and that with it the two
/// outputs differ by exactly `ε (1/n1 - 1/n2) α_cc g(c)`.
///
/// `include_eps_term = false` runs the second check without the term, which
/// must report a collision instead of a separation.
pub fn verify_separation(pair: &CollisionPair, epsilon: f64, include_eps_term: bool) -> Result<SeparationReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Argument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let free = AggregatorSpec {
        include_eps_term: false,
        ..pair.spec.clone()
    };
    let collision_gap = max_abs_diff(
        &aggregate_multiset(&free, &pair.first)?,
        &aggregate_multiset(&free, &pair.second)?,
    );

    let spec = AggregatorSpec {
        include_eps_term,
        epsilon,
        ..pair.spec.clone()
    };
    let h_first = aggregate_multiset(&spec, &pair.first)?;
    let h_second = aggregate_multiset(&spec, &pair.second)?;
    let difference: Vec<f64> = h_first.iter().zip(&h_second).map(|(a, b)| a - b).collect();

    let alpha_cc = center_weight(&free, &pair.first)?;
    let (n1, n2) = (pair.first.size() as f64, pair.second.size() as f64);
    let g_c = spec.g.apply(pair.first.center())?;
    let coeff = epsilon * (1.0 / n1 - 1.0 / n2) * alpha_cc;
    let predicted: Vec<f64> = g_c.iter().map(|v| coeff * v).collect();
    let formula_error = max_abs_diff(&difference, &predicted);

    let g_inf = g_c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = epsilon * (1.0 / n1 - 1.0 / n2).abs() * alpha_cc * g_inf - 1e-10;
    let gap = difference.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    Ok(SeparationReport {
        kind: pair.kind,
        strategy: spec.strategy,
        sizes: pair.sizes,
        epsilon,
        include_eps_term,
        collision_gap,
        h_first,
        h_second,
        difference,
        predicted,
        alpha_cc,
        formula_error,
        collided: collision_gap <= COLLISION_TOL,
        separated: gap > 0.0 && gap >= bound,
        formula_holds: formula_error <= FORMULA_TOL,
    })
}

/// One row per ordered pair `(n1, n2)` from `sizes`, `n1 != n2`, for both
/// collision kinds.
pub fn theorem_grid(sizes: &[usize], epsilon: f64, include_eps_term: bool) -> Result<Vec<SeparationReport>> {
    let mut rows = Vec::new();
    for kind in [CollisionKind::Theorem1, CollisionKind::Theorem2] {
        for &n1 in sizes {
            for &n2 in sizes {
                if n1 != n2 {
                    let pair = build_collision_pair(kind, (n1, n2))?;
                    rows.push(verify_separation(&pair, epsilon, include_eps_term)?);
                }
            }
        }
    }
    Ok(rows)
}

/// `ε = 0.1, 0.2, …, 0.9`.
pub fn epsilon_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Separation reports for one pair over `epsilons`.
pub fn epsilon_sweep(pair: &CollisionPair, epsilons: &[f64]) -> Result<Vec<SeparationReport>> {
    epsilons
        .iter()
        .map(|&e| verify_separation(pair, e, true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(strategy: LabStrategy) -> AggregatorSpec {
        AggregatorSpec::new(strategy)
    }

    #[test]
    fn singleton_returns_g_of_center() {
        let m = Multiset::new(vec![vec![0.3, -2.0]], vec![1], 0).unwrap();
        for s in [LabStrategy::Implicit, LabStrategy::Explicit] {
            assert_eq!(aggregate_multiset(&spec(s), &m).unwrap(), vec![0.3, -2.0]);
        }
    }

    #[test]
    fn uniform_scores_give_multiplicity_weighted_mean() {
        let m = Multiset::new(vec![vec![1.0, 0.0], vec![0.0, 4.0]], vec![3, 1], 1).unwrap();
        for s in [LabStrategy::Implicit, LabStrategy::Explicit] {
            let h = aggregate_multiset(&spec(s), &m).unwrap();
            assert!(max_abs_diff(&h, &[0.75, 1.0]) < 1e-15);
        }
    }

    #[test]
    fn three_elements_hand_computed() {
        let m = Multiset::new(vec![vec![1.0], vec![2.0], vec![4.0]], vec![1, 1, 1], 0)
            .unwrap()
            .with_scores(vec![0.0, 2f64.ln(), 0.0], vec![3f64.ln(), 0.0, 0.0])
            .unwrap();
        // f = (1/4, 1/2, 1/4), s = (3/5, 1/5, 1/5), r = 1/2 each.
        let alpha = [0.425, 0.35, 0.225];
        let expected = alpha[0] * 1.0 + alpha[1] * 2.0 + alpha[2] * 4.0;
        let h = aggregate_multiset(&spec(LabStrategy::Implicit), &m).unwrap();
        assert!((h[0] - expected).abs() < 1e-14);

        let with_eps = AggregatorSpec {
            include_eps_term: true,
            epsilon: 0.3,
            ..spec(LabStrategy::Implicit)
        };
        let h = aggregate_multiset(&with_eps, &m).unwrap();
        assert!((h[0] - expected - 0.1).abs() < 1e-14);

        // Explicit: f·s = (3/20, 2/20, 1/20), normalized (1/2, 1/3, 1/6).
        let h = aggregate_multiset(&spec(LabStrategy::Explicit), &m).unwrap();
        assert!((h[0] - (0.5 + 2.0 / 3.0 + 4.0 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn multiset_validation() {
        assert!(Multiset::new(vec![], vec![], 0).is_err());
        assert!(Multiset::new(vec![vec![1.0]], vec![0], 0).is_err());
        assert!(Multiset::new(vec![vec![1.0], vec![1.0]], vec![1, 1], 0).is_err());
        assert!(Multiset::new(vec![vec![1.0]], vec![1], 1).is_err());
        let m = Multiset::new(vec![vec![1.0]], vec![2], 0).unwrap();
        assert!(m.clone().with_scores(vec![0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn pair_two_three_collides_for_both_kinds() {
        for kind in [CollisionKind::Theorem1, CollisionKind::Theorem2] {
            let pair = build_collision_pair(kind, (2, 3)).unwrap();
            let a = aggregate_multiset(&pair.spec, &pair.first).unwrap();
            let b = aggregate_multiset(&pair.spec, &pair.second).unwrap();
            assert!(max_abs_diff(&a, &b) <= 1e-12);
        }
    }

    #[test]
    fn equal_sizes_rejected() {
        assert!(build_collision_pair(CollisionKind::Theorem1, (1, 1)).is_err());
        assert!(build_collision_pair(CollisionKind::Theorem2, (0, 2)).is_err());
    }

    #[test]
    fn separation_at_half() {
        let pair = build_collision_pair(CollisionKind::Theorem1, (2, 3)).unwrap();
        let report = verify_separation(&pair, 0.5, true).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.alpha_cc, 1.0);
        assert!((report.difference[0] - 0.5 * (0.5 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(report.difference[1], 0.0);
    }

    #[test]
    fn without_eps_term_the_pair_still_collides() {
        let pair = build_collision_pair(CollisionKind::Theorem2, (4, 1)).unwrap();
        let report = verify_separation(&pair, 0.5, false).unwrap();
        assert!(report.collided);
        assert!(!report.separated);
        assert!(!report.passed());
    }

    #[test]
    fn tiny_epsilon_gives_tiny_difference() {
        let pair = build_collision_pair(CollisionKind::Theorem1, (1, 6)).unwrap();
        let report = verify_separation(&pair, 1e-12, true).unwrap();
        assert!(report.difference_norm() <= 1e-10);
    }

    #[test]
    fn sweep_is_strictly_increasing() {
        let pair = build_collision_pair(CollisionKind::Theorem1, (2, 3)).unwrap();
        let norms: Vec<f64> = epsilon_sweep(&pair, &epsilon_grid())
            .unwrap()
            .iter()
            .map(SeparationReport::difference_norm)
            .collect();
        assert_eq!(norms.len(), 9);
        assert!(norms.windows(2).all(|w| w[1] > w[0]), "{norms:?}");
    }

    #[test]
    fn linear_feature_map() {
        let g = FeatureMap::Linear(Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0], vec![3.0, 0.5]]).unwrap());
        assert_eq!(g.apply(&[1.0, 1.0]).unwrap(), vec![3.0, -1.0, 3.5]);
        assert!(g.apply(&[1.0]).is_err());
    }
}
