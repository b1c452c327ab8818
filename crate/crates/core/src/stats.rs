//! Statistics for paired human consistency ratings of two algorithms.
//!
//! Each rater marks the number of inconsistent view pairs they see in an
//! algorithm's output for a scene. Scenes are compared by their mean
//! count; lower is better.

use std::collections::HashMap;
use std::path::Path;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub scene_id: String,
    pub algorithm: String,
    pub rater_id: String,
    pub pair_count: u64,
}

/// Records from CSV text with header `scene_id,algorithm,rater_id,pair_count`.
pub fn parse_records(text: &str) -> Result<Vec<SurveyRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Survey(e.to_string()))?.clone();
    let expected = ["scene_id", "algorithm", "rater_id", "pair_count"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Survey(format!(
            "expected header '{}', found '{}'",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Survey(format!("record {}: {e}", i + 1))))
        .collect()
}

pub fn load_records(path: &Path) -> Result<Vec<SurveyRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    /// Mean pair count per algorithm, in [`Aggregate::algorithms`] order.
    pub means: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    /// Mean over scenes of the per-scene mean pair count.
    pub mean_pairs: f64,
    /// Scenes where this algorithm's mean is strictly lower.
    pub wins: usize,
    pub ratings: usize,
    /// Ratings with at most one marked pair.
    pub consistent: usize,
    /// Ratings with three or more marked pairs.
    pub inconsistent: usize,
    pub consistent_rate: f64,
    pub inconsistent_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// The two algorithms, in order of first appearance.
    pub algorithms: [String; 2],
    pub scenes: Vec<SceneSummary>,
    /// Scenes rated for only one algorithm.
    pub excluded_scenes: Vec<String>,
    pub per_algorithm: [AlgorithmSummary; 2],
    pub ties: usize,
}

impl Aggregate {
    /// `mean_0 − mean_1` per scene.
    pub fn per_scene_diffs(&self) -> Vec<f64> {
        self.scenes.iter().map(|s| s.means[0] - s.means[1]).collect()
    }
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = Vec::new();
    for it in items {
        if !seen.contains(&it) {
            seen.push(it);
        }
    }
    seen
}

pub fn aggregate(records: &[SurveyRecord]) -> Result<Aggregate> {
    let algorithms = first_appearance(records.iter().map(|r| r.algorithm.as_str()));
    if algorithms.len() != 2 {
        return Err(Error::Survey(format!(
            "expected exactly 2 algorithms, found {}: [{}]",
            algorithms.len(),
            algorithms.join(", ")
        )));
    }
    let scene_order = first_appearance(records.iter().map(|r| r.scene_id.as_str()));
    let mut counts: HashMap<(&str, usize), Vec<u64>> = HashMap::new();
    for r in records {
        let a = usize::from(r.algorithm != algorithms[0]);
        counts.entry((r.scene_id.as_str(), a)).or_default().push(r.pair_count);
    }

    let mut scenes = Vec::new();
    let mut excluded = Vec::new();
    let mut ratings: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for scene in scene_order {
        match (counts.get(&(scene, 0)), counts.get(&(scene, 1))) {
            (Some(a), Some(b)) => {
                let mean = |v: &Vec<u64>| v.iter().sum::<u64>() as f64 / v.len() as f64;
                scenes.push(SceneSummary {
                    scene_id: scene.to_string(),
                    means: [mean(a), mean(b)],
                });
                ratings[0].extend(a);
                ratings[1].extend(b);
            }
            _ => {
                log::warn!("scene '{scene}' is rated for only one algorithm; excluded");
                excluded.push(scene.to_string());
            }
        }
    }
    if scenes.is_empty() {
        return Err(Error::Survey("no scene is rated for both algorithms".into()));
    }

    let summary = |a: usize| {
        let wins = scenes.iter().filter(|s| s.means[a] < s.means[1 - a]).count();
        let consistent = ratings[a].iter().filter(|&&c| c <= 1).count();
        let inconsistent = ratings[a].iter().filter(|&&c| c >= 3).count();
        let n = ratings[a].len();
        AlgorithmSummary {
            algorithm: algorithms[a].to_string(),
            mean_pairs: scenes.iter().map(|s| s.means[a]).sum::<f64>() / scenes.len() as f64,
            wins,
            ratings: n,
            consistent,
            inconsistent,
            consistent_rate: consistent as f64 / n as f64,
            inconsistent_rate: inconsistent as f64 / n as f64,
        }
    };
    let per_algorithm = [summary(0), summary(1)];
    let ties = scenes.len() - per_algorithm[0].wins - per_algorithm[1].wins;
    Ok(Aggregate {
        algorithms: [algorithms[0].to_string(), algorithms[1].to_string()],
        scenes,
        excluded_scenes: excluded,
        per_algorithm,
        ties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub mean_diff: f64,
    pub p_two_sided: f64,
    /// Random resamples drawn, or `2^n` when exhaustive.
    pub resamples: u64,
    pub exhaustive: bool,
}

/// Largest scene count accepted for exhaustive enumeration.
pub const MAX_EXHAUSTIVE: usize = 24;

fn at_least(stat: f64, observed: f64) -> bool {
    stat.abs() >= observed.abs() * (1.0 - 1e-12)
}

/// Two-sided sign-flip test of `mean(diffs) = 0`.
///
/// Monte Carlo mode counts the observed assignment as one of `n_perm + 1`
/// samples. Exhaustive mode enumerates all `2^n` sign assignments.
pub fn sign_flip_permutation_test(
    diffs: &[f64],
    n_perm: usize,
    rng: &mut Rng,
    exhaustive: bool,
) -> Result<PermutationResult> {
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Survey("permutation test needs at least one difference".into()));
    }
    let observed = diffs.iter().sum::<f64>() / n as f64;
    if exhaustive {
        if n > MAX_EXHAUSTIVE {
            return Err(Error::Survey(format!(
                "exhaustive enumeration supports at most {MAX_EXHAUSTIVE} scenes, got {n}"
            )));
        }
        let total = 1u64 << n;
        if diffs.iter().all(|&d| d == 0.0) {
            return Ok(PermutationResult {
                mean_diff: 0.0,
                p_two_sided: 1.0,
                resamples: total,
                exhaustive,
            });
        }
        let hits = (0..total)
            .filter(|mask| {
                let s: f64 = diffs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                    .sum();
                at_least(s / n as f64, observed)
            })
            .count();
        return Ok(PermutationResult {
            mean_diff: observed,
            p_two_sided: hits as f64 / total as f64,
            resamples: total,
            exhaustive,
        });
    }
    if n_perm == 0 {
        return Err(Error::Survey("n_perm must be at least 1".into()));
    }
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(PermutationResult {
            mean_diff: 0.0,
            p_two_sided: 1.0,
            resamples: n_perm as u64,
            exhaustive,
        });
    }
    let mut hits = 1u64;
    for _ in 0..n_perm {
        let s: f64 = diffs.iter().map(|d| if rng.coin() { -d } else { *d }).sum();
        if at_least(s / n as f64, observed) {
            hits += 1;
        }
    }
    Ok(PermutationResult {
        mean_diff: observed,
        p_two_sided: hits as f64 / (n_perm + 1) as f64,
        resamples: n_perm as u64,
        exhaustive,
    })
}

fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 0..n {
        c = c * BigUint::from(n - k) / BigUint::from(k + 1);
        row.push(c.clone());
    }
    row
}

/// `P(X ≥ wins)` for `X ~ Binomial(n, 1/2)`, exactly.
pub fn binomial_upper_tail(wins: u64, n: u64) -> BigRational {
    let row = binomial_row(n);
    let num: BigUint = row.iter().skip(wins as usize).sum();
    BigRational::new(num.into(), (BigUint::one() << n as usize).into())
}

/// `P(X ≤ wins)` for `X ~ Binomial(n, 1/2)`, exactly.
pub fn binomial_lower_tail(wins: u64, n: u64) -> BigRational {
    let row = binomial_row(n);
    let num: BigUint = row.iter().take(wins as usize + 1).sum();
    BigRational::new(num.into(), (BigUint::one() << n as usize).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialResult {
    pub wins: u64,
    pub n: u64,
    /// `P(X ≥ wins)`.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

pub fn binomial_sign_test(wins: u64, n: u64) -> Result<BinomialResult> {
    if wins > n {
        return Err(Error::Survey(format!("wins {wins} exceeds trials {n}")));
    }
    let upper = binomial_upper_tail(wins, n);
    let lower = binomial_lower_tail(wins, n);
    let two = (upper.clone().min(lower) * BigRational::from_integer(2.into())).min(BigRational::one());
    let f = |r: &BigRational| r.to_f64().expect("probability is finite");
    Ok(BinomialResult {
        wins,
        n,
        p_one_sided: f(&upper),
        p_two_sided: f(&two),
    })
}

/// 2×2 table `[[a, b], [c, d]]`; rows are algorithms, columns are
/// indicator yes/no.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable(pub [[u64; 2]; 2]);

impl ContingencyTable {
    pub fn new(counts: [[u64; 2]; 2]) -> Result<Self> {
        if counts.iter().flatten().all(|&x| x == 0) {
            return Err(Error::Survey("contingency table is empty".into()));
        }
        Ok(Self(counts))
    }

    pub fn swap_rows(&self) -> Self {
        let [r0, r1] = self.0;
        Self([r1, r0])
    }

    pub fn swap_columns(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Self([[b, a], [d, c]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    /// `P(A ≤ a)` with margins fixed.
    pub p_less: f64,
    /// `P(A ≥ a)` with margins fixed.
    pub p_greater: f64,
    /// Tail in the direction of the observed deviation.
    pub p_one_sided: f64,
    /// Total mass of tables no more likely than the observed one.
    pub p_two_sided: f64,
}

/// Fisher's exact test, computed in log space.
pub fn fisher_exact(table: &ContingencyTable) -> FisherResult {
    let [[a, b], [c, d]] = table.0;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let total = row1 + row2;
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let log_p = |x: u64| ln_binomial(row1, x) + ln_binomial(row2, col1 - x) - ln_binomial(total, col1);
    let logs: Vec<f64> = (lo..=hi).map(log_p).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let norm: f64 = weights.iter().sum();
    let obs = (a - lo) as usize;
    let p_obs = weights[obs];
    let sum = |it: &mut dyn Iterator<Item = &f64>| (it.sum::<f64>() / norm).min(1.0);
    let p_less = sum(&mut weights[..=obs].iter());
    let p_greater = sum(&mut weights[obs..].iter());
    let p_two_sided = sum(&mut weights.iter().filter(|&&w| w <= p_obs * (1.0 + 1e-7)));
    let expected = row1 as f64 * col1 as f64 / total as f64;
    FisherResult {
        p_less,
        p_greater,
        p_one_sided: if a as f64 >= expected { p_greater } else { p_less },
        p_two_sided,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub aggregate: Aggregate,
    pub permutation: PermutationResult,
    /// Algorithm whose wins feed the sign test (the one with more wins).
    pub sign_test_algorithm: String,
    pub sign_test: BinomialResult,
    pub fisher_consistent: FisherResult,
    pub fisher_inconsistent: FisherResult,
}

/// Full analysis: aggregation, permutation test on per-scene mean
/// differences, sign test on wins (ties dropped) and Fisher tests on the
/// consistent / inconsistent rating counts.
pub fn analyze(records: &[SurveyRecord], n_perm: usize, exhaustive: bool, seed: u64) -> Result<SurveyReport> {
    let agg = aggregate(records)?;
    let mut rng = Rng::new(seed, "survey-permutation");
    let permutation = sign_flip_permutation_test(&agg.per_scene_diffs(), n_perm, &mut rng, exhaustive)?;
    let leader = usize::from(agg.per_algorithm[1].wins > agg.per_algorithm[0].wins);
    let decided = (agg.per_algorithm[0].wins + agg.per_algorithm[1].wins) as u64;
    let sign_test = binomial_sign_test(agg.per_algorithm[leader].wins as u64, decided)?;
    let table = |f: fn(&AlgorithmSummary) -> usize| -> Result<ContingencyTable> {
        let row = |s: &AlgorithmSummary| [f(s) as u64, (s.ratings - f(s)) as u64];
        ContingencyTable::new([row(&agg.per_algorithm[0]), row(&agg.per_algorithm[1])])
    };
    let fisher_consistent = fisher_exact(&table(|s| s.consistent)?);
    let fisher_inconsistent = fisher_exact(&table(|s| s.inconsistent)?);
    Ok(SurveyReport {
        sign_test_algorithm: agg.per_algorithm[leader].algorithm.clone(),
        aggregate: agg,
        permutation,
        sign_test,
        fisher_consistent,
        fisher_inconsistent,
    })
}
