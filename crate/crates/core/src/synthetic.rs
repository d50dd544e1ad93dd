//! Synthetic comparison data: toggle noise and Bradley-Terry generators.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`, so a
//! config and seed reproduce the same dataset on every platform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComparisonDataset, Label, Observation, RankScores, Ranking};
use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How many comparisons to draw: an absolute count or a multiple of
/// `m(m-1)/2` ("standard trials").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonCount {
    Absolute(usize),
    StandardTrials(f64),
}

impl ComparisonCount {
    pub fn resolve(self, num_items: usize) -> Result<usize> {
        match self {
            ComparisonCount::Absolute(n) => Ok(n),
            ComparisonCount::StandardTrials(t) => standard_trials_to_n(num_items, t),
        }
    }
}

/// `round(t * m(m-1)/2)`.
pub fn standard_trials_to_n(num_items: usize, trials: f64) -> Result<usize> {
    if num_items < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 items, got {num_items}"
        )));
    }
    if !(trials >= 0.0) || !trials.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "standard trials must be finite and >= 0, got {trials}"
        )));
    }
    let pairs = (num_items * (num_items - 1) / 2) as f64;
    Ok((trials * pairs).round() as usize)
}

/// `n` unordered pairs drawn uniformly with replacement; each pair has `i < j`.
pub fn sample_pairs<R: Rng + ?Sized>(num_items: usize, n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if num_items < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 items, got {num_items}"
        )));
    }
    Ok((0..n)
        .map(|_| {
            let a = rng.gen_range(0..num_items);
            let mut b = rng.gen_range(0..num_items - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect())
}

/// Seeded convenience wrapper around [`sample_pairs`].
pub fn sample_pairs_seeded(num_items: usize, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    sample_pairs(num_items, n, &mut rng_from_seed(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_scores: RankScores,
    pub true_ranking: Ranking,
}

impl GroundTruth {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        let true_ranking = crate::dataset::scores_to_ranking(&scores)?;
        Ok(GroundTruth {
            true_scores: RankScores(scores),
            true_ranking,
        })
    }

    /// Noise-free label of the pair under the true scores.
    pub fn true_label(&self, i: usize, j: usize) -> Label {
        let x = self.true_scores.values();
        if x[i] > x[j] || (x[i] == x[j] && i < j) {
            Label::Above
        } else {
            Label::Below
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleNoiseConfig {
    pub num_items: usize,
    /// Flip probability shared by all comparisons.
    pub delta: f64,
    pub comparisons: ComparisonCount,
    pub seed: u64,
    /// Per-comparison flip probabilities; overrides `delta` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

impl ToggleNoiseConfig {
    pub fn new(num_items: usize, delta: f64, comparisons: ComparisonCount, seed: u64) -> Self {
        ToggleNoiseConfig {
            num_items,
            delta,
            comparisons,
            seed,
            deltas: None,
        }
    }

    fn validate(&self) -> Result<usize> {
        let n = self.comparisons.resolve(self.num_items)?;
        let check = |d: f64| {
            if (0.0..0.5).contains(&d) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "toggle probability must lie in [0, 0.5), got {d}"
                )))
            }
        };
        check(self.delta)?;
        if let Some(ds) = &self.deltas {
            if ds.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: ds.len(),
                });
            }
            ds.iter().try_for_each(|&d| check(d))?;
        }
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one comparison".into()));
        }
        Ok(n)
    }
}

/// Random-permutation scores `1..=M`, uniform pairs, labels flipped with
/// probability `delta`.
pub fn generate_toggle(cfg: &ToggleNoiseConfig) -> Result<(ComparisonDataset, GroundTruth)> {
    let n = cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut scores: Vec<f64> = (1..=cfg.num_items).map(|v| v as f64).collect();
    scores.shuffle(&mut rng);
    let truth = GroundTruth::from_scores(scores)?;

    let pairs = sample_pairs(cfg.num_items, n, &mut rng)?;
    let raw: Vec<Observation> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let delta = cfg.deltas.as_ref().map_or(cfg.delta, |d| d[k]);
            let clean = truth.true_label(i, j);
            let label = if rng.gen::<f64>() < delta { clean.flip() } else { clean };
            Observation::new(i, j, label)
        })
        .collect();
    Ok((ComparisonDataset::compress(cfg.num_items, &raw)?, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BTGenConfig {
    pub num_items: usize,
    pub score_low: f64,
    pub score_high: f64,
    pub comparisons: ComparisonCount,
    pub seed: u64,
}

/// Latent strengths uniform in `[score_low, score_high]`; pair `(i, j)` is
/// labeled `Above` with probability `s_i / (s_i + s_j)`.
pub fn generate_bt(cfg: &BTGenConfig) -> Result<(ComparisonDataset, GroundTruth)> {
    let n = cfg.comparisons.resolve(cfg.num_items)?;
    if !(cfg.score_low > 0.0 && cfg.score_low <= cfg.score_high && cfg.score_high.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < score_low <= score_high, got [{}, {}]",
            cfg.score_low, cfg.score_high
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one comparison".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let scores: Vec<f64> = (0..cfg.num_items)
        .map(|_| {
            if cfg.score_low == cfg.score_high {
                cfg.score_low
            } else {
                rng.gen_range(cfg.score_low..=cfg.score_high)
            }
        })
        .collect();
    let dataset = bt_comparisons(&scores, n, &mut rng)?;
    Ok((dataset, GroundTruth::from_scores(scores)?))
}

/// Draws `n` uniform pairs and labels each by a Bradley-Terry coin with the
/// given latent strengths.
pub fn bt_comparisons<R: Rng + ?Sized>(scores: &[f64], n: usize, rng: &mut R) -> Result<ComparisonDataset> {
    let pairs = sample_pairs(scores.len(), n, rng)?;
    let raw: Vec<Observation> = pairs
        .iter()
        .map(|&(i, j)| {
            let p = bt_win_probability(scores[i], scores[j]);
            let label = if rng.gen::<f64>() < p {
                Label::Above
            } else {
                Label::Below
            };
            Observation::new(i, j, label)
        })
        .collect();
    ComparisonDataset::compress(scores.len(), &raw)
}

pub fn bt_win_probability(s_i: f64, s_j: f64) -> f64 {
    s_i / (s_i + s_j)
}
