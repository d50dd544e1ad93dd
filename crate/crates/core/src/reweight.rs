//! Outer iteratively reweighted loop.
//!
//! Each outer step solves the weighted convex subproblem with the current
//! weights, then sets `ω_n = 1 / (log(1 + e^{1 - a_nᵀx}) + ε)`. Final weights
//! above 1 mark observations the ranking agrees with; below 1, likely errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{ComparisonDataset, ItemIndex, RankScores, Ranking};
use crate::error::{Error, Result};
use crate::pdhg::{pdhg_solve, subproblem_cost, PdhgConfig, DEFAULT_EPS_IN, DEFAULT_GAMMA, DEFAULT_MAX_ITERS};
use crate::prox::softplus;
use crate::synthetic::GroundTruth;

/// Per-entry positive weights `ω_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if let Some(w) = omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be finite and > 0, got {w}"
            )));
        }
        Ok(WeightVector(omega))
    }

    pub fn ones(len: usize) -> Self {
        WeightVector(vec![1.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest `|ω_new - ω_old| / ω_old` over entries.
    pub fn max_relative_change(&self, previous: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(&previous.0)
            .map(|(new, old)| ((new - old) / old).abs())
            .fold(0.0, f64::max)
    }
}

/// `ω_n = 1 / (LSE(1 - a_nᵀx) + ε)`; values lie in `(0, 1/ε]`.
pub fn update_weights(x: &[f64], dataset: &ComparisonDataset, epsilon: f64) -> Result<WeightVector> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(WeightVector(
        dataset
            .entries()
            .iter()
            .map(|c| 1.0 / (softplus(1.0 - c.margin(x)) + epsilon))
            .collect(),
    ))
}

/// Stabilized weights, or an empty band around 1.
pub fn outer_converged(history: &[WeightVector], band: (f64, f64), stab_tol: f64) -> bool {
    let [.., previous, latest] = history else {
        return false;
    };
    if latest.max_relative_change(previous) < stab_tol {
        return true;
    }
    !latest.values().iter().any(|&w| w > band.0 && w < band.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub eps_in: f64,
    pub lambda: f64,
    pub max_iters: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            eps_in: DEFAULT_EPS_IN,
            lambda: 1.0,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PDRankConfig {
    /// Smoothing `ε`; final weights are capped at `1/ε`.
    pub epsilon: f64,
    pub gamma: f64,
    pub max_outer_iters: usize,
    /// Relative weight change under which the outer loop stops.
    pub stab_tol: f64,
    /// Open interval around 1; the loop stops once no weight falls inside.
    pub band: (f64, f64),
    pub inner: InnerConfig,
}

impl Default for PDRankConfig {
    fn default() -> Self {
        PDRankConfig {
            epsilon: 1e-3,
            gamma: DEFAULT_GAMMA,
            max_outer_iters: 30,
            stab_tol: 1e-3,
            band: (0.5, 2.0),
            inner: InnerConfig::default(),
        }
    }
}

impl PDRankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.band.0 < 1.0 && self.band.1 > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "band ({}, {}) must straddle 1",
                self.band.0, self.band.1
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter("max_outer_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One outer step: surrogate value under the step's weights before and after the solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub inner_iters: usize,
    pub max_weight_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PDRankResult {
    pub scores: RankScores,
    pub ranking: Ranking,
    /// Final weights, one per dataset entry.
    pub confidence: WeightVector,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    pub steps: Vec<OuterStep>,
    /// Weights after every outer step, starting with `ω⁰ = 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_history: Option<Vec<WeightVector>>,
}

pub fn pd_rank(dataset: &ComparisonDataset, cfg: &PDRankConfig) -> Result<PDRankResult> {
    pd_rank_with_history(dataset, cfg, false)
}

/// [`pd_rank`], optionally keeping every intermediate weight vector.
pub fn pd_rank_with_history(
    dataset: &ComparisonDataset,
    cfg: &PDRankConfig,
    keep_history: bool,
) -> Result<PDRankResult> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let inner = PdhgConfig::for_dataset(dataset, cfg.inner.eps_in)?
        .with_lambda(cfg.inner.lambda)?
        .with_max_iters(cfg.inner.max_iters);

    let mut x = vec![0.0; dataset.num_items()];
    let mut weights = WeightVector::ones(dataset.len());
    // only the last two iterates are needed for the stopping test
    let mut window: Vec<WeightVector> = vec![weights.clone()];
    let mut history = keep_history.then(|| vec![weights.clone()]);
    let mut steps = Vec::new();
    let mut inner_iters = 0;
    let mut converged = false;

    for _ in 0..cfg.max_outer_iters {
        let before = subproblem_cost(&x, dataset, &weights, cfg.gamma);
        let sol = pdhg_solve(dataset, &weights, cfg.gamma, &inner, Some(&x), None)?;
        x = sol.scores.0;
        inner_iters += sol.trace.iterations();
        let after = subproblem_cost(&x, dataset, &weights, cfg.gamma);

        let next = update_weights(&x, dataset, cfg.epsilon)?;
        steps.push(OuterStep {
            surrogate_before: before,
            surrogate_after: after,
            inner_iters: sol.trace.iterations(),
            max_weight_change: next.max_relative_change(&weights),
        });
        if let Some(h) = history.as_mut() {
            h.push(next.clone());
        }
        window.push(next.clone());
        if window.len() > 2 {
            window.remove(0);
        }
        weights = next;
        if outer_converged(&window, cfg.band, cfg.stab_tol) {
            converged = true;
            break;
        }
    }

    let scores = RankScores(x);
    Ok(PDRankResult {
        ranking: scores.to_ranking()?,
        scores,
        confidence: weights,
        outer_iters: steps.len(),
        inner_iters,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged,
        steps,
        weight_history: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub item_i: String,
    pub item_j: String,
    pub label: i8,
    pub multiplicity: u64,
    pub omega: f64,
    /// Whether the label agrees with the ground truth, when supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Share of the pair's observations (both directions) carrying the correct label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_correct_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub rows: Vec<ConfidenceRow>,
}

/// Per-entry final weights, with correctness flags when the truth is known.
pub fn confidence_report(
    result: &PDRankResult,
    dataset: &ComparisonDataset,
    items: &ItemIndex,
    truth: Option<&GroundTruth>,
) -> Result<ConfidenceReport> {
    if result.confidence.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            got: result.confidence.len(),
        });
    }
    let mut pair_totals: BTreeMap<(usize, usize), (u64, u64)> = BTreeMap::new();
    if let Some(t) = truth {
        for c in dataset.entries() {
            let key = (c.i.min(c.j), c.i.max(c.j));
            let tally = pair_totals.entry(key).or_default();
            tally.1 += c.multiplicity;
            if c.label == t.true_label(c.i, c.j) {
                tally.0 += c.multiplicity;
            }
        }
    }
    let rows = dataset
        .entries()
        .iter()
        .zip(result.confidence.values())
        .map(|(c, &omega)| {
            let (correct, ratio) = match truth {
                Some(t) => {
                    let (ok, total) = pair_totals[&(c.i.min(c.j), c.i.max(c.j))];
                    (Some(c.label == t.true_label(c.i, c.j)), Some(ok as f64 / total as f64))
                }
                None => (None, None),
            };
            ConfidenceRow {
                item_i: items.name(c.i).to_string(),
                item_j: items.name(c.j).to_string(),
                label: c.label.as_i8(),
                multiplicity: c.multiplicity,
                omega,
                correct,
                pair_correct_ratio: ratio,
            }
        })
        .collect();
    Ok(ConfidenceReport { rows })
}

impl ConfidenceReport {
    /// Columns `item_i,item_j,label,multiplicity,omega,correct,pair_correct_ratio`;
    /// the last two are empty without ground truth.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "item_i",
            "item_j",
            "label",
            "multiplicity",
            "omega",
            "correct",
            "pair_correct_ratio",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.item_i.clone(),
                r.item_j.clone(),
                r.label.to_string(),
                r.multiplicity.to_string(),
                r.omega.to_string(),
                r.correct.map(|b| b.to_string()).unwrap_or_default(),
                r.pair_correct_ratio.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<confidence writer>", e))?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}
