//! Reference rankers (Borda count, Bradley-Terry) and exact/independent oracles
//! used to check the solver.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dataset::{scores_to_ranking, ComparisonDataset, RankScores, Ranking};
use crate::error::{Error, Result};
use crate::pdhg::effective_weights;
use crate::prox::sigmoid;
use crate::reweight::WeightVector;

/// Share of each item's observations it won; unobserved items get 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BordaScores(pub Vec<f64>);

pub fn borda(dataset: &ComparisonDataset) -> Result<(BordaScores, Ranking)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = dataset.num_items();
    let mut wins = vec![0u64; m];
    let mut seen = vec![0u64; m];
    for c in dataset.entries() {
        wins[c.winner()] += c.multiplicity;
        seen[c.i] += c.multiplicity;
        seen[c.j] += c.multiplicity;
    }
    let scores: Vec<f64> = wins
        .iter()
        .zip(&seen)
        .map(|(&w, &n)| if n == 0 { 0.5 } else { w as f64 / n as f64 })
        .collect();
    let ranking = scores_to_ranking(&scores)?;
    Ok((BordaScores(scores), ranking))
}

/// Bradley-Terry strengths, normalized to unit geometric mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BTScores {
    pub strengths: Vec<f64>,
    /// Pseudo-counts were added because the win graph was not strongly connected.
    pub regularized: bool,
    pub iterations: usize,
    /// Log-likelihood of the (possibly regularized) tallies after each MM step.
    pub log_likelihoods: Vec<f64>,
}

pub const BT_PSEUDO_COUNT: f64 = 0.1;

struct PairTally {
    i: usize,
    j: usize,
    /// wins of i over j, and of j over i
    wins_i: f64,
    wins_j: f64,
}

fn bt_log_likelihood(pairs: &[PairTally], p: &[f64]) -> f64 {
    pairs
        .iter()
        .map(|t| {
            let s = p[t.i] + p[t.j];
            let mut ll = 0.0;
            if t.wins_i > 0.0 {
                ll += t.wins_i * (p[t.i] / s).ln();
            }
            if t.wins_j > 0.0 {
                ll += t.wins_j * (p[t.j] / s).ln();
            }
            ll
        })
        .sum()
}

/// Every item reachable from item 0 along "beat" edges and along reversed edges.
fn strongly_connected(m: usize, pairs: &[PairTally]) -> bool {
    let mut fwd = vec![Vec::new(); m];
    let mut rev = vec![Vec::new(); m];
    for t in pairs {
        if t.wins_i > 0.0 {
            fwd[t.i].push(t.j);
            rev[t.j].push(t.i);
        }
        if t.wins_j > 0.0 {
            fwd[t.j].push(t.i);
            rev[t.i].push(t.j);
        }
    }
    let reaches_all = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reaches_all(&fwd) && reaches_all(&rev)
}

/// Maximum-likelihood Bradley-Terry fit by minorization-maximization.
///
/// When the MLE does not exist (some item never wins or never loses, or the
/// win graph splits), every pair gets `0.1` pseudo-wins each way and
/// `regularized` is set.
pub fn bt_fit(dataset: &ComparisonDataset, tol: f64, max_iters: usize) -> Result<(BTScores, Ranking)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = dataset.num_items();
    let mut tallies: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for c in dataset.entries() {
        let (lo, hi) = (c.i.min(c.j), c.i.max(c.j));
        let t = tallies.entry((lo, hi)).or_default();
        if c.winner() == lo {
            t.0 += c.multiplicity as f64;
        } else {
            t.1 += c.multiplicity as f64;
        }
    }
    let mut pairs: Vec<PairTally> = tallies
        .iter()
        .map(|(&(i, j), &(wins_i, wins_j))| PairTally { i, j, wins_i, wins_j })
        .collect();
    let regularized = !strongly_connected(m, &pairs);
    if regularized {
        pairs.clear();
        for i in 0..m {
            for j in i + 1..m {
                let (a, b) = tallies.get(&(i, j)).copied().unwrap_or_default();
                pairs.push(PairTally {
                    i,
                    j,
                    wins_i: a + BT_PSEUDO_COUNT,
                    wins_j: b + BT_PSEUDO_COUNT,
                });
            }
        }
    }

    let mut total_wins = vec![0.0; m];
    for t in &pairs {
        total_wins[t.i] += t.wins_i;
        total_wins[t.j] += t.wins_j;
    }

    let mut p = vec![1.0; m];
    let mut ll = bt_log_likelihood(&pairs, &p);
    let mut log_likelihoods = vec![ll];
    let mut denom = vec![0.0; m];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        denom.iter_mut().for_each(|d| *d = 0.0);
        for t in &pairs {
            let n = (t.wins_i + t.wins_j) / (p[t.i] + p[t.j]);
            denom[t.i] += n;
            denom[t.j] += n;
        }
        for k in 0..m {
            if denom[k] > 0.0 {
                p[k] = total_wins[k] / denom[k];
            }
        }
        let log_mean = p.iter().map(|v| v.ln()).sum::<f64>() / m as f64;
        let scale = (-log_mean).exp();
        p.iter_mut().for_each(|v| *v *= scale);

        let next = bt_log_likelihood(&pairs, &p);
        log_likelihoods.push(next);
        let change = ((next - ll) / ll.abs().max(f64::MIN_POSITIVE)).abs();
        ll = next;
        if change < tol {
            break;
        }
    }
    let ranking = scores_to_ranking(&p)?;
    Ok((
        BTScores {
            strengths: p,
            regularized,
            iterations,
            log_likelihoods,
        },
        ranking,
    ))
}

pub const BRUTE_FORCE_MAX_ITEMS: usize = 8;

/// Exact minimizer of the multiplicity-weighted 0-1 loss over all `M!` orders.
///
/// Ties go to the lexicographically first permutation.
pub fn brute_force_01(dataset: &ComparisonDataset) -> Result<(Ranking, u64)> {
    let m = dataset.num_items();
    if m > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::TooManyItems {
            max: BRUTE_FORCE_MAX_ITEMS,
            got: m,
        });
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut pos = vec![0usize; m];
    let mut best = (u64::MAX, perm.clone());
    loop {
        for (p, &item) in perm.iter().enumerate() {
            pos[item] = p;
        }
        let cost: u64 = dataset
            .entries()
            .iter()
            .filter(|c| pos[c.winner()] > pos[c.loser()])
            .map(|c| c.multiplicity)
            .sum();
        if cost < best.0 {
            best = (cost, perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((Ranking::new(best.1)?, best.0))
}

/// Advances to the next lexicographic permutation; false after the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGradientOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ProjectedGradientOptions {
    fn default() -> Self {
        ProjectedGradientOptions {
            tol: 1e-9,
            max_iters: 1_000_000,
        }
    }
}

/// Solves the weighted subproblem by projected gradient descent with
/// backtracking; the projection is mean removal. Stops when the gradient
/// mapping norm drops below `tol`.
///
/// The step is accepted on a gradient-difference (local Lipschitz) test
/// rather than a function-value test, which stalls once cost differences
/// reach rounding level.
pub fn projected_gradient_subproblem(
    dataset: &ComparisonDataset,
    weights: &WeightVector,
    gamma: f64,
    opts: ProjectedGradientOptions,
) -> Result<RankScores> {
    if weights.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            got: weights.len(),
        });
    }
    let m = dataset.num_items();
    let eff = effective_weights(dataset, weights);
    let gradient = |x: &[f64], g: &mut [f64]| {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = 2.0 * gamma * xi;
        }
        for (c, w) in dataset.entries().iter().zip(&eff) {
            let s = -w * sigmoid(1.0 - c.margin(x)) * c.label.sign();
            g[c.i] += s;
            g[c.j] -= s;
        }
    };
    let project = |x: &mut [f64]| {
        let mean = x.iter().sum::<f64>() / m as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    };

    let mut x = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut g_trial = vec![0.0; m];
    let mut step = 1.0;
    gradient(&x, &mut g);
    for _ in 0..opts.max_iters {
        loop {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = xi - step * gi;
            }
            project(&mut trial);
            gradient(&trial, &mut g_trial);
            // accept when the local Lipschitz estimate is below 1/step
            let (mut dx, mut dg) = (0.0, 0.0);
            for k in 0..m {
                dx += (trial[k] - x[k]).powi(2);
                dg += (g_trial[k] - g[k]).powi(2);
            }
            if dg.sqrt() * step <= dx.sqrt() || step < 1e-300 {
                let mapping_norm = dx.sqrt() / step;
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                if mapping_norm < opts.tol {
                    return Ok(RankScores(x));
                }
                break;
            }
            step *= 0.5;
        }
        step *= 2.0;
    }
    Err(Error::IterationCap(opts.max_iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, Observation};
    use approx::assert_relative_eq;

    fn counted(m: usize, rows: &[(usize, usize, i64, u64)]) -> ComparisonDataset {
        let raw: Vec<_> = rows
            .iter()
            .map(|&(i, j, y, k)| (Observation::new(i, j, Label::from_sign(y).unwrap()), k))
            .collect();
        ComparisonDataset::compress_counted(m, &raw).unwrap()
    }

    #[test]
    fn borda_examples() {
        let (s, r) = borda(&counted(2, &[(0, 1, 1, 3)])).unwrap();
        assert_eq!(s.0, vec![1.0, 0.0]);
        assert_eq!(r.order(), &[0, 1]);

        let (s, r) = borda(&counted(2, &[(0, 1, 1, 1), (0, 1, -1, 1)])).unwrap();
        assert_eq!(s.0, vec![0.5, 0.5]);
        assert_eq!(r.order(), &[0, 1]);

        let (s, _) = borda(&counted(3, &[(0, 1, 1, 1), (1, 2, 1, 1), (2, 0, 1, 1)])).unwrap();
        assert_eq!(s.0, vec![0.5, 0.5, 0.5]);

        let (s, _) = borda(&counted(4, &[(0, 1, 1, 1)])).unwrap();
        assert_eq!(s.0[2], 0.5);
        assert_eq!(s.0[3], 0.5);
    }

    #[test]
    fn borda_counts_multiplicity_like_repeats() {
        let a = counted(3, &[(0, 1, 1, 4), (1, 2, -1, 2)]);
        let raw: Vec<_> = std::iter::repeat_n(Observation::new(0, 1, Label::Above), 4)
            .chain(std::iter::repeat_n(Observation::new(1, 2, Label::Below), 2))
            .collect();
        let b = ComparisonDataset::uncompressed(3, &raw).unwrap();
        assert_eq!(borda(&a).unwrap(), borda(&b).unwrap());
    }

    #[test]
    fn bt_two_items_closed_form() {
        let d = counted(2, &[(0, 1, 1, 3), (0, 1, -1, 1)]);
        let (s, r) = bt_fit(&d, 1e-14, 10_000).unwrap();
        assert!(!s.regularized);
        assert_relative_eq!(s.strengths[0] / s.strengths[1], 3.0, epsilon = 1e-8);
        assert_relative_eq!(s.strengths[0] * s.strengths[1], 1.0, epsilon = 1e-12);
        assert_eq!(r.order(), &[0, 1]);
    }

    #[test]
    fn bt_symmetric_data() {
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                rows.push((i, j, 1, 2));
                rows.push((i, j, -1, 2));
            }
        }
        let (s, _) = bt_fit(&counted(4, &rows), 1e-12, 1000).unwrap();
        for v in &s.strengths {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn bt_degenerate_falls_back() {
        let d = counted(3, &[(0, 1, 1, 2), (1, 2, 1, 2)]);
        let (s, r) = bt_fit(&d, 1e-12, 10_000).unwrap();
        assert!(s.regularized);
        assert_eq!(r.order(), &[0, 1, 2]);
        assert!(s.strengths.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn bt_log_likelihood_monotone() {
        let d = counted(
            4,
            &[
                (0, 1, 1, 5),
                (0, 1, -1, 2),
                (1, 2, 1, 4),
                (1, 2, -1, 1),
                (2, 3, 1, 3),
                (2, 3, -1, 2),
                (0, 3, -1, 1),
                (0, 3, 1, 6),
            ],
        );
        let (s, _) = bt_fit(&d, 1e-15, 500).unwrap();
        for w in s.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn brute_force_examples() {
        let (r, c) = brute_force_01(&counted(3, &[(2, 0, 1, 1), (2, 1, 1, 1), (0, 1, 1, 1)])).unwrap();
        assert_eq!((r.order(), c), (&[2usize, 0, 1][..], 0));

        let (r, c) = brute_force_01(&counted(2, &[(0, 1, 1, 2), (0, 1, -1, 1)])).unwrap();
        assert_eq!((r.order(), c), (&[0usize, 1][..], 1));

        // cycle: every order violates exactly one edge; [0,1,2] is first
        let (r, c) = brute_force_01(&counted(3, &[(0, 1, 1, 1), (1, 2, 1, 1), (2, 0, 1, 1)])).unwrap();
        assert_eq!((r.order(), c), (&[0usize, 1, 2][..], 1));

        assert!(matches!(
            brute_force_01(&ComparisonDataset::compress(9, &[]).unwrap()),
            Err(Error::TooManyItems { .. })
        ));
    }

    #[test]
    fn permutations_enumerated_in_order() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn projected_gradient_examples() {
        let d = counted(2, &[(0, 1, 1, 1)]);
        let x = projected_gradient_subproblem(&d, &WeightVector::ones(1), 0.01, Default::default()).unwrap();
        assert!(x.values()[0] > 0.0);
        assert_relative_eq!(x.values()[0], -x.values()[1], epsilon = 1e-12);

        let d = counted(4, &[(0, 1, 1, 1), (1, 2, 1, 1), (2, 3, 1, 1)]);
        let x = projected_gradient_subproblem(&d, &WeightVector::ones(3), 1e3, Default::default()).unwrap();
        assert!(x.values().iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-2);
    }
}
