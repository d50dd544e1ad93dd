use crate::dataset::{ComparisonDataset, Label, Ranking};
use crate::error::{Error, Result};
use crate::synthetic::GroundTruth;

/// Kendall's tau `(P - Q) / (P + Q)` between two full rankings.
///
/// Discordant pairs are counted as inversions with a merge sort, so this runs
/// in `O(m log m)`. Rankings of fewer than two items are trivially concordant.
pub fn kendall_tau(r_true: &Ranking, r_pred: &Ranking) -> Result<f64> {
    let m = r_true.len();
    if r_pred.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: r_pred.len(),
        });
    }
    if m < 2 {
        return Ok(1.0);
    }
    let pred_pos = r_pred.positions();
    let mut seq: Vec<usize> = r_true.order().iter().map(|&item| pred_pos[item]).collect();
    let mut buf = vec![0; m];
    let discordant = count_inversions(&mut seq, &mut buf);
    let total = (m as u64) * (m as u64 - 1) / 2;
    let concordant = total - discordant;
    Ok((concordant as f64 - discordant as f64) / total as f64)
}

/// Sorts `v` and returns its number of inversions.
fn count_inversions(v: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = v.split_at_mut(mid);
        count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..])
    };
    let (mut a, mut b, mut k) = (0, mid, 0);
    while a < mid && b < n {
        if v[a] <= v[b] {
            buf[k] = v[a];
            a += 1;
        } else {
            buf[k] = v[b];
            b += 1;
            inv += (mid - a) as u64;
        }
        k += 1;
    }
    buf[k..k + mid - a].copy_from_slice(&v[a..mid]);
    k += mid - a;
    buf[k..k + n - b].copy_from_slice(&v[b..n]);
    v.copy_from_slice(&buf[..n]);
    inv
}

/// Multiplicity-weighted share of observations whose noise-free label the
/// scores reproduce. A zero score difference counts as a miss.
pub fn label_accuracy(x: &[f64], dataset: &ComparisonDataset, truth: &GroundTruth) -> Result<f64> {
    if truth.true_scores.len() != dataset.num_items() {
        return Err(Error::LengthMismatch {
            expected: dataset.num_items(),
            got: truth.true_scores.len(),
        });
    }
    if x.len() != dataset.num_items() {
        return Err(Error::LengthMismatch {
            expected: dataset.num_items(),
            got: x.len(),
        });
    }
    let total = dataset.total_observations();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let hits: u64 = dataset
        .entries()
        .iter()
        .filter(|c| {
            let diff = x[c.i] - x[c.j];
            match truth.true_label(c.i, c.j) {
                Label::Above => diff > 0.0,
                Label::Below => diff < 0.0,
            }
        })
        .map(|c| c.multiplicity)
        .sum();
    Ok(hits as f64 / total as f64)
}
