//! Items, pairwise comparisons and the signed-comparison transform.
//!
//! A comparison between items `i` and `j` with label `y` is stored as the
//! sparse row `a = y (e_i - e_j)`, so `a . x > 0` exactly when the scores `x`
//! agree with the observed label.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed label: `Above` means item `i` ranks above item `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Above,
    Below,
}

impl Label {
    pub fn from_sign(y: i64) -> Option<Self> {
        match y {
            1 => Some(Label::Above),
            -1 => Some(Label::Below),
            _ => None,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Above => 1.0,
            Label::Below => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Above => 1,
            Label::Below => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Above => Label::Below,
            Label::Below => Label::Above,
        }
    }
}

/// One raw observation before compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub i: usize,
    pub j: usize,
    pub label: Label,
}

impl Observation {
    pub fn new(i: usize, j: usize, label: Label) -> Self {
        Observation { i, j, label }
    }
}

/// A unique judgment with the number of times it was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub i: usize,
    pub j: usize,
    pub label: Label,
    pub multiplicity: u64,
}

impl Comparison {
    /// The item the label places on top.
    pub fn winner(&self) -> usize {
        match self.label {
            Label::Above => self.i,
            Label::Below => self.j,
        }
    }

    pub fn loser(&self) -> usize {
        match self.label {
            Label::Above => self.j,
            Label::Below => self.i,
        }
    }

    pub fn signed_row(&self) -> SignedRow {
        SignedRow {
            i: self.i,
            j: self.j,
            sign: self.label.sign(),
        }
    }

    /// `a . x = y (x[i] - x[j])`.
    #[inline]
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.label.sign() * (x[self.i] - x[self.j])
    }
}

/// Sparse row `a = sign (e_i - e_j)` of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedRow {
    pub i: usize,
    pub j: usize,
    pub sign: f64,
}

impl SignedRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.sign * (x[self.i] - x[self.j])
    }

    pub fn to_dense(&self, num_items: usize) -> Vec<f64> {
        let mut row = vec![0.0; num_items];
        row[self.i] = self.sign;
        row[self.j] = -self.sign;
        row
    }
}

/// `M` items and the signed comparisons observed among them.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDataset {
    num_items: usize,
    entries: Vec<Comparison>,
}

impl ComparisonDataset {
    /// Merges coherent observations of the same pair into one entry.
    ///
    /// Entries are canonicalized to `i < j` and sorted, so the result does not
    /// depend on the order of `raw`. Opposite judgments on one pair stay separate.
    pub fn compress(num_items: usize, raw: &[Observation]) -> Result<Self> {
        let mut counts: HashMap<(usize, usize, Label), u64> = HashMap::new();
        for (row, obs) in raw.iter().enumerate() {
            validate_pair(row, obs.i, obs.j, num_items)?;
            let key = canonical(obs.i, obs.j, obs.label);
            *counts.entry(key).or_insert(0) += 1;
        }
        Ok(Self::from_counts(num_items, counts))
    }

    /// Like [`compress`](Self::compress) for rows that already carry a count.
    pub fn compress_counted(num_items: usize, raw: &[(Observation, u64)]) -> Result<Self> {
        let mut counts: HashMap<(usize, usize, Label), u64> = HashMap::new();
        for (row, (obs, count)) in raw.iter().enumerate() {
            validate_pair(row, obs.i, obs.j, num_items)?;
            if *count == 0 {
                return Err(Error::InvalidCount { row, count: "0".into() });
            }
            *counts.entry(canonical(obs.i, obs.j, obs.label)).or_insert(0) += count;
        }
        Ok(Self::from_counts(num_items, counts))
    }

    /// One unit-multiplicity entry per observation, in input order, without merging.
    pub fn uncompressed(num_items: usize, raw: &[Observation]) -> Result<Self> {
        let mut entries = Vec::with_capacity(raw.len());
        for (row, obs) in raw.iter().enumerate() {
            validate_pair(row, obs.i, obs.j, num_items)?;
            entries.push(Comparison {
                i: obs.i,
                j: obs.j,
                label: obs.label,
                multiplicity: 1,
            });
        }
        Ok(ComparisonDataset { num_items, entries })
    }

    fn from_counts(num_items: usize, counts: HashMap<(usize, usize, Label), u64>) -> Self {
        let mut entries: Vec<Comparison> = counts
            .into_iter()
            .map(|((i, j, label), multiplicity)| Comparison {
                i,
                j,
                label,
                multiplicity,
            })
            .collect();
        entries.sort_by_key(|c| (c.i, c.j, c.label));
        ComparisonDataset { num_items, entries }
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn entries(&self) -> &[Comparison] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of observations, `N`.
    pub fn total_observations(&self) -> u64 {
        self.entries.iter().map(|c| c.multiplicity).sum()
    }

    pub fn max_multiplicity(&self) -> u64 {
        self.entries.iter().map(|c| c.multiplicity).max().unwrap_or(0)
    }

    /// Number of entries touching each item.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for c in &self.entries {
            deg[c.i] += 1;
            deg[c.j] += 1;
        }
        deg
    }

    /// `y = A x`, one value per entry.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.num_items);
        debug_assert_eq!(out.len(), self.entries.len());
        for (o, c) in out.iter_mut().zip(&self.entries) {
            *o = c.margin(x);
        }
    }

    /// `out = A^T v`.
    pub fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.entries.len());
        debug_assert_eq!(out.len(), self.num_items);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, &vn) in self.entries.iter().zip(v) {
            let s = c.label.sign() * vn;
            out[c.i] += s;
            out[c.j] -= s;
        }
    }
}

fn canonical(i: usize, j: usize, label: Label) -> (usize, usize, Label) {
    if i < j {
        (i, j, label)
    } else {
        (j, i, label.flip())
    }
}

fn validate_pair(row: usize, i: usize, j: usize, num_items: usize) -> Result<()> {
    for index in [i, j] {
        if index >= num_items {
            return Err(Error::IndexOutOfRange { row, index, num_items });
        }
    }
    if i == j {
        return Err(Error::SelfComparison { row, index: i });
    }
    Ok(())
}

/// Dense score vector `x`, one entry per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScores(pub Vec<f64>);

impl RankScores {
    pub fn zeros(num_items: usize) -> Self {
        RankScores(vec![0.0; num_items])
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

    pub fn to_ranking(&self) -> Result<Ranking> {
        scores_to_ranking(&self.0)
    }
}

/// Item indices, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &item in &order {
            if item >= order.len() || seen[item] {
                return Err(Error::Format(format!("not a permutation of 0..{}", order.len())));
            }
            seen[item] = true;
        }
        Ok(Ranking(order))
    }

    pub fn identity(num_items: usize) -> Self {
        Ranking((0..num_items).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `positions()[item]` is the item's place in the order (0 = best).
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (p, &item) in self.0.iter().enumerate() {
            pos[item] = p;
        }
        pos
    }

    pub fn reversed(&self) -> Self {
        Ranking(self.0.iter().rev().copied().collect())
    }

    /// Number of observations whose label the order violates.
    pub fn zero_one_cost(&self, dataset: &ComparisonDataset) -> u64 {
        let pos = self.positions();
        dataset
            .entries()
            .iter()
            .filter(|c| pos[c.winner()] > pos[c.loser()])
            .map(|c| c.multiplicity)
            .sum()
    }
}

/// Sorts items by descending score; exact ties go to the lower index.
pub fn scores_to_ranking(x: &[f64]) -> Result<Ranking> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    Ok(Ranking(order))
}

/// Dense mapping between external item names and indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemIndex {
    names: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl ItemIndex {
    pub fn from_names(names: Vec<String>) -> Self {
        let lookup = names.iter().enumerate().map(|(k, n)| (n.clone(), k)).collect();
        ItemIndex { names, lookup }
    }

    /// Items named by their index, `"0"`, `"1"`, ...
    pub fn numeric(num_items: usize) -> Self {
        Self::from_names((0..num_items).map(|k| k.to_string()).collect())
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&k) = self.lookup.get(name) {
            return k;
        }
        let k = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), k);
        k
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Reads `item_i,item_j,label[,count]` rows. Items are indexed in order of
/// first appearance.
pub fn read_comparisons_csv<R: Read>(reader: R) -> Result<(ComparisonDataset, ItemIndex)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_lowercase).collect();
    let expected = ["item_i", "item_j", "label"];
    if headers.len() < 3 || headers[..3] != expected {
        return Err(Error::Format(format!(
            "header must start with item_i,item_j,label; got {}",
            headers.join(",")
        )));
    }
    let has_count = match headers.get(3).map(String::as_str) {
        Some("count") => true,
        Some(other) => return Err(Error::Format(format!("unexpected column {other:?}"))),
        None => false,
    };

    let mut items = ItemIndex::default();
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = row + 2;
        let field = |k: usize| record.get(k).unwrap_or("");
        let (a, b, raw_label) = (field(0), field(1), field(2));
        if a.is_empty() || b.is_empty() {
            return Err(Error::Format(format!("line {line}: empty item name")));
        }
        let label = match raw_label.parse::<i64>() {
            Ok(0) => return Err(Error::TieLabel { row: line }),
            Ok(y) => Label::from_sign(y),
            Err(_) => None,
        }
        .ok_or_else(|| Error::InvalidLabel {
            row: line,
            label: raw_label.to_string(),
        })?;
        let count = if has_count {
            let raw = field(3);
            match raw.parse::<u64>() {
                Ok(c) if c > 0 => c,
                _ => {
                    return Err(Error::InvalidCount {
                        row: line,
                        count: raw.to_string(),
                    })
                }
            }
        } else {
            1
        };
        let i = items.intern(a);
        let j = items.intern(b);
        if i == j {
            return Err(Error::SelfComparison { row: line, index: i });
        }
        rows.push((Observation::new(i, j, label), count));
    }
    let dataset = ComparisonDataset::compress_counted(items.len(), &rows)?;
    Ok((dataset, items))
}

/// Writes the dataset in the ingestion format, with a `count` column.
pub fn write_comparisons_csv<W: Write>(writer: W, dataset: &ComparisonDataset, items: &ItemIndex) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["item_i", "item_j", "label", "count"])?;
    for c in dataset.entries() {
        wtr.write_record([
            items.name(c.i),
            items.name(c.j),
            &c.label.as_i8().to_string(),
            &c.multiplicity.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
