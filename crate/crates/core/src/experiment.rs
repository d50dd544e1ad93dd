//! Monte Carlo experiment runner and result files.
//!
//! Trial `t` at every grid point uses seed `base_seed + t`, so grid points see
//! the same random draws and any trial can be rerun in isolation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{borda, bt_fit};
use crate::dataset::{ComparisonDataset, ItemIndex, Ranking};
use crate::error::{Error, Result};
use crate::metrics::{kendall_tau, label_accuracy};
use crate::reweight::{confidence_report, pd_rank, ConfidenceReport, PDRankConfig};
use crate::synthetic::{generate_bt, generate_toggle, BTGenConfig, ComparisonCount, GroundTruth, ToggleNoiseConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    PdRank,
    Borda,
    Bt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::PdRank => "pdrank",
            Method::Borda => "borda",
            Method::Bt => "bt",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pdrank" | "pd-rank" => Ok(Method::PdRank),
            "borda" => Ok(Method::Borda),
            "bt" => Ok(Method::Bt),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Toggle {
        num_items: usize,
        delta: f64,
        standard_trials: f64,
    },
    Bt {
        num_items: usize,
        score_low: f64,
        score_high: f64,
        standard_trials: f64,
    },
}

impl GeneratorSpec {
    fn generate(&self, seed: u64) -> Result<(ComparisonDataset, GroundTruth)> {
        match *self {
            GeneratorSpec::Toggle {
                num_items,
                delta,
                standard_trials,
            } => generate_toggle(&ToggleNoiseConfig::new(
                num_items,
                delta,
                ComparisonCount::StandardTrials(standard_trials),
                seed,
            )),
            GeneratorSpec::Bt {
                num_items,
                score_low,
                score_high,
                standard_trials,
            } => generate_bt(&BTGenConfig {
                num_items,
                score_low,
                score_high,
                comparisons: ComparisonCount::StandardTrials(standard_trials),
                seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    StandardTrials,
    Delta,
    NumItems,
    EpsIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_bt_tol() -> f64 {
    1e-9
}

fn default_bt_max_iters() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Base seed; trial `t` uses `seed + t`.
    #[serde(default)]
    pub seed: u64,
    pub sweep: Sweep,
    #[serde(default)]
    pub pdrank: PDRankConfig,
    #[serde(default = "default_bt_tol")]
    pub bt_tol: f64,
    #[serde(default = "default_bt_max_iters")]
    pub bt_max_iters: usize,
    /// Keep the PD-Rank confidence report of trial 0 at each grid point.
    #[serde(default)]
    pub record_confidence: bool,
    /// Worker threads; `0` uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        self.pdrank.validate()?;
        for &value in &self.sweep.values {
            self.at_grid(value)?;
        }
        Ok(())
    }

    /// Generator and PD-Rank config with the sweep axis set to `value`.
    pub fn at_grid(&self, value: f64) -> Result<(GeneratorSpec, PDRankConfig)> {
        let mut gen = self.generator.clone();
        let mut cfg = self.pdrank;
        let bad = || Error::InvalidParameter(format!("sweep value {value} invalid for {:?}", self.sweep.axis));
        match (self.sweep.axis, &mut gen) {
            (SweepAxis::StandardTrials, GeneratorSpec::Toggle { standard_trials, .. })
            | (SweepAxis::StandardTrials, GeneratorSpec::Bt { standard_trials, .. }) => *standard_trials = value,
            (SweepAxis::NumItems, GeneratorSpec::Toggle { num_items, .. })
            | (SweepAxis::NumItems, GeneratorSpec::Bt { num_items, .. }) => {
                if value < 2.0 || value.fract() != 0.0 {
                    return Err(bad());
                }
                *num_items = value as usize;
            }
            (SweepAxis::Delta, GeneratorSpec::Toggle { delta, .. }) => *delta = value,
            (SweepAxis::Delta, GeneratorSpec::Bt { .. }) => return Err(bad()),
            (SweepAxis::EpsIn, _) => {
                if !(value >= 0.0) {
                    return Err(bad());
                }
                cfg.inner.eps_in = value;
            }
        }
        Ok((gen, cfg))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_value: f64,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub kendall_tau: f64,
    pub label_accuracy: f64,
    pub wall_time_s: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// `;`-separated markers: `error:<msg>`, `not_converged`, `bt_regularized`.
    pub flags: String,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.flags.split(';').any(|f| f.starts_with("error"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub grid_value: f64,
    pub method: Method,
    pub trials: usize,
    pub failures: usize,
    pub mean_kendall_tau: f64,
    pub std_kendall_tau: f64,
    pub mean_label_accuracy: f64,
    pub std_label_accuracy: f64,
    pub mean_wall_time_s: f64,
    pub std_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfidence {
    pub grid_value: f64,
    pub trial: usize,
    pub report: ConfidenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    /// Sorted by grid index, method, trial.
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confidence: Vec<TrialConfidence>,
}

impl ExperimentResult {
    pub fn aggregate(&self, grid_value: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.grid_value == grid_value && a.method == method)
    }

    pub fn any_failed(&self) -> bool {
        self.records.iter().any(TrialRecord::failed)
    }
}

/// Ranking and scores produced by one method on one dataset.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub scores: Vec<f64>,
    pub ranking: Ranking,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub flags: Vec<&'static str>,
    pub pdrank: Option<crate::reweight::PDRankResult>,
}

pub fn run_method(
    method: Method,
    dataset: &ComparisonDataset,
    cfg: &PDRankConfig,
    bt_tol: f64,
    bt_max_iters: usize,
) -> Result<MethodOutput> {
    match method {
        Method::PdRank => {
            let r = pd_rank(dataset, cfg)?;
            Ok(MethodOutput {
                scores: r.scores.values().to_vec(),
                ranking: r.ranking.clone(),
                outer_iters: r.outer_iters,
                inner_iters: r.inner_iters,
                flags: if r.converged { vec![] } else { vec!["not_converged"] },
                pdrank: Some(r),
            })
        }
        Method::Borda => {
            let (s, ranking) = borda(dataset)?;
            Ok(MethodOutput {
                scores: s.0,
                ranking,
                outer_iters: 0,
                inner_iters: 0,
                flags: vec![],
                pdrank: None,
            })
        }
        Method::Bt => {
            let (s, ranking) = bt_fit(dataset, bt_tol, bt_max_iters)?;
            Ok(MethodOutput {
                inner_iters: s.iterations,
                flags: if s.regularized { vec!["bt_regularized"] } else { vec![] },
                scores: s.strengths,
                ranking,
                outer_iters: 0,
                pdrank: None,
            })
        }
    }
}

struct TrialOutcome {
    grid_index: usize,
    trial: usize,
    records: Vec<(usize, TrialRecord)>,
    confidence: Option<TrialConfidence>,
}

fn run_trial(spec: &ExperimentSpec, grid_index: usize, trial: usize) -> TrialOutcome {
    let grid_value = spec.sweep.values[grid_index];
    let seed = spec.seed.wrapping_add(trial as u64);
    let blank = |method: Method, flags: String| TrialRecord {
        grid_value,
        method,
        trial,
        seed,
        kendall_tau: f64::NAN,
        label_accuracy: f64::NAN,
        wall_time_s: 0.0,
        outer_iters: 0,
        inner_iters: 0,
        flags,
    };
    let mut outcome = TrialOutcome {
        grid_index,
        trial,
        records: Vec::new(),
        confidence: None,
    };
    let setup = spec
        .at_grid(grid_value)
        .and_then(|(gen, cfg)| gen.generate(seed).map(|data| (data, cfg)));
    let ((dataset, truth), cfg) = match setup {
        Ok(v) => v,
        Err(e) => {
            for (k, &m) in spec.methods.iter().enumerate() {
                outcome.records.push((k, blank(m, format!("error:{e}"))));
            }
            return outcome;
        }
    };
    for (k, &method) in spec.methods.iter().enumerate() {
        let start = Instant::now();
        let result = run_method(method, &dataset, &cfg, spec.bt_tol, spec.bt_max_iters);
        let wall_time_s = start.elapsed().as_secs_f64();
        let record = match result.and_then(|out| {
            let tau = kendall_tau(&truth.true_ranking, &out.ranking)?;
            let acc = label_accuracy(&out.scores, &dataset, &truth)?;
            Ok((out, tau, acc))
        }) {
            Ok((out, tau, acc)) => {
                if spec.record_confidence && trial == 0 {
                    if let Some(r) = &out.pdrank {
                        let items = ItemIndex::numeric(dataset.num_items());
                        if let Ok(report) = confidence_report(r, &dataset, &items, Some(&truth)) {
                            outcome.confidence = Some(TrialConfidence {
                                grid_value,
                                trial,
                                report,
                            });
                        }
                    }
                }
                TrialRecord {
                    kendall_tau: tau,
                    label_accuracy: acc,
                    wall_time_s,
                    outer_iters: out.outer_iters,
                    inner_iters: out.inner_iters,
                    flags: out.flags.join(";"),
                    ..blank(method, String::new())
                }
            }
            Err(e) => TrialRecord {
                wall_time_s,
                ..blank(method, format!("error:{e}"))
            },
        };
        outcome.records.push((k, record));
    }
    outcome
}

/// Mean and sample standard deviation, summed in slice order.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(spec: &ExperimentSpec, records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &grid_value in &spec.sweep.values {
        for &method in &spec.methods {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.grid_value == grid_value && r.method == method && !r.failed())
                .collect();
            let col = |f: fn(&TrialRecord) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (mt, st) = col(|r| r.kendall_tau);
            let (ma, sa) = col(|r| r.label_accuracy);
            let (mw, sw) = col(|r| r.wall_time_s);
            out.push(Aggregate {
                grid_value,
                method,
                trials: spec.trials,
                failures: spec.trials - rows.len(),
                mean_kendall_tau: mt,
                std_kendall_tau: st,
                mean_label_accuracy: ma,
                std_label_accuracy: sa,
                mean_wall_time_s: mw,
                std_wall_time_s: sw,
            });
        }
    }
    out
}

/// Runs every (grid point, trial) task on a pool of worker threads.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = (0..spec.sweep.values.len())
        .flat_map(|g| (0..spec.trials).map(move |t| (g, t)))
        .collect();
    let threads = match spec.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(tasks.len())
    .max(1);

    let next = AtomicUsize::new(0);
    let outcomes = Mutex::new(Vec::with_capacity(tasks.len()));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(g, t)) = tasks.get(k) else { break };
                let outcome = run_trial(spec, g, t);
                outcomes.lock().expect("worker panicked").push(outcome);
            });
        }
    });
    let mut outcomes = outcomes.into_inner().expect("worker panicked");
    outcomes.sort_by_key(|o| (o.grid_index, o.trial));

    let mut keyed: Vec<((usize, usize, usize), TrialRecord)> = Vec::new();
    let mut confidence = Vec::new();
    for o in outcomes {
        for (k, r) in o.records {
            keyed.push(((o.grid_index, k, o.trial), r));
        }
        confidence.extend(o.confidence);
    }
    keyed.sort_by_key(|(key, _)| *key);
    let records: Vec<TrialRecord> = keyed.into_iter().map(|(_, r)| r).collect();
    let aggregates = aggregate(spec, &records);
    Ok(ExperimentResult {
        schema_version: SCHEMA_VERSION,
        spec_hash: spec.hash(),
        spec: spec.clone(),
        records,
        aggregates,
        confidence,
    })
}

pub const CSV_COLUMNS: [&str; 10] = [
    "grid_value",
    "method",
    "trial",
    "seed",
    "kendall_tau",
    "label_accuracy",
    "wall_time_s",
    "outer_iters",
    "inner_iters",
    "flags",
];

pub fn write_records_csv<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(CSV_COLUMNS)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<records writer>", e))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if headers != CSV_COLUMNS {
        return Err(Error::Format(format!(
            "unexpected result columns: {}",
            headers.join(",")
        )));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_result_json<W: Write>(writer: W, result: &ExperimentResult) -> Result<()> {
    serde_json::to_writer_pretty(writer, result)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

/// Writes `<stem>.csv` and/or `<stem>.json` into `dir`; returns the paths written.
pub fn emit(
    result: &ExperimentResult,
    format: OutputFormat,
    dir: &Path,
    stem: &str,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let path = dir.join(format!("{stem}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_records_csv(std::io::BufWriter::new(file), &result.records)?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let path = dir.join(format!("{stem}.json"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_result_json(&mut w, result)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Grid value → method → mean tau; handy for quick summaries.
pub fn tau_table(result: &ExperimentResult) -> BTreeMap<String, BTreeMap<Method, f64>> {
    let mut table: BTreeMap<String, BTreeMap<Method, f64>> = BTreeMap::new();
    for a in &result.aggregates {
        table
            .entry(a.grid_value.to_string())
            .or_default()
            .insert(a.method, a.mean_kendall_tau);
    }
    table
}
