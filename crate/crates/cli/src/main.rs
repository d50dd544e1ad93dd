use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pdrank::baselines::brute_force_01;
use pdrank::dataset::{read_comparisons_csv, write_comparisons_csv, ItemIndex};
use pdrank::experiment::{emit, run_experiment, run_method, ExperimentSpec, Method, OutputFormat, SCHEMA_VERSION};
use pdrank::reweight::{confidence_report, pd_rank_with_history, PDRankConfig};
use pdrank::synthetic::{generate_bt, generate_toggle, BTGenConfig, ComparisonCount, ToggleNoiseConfig};
use pdrank::{ComparisonDataset, Error};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "pdrank", version, about = "Rank aggregation from noisy pairwise comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the items of one comparison CSV
    Rank(RankArgs),
    /// Generate a synthetic comparison dataset
    Simulate(SimulateArgs),
    /// Run a Monte Carlo experiment described by a JSON spec
    Bench(BenchArgs),
    /// Compare methods against the exact 0-1 loss optimum (at most 8 items)
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Pdrank,
    Borda,
    Bt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pdrank => Method::PdRank,
            MethodArg::Borda => Method::Borda,
            MethodArg::Bt => Method::Bt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

/// Options of `rank`; each may also come from the `--config` JSON file.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RankOptions {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Smoothing epsilon (weights are capped at 1/epsilon)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Inner relative cost-change threshold
    #[arg(long)]
    eps_in: Option<f64>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long)]
    stab_tol: Option<f64>,
    #[arg(long)]
    band_low: Option<f64>,
    #[arg(long)]
    band_high: Option<f64>,
    /// PDHG relaxation in (0, 2)
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    bt_tol: Option<f64>,
    #[arg(long)]
    bt_max_iters: Option<usize>,
    /// Also write the weight vector after every outer iteration
    #[arg(long)]
    #[serde(default)]
    weight_trace: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl RankOptions {
    fn merge(self, file: RankOptions) -> RankOptions {
        RankOptions {
            method: self.method.or(file.method),
            epsilon: self.epsilon.or(file.epsilon),
            gamma: self.gamma.or(file.gamma),
            eps_in: self.eps_in.or(file.eps_in),
            max_outer_iters: self.max_outer_iters.or(file.max_outer_iters),
            max_inner_iters: self.max_inner_iters.or(file.max_inner_iters),
            stab_tol: self.stab_tol.or(file.stab_tol),
            band_low: self.band_low.or(file.band_low),
            band_high: self.band_high.or(file.band_high),
            lambda: self.lambda.or(file.lambda),
            bt_tol: self.bt_tol.or(file.bt_tol),
            bt_max_iters: self.bt_max_iters.or(file.bt_max_iters),
            weight_trace: self.weight_trace || file.weight_trace,
            format: self.format.or(file.format),
        }
    }

    fn pdrank_config(&self) -> PDRankConfig {
        let mut cfg = PDRankConfig::default();
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.eps_in {
            cfg.inner.eps_in = v;
        }
        if let Some(v) = self.max_outer_iters {
            cfg.max_outer_iters = v;
        }
        if let Some(v) = self.max_inner_iters {
            cfg.inner.max_iters = v;
        }
        if let Some(v) = self.stab_tol {
            cfg.stab_tol = v;
        }
        if let Some(v) = self.band_low {
            cfg.band.0 = v;
        }
        if let Some(v) = self.band_high {
            cfg.band.1 = v;
        }
        if let Some(v) = self.lambda {
            cfg.inner.lambda = v;
        }
        cfg
    }
}

#[derive(Args)]
struct RankArgs {
    /// Comparison CSV: item_i,item_j,label[,count]
    #[arg(long, short)]
    input: PathBuf,
    /// Output directory; prints a JSON summary to stdout when absent
    #[arg(long, short)]
    out_dir: Option<PathBuf>,
    /// JSON file with any of the options below
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: RankOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Toggle,
    Bt,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateOptions {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    items: Option<usize>,
    /// Toggle probability (toggle model)
    #[arg(long)]
    delta: Option<f64>,
    /// Number of comparisons as a multiple of m(m-1)/2
    #[arg(long, conflicts_with = "comparisons")]
    standard_trials: Option<f64>,
    /// Absolute number of comparisons
    #[arg(long)]
    comparisons: Option<usize>,
    #[arg(long)]
    score_low: Option<f64>,
    #[arg(long)]
    score_high: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output CSV; the ground truth goes to the same path with a .json extension
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: SimulateOptions,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Base seed; trial t uses seed + t
    #[arg(long)]
    seed: u64,
    #[arg(long, short, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "results")]
    name: String,
    #[arg(long, value_enum, default_value = "both")]
    format: FormatArg,
    /// Worker threads (0 = all cores); overrides the spec
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: RankOptions,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::Diverged { .. } | Error::StepSize(_) | Error::ProxNotConverged { .. }) => {
                EXIT_DIVERGED
            }
            CliError::Lib(Error::InvalidParameter(_)) => EXIT_USAGE,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Rank(args) => cmd_rank(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> CliResult<(ComparisonDataset, ItemIndex)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let loaded = read_comparisons_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    if loaded.0.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    Ok(loaded)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e).into())
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| Error::io(path, e).into())
}

#[derive(Serialize)]
struct RankSummary<'a> {
    schema_version: u32,
    method: &'static str,
    items: &'a [String],
    scores: &'a [f64],
    ranking: Vec<&'a str>,
    outer_iters: usize,
    inner_iters: usize,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PDRankConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<pdrank::reweight::ConfidenceReport>,
}

fn cmd_rank(args: RankArgs) -> CliResult<()> {
    let file_opts: RankOptions = read_config(args.config.as_deref())?;
    let opts = args.options.merge(file_opts);
    let method: Method = opts.method.unwrap_or(MethodArg::Pdrank).into();
    let cfg = opts.pdrank_config();
    cfg.validate()?;
    let (dataset, items) = load_dataset(&args.input)?;

    let start = std::time::Instant::now();
    let (out, history) = if method == Method::PdRank {
        let r = pd_rank_with_history(&dataset, &cfg, opts.weight_trace)?;
        let history = r.weight_history.clone();
        let out = pdrank::experiment::MethodOutput {
            scores: r.scores.values().to_vec(),
            ranking: r.ranking.clone(),
            outer_iters: r.outer_iters,
            inner_iters: r.inner_iters,
            flags: vec![],
            pdrank: Some(r),
        };
        (out, history)
    } else {
        let out = run_method(
            method,
            &dataset,
            &cfg,
            opts.bt_tol.unwrap_or(1e-9),
            opts.bt_max_iters.unwrap_or(10_000),
        )?;
        (out, None)
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let confidence = match &out.pdrank {
        Some(r) => Some(confidence_report(r, &dataset, &items, None)?),
        None => None,
    };
    let summary = RankSummary {
        schema_version: SCHEMA_VERSION,
        method: method.name(),
        items: items.names(),
        scores: &out.scores,
        ranking: out.ranking.order().iter().map(|&k| items.name(k)).collect(),
        outer_iters: out.outer_iters,
        inner_iters: out.inner_iters,
        wall_time_s,
        converged: out.pdrank.as_ref().map(|r| r.converged),
        config: (method == Method::PdRank).then_some(cfg),
        confidence,
    };

    let Some(dir) = args.out_dir else {
        let stdout = std::io::stdout();
        serde_json::to_writer_pretty(stdout.lock(), &summary).map_err(Error::from)?;
        println!();
        return Ok(());
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let format = opts.format.unwrap_or(FormatArg::Both);

    let scores_path = dir.join("scores.csv");
    let mut w = create(&scores_path)?;
    writeln!(w, "item,score,rank").map_err(|e| Error::io(&scores_path, e))?;
    let pos = out.ranking.positions();
    for (k, score) in out.scores.iter().enumerate() {
        writeln!(w, "{},{},{}", csv_field(items.name(k)), score, pos[k] + 1).map_err(|e| Error::io(&scores_path, e))?;
    }
    finish(w, &scores_path)?;

    if matches!(format, FormatArg::Json | FormatArg::Both) {
        let path = dir.join("result.json");
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &summary).map_err(Error::from)?;
        finish(w, &path)?;
    }
    if let Some(report) = &summary.confidence {
        if matches!(format, FormatArg::Csv | FormatArg::Both) {
            let path = dir.join("confidence.csv");
            let mut w = create(&path)?;
            report.write_csv(&mut w)?;
            finish(w, &path)?;
        }
    }
    if let Some(history) = history {
        let path = dir.join("weights.csv");
        let mut w = create(&path)?;
        writeln!(w, "outer_iter,item_i,item_j,label,omega").map_err(|e| Error::io(&path, e))?;
        for (k, weights) in history.iter().enumerate() {
            for (c, omega) in dataset.entries().iter().zip(weights.values()) {
                writeln!(
                    w,
                    "{k},{},{},{},{omega}",
                    csv_field(items.name(c.i)),
                    csv_field(items.name(c.j)),
                    c.label.as_i8()
                )
                .map_err(|e| Error::io(&path, e))?;
            }
        }
        finish(w, &path)?;
    }
    eprintln!("wrote results to {}", dir.display());
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum SimConfig {
    Toggle(ToggleNoiseConfig),
    Bt(BTGenConfig),
}

#[derive(Serialize)]
struct SimSidecar<'a> {
    schema_version: u32,
    config: SimConfig,
    items: &'a [String],
    true_scores: &'a [f64],
    true_ranking: Vec<&'a str>,
    num_entries: usize,
    num_observations: u64,
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let file: SimulateOptions = read_config(args.config.as_deref())?;
    let o = args.options;
    let model = o.model.or(file.model).unwrap_or(ModelArg::Toggle);
    let items = o
        .items
        .or(file.items)
        .ok_or_else(|| CliError::Usage("--items is required".into()))?;
    let seed = o
        .seed
        .or(file.seed)
        .ok_or_else(|| CliError::Usage("--seed is required".into()))?;
    let comparisons = match (
        o.comparisons.or(file.comparisons),
        o.standard_trials.or(file.standard_trials),
    ) {
        (Some(n), None) => ComparisonCount::Absolute(n),
        (None, Some(t)) => ComparisonCount::StandardTrials(t),
        (None, None) => ComparisonCount::StandardTrials(1.0),
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give either comparisons or standard_trials, not both".into(),
            ))
        }
    };
    let (config, (dataset, truth)) = match model {
        ModelArg::Toggle => {
            let cfg = ToggleNoiseConfig::new(items, o.delta.or(file.delta).unwrap_or(0.1), comparisons, seed);
            let data = generate_toggle(&cfg)?;
            (SimConfig::Toggle(cfg), data)
        }
        ModelArg::Bt => {
            let cfg = BTGenConfig {
                num_items: items,
                score_low: o.score_low.or(file.score_low).unwrap_or(1.0),
                score_high: o.score_high.or(file.score_high).unwrap_or(5.0),
                comparisons,
                seed,
            };
            let data = generate_bt(&cfg)?;
            (SimConfig::Bt(cfg), data)
        }
    };
    let index = ItemIndex::numeric(items);
    let mut w = create(&args.out)?;
    write_comparisons_csv(&mut w, &dataset, &index)?;
    finish(w, &args.out)?;

    let sidecar_path = args.out.with_extension("json");
    let sidecar = SimSidecar {
        schema_version: SCHEMA_VERSION,
        config,
        items: index.names(),
        true_scores: truth.true_scores.values(),
        true_ranking: truth.true_ranking.order().iter().map(|&k| index.name(k)).collect(),
        num_entries: dataset.len(),
        num_observations: dataset.total_observations(),
    };
    let mut w = create(&sidecar_path)?;
    serde_json::to_writer_pretty(&mut w, &sidecar).map_err(Error::from)?;
    finish(w, &sidecar_path)?;
    eprintln!(
        "wrote {} observations ({} entries) to {}",
        dataset.total_observations(),
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let file = File::open(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut spec: ExperimentSpec = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    spec.seed = args.seed;
    if let Some(t) = args.threads {
        spec.threads = t;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    let result = run_experiment(&spec)?;
    let paths = emit(&result, args.format.into(), &args.out_dir, &args.name)?;
    for a in &result.aggregates {
        println!(
            "{:>10} {:>7}  tau {:.4} ± {:.4}  acc {:.4}  time {:.4}s  failures {}",
            a.grid_value,
            a.method.name(),
            a.mean_kendall_tau,
            a.std_kendall_tau,
            a.mean_label_accuracy,
            a.mean_wall_time_s,
            a.failures
        );
    }
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRow {
    method: &'static str,
    ranking: Vec<String>,
    zero_one_cost: u64,
    gap: u64,
}

#[derive(Serialize)]
struct OracleReport {
    optimal_ranking: Vec<String>,
    optimal_cost: u64,
    methods: Vec<OracleRow>,
}

fn cmd_oracle(args: OracleArgs) -> CliResult<()> {
    let file_opts: RankOptions = read_config(args.config.as_deref())?;
    let opts = args.options.merge(file_opts);
    let cfg = opts.pdrank_config();
    cfg.validate()?;
    let (dataset, items) = load_dataset(&args.input)?;
    let (best, cost) = brute_force_01(&dataset)?;
    let names = |order: &[usize]| order.iter().map(|&k| items.name(k).to_string()).collect::<Vec<_>>();
    let mut methods = Vec::new();
    for m in [Method::PdRank, Method::Borda, Method::Bt] {
        let out = run_method(
            m,
            &dataset,
            &cfg,
            opts.bt_tol.unwrap_or(1e-9),
            opts.bt_max_iters.unwrap_or(10_000),
        )?;
        let c = out.ranking.zero_one_cost(&dataset);
        methods.push(OracleRow {
            method: m.name(),
            ranking: names(out.ranking.order()),
            zero_one_cost: c,
            gap: c - cost,
        });
    }
    let report = OracleReport {
        optimal_ranking: names(best.order()),
        optimal_cost: cost,
        methods,
    };
    serde_json::to_writer_pretty(std::io::stdout().lock(), &report).map_err(Error::from)?;
    println!();
    Ok(())
}
