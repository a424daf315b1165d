//! Command-line surface for the causal-gcn pipeline.
//!
//! Subcommands: `simulate` (synthetic cohort with oracle ground truth),
//! `run` (train, estimate per-node effects, write artifacts), `rank`
//! (top of the effect table) and `report` (full run summary).
//!
//! Conventions: human-readable tables go to standard output, progress
//! and warnings to standard error, machine artifacts only to files.
//! Exit codes: 0 success, 2 usage/data/config problems, 3 numeric
//! failure inside the model machinery.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use causal_gcn_core::graph_data::{fmt_float, load_cohort, write_cohort, CLASS_NAMES};
use causal_gcn_core::inference::{
    run_pipeline, write_artifacts, Conditioning, RunConfig, RunReport,
};
use causal_gcn_core::intervention::SeverMode;
use causal_gcn_core::synth_scm::{generate_cohort, preset, ScmSpec};
use causal_gcn_core::{CoreError, Result};

const AD_CLASS: usize = causal_gcn_core::graph_data::AD_CLASS;

#[derive(Parser)]
#[command(
    name = "causal-gcn",
    version,
    about = "Per-node causal effect estimation for shared-topology graph cohorts",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known interventional ground truth.
    Simulate(SimulateArgs),
    /// Train models, estimate per-node effects and write report artifacts.
    Run(Box<RunArgs>),
    /// Print the top of the effect ranking from a report.json.
    Rank(RankArgs),
    /// Print a full human-readable summary of a report.json.
    Report(ReportArgs),
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimulateArgs {
    /// Built-in generator preset: null | single-cause | confounded.
    #[arg(long, conflicts_with = "scm")]
    preset: Option<String>,
    /// Node count used with --preset.
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    /// JSON file holding a full generator specification (as written to
    /// scm.json by a previous simulate call).
    #[arg(long)]
    scm: Option<PathBuf>,
    /// Number of subjects to draw.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Master seed; with --scm it overrides the seed stored in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "cohort")]
    out: PathBuf,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec: ScmSpec = match (&args.preset, &args.scm) {
        (Some(name), None) => preset(name, args.nodes, args.seed.unwrap_or(42))?,
        (None, Some(path)) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        _ => {
            return Err(CoreError::config(
                "simulate: give exactly one of --preset or --scm",
            ))
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;

    let (dataset, truth) = generate_cohort(&spec, args.n)?;
    std::fs::create_dir_all(&args.out)?;
    write_cohort(&dataset, &args.out)?;

    let mut gt = String::from("node_id,node_name,true_delta,mc_se,x_lo,x_hi\n");
    for j in 0..dataset.n_nodes() {
        gt.push_str(&format!(
            "{},{},{},{},{},{}\n",
            j,
            dataset.node_names[j],
            fmt_float(truth.true_delta[j]),
            fmt_float(truth.mc_se[j]),
            fmt_float(truth.x_lo[j]),
            fmt_float(truth.x_hi[j]),
        ));
    }
    std::fs::write(args.out.join("ground_truth.csv"), gt)?;
    let mut spec_json = serde_json::to_string_pretty(&spec)?;
    spec_json.push('\n');
    std::fs::write(args.out.join("scm.json"), spec_json)?;

    log::info!(
        "simulated {} subjects x {} nodes into {}",
        dataset.n_subjects(),
        dataset.n_nodes(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Copy, Clone, ValueEnum)]
enum ConditioningArg {
    /// Covariate head only; one shared model.
    Implicit,
    /// Per-node adjustment inputs; one model per node.
    Explicit,
}

impl From<ConditioningArg> for Conditioning {
    fn from(v: ConditioningArg) -> Self {
        match v {
            ConditioningArg::Implicit => Conditioning::Implicit,
            ConditioningArg::Explicit => Conditioning::Explicit,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum SeverModeArg {
    /// Renormalize the propagation matrix after removing the node's edges.
    Renormalize,
    /// Keep the original normalization constants.
    Preserve,
}

impl From<SeverModeArg> for SeverMode {
    fn from(v: SeverModeArg) -> Self {
        match v {
            SeverModeArg::Renormalize => SeverMode::Renormalize,
            SeverModeArg::Preserve => SeverMode::Preserve,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding features.csv, covariates.csv, labels.csv and
    /// adjacency.csv (or edges.csv); shorthand for the four path flags.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Features CSV: subject_id plus one column per node.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Covariates CSV: subject_id plus numeric covariates.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Labels CSV: subject_id,label with CN | MCI | AD (or 0 | 1 | 2).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Adjacency CSV: dense p x p table, or src,dst,weight edge list.
    #[arg(long)]
    adjacency: Option<PathBuf>,
    /// Output directory for report artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate config and data, then exit without training.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads (fallback: CAUSAL_GCN_THREADS, then all logical
    /// processors).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flag-level overrides for every config-file key.
#[derive(Args, Default)]
struct Overrides {
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of stratified cross-validation folds.
    #[arg(long)]
    k_folds: Option<usize>,
    /// Back-door adjustment mode.
    #[arg(long, value_enum)]
    conditioning: Option<ConditioningArg>,
    /// Principal components per node-specific adjustment basis.
    #[arg(long)]
    n_components: Option<usize>,
    /// Lower intervention percentile (of the training feature column).
    #[arg(long)]
    pct_lo: Option<f64>,
    /// Upper intervention percentile.
    #[arg(long)]
    pct_hi: Option<f64>,
    /// Bootstrap replicates behind the confidence intervals.
    #[arg(long)]
    n_bootstrap: Option<usize>,
    /// Two-sided miscoverage level for the intervals.
    #[arg(long)]
    alpha: Option<f64>,
    /// Edge-severing flavor for the do-operator.
    #[arg(long, value_enum)]
    sever_mode: Option<SeverModeArg>,
    /// Also train the covariate-only MLP and no-covariate GCN baselines.
    #[arg(long)]
    baselines: Option<bool>,
    /// Also measure the AUC drop when each node is zeroed and severed.
    #[arg(long)]
    ablation: Option<bool>,
    /// Skip folds that fail instead of aborting the run.
    #[arg(long)]
    permissive: Option<bool>,
    /// Absolute edge-weight threshold (conflicts with --target-density).
    #[arg(long)]
    tau: Option<f64>,
    /// Keep the strongest edges up to this off-diagonal density.
    #[arg(long)]
    target_density: Option<f64>,
    /// Width of both graph-convolution layers.
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Width of the covariate embedding.
    #[arg(long)]
    covariate_embed_dim: Option<usize>,
    /// Dropout rate on the graph branch during training.
    #[arg(long)]
    dropout: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 penalty on the weight matrices.
    #[arg(long)]
    ridge: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size (full batch when omitted).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Batch-normalize the graph layers.
    #[arg(long)]
    batchnorm: Option<bool>,
}

/// On-disk run config: one flat JSON object whose keys match the
/// command-line flags. Unknown keys are rejected.
#[derive(Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    features: Option<PathBuf>,
    covariates: Option<PathBuf>,
    labels: Option<PathBuf>,
    adjacency: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    k_folds: Option<usize>,
    conditioning: Option<Conditioning>,
    n_components: Option<usize>,
    pct_lo: Option<f64>,
    pct_hi: Option<f64>,
    n_bootstrap: Option<usize>,
    alpha: Option<f64>,
    sever_mode: Option<SeverMode>,
    baselines: Option<bool>,
    ablation: Option<bool>,
    permissive: Option<bool>,
    tau: Option<f64>,
    target_density: Option<f64>,
    hidden_dim: Option<usize>,
    covariate_embed_dim: Option<usize>,
    dropout: Option<f64>,
    learning_rate: Option<f64>,
    ridge: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    batchnorm: Option<bool>,
}

/// Defaults, overlaid with config-file values, overlaid with flags.
fn merged_config(file: &FileConfig, flags: &Overrides) -> RunConfig {
    let mut cfg = RunConfig::default();
    macro_rules! overlay {
        ($($field:ident),* $(,)?) => {$(
            if let Some(v) = file.$field {
                cfg.$field = v;
            }
            if let Some(v) = flags.$field {
                cfg.$field = v;
            }
        )*};
    }
    overlay!(
        seed,
        k_folds,
        n_components,
        pct_lo,
        pct_hi,
        n_bootstrap,
        alpha,
        baselines,
        ablation,
        permissive,
        hidden_dim,
        covariate_embed_dim,
        dropout,
        learning_rate,
        ridge,
        epochs,
        batchnorm,
    );
    macro_rules! overlay_opt {
        ($($field:ident),* $(,)?) => {$(
            if file.$field.is_some() {
                cfg.$field = file.$field;
            }
            if flags.$field.is_some() {
                cfg.$field = flags.$field;
            }
        )*};
    }
    overlay_opt!(tau, target_density, batch_size);
    if let Some(v) = file.conditioning {
        cfg.conditioning = v;
    }
    if let Some(v) = flags.conditioning {
        cfg.conditioning = v.into();
    }
    if let Some(v) = file.sever_mode {
        cfg.sever_mode = v;
    }
    if let Some(v) = flags.sever_mode {
        cfg.sever_mode = v.into();
    }
    cfg
}

struct DataPaths {
    features: PathBuf,
    covariates: PathBuf,
    labels: PathBuf,
    adjacency: PathBuf,
}

fn resolve_paths(file: &FileConfig, args: &RunArgs) -> Result<DataPaths> {
    let dir = args.data.as_ref();
    let pick = |flag: &Option<PathBuf>, from_file: &Option<PathBuf>, name: &str| {
        flag.clone()
            .or_else(|| from_file.clone())
            .or_else(|| dir.map(|d| d.join(name)))
            .ok_or_else(|| {
                CoreError::config(format!(
                    "run: no {name} given; use --data DIR, --{} or the config file",
                    name.trim_end_matches(".csv")
                ))
            })
    };
    let mut adjacency = pick(&args.adjacency, &file.adjacency, "adjacency.csv")?;
    if args.adjacency.is_none() && file.adjacency.is_none() && !adjacency.exists() {
        if let Some(d) = dir {
            adjacency = d.join("edges.csv");
        }
    }
    Ok(DataPaths {
        features: pick(&args.features, &file.features, "features.csv")?,
        covariates: pick(&args.covariates, &file.covariates, "covariates.csv")?,
        labels: pick(&args.labels, &file.labels, "labels.csv")?,
        adjacency,
    })
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let file: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let config = merged_config(&file, &args.overrides);
    config.validate()?;

    let paths = resolve_paths(&file, args)?;
    let dataset = load_cohort(
        &paths.features,
        &paths.covariates,
        &paths.labels,
        &paths.adjacency,
    )?;
    dataset.validate()?;
    log::info!(
        "cohort: {} subjects, {} nodes, class counts {:?}",
        dataset.n_subjects(),
        dataset.n_nodes(),
        dataset.class_counts()
    );

    if args.dry_run {
        log::info!("dry run: config and data are valid; nothing trained");
        return Ok(());
    }

    let out_dir = args
        .out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    log::info!(
        "running pipeline: {} folds, {:?} conditioning, seed {}",
        config.k_folds,
        config.conditioning,
        config.seed
    );
    let output = run_pipeline(&dataset, &config)?;
    for w in &output.report.warnings {
        log::warn!("{w}");
    }
    write_artifacts(&out_dir, &output)?;
    log::info!("wrote artifacts to {}", out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// rank / report
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RankArgs {
    /// Path to a report.json produced by `run`.
    report: PathBuf,
    /// Number of rows to print (0 = header only; capped at the node count).
    #[arg(long, default_value_t = 15)]
    top: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a report.json produced by `run`.
    report: PathBuf,
}

fn load_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Ranked effect table: 100x|AD contrast| with its interval and, when
/// the ablation probe ran, the matching fold-averaged AUC drop.
fn effect_table(report: &RunReport, top: usize) -> String {
    let level = 100.0 * (1.0 - report.config.alpha);
    let mut out = format!(
        "{:>4}  {:<16} {:>12} {:>24} {:>12}\n",
        "rank",
        "node",
        "100*|dAD|",
        format!("{level:.0}% CI (x100)"),
        "dAUC(self)"
    );
    for e in report.effects.iter().take(top) {
        let ablation = report
            .ablation
            .iter()
            .find(|a| a.node_id == e.node_id)
            .and_then(|a| a.delta_auc);
        out.push_str(&format!(
            "{:>4}  {:<16} {:>12.3} {:>24} {:>12}\n",
            e.rank,
            e.node_name,
            100.0 * e.abs_delta_ad,
            format!(
                "[{:.3}, {:.3}]",
                100.0 * e.ci_lo[AD_CLASS],
                100.0 * e.ci_hi[AD_CLASS]
            ),
            ablation.map(|v| format!("{v:.4}")).unwrap_or_default(),
        ));
    }
    out
}

fn cmd_rank(args: &RankArgs) -> Result<()> {
    let report = load_report(&args.report)?;
    print!("{}", effect_table(&report, args.top));
    Ok(())
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let r = load_report(&args.report)?;
    let mut out = String::new();
    out.push_str(&format!("run summary ({})\n", r.schema_version));
    out.push_str(&format!(
        "subjects: {} ({} {}, {} {}, {} {})\n",
        r.n_subjects,
        r.class_counts[0],
        CLASS_NAMES[0],
        r.class_counts[1],
        CLASS_NAMES[1],
        r.class_counts[2],
        CLASS_NAMES[2],
    ));
    out.push_str(&format!("nodes: {}\n", r.n_nodes));
    let conditioning = match r.config.conditioning {
        Conditioning::Implicit => "implicit",
        Conditioning::Explicit => "explicit",
    };
    out.push_str(&format!(
        "config: seed {}, {} folds, {} conditioning, {} components, B {}, alpha {}\n",
        r.config.seed,
        r.config.k_folds,
        conditioning,
        r.config.n_components,
        r.config.n_bootstrap,
        r.config.alpha,
    ));
    if let Some(t) = &r.threshold {
        out.push_str(&format!(
            "adjacency threshold: tau {:.6}, density {:.4}\n",
            t.tau, t.density
        ));
    }

    out.push_str(&format!(
        "\n{:>4} {:>12} {:>12} {:>12}\n",
        "fold", "AUC(model)", "AUC(mlp)", "AUC(gcn)"
    ));
    for f in &r.folds {
        out.push_str(&format!(
            "{:>4} {:>12} {:>12} {:>12}\n",
            f.fold_id,
            opt4(f.auc_model),
            opt4(f.auc_mlp),
            opt4(f.auc_gcn),
        ));
    }
    let mean = |get: &dyn Fn(&causal_gcn_core::inference::FoldMetrics) -> Option<f64>| {
        let vals: Vec<f64> = r.folds.iter().filter_map(get).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    out.push_str(&format!(
        "{:>4} {:>12} {:>12} {:>12}\n",
        "mean",
        opt4(mean(&|f| f.auc_model)),
        opt4(mean(&|f| f.auc_mlp)),
        opt4(mean(&|f| f.auc_gcn)),
    ));

    out.push_str(&format!(
        "\nconcordance: effect-vs-ablation {}, sign agreement {}, rank stability {}\n",
        opt4(r.concordance.effect_vs_ablation),
        opt4(r.concordance.sign_agreement),
        opt4(r.concordance.rank_stability),
    ));
    out.push_str(&format!("note: {}\n", r.ci_note));
    for w in &r.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push('\n');
    out.push_str(&effect_table(&r, r.effects.len()));
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Builds the global worker pool: --threads beats CAUSAL_GCN_THREADS,
/// and with neither the pool defaults to all logical processors.
fn configure_threads(explicit: Option<usize>) -> Result<()> {
    let n = match explicit {
        Some(n) => Some(n),
        None => match std::env::var("CAUSAL_GCN_THREADS") {
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                CoreError::config(format!(
                    "CAUSAL_GCN_THREADS: cannot parse {raw:?} as a thread count"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CoreError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CoreError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => {
            configure_threads(a.threads)?;
            cmd_run(a)
        }
        Command::Rank(a) => cmd_rank(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
