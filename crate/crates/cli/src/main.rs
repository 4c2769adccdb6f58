use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ginit::datasets::{export_embeddings, save_node_bundle};
use ginit::experiments::{
    init_stats, node_problem, run_coldstart, run_graphcls, run_probe, run_spectrum, run_sweep_depth, DataSource,
    RunConfig, SbmParams, MIN_INIT_SAMPLES, STREAM_INIT,
};
use ginit::graph::{normalize, Normalization};
use ginit::init::InitScheme;
use ginit::linalg::RngStream;
use ginit::model::{train, Metric, ModelState};

#[derive(Parser, Debug)]
#[command(name = "ginit", version, about = "GCN initialization experiments")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds to run, replacing the config's list (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Directory for CSV and JSON reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the report as one JSON document instead of CSV.
    #[arg(long, global = true)]
    json: bool,
    /// Overrides d of every g-init scheme.
    #[arg(long, global = true)]
    ginit_d: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical statistics of one initializer.
    InitStats(InitStatsArgs),
    /// Per-layer variances at init and the variance bounds.
    Probe,
    /// Test accuracy against depth.
    SweepDepth(DepthArgs),
    /// Depth sweep on cold-start data.
    Coldstart(ColdStartArgs),
    /// Graph classification with mean readout.
    Graphcls,
    /// Singular values, s * lambda products and circular-law checks.
    Spectrum,
    /// Writes a synthetic SBM node bundle.
    GenSbm(GenSbmArgs),
    /// Writes hidden representations of one layer as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args, Debug)]
struct InitStatsArgs {
    /// Scheme name, e.g. kaiming-normal or g-init.
    scheme: String,
    #[arg(long)]
    fan: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct DepthArgs {
    /// Depths to sweep, replacing the config's list (comma separated).
    #[arg(long, value_delimiter = ',')]
    depths: Vec<usize>,
}

#[derive(Args, Debug)]
struct ColdStartArgs {
    #[command(flatten)]
    depths: DepthArgs,
    /// Opts in to the cold-start transform.
    #[arg(long)]
    cold_start: bool,
}

#[derive(Args, Debug)]
struct GenSbmArgs {
    #[arg(long, default_value_t = 4)]
    communities: usize,
    #[arg(long, default_value_t = 60)]
    nodes_per_community: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    feature_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Activation index: 0 is the input, `depth` the logits.
    #[arg(long)]
    layer: usize,
    /// Train before exporting.
    #[arg(long)]
    trained: bool,
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Usage(String),
    Run(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

type CmdResult = Result<bool, Failure>;

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("this command needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if !cli.seed.is_empty() {
        cfg.seeds = cli.seed.clone();
    }
    if cli.ginit_d.is_some() {
        cfg.ginit_d = cli.ginit_d;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn first_seed(cli: &Cli) -> u64 {
    cli.seed.first().copied().unwrap_or(0)
}

/// Writes `files` under `--out` and prints the report.
fn emit<T: Serialize>(cli: &Cli, name: &str, report: &T, stdout_csv: &str, files: &[(&str, String)]) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report)?;
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
        for (file, body) in files {
            write(&dir.join(file), body)?;
        }
        write(&dir.join(format!("{name}.json")), &json)?;
    }
    if cli.json {
        println!("{json}");
    } else {
        print!("{stdout_csv}");
    }
    Ok(())
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn cmd_init_stats(cli: &Cli, args: &InitStatsArgs) -> CmdResult {
    let mut scheme: InitScheme = args.scheme.parse().map_err(|e: ginit::Error| Failure::Usage(e.to_string()))?;
    if let (InitScheme::GInit { .. }, Some(d)) = (scheme, cli.ginit_d) {
        scheme = InitScheme::g_init(d).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if args.samples < MIN_INIT_SAMPLES {
        return Err(Failure::Usage(format!("--samples must be at least {MIN_INIT_SAMPLES}")));
    }
    if args.fan == 0 {
        return Err(Failure::Usage("--fan must be positive".into()));
    }
    let r = init_stats(scheme, args.fan, args.samples, first_seed(cli), args.tolerance)?;
    let csv = r.to_csv();
    emit(cli, "init_stats", &r, &csv, &[("init_stats.csv", csv.clone())])?;
    Ok(r.passed)
}

fn cmd_probe(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let r = run_probe(&cfg)?;
    let summary = r.summary_csv();
    emit(cli, "probe", &r, &summary, &[("probe.csv", r.to_csv()), ("probe_summary.csv", summary.clone())])?;
    if let Some(rate) = r.forward_pass_rate {
        log::info!("forward bounds hold for {:.1}% of rows", 100.0 * rate);
    }
    Ok(r.bounds_ok())
}

fn apply_depths(cfg: &mut RunConfig, args: &DepthArgs) -> Result<(), Failure> {
    if !args.depths.is_empty() {
        cfg.depths = Some(args.depths.clone());
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn cmd_sweep_depth(cli: &Cli, args: &DepthArgs) -> CmdResult {
    let mut cfg = load_config(cli)?;
    apply_depths(&mut cfg, args)?;
    let r = run_sweep_depth(&cfg)?;
    let summary = r.summary_csv();
    emit(cli, "sweep_depth", &r, &summary, &[("sweep_depth.csv", r.to_csv()), ("sweep_depth_summary.csv", summary.clone())])?;
    Ok(true)
}

fn cmd_coldstart(cli: &Cli, args: &ColdStartArgs) -> CmdResult {
    let mut cfg = load_config(cli)?;
    if !(args.cold_start || cfg.cold_start) {
        return Err(Failure::Usage(
            "coldstart zeroes unlabeled features; pass --cold-start or set \"cold_start\": true".into(),
        ));
    }
    cfg.cold_start = true;
    apply_depths(&mut cfg, &args.depths)?;
    let r = run_coldstart(&cfg)?;
    let summary = r.summary_csv();
    emit(
        cli,
        "coldstart",
        &r,
        &summary,
        &[
            ("coldstart.csv", r.sweep.to_csv()),
            ("coldstart_depths.csv", r.sweep.summary_csv()),
            ("coldstart_summary.csv", summary.clone()),
        ],
    )?;
    Ok(true)
}

fn cmd_graphcls(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let r = run_graphcls(&cfg)?;
    let summary = r.summary_csv();
    emit(cli, "graphcls", &r, &summary, &[("graphcls.csv", r.to_csv()), ("graphcls_summary.csv", summary.clone())])?;
    Ok(true)
}

fn cmd_spectrum(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let r = run_spectrum(&cfg)?;
    for (seed, lambda) in &r.lambda {
        if lambda.is_none() {
            eprintln!("seed {seed}: spectral gap unavailable above the eigensolver size cap");
        }
    }
    let table = r.to_csv();
    emit(cli, "spectrum", &r, &table, &[("spectrum.csv", table.clone()), ("circular_law.csv", r.circular_csv())])?;
    Ok(true)
}

fn cmd_gen_sbm(cli: &Cli, a: &GenSbmArgs) -> CmdResult {
    let dir = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("gen-sbm needs --out for the bundle directory".into()))?;
    let params = SbmParams {
        communities: a.communities,
        nodes_per_community: a.nodes_per_community,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        feature_noise: a.feature_noise,
        feature_scale: a.feature_scale,
        train_fraction: a.train_fraction,
        val_fraction: a.val_fraction,
    };
    let bundle = node_problem(&DataSource::Sbm(params), first_seed(cli))?;
    save_node_bundle(&bundle, dir)?;
    println!(
        "wrote {} nodes, {} edges to {}",
        bundle.graph.num_nodes(),
        bundle.graph.num_edges(),
        dir.display()
    );
    Ok(true)
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> CmdResult {
    let cfg = load_config(cli)?;
    let dir = cli
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("export-embeddings needs --out".into()))?;
    let seed = cfg.seeds[0];
    let mut bundle = node_problem(&cfg.data, seed)?;
    if cfg.cold_start {
        bundle = ginit::datasets::cold_start(&bundle);
    }
    let scheme = cfg.resolved_schemes()[0];
    let model = cfg.model.node_config(bundle.features.cols(), bundle.num_classes(), cfg.model.depth, scheme)?;
    if a.layer > model.depth() {
        return Err(Failure::Usage(format!("--layer must be at most {}", model.depth())));
    }
    let na = normalize(&bundle.graph, Normalization::Symmetric)?;
    let rng = RngStream::new(seed, STREAM_INIT);
    let mut state = if a.trained {
        let metric = cfg.metric.unwrap_or(Metric::Accuracy);
        train(&model, &na, &bundle.features, None, &bundle.labels, &bundle.masks, metric, &rng)?.1
    } else {
        ModelState::new(&model, &rng)?
    };
    state.forward(&model, &na, &bundle.features, None)?;
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
    let path = dir.join("embeddings.csv");
    export_embeddings(&state, &bundle.labels, a.layer, &path)?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::InitStats(a) => cmd_init_stats(cli, a),
        Command::Probe => cmd_probe(cli),
        Command::SweepDepth(a) => cmd_sweep_depth(cli, a),
        Command::Coldstart(a) => cmd_coldstart(cli, a),
        Command::Graphcls => cmd_graphcls(cli),
        Command::Spectrum => cmd_spectrum(cli),
        Command::GenSbm(a) => cmd_gen_sbm(cli, a),
        Command::ExportEmbeddings(a) => cmd_export(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not failures.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("run completed with assertion violations");
            ExitCode::from(2)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
