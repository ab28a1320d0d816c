use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::warn;
use tracing_subscriber::EnvFilter;
use usagegraph_core::eval::{
    click_position_report, generate_synthetic, read_search_log, simulate_click_positions, split_and_sample,
    sweep, ClickGrouping, ClickPositionRow, ClickSimulation, EvalError, HeldoutPolicy, SplitMode, SplitSpec,
    SweepGrid, SyntheticSpec,
};
use usagegraph_core::export::node_link;
use usagegraph_core::rerank::{validate_alpha, BaseScoring, OriginalResult};
use usagegraph_core::scoring::MAX_DEPTH;
use usagegraph_core::{recommend, rerank, Graph, InteractionEvent, RerankRequest, ScoringParams, ValidationError, Weighting};
use usagegraph_service::{Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "usagegraph", version, about = "Usage-graph personalization: serve, score, re-rank, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Build a graph from events and write a snapshot.
    Import(ImportArgs),
    /// Print a user's recommendation list as JSON.
    Recommend(RecommendArgs),
    /// Re-rank item ids read from stdin, one per line.
    Rerank(RerankArgs),
    /// Hit-rate sweep over scoring parameters; writes CSV.
    EvalSweep(SweepArgs),
    /// Mean click positions from a search log, or simulated from events.
    EvalClicks(ClicksArgs),
    /// Generate a community-structured synthetic event log.
    GenSynthetic(SyntheticArgs),
    /// Write the graph as node-link JSON.
    ExportGraph(ExportArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `listen` from the config file.
    #[arg(long)]
    listen: Option<String>,
    /// Overrides `snapshot_path` from the config file.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// NDJSON events to bulk-load before serving.
    #[arg(long)]
    import: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    events: PathBuf,
    /// Snapshot to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GraphSource {
    /// NDJSON event file.
    #[arg(long, required_unless_present = "snapshot", conflicts_with = "snapshot")]
    events: Option<PathBuf>,
    /// Graph snapshot written by `import`.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoringArgs {
    #[arg(long, default_value_t = 3)]
    depth: u32,
    #[arg(long)]
    max_usages: Option<usize>,
    #[arg(long, default_value = "constant")]
    weighting: String,
    #[arg(long)]
    as_of: Option<i64>,
    #[arg(long)]
    limit: Option<usize>,
}

impl ScoringArgs {
    fn params(&self) -> Result<ScoringParams> {
        let params = ScoringParams {
            depth: self.depth,
            max_usages: self.max_usages,
            weighting: self.weighting.parse::<Weighting>()?,
            as_of: self.as_of,
            max_results: self.limit,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long)]
    user: String,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    source: GraphSource,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[arg(long)]
    user: String,
    #[arg(long)]
    alpha: f64,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    source: GraphSource,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    SingleCut,
    RandomTime,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeldoutArg {
    NewItems,
    AllItems,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    events: PathBuf,
    /// Cut timestamp; defaults to two thirds of the way through the log.
    #[arg(long)]
    cut: Option<i64>,
    #[arg(long, default_value_t = 50)]
    sample_size: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "single-cut")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "new-items")]
    heldout: HeldoutArg,
}

impl SplitArgs {
    fn spec(&self, events: &[InteractionEvent]) -> Result<SplitSpec> {
        let cut_ts = match self.cut {
            Some(cut) => cut,
            None => {
                let min = events.iter().map(|e| e.ts).min().context("event log is empty")?;
                let max = events.iter().map(|e| e.ts).max().expect("non-empty");
                min + (max - min) * 2 / 3
            }
        };
        Ok(SplitSpec {
            cut_ts,
            sample_size: self.sample_size,
            seed: self.seed,
            repetitions: self.repetitions,
            mode: match self.mode {
                ModeArg::SingleCut => SplitMode::SingleCut,
                ModeArg::RandomTime => SplitMode::RandomTime,
            },
            heldout: match self.heldout {
                HeldoutArg::NewItems => HeldoutPolicy::NewItems,
                HeldoutArg::AllItems => HeldoutPolicy::AllItems,
            },
        })
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    split: SplitArgs,
    /// Seconds of history before the cut, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    time_frames: Vec<String>,
    /// Per-user usage windows, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "25,50,75,100,125,150,175,200")]
    usage_windows: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    depths: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "constant,log,normalized,log_normalized")]
    weightings: Vec<String>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupArg {
    Method,
    Alpha,
}

#[derive(Debug, Args)]
struct ClicksArgs {
    /// Search log (NDJSON) to summarize.
    #[arg(long, required_unless_present = "events", conflicts_with = "events")]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "method")]
    group_by: GroupArg,
    /// Simulate clicks on held-out items instead of reading a log.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    cut: Option<i64>,
    #[arg(long, default_value_t = 50)]
    sample_size: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    depth: u32,
    #[arg(long, default_value_t = 20)]
    list_len: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.5,0.6,0.9,1")]
    alphas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 2)]
    communities: usize,
    #[arg(long, default_value_t = 50)]
    users_per: usize,
    #[arg(long, default_value_t = 100)]
    items_per: usize,
    #[arg(long, default_value_t = 30)]
    interactions_per_user: usize,
    #[arg(long, default_value_t = 0.05)]
    crossover: f64,
    #[arg(long, default_value_t = 1.0)]
    popularity_skew: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// NDJSON destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(flatten)]
    source: GraphSource,
    #[arg(long)]
    limit_nodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marks an error as caused by bad input rather than the environment.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ValidationError>() {
            return 2;
        }
        if let Some(eval) = cause.downcast_ref::<EvalError>() {
            return match eval {
                EvalError::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        let kind = e
            .downcast_ref::<io::Error>()
            .map(io::Error::kind)
            .or_else(|| e.downcast_ref::<serde_json::Error>().and_then(serde_json::Error::io_error_kind));
        kind == Some(io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // output piped into a reader that stopped early
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Import(args) => {
            let mut graph = Graph::new();
            let report = graph.import_ndjson_file(&args.events).with_context(|| format!("reading {}", args.events.display()))?;
            graph.save_snapshot(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
            writeln!(io::stdout().lock(), "{}", serde_json::to_string(&report)?)?;
            Ok(())
        }
        Command::Recommend(args) => {
            let params = args.scoring.params()?;
            let graph = load_graph(&args.source)?;
            let list = recommend(&graph, &args.user, &params);
            writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&list)?)?;
            Ok(())
        }
        Command::Rerank(args) => rerank_stdin(args),
        Command::EvalSweep(args) => eval_sweep(args),
        Command::EvalClicks(args) => eval_clicks(args),
        Command::GenSynthetic(args) => {
            let spec = SyntheticSpec {
                communities: args.communities,
                users_per: args.users_per,
                items_per: args.items_per,
                interactions_per_user: args.interactions_per_user,
                crossover: args.crossover,
                seed: args.seed,
                popularity_skew: args.popularity_skew,
                ..SyntheticSpec::default()
            };
            let events = generate_synthetic(&spec)?;
            let mut out = output(args.out.as_deref())?;
            for e in &events {
                serde_json::to_writer(&mut out, e)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            Ok(())
        }
        Command::ExportGraph(args) => {
            let graph = load_graph(&args.source)?;
            let mut out = output(args.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &node_link(&graph, args.limit_nodes))?;
            out.write_all(b"\n")?;
            out.flush()?;
            Ok(())
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_graph(source: &GraphSource) -> Result<Graph> {
    match (&source.events, &source.snapshot) {
        (Some(events), _) => {
            let mut graph = Graph::new();
            let report = graph.import_ndjson_file(events).with_context(|| format!("reading {}", events.display()))?;
            if report.rejected > 0 {
                warn!(rejected = report.rejected, "some events were rejected");
            }
            Ok(graph)
        }
        (None, Some(snapshot)) => {
            Graph::load_snapshot(snapshot).with_context(|| format!("loading {}", snapshot.display()))
        }
        (None, None) => bail!(UsageError("either --events or --snapshot is required".into())),
    }
}

fn read_events(path: &Path) -> Result<Vec<InteractionEvent>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("reading {}", path.display()))?);
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match serde_json::from_str::<InteractionEvent>(t) {
            Ok(e) => events.push(e),
            Err(err) => warn!(line = n + 1, %err, "skipping unparseable event"),
        }
    }
    Ok(events)
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::load(&args.config)?;
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if let Some(snapshot) = args.snapshot {
        config.snapshot_path = Some(snapshot);
    }
    let service = Service::start(config)?;
    if let Some(path) = &args.import {
        let report = service.import_ndjson(path).with_context(|| format!("importing {}", path.display()))?;
        eprintln!("imported {} events ({} rejected)", report.imported, report.rejected);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&service.state().config().listen)
            .await
            .with_context(|| format!("binding {}", service.state().config().listen))?;
        println!("listening on {}", listener.local_addr()?);
        io::stdout().flush()?;
        let signal = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        service.serve(listener, signal).await?;
        Ok(())
    })
}

fn rerank_stdin(args: RerankArgs) -> Result<()> {
    validate_alpha(args.alpha)?;
    let params = args.scoring.params()?;
    let mut input = String::new();
    io::stdin().read_to_string(&mut input)?;
    let items: Vec<String> = input.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect();
    let graph = load_graph(&args.source)?;
    let recommendations = recommend(&graph, &args.user, &params).items;
    let result = rerank(&RerankRequest {
        user_id: args.user,
        original: OriginalResult::from_items(items),
        alpha: args.alpha,
        recommendations,
        base: BaseScoring::Position,
    })?;
    let mut out = io::stdout().lock();
    for item in result.items {
        writeln!(out, "{item}")?;
    }
    Ok(())
}

fn parse_optional<T: std::str::FromStr>(name: &str, values: &[String]) -> Result<Vec<Option<T>>> {
    values
        .iter()
        .map(|v| {
            if v.eq_ignore_ascii_case("all") {
                Ok(None)
            } else {
                v.trim()
                    .parse()
                    .map(Some)
                    .map_err(|_| UsageError(format!("{name}: expected a number or `all`, got {v:?}")).into())
            }
        })
        .collect()
}

fn eval_sweep(args: SweepArgs) -> Result<()> {
    let events = read_events(&args.split.events)?;
    let spec = args.split.spec(&events)?;
    if args.depths.iter().any(|d| *d == 0 || *d > MAX_DEPTH) {
        bail!(UsageError(format!("depths must be within 1..={MAX_DEPTH}")));
    }
    let grid = SweepGrid {
        time_frames: parse_optional("time-frames", &args.time_frames)?,
        usage_windows: parse_optional("usage-windows", &args.usage_windows)?,
        depths: args.depths,
        weightings: args
            .weightings
            .iter()
            .map(|w| w.parse::<Weighting>())
            .collect::<Result<_, _>>()?,
    };
    let report = sweep(&events, &spec, &grid)?;
    let mut out = output(args.out.as_deref())?;
    out.write_all(report.to_csv().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn eval_clicks(args: ClicksArgs) -> Result<()> {
    let csv = match (&args.log, &args.events) {
        (Some(log), _) => {
            let reader = BufReader::new(File::open(log).with_context(|| format!("reading {}", log.display()))?);
            let entries = read_search_log(reader)?;
            let grouping = match args.group_by {
                GroupArg::Method => ClickGrouping::Method,
                GroupArg::Alpha => ClickGrouping::Alpha,
            };
            ClickPositionRow::csv(&click_position_report(&entries, grouping))
        }
        (None, Some(path)) => {
            for &alpha in &args.alphas {
                validate_alpha(alpha)?;
            }
            let distinct: BTreeSet<String> = args.alphas.iter().map(|a| a.to_string()).collect();
            if distinct.len() != args.alphas.len() {
                bail!(UsageError("alphas must be distinct".into()));
            }
            let events = read_events(path)?;
            let split_args = SplitArgs {
                events: path.clone(),
                cut: args.cut,
                sample_size: args.sample_size,
                repetitions: args.repetitions,
                seed: args.seed,
                mode: ModeArg::SingleCut,
                heldout: HeldoutArg::AllItems,
            };
            let spec = split_args.spec(&events)?;
            let split = split_and_sample(&events, &spec)?;
            let cases: Vec<_> = split.samples.iter().flatten().cloned().collect();
            let mut publication: HashMap<String, i64> = HashMap::new();
            for e in &events {
                publication.entry(e.item.clone()).and_modify(|t| *t = (*t).min(e.ts)).or_insert(e.ts);
            }
            let params = ScoringParams::with_depth(args.depth);
            params.validate()?;
            let means = simulate_click_positions(
                &split.train,
                &cases,
                &params,
                &publication,
                &ClickSimulation {
                    list_len: args.list_len,
                    seed: args.seed,
                    alphas: args.alphas.clone(),
                },
            )?;
            let mut csv = String::from("alpha,mean_click_position\n");
            for (alpha, mean) in args.alphas.iter().zip(means) {
                csv.push_str(&format!("{alpha},{mean:.6}\n"));
            }
            csv
        }
        (None, None) => bail!(UsageError("either --log or --events is required".into())),
    };
    let mut out = output(args.out.as_deref())?;
    out.write_all(csv.as_bytes())?;
    out.flush()?;
    Ok(())
}
