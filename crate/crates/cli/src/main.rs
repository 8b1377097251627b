//! Command-line frontend: graph generation and ingestion, decomposition
//! inspection, mapping, evaluation, benchmark sweeps and side-by-side
//! comparisons.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
//! stderr; results go to stdout or `--out`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use spmap::bench::{run_experiment, Algorithm, ExperimentSpec};
use spmap::evaluator::{relative_improvement, EvalConfig, Evaluator, Mapping};
use spmap::generators::{
    add_random_edges, augment_accel_attributes, augment_attributes, ingest_workflow,
    random_sp_graph, AttributeDistribution, GenConfig, IngestOptions,
};
use spmap::mappers::{GaConfig, MappingRecord};
use spmap::platform::Platform;
use spmap::spdag::{decompose, CutRule};
use spmap::taskgraph::{TaskGraph, DEFAULT_EDGE_BYTES};

#[derive(Parser)]
#[command(
    name = "spmap",
    version,
    about = "Static task mapping toolkit for heterogeneous platforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for all randomized steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Platform JSON file; the built-in reference platform when omitted.
    #[arg(long, global = true)]
    platform: Option<PathBuf>,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format (default: json, except `bench` which defaults to csv).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random task graph, or ingest a workflow file.
    Gen(GenArgs),
    /// Decompose a graph into a forest of series-parallel trees.
    Decompose(DecomposeArgs),
    /// Map one graph with one algorithm; emits a mapping record.
    Map(MapArgs),
    /// Score a mapping record against a graph.
    Eval(EvalArgs),
    /// Run an experiment sweep from a spec file.
    Bench(BenchArgs),
    /// Re-score mapping records side by side.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of tasks of the generated series-parallel graph.
    #[arg(long, conflicts_with = "from_workflow", required_unless_present = "from_workflow")]
    tasks: Option<usize>,

    /// Extra random edges to insert after generation.
    #[arg(long, default_value_t = 0)]
    extra_edges: usize,

    /// Bytes per generated edge.
    #[arg(long, default_value_t = DEFAULT_EDGE_BYTES)]
    edge_bytes: u64,

    /// Series:parallel operation ratio, e.g. 1:2.
    #[arg(long, default_value = "1:2", value_parser = parse_ratio)]
    ratio: (u32, u32),

    /// Draw task attributes from the shipped distributions.
    #[arg(long)]
    augment: bool,

    /// Ingest this workflow JSON file instead of generating.
    #[arg(long)]
    from_workflow: Option<PathBuf>,

    /// Operations per second assumed when converting workflow runtimes.
    #[arg(long, default_value_t = spmap::generators::DEFAULT_REFERENCE_RATE)]
    reference_rate: f64,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,

    /// Which active subtree a deadlocked wavefront cuts.
    #[arg(long, default_value = "random", value_parser = parse_cut_rule)]
    cut_rule: CutRule,

    /// Also write a Graphviz rendering here.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    /// Mapping algorithm.
    #[arg(long, value_parser = parse_algo)]
    algo: Algorithm,

    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,

    /// Threshold parameter of the first-fit variants.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    /// Random schedules of the reporting evaluation.
    #[arg(long, default_value_t = 100)]
    schedules: usize,

    /// Population size (nsga2).
    #[arg(long, default_value_t = 100)]
    population: usize,

    /// Generations (nsga2).
    #[arg(long, default_value_t = 500)]
    generations: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,

    /// Mapping record JSON file.
    #[arg(long)]
    mapping: PathBuf,

    /// Random schedules of the reporting evaluation.
    #[arg(long, default_value_t = 100)]
    schedules: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment spec JSON file.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,

    /// Mapping record files (repeatable).
    #[arg(long = "mapping", required = true)]
    mappings: Vec<PathBuf>,

    /// Random schedules of the reporting evaluation.
    #[arg(long, default_value_t = 100)]
    schedules: usize,
}

fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected S:P, e.g. 1:2")?;
    let a: u32 = a.trim().parse().map_err(|_| "series weight must be a positive integer")?;
    let b: u32 = b.trim().parse().map_err(|_| "parallel weight must be a positive integer")?;
    if a == 0 || b == 0 {
        return Err("ratio components must be >= 1".into());
    }
    Ok((a, b))
}

fn parse_cut_rule(s: &str) -> Result<CutRule, String> {
    match s {
        "random" => Ok(CutRule::Random),
        "smallest-outsize-first" => Ok(CutRule::SmallestOutsizeFirst),
        other => Err(format!("unknown cut rule {other:?} (random | smallest-outsize-first)")),
    }
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format.unwrap_or(match cli.command {
        Command::Bench(_) => Format::Csv,
        _ => Format::Json,
    });
    match &cli.command {
        Command::Gen(args) => cmd_gen(&cli, args),
        Command::Decompose(args) => cmd_decompose(&cli, args),
        Command::Map(args) => cmd_map(&cli, args),
        Command::Eval(args) => cmd_eval(&cli, args, format),
        Command::Bench(args) => cmd_bench(&cli, args, format),
        Command::Compare(args) => cmd_compare(&cli, args, format),
    }
}

fn load_platform(cli: &Cli) -> Result<Platform> {
    match &cli.platform {
        None => Ok(Platform::reference()),
        Some(path) => {
            let text = read(path)?;
            Platform::from_json(&text).with_context(|| format!("{}", path.display()))
        }
    }
}

fn load_graph(path: &Path) -> Result<TaskGraph> {
    let text = read(path)?;
    TaskGraph::from_json(&text).with_context(|| format!("{}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    let body =
        if content.ends_with('\n') { content.to_string() } else { format!("{content}\n") };
    match out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let graph = if let Some(workflow) = &args.from_workflow {
        let text = read(workflow)?;
        let opts = IngestOptions { reference_rate: args.reference_rate };
        let g =
            ingest_workflow(&text, &opts).with_context(|| format!("{}", workflow.display()))?;
        if args.augment {
            augment_accel_attributes(&g, &AttributeDistribution::default(), cli.seed)
        } else {
            g
        }
    } else {
        let tasks = args.tasks.expect("clap enforces --tasks without --from-workflow");
        if tasks < 2 {
            bail!("--tasks must be at least 2");
        }
        let cfg = GenConfig {
            n_tasks: tasks,
            series_parallel_ratio: args.ratio,
            extra_edges: args.extra_edges,
            edge_bytes: args.edge_bytes,
            seed: cli.seed,
        };
        let (g, _) = random_sp_graph(&cfg);
        let g = add_random_edges(&g, args.extra_edges, cli.seed.wrapping_add(0x5eed))?;
        if args.augment {
            augment_attributes(&g, &AttributeDistribution::default(), cli.seed)
        } else {
            g
        }
    };
    emit(&cli.out, &graph.to_json())
}

fn cmd_decompose(cli: &Cli, args: &DecomposeArgs) -> Result<()> {
    let g = load_graph(&args.graph)?;
    let norm = g.normalize_endpoints(DEFAULT_EDGE_BYTES)?;
    let forest = decompose(&norm.graph, norm.start, args.cut_rule, cli.seed)?;
    if let Some(dot_path) = &args.dot {
        std::fs::write(dot_path, forest.to_dot())
            .with_context(|| format!("writing {}", dot_path.display()))?;
    }
    emit(&cli.out, &forest.to_json())
}

fn cmd_map(cli: &Cli, args: &MapArgs) -> Result<()> {
    let g = load_graph(&args.graph)?;
    if g.node_count() == 0 {
        bail!("graph has no tasks");
    }
    let p = load_platform(cli)?;
    let eval =
        EvalConfig { random_schedules: args.schedules, seed: cli.seed, ..Default::default() };
    let ga = GaConfig {
        population: args.population,
        generations: args.generations,
        ..Default::default()
    };
    let (mapping, _) =
        spmap::bench::run_algorithm(args.algo, &g, &p, cli.seed, args.gamma, &ga, &eval);
    let makespan = Evaluator::reporting(&g, &p, &eval).cost(&mapping);
    let record = MappingRecord::new(&mapping, args.algo.name(), cli.seed, makespan);
    emit(&cli.out, &record.to_json())
}

fn load_mapping(path: &Path, g: &TaskGraph, p: &Platform) -> Result<(MappingRecord, Mapping)> {
    let record =
        MappingRecord::from_json(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let mapping =
        record.to_mapping(g, p).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((record, mapping))
}

fn cmd_eval(cli: &Cli, args: &EvalArgs, format: Format) -> Result<()> {
    let g = load_graph(&args.graph)?;
    let p = load_platform(cli)?;
    let (_, mapping) = load_mapping(&args.mapping, &g, &p)?;
    let eval =
        EvalConfig { random_schedules: args.schedules, seed: cli.seed, ..Default::default() };
    let result = Evaluator::reporting(&g, &p, &eval).best_result(&mapping)?;
    match format {
        Format::Json => emit(&cli.out, &result.to_json()),
        Format::Csv => emit(&cli.out, &result.to_csv(&mapping)),
    }
}

fn cmd_bench(cli: &Cli, args: &BenchArgs, format: Format) -> Result<()> {
    let spec = ExperimentSpec::from_json(&read(&args.spec)?)
        .with_context(|| format!("{}", args.spec.display()))?;
    let platform = match &cli.platform {
        Some(_) => load_platform(cli)?,
        None => spec.load_platform()?,
    };
    let table = run_experiment(&spec, &platform)?;
    match format {
        Format::Csv => emit(&cli.out, &table.to_csv()),
        Format::Json => emit(&cli.out, &table.to_json()),
    }
}

fn cmd_compare(cli: &Cli, args: &CompareArgs, format: Format) -> Result<()> {
    let g = load_graph(&args.graph)?;
    let p = load_platform(cli)?;
    let eval =
        EvalConfig { random_schedules: args.schedules, seed: cli.seed, ..Default::default() };
    let evaluator = Evaluator::reporting(&g, &p, &eval);
    let baseline = evaluator.cost(&Mapping::all_default(&g, &p));

    let mut rows = Vec::new();
    for path in &args.mappings {
        let (record, mapping) = load_mapping(path, &g, &p)?;
        let makespan = evaluator.cost(&mapping);
        let improvement = relative_improvement(baseline, makespan)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((label, record.algorithm, makespan, improvement));
    }
    rows.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));

    match format {
        Format::Csv => {
            let mut out = String::from("file,algorithm,makespan,rel_improvement\n");
            for (file, algorithm, makespan, improvement) in &rows {
                out.push_str(&format!("{file},{algorithm},{makespan},{improvement}\n"));
            }
            emit(&cli.out, &out)
        }
        Format::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|(file, algorithm, makespan, improvement)| {
                    serde_json::json!({
                        "file": file,
                        "algorithm": algorithm,
                        "makespan": makespan,
                        "rel_improvement": improvement,
                        "baseline": baseline,
                    })
                })
                .collect();
            emit(&cli.out, &serde_json::to_string_pretty(&items)?)
        }
    }
}
