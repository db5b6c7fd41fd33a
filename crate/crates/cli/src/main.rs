//! Command line for the deduplicating query engine: run queries or a REPL
//! over a directory of CSV collections, generate synthetic dirty data, and
//! benchmark workloads.

use dedupq::{gen, render, workload};

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dedupq_core::blocking::dump_jsonl;
use dedupq_core::matching::{MatchConfig, MatchMode};
use dedupq_core::metablocking::{MetaBlockingConfig, Stages};
use dedupq_core::session::{EngineConfig, PlannerKind, Session};

#[derive(Parser)]
#[command(
    name = "dedupq",
    version,
    about = "SQL over dirty CSV collections, deduplicating only what a query touches"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one SQL query over a data directory
    Query(QueryArgs),
    /// Interactive shell over a data directory
    Repl(ReplArgs),
    /// Generate synthetic dirty collections with ground truth
    Gen(GenArgs),
    /// Run a TOML workload and report per-query metrics
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Naive,
    Advanced,
    /// Resolve whole collections up front, then answer over the clusters
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum StagesArg {
    /// Purging, filtering and pruning
    All,
    /// Purging and filtering only
    BpBf,
    /// Purging and pruning only
    BpEp,
    /// Compare every pair the blocks propose
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchModeArg {
    /// Attribute similarity against a threshold
    Similarity,
    /// Every executed comparison counts as a match
    CoOccurrence,
}

#[derive(Args)]
struct EngineOpts {
    #[arg(long, value_enum, default_value_t = PlannerArg::Advanced)]
    planner: PlannerArg,
    #[arg(long = "mb-stages", value_enum, default_value_t = StagesArg::All)]
    mb_stages: StagesArg,
    /// Fraction of each entity's smallest blocks kept by filtering
    #[arg(long, default_value_t = 0.5)]
    filter_ratio: f64,
    /// Tolerated density jump between adjacent block sizes before purging
    #[arg(long, default_value_t = 1.025)]
    smoothing_factor: f64,
    #[arg(long, default_value_t = 0.35)]
    similarity_threshold: f64,
    #[arg(long, value_enum, default_value_t = MatchModeArg::Similarity)]
    match_mode: MatchModeArg,
    /// Column holding record identifiers
    #[arg(long = "id-col", default_value = "Id")]
    id_col: String,
    /// Forget links, resolution marks and the ledger between queries
    #[arg(long)]
    no_link_index: bool,
    /// Record executed comparison pairs in metrics output
    #[arg(long)]
    capture_comparisons: bool,
    /// Share of a collection sampled when computing statistics
    #[arg(long, default_value_t = 0.1)]
    sample_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl EngineOpts {
    fn config(&self) -> EngineConfig {
        let mb = MetaBlockingConfig {
            smoothing_factor: self.smoothing_factor,
            filter_ratio: self.filter_ratio,
            stages: match self.mb_stages {
                StagesArg::All => Stages::All,
                StagesArg::BpBf => Stages::PurgeFilter,
                StagesArg::BpEp => Stages::PurgePrune,
                StagesArg::None => Stages::None,
            },
        };
        EngineConfig {
            planner: match self.planner {
                PlannerArg::Naive => PlannerKind::Naive,
                PlannerArg::Advanced => PlannerKind::Advanced,
                PlannerArg::Batch => PlannerKind::Batch,
            },
            mb,
            matching: MatchConfig {
                mode: match self.match_mode {
                    MatchModeArg::Similarity => MatchMode::Similarity,
                    MatchModeArg::CoOccurrence => MatchMode::CoOccurrence,
                },
                threshold: self.similarity_threshold,
            },
            use_link_index: !self.no_link_index,
            capture_comparisons: self.capture_comparisons,
            sample_fraction: self.sample_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Directory of CSV collections
    #[arg(long)]
    data: PathBuf,
    /// SQL text
    sql: String,
    /// Print the plan before running
    #[arg(long)]
    explain: bool,
    /// Write the query's metrics as JSON
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Write each collection's block index as JSONL into this directory
    #[arg(long)]
    dump_index: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineOpts,
}

#[derive(Args)]
struct ReplArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    engine: EngineOpts,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Records in the fact table
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[arg(long, value_enum, default_value_t = ProfileArg::Realistic)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Expected share of records that duplicate another record (max 0.55)
    #[arg(long, default_value_t = 0.2)]
    dup_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// Exact duplicate copies, distinct entities share no token
    Clean,
    /// Corrupted copies over shared vocabularies
    Realistic,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML file of [[query]] entries
    #[arg(long)]
    workload: PathBuf,
    /// Write all runs' metrics as a JSON array
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineOpts,
}

fn open_session(data: &Path, engine: &EngineOpts) -> Result<Session> {
    let mut session = Session::new(engine.config());
    let names = session
        .load_dir(data, &engine.id_col)
        .with_context(|| format!("loading collections from {}", data.display()))?;
    if names.is_empty() {
        anyhow::bail!("no .csv collections found in {}", data.display());
    }
    Ok(session)
}

fn run_query(args: &QueryArgs) -> Result<()> {
    let mut session = open_session(&args.data, &args.engine)?;
    if let Some(dir) = &args.dump_index {
        dump_indexes(&session, dir)?;
    }
    if args.explain {
        println!("{}", session.explain(&args.sql)?);
        println!();
    }
    let (out, metrics) = session.query(&args.sql)?;
    println!("{}", render::table(&out.columns, &out.rows));
    println!(
        "{} rows ({:.2} ms, {} comparisons)",
        out.rows.len(),
        metrics.total_ms,
        metrics.executed_comparisons
    );
    if let Some(path) = &args.metrics_out {
        let text = serde_json::to_string_pretty(&metrics)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn dump_indexes(session: &Session, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for name in session.names() {
        let state = session.state(name).expect("listed name resolves");
        let path = dir.join(format!("{name}.blocks.jsonl"));
        let mut file = fs::File::create(&path)?;
        dump_jsonl(&state.tbi.blocks, &state.collection, &mut file)?;
    }
    Ok(())
}

fn run_repl(args: &ReplArgs) -> Result<()> {
    let mut session = open_session(&args.data, &args.engine)?;
    println!(
        "loaded {}; .tables lists collections, .quit exits",
        session.names().join(", ")
    );
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    loop {
        print!("dedupq> ");
        stdout.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == ".quit" || line == ".exit" {
            break;
        }
        if line == ".tables" {
            for name in session.names() {
                let size = session.collection(name).map_or(0, |c| c.len());
                println!("{name} ({size} records)");
            }
            continue;
        }
        if let Some(name) = line.strip_prefix(".stats ") {
            match session.compute_stats(name.trim()) {
                Ok(stats) => println!(
                    "sample {} -> {} entities (duplication factor {:.3})",
                    stats.sample_size, stats.sample_dedup_size, stats.duplication_factor
                ),
                Err(e) => println!("error: {e}"),
            }
            continue;
        }
        if let Some(rest) = strip_keyword(line, "EXPLAIN") {
            match session.explain(rest) {
                Ok(text) => println!("{text}"),
                Err(e) => println!("error: {e}"),
            }
            continue;
        }
        match session.query(line) {
            Ok((out, metrics)) => {
                println!("{}", render::table(&out.columns, &out.rows));
                println!(
                    "{} rows ({:.2} ms, {} comparisons)",
                    out.rows.len(),
                    metrics.total_ms,
                    metrics.executed_comparisons
                );
            }
            Err(e) => println!("error: {e}"),
        }
    }
    Ok(())
}

fn strip_keyword<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let head = line.get(..keyword.len())?;
    if head.eq_ignore_ascii_case(keyword) {
        let rest = &line[keyword.len()..];
        if rest.starts_with(char::is_whitespace) {
            return Some(rest.trim_start());
        }
    }
    None
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let spec = gen::GenSpec {
        rows: args.rows,
        profile: match args.profile {
            ProfileArg::Clean => gen::Profile::Clean,
            ProfileArg::Realistic => gen::Profile::Realistic,
        },
        seed: args.seed,
        dup_fraction: args.dup_fraction,
    };
    let summaries = gen::generate(&args.out, &spec)?;
    let columns = vec![
        "table".to_string(),
        "records".to_string(),
        "entities".to_string(),
        "truth pairs".to_string(),
    ];
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.name.clone(),
                s.rows.to_string(),
                s.entities.to_string(),
                s.truth_pairs.to_string(),
            ]
        })
        .collect();
    println!("{}", render::table(&columns, &rows));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_bench(args: &BenchArgs) -> Result<()> {
    let workload = workload::load(&args.workload)?;
    let mut session = open_session(&args.data, &args.engine)?;
    let mut runs = Vec::new();
    let mut summary_rows = Vec::new();
    for q in &workload.query {
        let mut total_ms = 0.0;
        let mut comparisons = 0u64;
        let mut rows = 0usize;
        for run in 0..q.repeat.max(1) {
            let (out, metrics) = session
                .query(&q.sql)
                .with_context(|| format!("query {}", q.name))?;
            total_ms += metrics.total_ms;
            comparisons += metrics.executed_comparisons;
            rows = out.rows.len();
            runs.push(serde_json::json!({
                "name": q.name,
                "run": run,
                "metrics": metrics,
            }));
        }
        let n = q.repeat.max(1);
        summary_rows.push(vec![
            q.name.clone(),
            n.to_string(),
            rows.to_string(),
            format!("{:.2}", total_ms / n as f64),
            comparisons.to_string(),
        ]);
    }
    let columns = vec![
        "query".to_string(),
        "runs".to_string(),
        "rows".to_string(),
        "mean ms".to_string(),
        "comparisons".to_string(),
    ];
    println!("{}", render::table(&columns, &summary_rows));
    if let Some(path) = &args.metrics_out {
        let text = serde_json::to_string_pretty(&runs)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Query(args) => run_query(&args),
        Cmd::Repl(args) => run_repl(&args),
        Cmd::Gen(args) => run_gen(&args),
        Cmd::Bench(args) => run_bench(&args),
    }
}
