//! The `reuse` command line: `run`, `verify` and `analyze`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::metrics::{dual_hit_from, DEFAULT_K_SET};
use crate::analysis::reports::{self, fmt_num, Table, DEFAULT_HIT_THRESHOLDS};
use crate::config::{default_config, SearchConfig};
use crate::document::{check_funnel_shape, OutputFormat, RunConfigDocument};
use crate::engine::{run_search, RunResult};
use crate::error::{Result, ReuseError};
use crate::panel::Panel;
use crate::par;
use crate::trace::{read_jsonl, write_jsonl, SCHEMA_VERSION};
use crate::types::Id;
use crate::verify::{run_suite, Suite};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_WRITE: u8 = 3;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const PANEL_FILE: &str = "panel.json";
pub const METRICS_FILE: &str = "metrics.csv";
const DEFAULT_OUTPUT_DIR: &str = "reuse-out";

#[derive(Debug, Parser)]
#[command(
    name = "reuse",
    version,
    about = "Evolutionary input-space search over a frozen generator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a search and write trace.jsonl, panel.json and metrics.csv.
    Run(RunArgs),
    /// Run a property suite and print one pass/fail line per property.
    Verify(VerifyArgs),
    /// Compute a CSV report from a trace.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    pub config: PathBuf,
    /// Seed for all randomness; overrides the document's seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the number of iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Output directory; defaults to [output].directory, then `reuse-out`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads. Never affects output bytes.
    #[arg(long, env = "REUSE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Theorems,
    Funnel,
    Panel,
    Hitting,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Theorems => Suite::Theorems,
            SuiteArg::Funnel => Suite::Funnel,
            SuiteArg::Panel => Suite::Panel,
            SuiteArg::Hitting => Suite::Hitting,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: SuiteArg,
    /// Runs or pools to check; each suite has its own default.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "REUSE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Budget,
    Funnel,
    Consistency,
    Prepost,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// A trace.jsonl written by `run`.
    pub trace: PathBuf,
    #[arg(long, value_enum)]
    pub report: ReportArg,
    /// Configuration the trace was produced with (floors, panel size).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Neighbourhood sizes for the consistency report.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_SET)]
    pub k_set: Vec<usize>,
    /// Objective threshold for the consistency report; defaults to the median.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Per-target affinity thresholds for dual-hit rates, as `A,B`.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_HIT_THRESHOLDS.0, DEFAULT_HIT_THRESHOLDS.1])]
    pub hit_thresholds: Vec<f64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments and runs the chosen command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK });
        }
    };
    ExitCode::from(match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Analyze(a) => cmd_analyze(&a),
    })
}

fn fail(code: u8, e: impl std::fmt::Display) -> u8 {
    eprintln!("error: {e}");
    code
}

pub fn cmd_run(args: &RunArgs) -> u8 {
    let doc = match RunConfigDocument::load(&args.config) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_BAD_INPUT, format_args!("{}: {e}", args.config.display())),
    };
    let (mut cfg, ctx) = match check_funnel_shape(&doc).and_then(|_| doc.resolve()) {
        Ok(x) => x,
        Err(e) => return fail(EXIT_BAD_INPUT, format_args!("{}: {e}", args.config.display())),
    };
    cfg.seed = args.seed;
    if let Some(t) = args.iterations {
        cfg.iterations = t;
    }
    let result = match par::with_workers(args.workers, || run_search(&ctx, &cfg)) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_BAD_INPUT, e),
    };
    let dir = args
        .output_dir
        .clone()
        .or_else(|| doc.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    if let Err(e) = write_outputs(&dir, &result, &doc.output.formats()) {
        return fail(EXIT_WRITE, format_args!("writing to {}: {e}", dir.display()));
    }
    eprintln!(
        "seed {}: {} iterations, incumbent utility {}, cost {}, {:.3}s",
        cfg.seed,
        result.trace.len(),
        fmt_num(result.incumbent.utility),
        fmt_num(result.total_cost),
        result.wall_clock.as_secs_f64()
    );
    EXIT_OK
}

pub fn write_outputs(dir: &Path, result: &RunResult, formats: &[OutputFormat]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    if formats.contains(&OutputFormat::Trace) {
        write_jsonl(&result.trace, BufWriter::new(File::create(dir.join(TRACE_FILE))?))?;
    }
    if formats.contains(&OutputFormat::Panel) {
        let mut w = BufWriter::new(File::create(dir.join(PANEL_FILE))?);
        serde_json::to_writer_pretty(&mut w, &PanelFile::new(&result.incumbent, &result.config))?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    if formats.contains(&OutputFormat::Metrics) {
        metrics_table(result).write_csv(BufWriter::new(File::create(dir.join(METRICS_FILE))?))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PanelFile {
    pub schema_version: u32,
    /// True when no feasible panel was ever found.
    pub empty: bool,
    #[serde(with = "crate::trace::neg_inf_as_null")]
    pub utility: f64,
    pub source_iteration: Option<usize>,
    pub seed: u64,
    pub members: Vec<PanelMemberRecord>,
}

#[derive(Debug, Serialize)]
pub struct PanelMemberRecord {
    pub id: Id,
    pub origin: Id,
    pub features: u64,
    pub affinity: [f64; 2],
    pub qed: f64,
    pub sa: f64,
    pub position: Vec<f64>,
}

impl PanelFile {
    pub fn new(panel: &Panel, cfg: &SearchConfig) -> Self {
        let s = cfg.num_stages();
        Self {
            schema_version: SCHEMA_VERSION,
            empty: panel.is_empty(),
            utility: panel.utility,
            source_iteration: panel.source_iteration,
            seed: cfg.seed,
            members: panel
                .members
                .iter()
                .map(|m| {
                    let (a, b) = m.affinity.pair(s).unwrap_or((f64::NAN, f64::NAN));
                    PanelMemberRecord {
                        id: m.id,
                        origin: m.origin_latent,
                        features: m.features.0,
                        affinity: [a, b],
                        qed: m.qed_like,
                        sa: m.sa_like,
                        position: m.position.clone(),
                    }
                })
                .collect(),
        }
    }
}

/// One row per iteration; no timing columns so the file is reproducible.
pub fn metrics_table(result: &RunResult) -> Table {
    let mut t = Table {
        header: [
            "iteration",
            "candidates",
            "terminal",
            "terminal_feasible",
            "cost",
            "cumulative_cost",
            "best_fitness",
            "panel_utility",
            "incumbent_utility",
            "panel_dual_hit",
            "panel_feasible_dual_hit",
        ]
        .map(String::from)
        .to_vec(),
        rows: Vec::new(),
    };
    for rec in &result.trace {
        let s = rec.terminal_stage();
        let terminal = rec.stages.last().map_or(0, |st| st.members.len());
        let feasible = rec.stages.last().map_or(0, |st| {
            st.members
                .iter()
                .filter(|&&id| {
                    rec.candidate(id)
                        .and_then(|c| c.score_at(s))
                        .is_some_and(|x| x.feasible)
                })
                .count()
        });
        let best_fitness = rec
            .population
            .iter()
            .map(|p| p.fitness)
            .fold(f64::NEG_INFINITY, f64::max);
        let hits = dual_hit_from(
            rec.panel.iter().filter_map(|&id| rec.candidate(id)).map(|c| {
                let (a, b) = c.affinity_at(s).unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY));
                (a, b, c.score_at(s).is_some_and(|x| x.feasible))
            }),
            DEFAULT_HIT_THRESHOLDS,
        );
        t.rows.push(vec![
            rec.iteration.to_string(),
            rec.candidates.len().to_string(),
            terminal.to_string(),
            feasible.to_string(),
            fmt_num(rec.cost),
            fmt_num(rec.cumulative_cost),
            fmt_num(best_fitness),
            fmt_num(rec.panel_utility),
            fmt_num(rec.incumbent_utility),
            fmt_num(hits.dual_hit),
            fmt_num(hits.feasible_dual_hit),
        ]);
    }
    t
}

pub fn cmd_verify(args: &VerifyArgs) -> u8 {
    let suite: Suite = args.suite.into();
    let report = match par::with_workers(args.workers, || run_suite(suite, args.runs, args.seed)) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_BAD_INPUT, e),
    };
    for o in &report.outcomes {
        println!("{o}");
    }
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> u8 {
    let cfg = match &args.config {
        Some(p) => match RunConfigDocument::load(p).and_then(|d| d.search_config()) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_BAD_INPUT, format_args!("{}: {e}", p.display())),
        },
        None => default_config(),
    };
    let trace = match File::open(&args.trace)
        .map_err(ReuseError::from)
        .and_then(|f| read_jsonl(BufReader::new(f)))
    {
        Ok(t) => t,
        Err(e) => return fail(EXIT_BAD_INPUT, format_args!("{}: {e}", args.trace.display())),
    };
    let thresholds = match args.hit_thresholds[..] {
        [a, b] => (a, b),
        _ => return fail(EXIT_BAD_INPUT, "--hit-thresholds takes exactly two values, A,B"),
    };
    let table = match args.report {
        ReportArg::Budget => Ok(reports::budget_report(&trace, cfg.qed_floor, cfg.sa_floor)),
        ReportArg::Funnel => reports::funnel_report(&trace),
        ReportArg::Consistency => reports::consistency_report(&trace, &args.k_set, args.threshold),
        ReportArg::Prepost => Ok(reports::prepost_report(&trace, &cfg, thresholds)),
    };
    let table = match table {
        Ok(t) => t,
        Err(e) => return fail(EXIT_BAD_INPUT, e),
    };
    let written = match &args.output {
        Some(p) => File::create(p)
            .map_err(ReuseError::from)
            .and_then(|f| table.write_csv(BufWriter::new(f))),
        None => table.write_csv(io::stdout().lock()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_WRITE, e),
    }
}
