//! Command-line front end and the run orchestration it drives.
//!
//! `rootcensus estimate` seeds a registry, runs monodromy loops until the
//! stopping policy fires, writes one report row per loop (all three
//! estimators with their intervals), and finishes with the trace test.
//! `rootcensus trace` certifies a checkpointed registry, and
//! `rootcensus simulate` runs the closed-population coverage experiment.
//!
//! Reports are written incrementally so long runs are inspectable while
//! in flight, and contain nothing volatile: identical flags and seed give
//! byte-identical files. Wall-clock timing goes to stdout only.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::census::{
    chapman, lincoln_petersen, schnabel, stopping_decision, Bound, Estimate, EstimatorKind,
    StopConfig, StopDecision,
};
use crate::monodromy::{
    random_loop, run_loop, seed_fabricate, seed_user, LoopRecord, RegistryError, SeedError,
    SolutionRegistry,
};
use crate::polysys::{parse_system, ParameterizedSystem};
use crate::popsim::{coverage_experiment, SimConfig};
use crate::tracetest::{certify, SlicedSystem, TraceCertificate, TraceConfig, TraceError, Verdict};
use crate::tracker::TrackOptions;

pub const EXIT_COMPLETE: i32 = 0;
pub const EXIT_INCOMPLETE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_WITNESS_FAILURE: i32 = 4;
pub const EXIT_USAGE: i32 = 5;
pub const EXIT_PARSE: i32 = 64;
pub const EXIT_SEED: i32 = 65;
pub const EXIT_IO: i32 = 74;

// ---------------------------------------------------------------------------
// Run orchestration (library-level, used directly by tests)
// ---------------------------------------------------------------------------

/// How the first solution is obtained.
#[derive(Debug, Clone)]
pub enum SeedSpec {
    User { x: Vec<Complex64>, p: Vec<Complex64> },
    Fabricate,
}

/// Everything an estimate run needs beyond the system itself.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    pub scale: f64,
    pub dedup_tol: f64,
    pub window: usize,
    pub track: TrackOptions,
    pub stop: StopConfig,
    pub trace: TraceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            scale: 1.0,
            dedup_tol: SolutionRegistry::DEFAULT_DEDUP_TOL,
            window: 3,
            track: TrackOptions::default(),
            stop: StopConfig::default(),
            trace: TraceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TraceTest,
    Budget,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::TraceTest => write!(f, "trace-test"),
            StopReason::Budget => write!(f, "loop-budget-exhausted"),
        }
    }
}

/// One report row: the loop's counts and all three estimates.
#[derive(Debug, Clone)]
pub struct LoopRow {
    pub loop_index: usize,
    pub known_count: usize,
    pub n_start: usize,
    pub n_end: usize,
    pub n_overlap: usize,
    pub n_new: usize,
    pub n_failures: usize,
    pub lp: Estimate,
    pub chapman: Estimate,
    pub schnabel: Estimate,
}

#[derive(Debug)]
pub struct EstimateOutcome {
    pub rows: Vec<LoopRow>,
    pub records: Vec<LoopRecord>,
    pub registry: SolutionRegistry,
    pub stop_reason: StopReason,
    pub slice: Option<SlicedSystem>,
    pub certificate: Option<TraceCertificate>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("seeding failed: {0}")]
    Seed(#[from] SeedError),
    #[error("registry rejected the seed: {0}")]
    Registry(#[from] RegistryError),
    #[error("trace test failed: {0}")]
    Trace(#[from] TraceError),
}

/// Runs the full estimate pipeline: seed, loop until the stopping policy
/// fires, then certify with the trace test when it asks for one.
/// `on_row` fires after every loop so reports can be written incrementally.
pub fn run_estimate(
    sys: &ParameterizedSystem,
    seed: &SeedSpec,
    cfg: &PipelineConfig,
    mut on_row: impl FnMut(&LoopRow),
) -> Result<EstimateOutcome, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let (x_star, p_star) = match seed {
        SeedSpec::User { x, p } => seed_user(sys, x, p)?,
        SeedSpec::Fabricate => seed_fabricate(sys, &mut rng)?,
    };
    let mut registry = SolutionRegistry::new(p_star.clone(), cfg.dedup_tol);
    registry.insert(sys, x_star)?;

    let mut records: Vec<LoopRecord> = Vec::new();
    let mut rows: Vec<LoopRow> = Vec::new();
    let stop_reason = loop {
        match stopping_decision(&records, &cfg.stop) {
            StopDecision::RunTraceTest => break StopReason::TraceTest,
            StopDecision::Abort => break StopReason::Budget,
            StopDecision::Continue => {}
        }
        let loop_index = records.len() + 1;
        let lp_loop = random_loop(&p_star, &mut rng, cfg.scale);
        let rec = run_loop(sys, &mut registry, &lp_loop, &cfg.track, loop_index);
        let lp_est = lincoln_petersen(&rec);
        let chapman_est = chapman(&rec);
        records.push(rec);
        let schnabel_est =
            schnabel(&records, cfg.window).expect("records are nonempty and window validated");
        let rec = records.last().expect("just pushed");
        let row = LoopRow {
            loop_index,
            known_count: registry.len(),
            n_start: rec.n_start,
            n_end: rec.n_end,
            n_overlap: rec.n_overlap,
            n_new: rec.n_new,
            n_failures: rec.n_failures,
            lp: lp_est,
            chapman: chapman_est,
            schnabel: schnabel_est,
        };
        on_row(&row);
        rows.push(row);
    };

    let (slice, certificate) = match stop_reason {
        StopReason::TraceTest => {
            let (ss, cert) =
                certify_with_fresh_slices(sys, &registry, &cfg.trace, &cfg.track, &mut rng)?;
            (Some(ss), Some(cert))
        }
        StopReason::Budget => (None, None),
    };

    Ok(EstimateOutcome { rows, records, registry, stop_reason, slice, certificate })
}

/// Certifies the registry, drawing up to `slice_attempts` random slices.
/// A fresh slice is tried after a transport failure (an unlucky branch
/// point near the slice offsets) and after an Incomplete verdict; a
/// registry that truly misses fiber points stays Incomplete under every
/// slice, so retrying cannot fake completeness.
pub fn certify_with_fresh_slices<R: rand::Rng + ?Sized>(
    sys: &ParameterizedSystem,
    registry: &SolutionRegistry,
    trace: &TraceConfig,
    track: &TrackOptions,
    rng: &mut R,
) -> Result<(SlicedSystem, TraceCertificate), TraceError> {
    let attempts = trace.slice_attempts.max(1);
    let mut best: Option<(SlicedSystem, TraceCertificate)> = None;
    let mut last_err = None;
    for attempt in 0..attempts {
        let mut ss = SlicedSystem::random(sys, registry.base(), rng)?;
        match certify(&mut ss, registry, trace, track, rng) {
            Ok((_, cert)) => {
                let done = cert.verdict == Verdict::Complete;
                best = Some((ss, cert));
                if done {
                    break;
                }
                log::info!("slice attempt {} stayed Incomplete", attempt + 1);
            }
            Err(err) => {
                log::warn!("slice attempt {} failed: {err}", attempt + 1);
                last_err = Some(err);
            }
        }
    }
    match best {
        Some(result) => Ok(result),
        None => Err(last_err.expect("no certificate implies a recorded error")),
    }
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

#[derive(Serialize)]
#[serde(untagged)]
enum NumOrToken {
    Num(f64),
    Token(&'static str),
}

fn beta_field(e: &Estimate) -> NumOrToken {
    match e.beta {
        Some(b) => NumOrToken::Num(b),
        None => NumOrToken::Token("Undefined"),
    }
}

fn bound_field(b: Bound) -> NumOrToken {
    match b {
        Bound::Finite(v) => NumOrToken::Num(v),
        Bound::Unbounded => NumOrToken::Token("Unbounded"),
    }
}

impl std::fmt::Display for NumOrToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumOrToken::Num(v) => write!(f, "{v}"),
            NumOrToken::Token(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Serialize)]
struct RowDoc {
    loop_index: usize,
    known_count: usize,
    n_start: usize,
    n_end: usize,
    n_overlap: usize,
    n_new: usize,
    n_failures: usize,
    lp_beta: NumOrToken,
    lp_ci_low: NumOrToken,
    lp_ci_high: NumOrToken,
    chapman_beta: NumOrToken,
    chapman_ci_low: NumOrToken,
    chapman_ci_high: NumOrToken,
    schnabel_beta: NumOrToken,
    schnabel_ci_low: NumOrToken,
    schnabel_ci_high: NumOrToken,
}

impl RowDoc {
    fn from_row(row: &LoopRow) -> Self {
        Self {
            loop_index: row.loop_index,
            known_count: row.known_count,
            n_start: row.n_start,
            n_end: row.n_end,
            n_overlap: row.n_overlap,
            n_new: row.n_new,
            n_failures: row.n_failures,
            lp_beta: beta_field(&row.lp),
            lp_ci_low: bound_field(row.lp.ci_low),
            lp_ci_high: bound_field(row.lp.ci_high),
            chapman_beta: beta_field(&row.chapman),
            chapman_ci_low: bound_field(row.chapman.ci_low),
            chapman_ci_high: bound_field(row.chapman.ci_high),
            schnabel_beta: beta_field(&row.schnabel),
            schnabel_ci_low: bound_field(row.schnabel.ci_low),
            schnabel_ci_high: bound_field(row.schnabel.ci_high),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.loop_index,
            self.known_count,
            self.n_start,
            self.n_end,
            self.n_overlap,
            self.n_new,
            self.n_failures,
            self.lp_beta,
            self.lp_ci_low,
            self.lp_ci_high,
            self.chapman_beta,
            self.chapman_ci_low,
            self.chapman_ci_high,
            self.schnabel_beta,
            self.schnabel_ci_low,
            self.schnabel_ci_high,
        )
    }
}

pub const REPORT_CSV_HEADER: &str = "loop_index,known_count,n_start,n_end,n_overlap,n_new,\
n_failures,lp_beta,lp_ci_low,lp_ci_high,chapman_beta,chapman_ci_low,chapman_ci_high,\
schnabel_beta,schnabel_ci_low,schnabel_ci_high";

#[derive(Serialize)]
struct ReportDoc {
    rows: Vec<serde_json::Value>,
    stopping_reason: Option<String>,
    trace_verdict: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

/// Writes the per-loop report incrementally: CSV rows are appended and
/// flushed as they arrive; the JSON mirror is rewritten whole so the file
/// on disk is always valid JSON.
struct ReportWriter {
    format: FormatArg,
    path: PathBuf,
    csv_file: Option<fs::File>,
    json_rows: Vec<serde_json::Value>,
}

impl ReportWriter {
    fn create(prefix: &str, format: FormatArg) -> std::io::Result<Self> {
        let path = PathBuf::from(match format {
            FormatArg::Csv => format!("{prefix}report.csv"),
            FormatArg::Json => format!("{prefix}report.json"),
        });
        let mut writer = Self { format, path, csv_file: None, json_rows: Vec::new() };
        if format == FormatArg::Csv {
            let mut file = fs::File::create(&writer.path)?;
            writeln!(file, "{REPORT_CSV_HEADER}")?;
            file.flush()?;
            writer.csv_file = Some(file);
        } else {
            writer.rewrite_json(None, None)?;
        }
        Ok(writer)
    }

    fn rewrite_json(
        &self,
        stopping_reason: Option<String>,
        trace_verdict: Option<String>,
    ) -> std::io::Result<()> {
        let doc = ReportDoc { rows: self.json_rows.clone(), stopping_reason, trace_verdict };
        let text = serde_json::to_string_pretty(&doc).expect("report serialization cannot fail");
        fs::write(&self.path, text + "\n")
    }

    fn push_row(&mut self, row: &LoopRow) -> std::io::Result<()> {
        let doc = RowDoc::from_row(row);
        match self.format {
            FormatArg::Csv => {
                let file = self.csv_file.as_mut().expect("csv file open");
                writeln!(file, "{}", doc.csv_line())?;
                file.flush()
            }
            FormatArg::Json => {
                self.json_rows
                    .push(serde_json::to_value(&doc).expect("row serialization cannot fail"));
                self.rewrite_json(None, None)
            }
        }
    }

    fn finalize(&mut self, stopping_reason: &str, trace_verdict: Option<&str>) -> std::io::Result<()> {
        match self.format {
            FormatArg::Csv => {
                let file = self.csv_file.as_mut().expect("csv file open");
                writeln!(file, "# stopping_reason,{stopping_reason}")?;
                writeln!(file, "# trace_verdict,{}", trace_verdict.unwrap_or("none"))?;
                file.flush()
            }
            FormatArg::Json => self.rewrite_json(
                Some(stopping_reason.to_string()),
                trace_verdict.map(str::to_string),
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument definitions
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "rootcensus",
    version,
    about = "Count the solutions of a parameterized polynomial system: monodromy search, \
             capture-recapture estimation, trace-test certification"
)]
pub struct Cli {
    /// Worker threads for path tracking (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run monodromy loops with per-loop root-count estimates, then certify.
    Estimate(EstimateArgs),
    /// Run only the trace test against a checkpointed registry.
    Trace(TraceArgs),
    /// Monte-Carlo coverage experiment on the closed-population simulator.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedStrategyArg {
    /// Take the seed pair from --seed-solution.
    User,
    /// Fabricate a seed (system must be affine-linear in the parameters).
    Fabricate,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// System file (JSON).
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, value_enum, default_value_t = SeedStrategyArg::Fabricate)]
    pub seed_strategy: SeedStrategyArg,
    /// Seed pair file: {"x": [[re,im],...], "p": [[re,im],...]}.
    #[arg(long)]
    pub seed_solution: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub max_loops: usize,
    /// Consecutive loops without new solutions before the trace test runs.
    #[arg(long, default_value_t = 3)]
    pub stop_after_no_new: usize,
    /// Rolling window for the Schnabel estimate.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    /// Loop perturbation scale relative to 1 + |base parameter|.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Slice offset for the trace test.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub trace_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub dedup_tol: f64,
    /// Prefix for report, registry, and certificate files.
    #[arg(long, default_value = "rootcensus_")]
    pub out_prefix: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// System file (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Registry checkpoint produced by `estimate`.
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub trace_tol: f64,
    /// Monodromy loop budget for witness discovery.
    #[arg(long, default_value_t = 20)]
    pub loop_budget: usize,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value = "rootcensus_")]
    pub out_prefix: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// True population size.
    #[arg(long)]
    pub population: usize,
    #[arg(long, default_value_t = 20)]
    pub loops: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.0)]
    pub failure_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub initial_known: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Chapman)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long, default_value = "rootcensus_")]
    pub out_prefix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    LincolnPetersen,
    Chapman,
    Schnabel,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(value: EstimatorArg) -> Self {
        match value {
            EstimatorArg::LincolnPetersen => EstimatorKind::LincolnPetersen,
            EstimatorArg::Chapman => EstimatorKind::Chapman,
            EstimatorArg::Schnabel => EstimatorKind::Schnabel,
        }
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct SeedDoc {
    x: Vec<[f64; 2]>,
    p: Vec<[f64; 2]>,
}

fn to_points(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()
}

fn read_input(path: &PathBuf, what: &str) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|err| {
        eprintln!("error: cannot read {what} `{}`: {err}", path.display());
        EXIT_USAGE
    })
}

fn load_system(path: &PathBuf) -> Result<ParameterizedSystem, i32> {
    let text = read_input(path, "system file")?;
    parse_system(&text).map_err(|err| {
        eprintln!("error: system file `{}` is invalid: {err}", path.display());
        EXIT_PARSE
    })
}

fn write_output(path: &str, contents: &str) -> Result<(), i32> {
    fs::write(path, contents).map_err(|err| {
        eprintln!("error: cannot write `{path}`: {err}");
        EXIT_IO
    })
}

fn verdict_exit(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Complete => EXIT_COMPLETE,
        Verdict::Incomplete => EXIT_INCOMPLETE,
    }
}

pub fn cmd_estimate(args: &EstimateArgs) -> i32 {
    let start = Instant::now();
    let sys = match load_system(&args.system) {
        Ok(sys) => sys,
        Err(code) => return code,
    };

    let seed = match args.seed_strategy {
        SeedStrategyArg::Fabricate => SeedSpec::Fabricate,
        SeedStrategyArg::User => {
            let Some(path) = &args.seed_solution else {
                eprintln!("error: --seed-strategy user requires --seed-solution");
                return EXIT_USAGE;
            };
            let text = match read_input(path, "seed file") {
                Ok(text) => text,
                Err(code) => return code,
            };
            match serde_json::from_str::<SeedDoc>(&text) {
                Ok(doc) => SeedSpec::User { x: to_points(&doc.x), p: to_points(&doc.p) },
                Err(err) => {
                    eprintln!("error: seed file `{}` is invalid: {err}", path.display());
                    return EXIT_SEED;
                }
            }
        }
    };

    let cfg = PipelineConfig {
        rng_seed: args.rng_seed,
        scale: args.scale,
        dedup_tol: args.dedup_tol,
        window: args.window,
        track: TrackOptions::default(),
        stop: StopConfig {
            consecutive_no_new: args.stop_after_no_new,
            max_loops: args.max_loops,
        },
        trace: TraceConfig {
            tau: args.tau,
            trace_tol: args.trace_tol,
            scale: args.scale,
            ..TraceConfig::default()
        },
    };

    let mut writer = match ReportWriter::create(&args.out_prefix, args.format) {
        Ok(w) => w,
        Err(err) => {
            eprintln!("error: cannot create report file: {err}");
            return EXIT_IO;
        }
    };
    let mut io_error = None;
    let outcome = run_estimate(&sys, &seed, &cfg, |row| {
        if let Err(err) = writer.push_row(row) {
            io_error.get_or_insert(err);
        }
    });
    let outcome = match outcome {
        Ok(outcome) => outcome,
        Err(PipelineError::Seed(err)) => {
            eprintln!("error: {err}");
            return EXIT_SEED;
        }
        Err(PipelineError::Registry(err)) => {
            eprintln!("error: {err}");
            return EXIT_SEED;
        }
        Err(PipelineError::Trace(err)) => {
            eprintln!("error: {err}");
            return EXIT_WITNESS_FAILURE;
        }
    };
    if let Some(err) = io_error {
        eprintln!("error: cannot write report: {err}");
        return EXIT_IO;
    }

    let verdict = outcome.certificate.as_ref().map(|c| c.verdict);
    if writer
        .finalize(
            &outcome.stop_reason.to_string(),
            verdict.map(|v| if v == Verdict::Complete { "Complete" } else { "Incomplete" }),
        )
        .is_err()
    {
        eprintln!("error: cannot finalize report");
        return EXIT_IO;
    }

    let registry_path = format!("{}registry.json", args.out_prefix);
    if let Err(code) = write_output(&registry_path, &outcome.registry.to_json()) {
        return code;
    }
    if let (Some(cert), Some(slice)) = (&outcome.certificate, &outcome.slice) {
        let cert_path = format!("{}certificate.json", args.out_prefix);
        if let Err(code) = write_output(&cert_path, &cert.to_json(slice)) {
            return code;
        }
    }

    println!(
        "{} loops, {} solutions registered, stopping reason: {}",
        outcome.rows.len(),
        outcome.registry.len(),
        outcome.stop_reason,
    );
    match &outcome.certificate {
        Some(cert) => println!(
            "trace verdict: {} (residual {:.3e}, fiber {}, other {})",
            cert.verdict, cert.residual, cert.fiber_count, cert.other_count
        ),
        None => println!("trace verdict: not run"),
    }
    println!("runtime: {:.3}s", start.elapsed().as_secs_f64());

    match (outcome.stop_reason, verdict) {
        (StopReason::Budget, _) => EXIT_ABORT,
        (StopReason::TraceTest, Some(v)) => verdict_exit(v),
        (StopReason::TraceTest, None) => unreachable!("trace-test stop always certifies"),
    }
}

pub fn cmd_trace(args: &TraceArgs) -> i32 {
    let start = Instant::now();
    let sys = match load_system(&args.system) {
        Ok(sys) => sys,
        Err(code) => return code,
    };
    let registry_text = match read_input(&args.registry, "registry file") {
        Ok(text) => text,
        Err(code) => return code,
    };
    let registry = match SolutionRegistry::from_json(&sys, &registry_text) {
        Ok(reg) => reg,
        Err(err) => {
            eprintln!("error: registry file `{}` is invalid: {err}", args.registry.display());
            return EXIT_PARSE;
        }
    };

    let cfg = TraceConfig {
        tau: args.tau,
        trace_tol: args.trace_tol,
        loop_budget: args.loop_budget,
        scale: args.scale,
        ..TraceConfig::default()
    };
    let topts = TrackOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.rng_seed);

    let (ss, cert) = match certify_with_fresh_slices(&sys, &registry, &cfg, &topts, &mut rng) {
        Ok(result) => result,
        Err(err) => {
            eprintln!("error: witness extension failed: {err}");
            return EXIT_WITNESS_FAILURE;
        }
    };

    let cert_path = format!("{}certificate.json", args.out_prefix);
    if let Err(code) = write_output(&cert_path, &cert.to_json(&ss)) {
        return code;
    }
    println!(
        "trace verdict: {} (residual {:.3e}, fiber {}, other {})",
        cert.verdict, cert.residual, cert.fiber_count, cert.other_count
    );
    println!("runtime: {:.3}s", start.elapsed().as_secs_f64());
    verdict_exit(cert.verdict)
}

pub fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let start = Instant::now();
    if args.trials == 0 {
        eprintln!("error: --trials must be positive");
        return EXIT_USAGE;
    }
    let cfg = SimConfig {
        population: args.population,
        n_loops: args.loops,
        failure_rate: args.failure_rate,
        seed: args.rng_seed,
        initial_known: args.initial_known,
    };
    let report = match coverage_experiment(&cfg, args.trials, args.estimator.into(), args.window) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let path = format!("{}coverage.csv", args.out_prefix);
    if let Err(code) = write_output(&path, &report.to_csv()) {
        return code;
    }
    println!(
        "{} trials of population {} over {} loops ({} estimator) written to {path}",
        args.trials,
        args.population,
        args.loops,
        report.estimator
    );
    println!("runtime: {:.3}s", start.elapsed().as_secs_f64());
    EXIT_COMPLETE
}
