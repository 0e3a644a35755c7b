use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pure_core::environments::catalog;
use pure_core::pure::{run_variant, RunContext, RunLog};
use pure_core::stats::Summary;
use pure_core::verify::{run_suite, Suite, VerifyOptions, VerifyReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{prepare, ConfigError, Prepared};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// A property suite failed; carries the report.
    Verify(Box<VerifyReport>),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Verify(r) => {
                let failed: Vec<String> = r
                    .suites
                    .iter()
                    .flat_map(|s| s.failures.iter().map(move |c| format!("{}: {c}", s.suite)))
                    .collect();
                write!(f, "verification failed: {}", failed.join("; "))
            }
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn io_err(what: &Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", what.display()))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        b = b.num_threads(k.max(1));
    }
    b.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Per-seed mean episode suboptimality, the expected gap of the output.
    pub suboptimality: Summary,
    /// Per-seed gap of the uniformly picked output episode.
    pub picked_suboptimality: Summary,
    pub switch_count: Summary,
    pub rollout_count: Summary,
    pub measurement_count: Summary,
    pub coverage_rate: f64,
}

impl Aggregates {
    pub fn of(logs: &[RunLog]) -> Self {
        let col = |f: &dyn Fn(&RunLog) -> f64| Summary::of(&logs.iter().map(f).collect::<Vec<_>>());
        Self {
            suboptimality: col(&|l| l.mean_suboptimality),
            picked_suboptimality: col(&|l| l.final_choice.suboptimality),
            switch_count: col(&|l| l.switch_count as f64),
            rollout_count: col(&|l| l.rollout_count as f64),
            measurement_count: col(&|l| l.measurement_count as f64),
            coverage_rate: logs.iter().filter(|l| l.all_covered).count() as f64 / logs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the config file bytes.
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub variant: String,
    pub env: String,
    pub n: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
    /// Per-seed log files, relative to the sweep directory.
    pub logs: Vec<String>,
    pub optimal_value: f64,
    pub aggregates: Aggregates,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub oracle_seconds: f64,
    pub total_seconds: f64,
    pub seeds: Vec<SeedTiming>,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub mean_suboptimality: f64,
    pub picked_episode: usize,
    pub picked_suboptimality: f64,
    pub switch_count: usize,
    pub rollout_count: usize,
    pub measurement_count: usize,
    pub all_covered: bool,
}

impl SummaryRow {
    fn of(log: &RunLog) -> Self {
        Self {
            seed: log.seed,
            mean_suboptimality: log.mean_suboptimality,
            picked_episode: log.final_choice.episode,
            picked_suboptimality: log.final_choice.suboptimality,
            switch_count: log.switch_count,
            rollout_count: log.rollout_count,
            measurement_count: log.measurement_count,
            all_covered: log.all_covered,
        }
    }
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    rdr.deserialize().collect::<Result<_, _>>().map_err(|e| io_err(path, e))
}

fn summary_csv(logs: &[RunLog]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for log in logs {
        w.serialize(SummaryRow::of(log))
            .map_err(|e| CliError::Runtime(format!("summary.csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("summary.csv: {e}")))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Result of one executed config.
#[derive(Debug, Clone)]
pub struct Executed {
    pub dir: PathBuf,
    pub sweep: SweepResult,
    pub logs: Vec<RunLog>,
    pub timing: Timing,
}

/// Options shared by the verbs.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed_count: Option<usize>,
    pub format: Format,
}

fn apply_seed_count(p: &mut Prepared, seed_count: Option<usize>) -> Result<(), CliError> {
    if let Some(k) = seed_count {
        if k == 0 {
            return Err(CliError::Config(ConfigError {
                path: p.path.clone(),
                line: None,
                message: "--seed-count must be at least 1".into(),
            }));
        }
        let base = p.config.seeds.list.as_ref().map_or(p.config.seeds.base, |l| l[0]);
        p.seeds = (0..k as u64).map(|i| base + i).collect();
    }
    Ok(())
}

/// Runs every seed of a prepared config and writes its artifacts.
pub fn execute(p: &Prepared, opts: &Options) -> Result<Executed, CliError> {
    let start = Instant::now();
    let root = opts
        .out
        .clone()
        .or_else(|| p.config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let dir = root.join("runs").join(&p.config.name);
    let pool = pool(opts.workers)?;
    let run = &p.config.run;
    let ctx = pool
        .install(|| RunContext::new(p.entry.clone(), run.n, run.delta, run.c_scale, run.oracle_seed))
        .map_err(|e| CliError::Runtime(format!("optimality oracle: {e}")))?;
    let oracle_seconds = start.elapsed().as_secs_f64();
    log::info!("{}: oracle ready in {oracle_seconds:.2}s", p.config.name);

    let results: Vec<(u64, Result<RunLog, pure_core::Error>, f64)> = pool.install(|| {
        p.seeds
            .par_iter()
            .map(|&seed| {
                let t = Instant::now();
                let log = run_variant(p.config.variant, &ctx, &p.run_config(seed));
                (seed, log, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut logs = Vec::with_capacity(results.len());
    let mut timing = Vec::with_capacity(results.len());
    let mut files = Vec::with_capacity(results.len());
    for (seed, log, secs) in results {
        let log = log.map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?;
        let file = format!("seed_{seed}.json");
        write_atomic(&dir.join(&file), &to_json(&log)?)?;
        files.push(file);
        logs.push(log);
        timing.push(SeedTiming { seed, seconds: secs });
    }
    write_atomic(&dir.join("summary.csv"), &summary_csv(&logs)?)?;
    let sweep = SweepResult {
        name: p.config.name.clone(),
        variant: p.config.variant.name().into(),
        env: p.entry.name().into(),
        n: run.n,
        m: p.template.m(),
        seeds: p.seeds.clone(),
        logs: files,
        optimal_value: ctx.oracle.optimal_value,
        aggregates: Aggregates::of(&logs),
        provenance: Provenance {
            config_hash: hex::encode(Sha256::digest(p.text.as_bytes())),
            tool_version: TOOL_VERSION.into(),
        },
    };
    write_atomic(&dir.join("sweep.json"), &to_json(&sweep)?)?;
    let timing = Timing {
        oracle_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        seeds: timing,
    };
    write_atomic(&dir.join("timing.json"), &to_json(&timing)?)?;
    Ok(Executed {
        dir,
        sweep,
        logs,
        timing,
    })
}

pub fn cmd_run(config: &Path, opts: &Options) -> Result<String, CliError> {
    let mut p = prepare(config)?;
    apply_seed_count(&mut p, opts.seed_count)?;
    let ex = execute(&p, opts)?;
    Ok(match opts.format {
        Format::Csv => {
            String::from_utf8(summary_csv(&ex.logs)?).expect("csv output is utf-8")
        }
        Format::Json => String::from_utf8(to_json(&ex.sweep)?).expect("json output is utf-8"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub variant: String,
    pub m: usize,
    pub seeds: usize,
    pub mean_suboptimality: f64,
    pub sd_suboptimality: f64,
    pub mean_switch_count: f64,
    pub mean_rollout_count: f64,
    pub mean_measurement_count: f64,
    pub wall_seconds: f64,
}

pub fn cmd_compare(configs: &[PathBuf], opts: &Options) -> Result<String, CliError> {
    if configs.len() < 2 {
        return Err(CliError::Config(ConfigError {
            path: configs.first().cloned().unwrap_or_default(),
            line: None,
            message: "compare needs at least two configs".into(),
        }));
    }
    let mut prepared = configs.iter().map(|c| prepare(c)).collect::<Result<Vec<_>, _>>()?;
    for p in &mut prepared {
        apply_seed_count(p, opts.seed_count)?;
    }
    let first = &prepared[0];
    for p in &prepared[1..] {
        if p.config.env != first.config.env || p.config.run.n != first.config.run.n {
            return Err(CliError::Config(ConfigError {
                path: p.path.clone(),
                line: None,
                message: format!(
                    "environment or N differs from {} (compare needs a shared env and N)",
                    first.path.display()
                ),
            }));
        }
    }
    let mut rows = Vec::new();
    for p in &prepared {
        let ex = execute(p, opts)?;
        let a = &ex.sweep.aggregates;
        rows.push(CompareRow {
            name: ex.sweep.name.clone(),
            variant: ex.sweep.variant.clone(),
            m: ex.sweep.m,
            seeds: ex.logs.len(),
            mean_suboptimality: a.suboptimality.mean,
            sd_suboptimality: a.suboptimality.sd,
            mean_switch_count: a.switch_count.mean,
            mean_rollout_count: a.rollout_count.mean,
            mean_measurement_count: a.measurement_count.mean,
            wall_seconds: ex.timing.total_seconds,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let csv_bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(out) = &opts.out {
        write_atomic(&out.join("compare.csv"), &csv_bytes)?;
    }
    Ok(match opts.format {
        Format::Csv => String::from_utf8(csv_bytes).expect("csv output is utf-8"),
        Format::Json => String::from_utf8(to_json(&rows)?).expect("json output is utf-8"),
    })
}

pub fn read_compare_csv(path: &Path) -> Result<Vec<CompareRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    rdr.deserialize().collect::<Result<_, _>>().map_err(|e| io_err(path, e))
}

/// Optional verify options from a TOML or JSON file.
pub fn load_verify_options(path: Option<&Path>) -> Result<VerifyOptions, CliError> {
    let Some(path) = path else {
        return Ok(VerifyOptions::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigError {
            path: path.into(),
            line: None,
            message: format!("cannot read config: {e}"),
        })
    })?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| (Some(e.line()), e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| {
            (
                e.span().map(|s| text[..s.start].matches('\n').count() + 1),
                e.message().trim().to_string(),
            )
        })
    };
    parsed.map_err(|(line, message)| {
        CliError::Config(ConfigError {
            path: path.into(),
            line,
            message,
        })
    })
}

pub fn cmd_verify(suite: &str, config: Option<&Path>, opts: &Options) -> Result<String, CliError> {
    let suite = Suite::parse(suite).ok_or_else(|| {
        CliError::Config(ConfigError {
            path: PathBuf::from("<command line>"),
            line: None,
            message: format!("unknown suite {suite:?}; expected coverage, gronwall, prop2, convergence, eluder or all"),
        })
    })?;
    let vopts = load_verify_options(config)?;
    let report = pool(opts.workers)?
        .install(|| run_suite(suite, &vopts))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let json = to_json(&report)?;
    if let Some(out) = &opts.out {
        write_atomic(&out.join(format!("verify_{}.json", suite.name())), &json)?;
    }
    if !report.passed {
        return Err(CliError::Verify(Box::new(report)));
    }
    Ok(match opts.format {
        Format::Json => String::from_utf8(json).expect("json output is utf-8"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["suite", "check", "value", "bound", "passed"])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            for s in &report.suites {
                for c in &s.checks {
                    w.write_record([
                        s.suite.clone(),
                        c.name.clone(),
                        c.value.to_string(),
                        c.bound.to_string(),
                        c.passed.to_string(),
                    ])
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
            }
            String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    })
}

pub fn cmd_catalog(format: Format) -> Result<String, CliError> {
    let entries = catalog();
    match format {
        Format::Json => Ok(String::from_utf8(to_json(&entries)?).expect("json output is utf-8")),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "description", "defaults"])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            for e in &entries {
                let defaults = serde_json::to_string(&e.defaults).map_err(|e| CliError::Runtime(e.to_string()))?;
                w.write_record([e.name, e.description, defaults.as_str()])
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
                .expect("csv output is utf-8"))
        }
    }
}
