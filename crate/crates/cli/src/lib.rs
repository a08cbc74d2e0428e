//! Command-line driver: parse a datum and `z`, run the three phases, write one
//! record per prime and optionally cross-check against the direct oracle.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use hgm_amortized::datum::parse_tuple;
use hgm_amortized::engine::{run_traces, EngineOptions, PhaseTimings, TraceRun};
use hgm_amortized::gamma::GammaOptions;
use hgm_amortized::oracle::hp_direct;
use hgm_amortized::{Fraction, HypergeometricDatum, Method, TraceResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

/// How many amortized residues to recompute with the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleCheck {
    All,
    Count(usize),
}

impl FromStr for OracleCheck {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "all" => Ok(OracleCheck::All),
            n => n.parse().map(OracleCheck::Count).map_err(|_| format!("expected a count or \"all\", got {s:?}")),
        }
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleCheck::All => write!(f, "all"),
            OracleCheck::Count(n) => write!(f, "{n}"),
        }
    }
}

fn parse_z(s: &str) -> Result<Fraction, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Parser, Clone, Debug)]
#[command(name = "hgm-traces", version, about = "Hypergeometric motive traces mod p^e for all p up to a bound")]
pub struct RunConfig {
    /// Comma-separated fractions, e.g. 1/4,3/4
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub beta: String,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_z)]
    pub z: Fraction,
    /// Largest prime considered
    #[arg(long)]
    pub limit: u64,
    /// p-adic precision; defaults to ⌈(w+1)/2⌉
    #[arg(long)]
    pub precision: Option<u32>,
    /// Output file; stdout when absent
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long, env = "HGM_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Recompute gamma tables and do not write them
    #[arg(long)]
    pub no_cache: bool,
    /// Number of amortized primes to recheck with the oracle, or "all"
    #[arg(long, default_value_t = OracleCheck::Count(0))]
    pub oracle_check: OracleCheck,
    /// 0 picks the number of cores
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub phase_timings: bool,
}

impl RunConfig {
    pub fn datum(&self) -> anyhow::Result<HypergeometricDatum> {
        let alpha = parse_tuple(&self.alpha)?;
        let beta = parse_tuple(&self.beta)?;
        Ok(HypergeometricDatum::new(alpha, beta)?)
    }

    fn cache(&self) -> Option<PathBuf> {
        if self.no_cache {
            return None;
        }
        self.cache_dir.clone().or_else(default_cache_dir)
    }
}

fn default_cache_dir() -> Option<PathBuf> {
    let base = std::env::var_os("XDG_CACHE_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache")))?;
    Some(base.join("hgm-traces"))
}

/// One output row; `None` prints as null (jsonl) or an empty field (csv).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub p: u64,
    pub class: String,
    pub e: u32,
    pub residue: Option<String>,
    pub trace: Option<String>,
    pub method: Option<String>,
}

impl From<&TraceResult> for Record {
    fn from(t: &TraceResult) -> Self {
        Record {
            p: t.p,
            class: t.class.label().to_string(),
            e: t.e,
            residue: t.residue.as_ref().map(|r| r.value().to_string()),
            trace: t.lifted.as_ref().map(|v| v.to_string()),
            method: t.method.map(|m| m.label().to_string()),
        }
    }
}

pub const COLUMNS: [&str; 6] = ["p", "class", "e", "residue", "trace", "method"];

pub fn emit_record(t: &TraceResult, format: Format) -> String {
    let r = Record::from(t);
    match format {
        Format::Jsonl => {
            let num = |v: &Option<String>| v.clone().unwrap_or_else(|| "null".into());
            let method = r.method.as_ref().map_or("null".to_string(), |m| format!("\"{m}\""));
            format!(
                "{{\"p\":{},\"class\":\"{}\",\"e\":{},\"residue\":{},\"trace\":{},\"method\":{}}}",
                r.p,
                r.class,
                r.e,
                num(&r.residue),
                num(&r.trace),
                method
            )
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
            w.write_record(record_fields(&r)).expect("in-memory write");
            let bytes = w.into_inner().expect("in-memory flush");
            String::from_utf8(bytes).expect("ascii").trim_end().to_string()
        }
    }
}

fn record_fields(r: &Record) -> [String; 6] {
    let opt = |v: &Option<String>| v.clone().unwrap_or_default();
    [r.p.to_string(), r.class.clone(), r.e.to_string(), opt(&r.residue), opt(&r.trace), opt(&r.method)]
}

pub fn write_results(out: &mut dyn Write, results: &[TraceResult], format: Format) -> io::Result<()> {
    if format == Format::Csv {
        writeln!(out, "{}", COLUMNS.join(","))?;
    }
    for t in results {
        writeln!(out, "{}", emit_record(t, format))?;
    }
    out.flush()
}

fn report_timings(t: &PhaseTimings, total: std::time::Duration) {
    eprintln!("phase 1 (gamma tables):           {:.3} s", t.gamma.as_secs_f64());
    eprintln!("phase 2 (per-prime precompute):   {:.3} s", t.precompute.as_secs_f64());
    eprintln!("phase 3 (forests and assembly):   {:.3} s", t.forests.as_secs_f64());
    eprintln!("total:                            {:.3} s", total.as_secs_f64());
}

/// Recompute the selected amortized residues directly; the first mismatch
/// is an error naming the prime.
pub fn oracle_check(datum: &HypergeometricDatum, z: &Fraction, run: &TraceRun, which: OracleCheck) -> anyhow::Result<usize> {
    let candidates: Vec<&TraceResult> =
        run.results.iter().filter(|t| t.method == Some(Method::Amortized)).collect();
    let n = match which {
        OracleCheck::All => candidates.len(),
        OracleCheck::Count(n) if n > candidates.len() => {
            bail!("--oracle-check {n} exceeds the {} amortized primes", candidates.len())
        }
        OracleCheck::Count(n) => n,
    };
    for t in candidates.into_iter().take(n) {
        let want = hp_direct(datum, z, t.p, t.e)?;
        if t.residue.as_ref() != Some(&want) {
            bail!("oracle mismatch at p = {}: amortized {:?}, direct {}", t.p, t.residue, want);
        }
    }
    Ok(n)
}

pub fn compute(cfg: &RunConfig) -> anyhow::Result<TraceRun> {
    if cfg.limit < 2 {
        bail!("--limit must be at least 2");
    }
    if cfg.precision == Some(0) {
        bail!("--precision must be at least 1");
    }
    let datum = cfg.datum()?;
    let opts = EngineOptions {
        precision: cfg.precision,
        gamma: GammaOptions { cache_dir: cfg.cache(), ..GammaOptions::default() },
        ..EngineOptions::default()
    };
    if let Some(dir) = &opts.gamma.cache_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
    }
    Ok(run_traces(&datum, &cfg.z, cfg.limit, &opts)?)
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    pool.install(|| {
        let start = std::time::Instant::now();
        let run = compute(cfg)?;
        let total = start.elapsed();
        if cfg.phase_timings {
            report_timings(&run.timings, total);
        }
        let checked = oracle_check(&cfg.datum()?, &cfg.z, &run, cfg.oracle_check)?;
        if checked > 0 {
            eprintln!("oracle check: {checked} primes agree");
        }
        let mut out: Box<dyn Write> = match &cfg.output {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        write_results(&mut out, &run.results, cfg.format)?;
        Ok(())
    })
}
