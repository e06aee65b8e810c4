//! Command-line front end. Results go to stdout as JSON or CSV, messages to
//! stderr. Exit codes: 0 success, 1 verification failure or strict abort,
//! 2 usage or input error, 3 internal failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde_json::{json, Value};

use crate::convolution::ConvPath;
use crate::dyer::estimate_dyer;
use crate::estimator::{estimate_subquadratic, EstimateError, EstimateReport};
use crate::instance::{generate, parse_classes, parse_instance, AlgoParams, CaseSplit, GenKind, KnapsackInstance, LeafVariant};
use crate::oracle::{count_band, count_dp, count_enum};
use crate::verify::{self, Verdict};
use crate::xfloat::XReal;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "knapcount", version, about = "Approximate and exact counting of 0/1 knapsack solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Write a random instance in the text format `n T w1 ... wn`.
    Generate(GenerateArgs),
    /// Count solutions of an instance and print one JSON record.
    Count(CountArgs),
    /// Run verification suites and print CSV verdicts.
    Verify(VerifyArgs),
    /// Print stage timings on bounded-ratio instances as CSV.
    Bench(BenchArgs),
    /// Exact count, or exact band count, of an instance.
    Oracle(OracleArgs),
    /// Quick cross-checks of the convolution paths.
    ConvSelftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleMethod {
    Enum,
    Dp,
}

#[derive(clap::Args, Debug)]
pub struct OracleArgs {
    /// Instance file (`-` for stdin).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "enum")]
    pub method: OracleMethod,
    /// Count `lo < W_X <= hi` instead, given as `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    pub band: Option<Vec<BigUint>>,
}

#[derive(clap::Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum KindArg {
    Uniform,
    BoundedRatio,
    TinyAdversarial,
    CustomClasses,
}

#[derive(clap::Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub n: usize,
    /// Capacity.
    #[arg(long = "T")]
    pub capacity: BigUint,
    #[arg(long, default_value_t = 4)]
    pub ell: u64,
    /// Class list for custom_classes, e.g. `2:3,8:5`.
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Subquad,
    Dyer,
    ExactEnum,
    ExactDp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Practical,
    Bench,
    Theory,
}

#[derive(clap::Args, Debug)]
pub struct CountArgs {
    /// Instance file (`-` for stdin).
    pub input: Option<PathBuf>,
    /// Inline weights, comma separated; needs `--capacity`.
    #[arg(long, value_delimiter = ',', conflicts_with = "input")]
    pub weights: Option<Vec<BigUint>>,
    #[arg(long, requires = "weights")]
    pub capacity: Option<BigUint>,
    #[arg(long, value_enum, default_value = "subquad")]
    pub algo: AlgoArg,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Median of this many independent runs.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Exit 1 when a run aborts on its time budget.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, env = "KNAPCOUNT_THREADS", default_value_t = 1)]
    pub threads: usize,
    #[arg(long, value_enum, default_value = "practical")]
    pub preset: PresetArg,
    #[arg(long, value_enum)]
    pub leaf_variant: Option<LeafArg>,
    #[arg(long, value_enum)]
    pub case_split: Option<SplitArg>,
    #[arg(long, value_enum)]
    pub conv_path: Option<ConvArg>,
    #[arg(long)]
    pub time_budget_ms: Option<u64>,
    #[arg(long)]
    pub max_queries: Option<u64>,
    /// Include wall-clock stage timings (makes output run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LeafArg {
    Auto,
    Dp,
    Cc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Paper,
    Applicable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConvArg {
    Auto,
    Witness,
    Exact,
}

#[derive(clap::Args, Debug)]
pub struct VerifyArgs {
    /// oracle, ntt, conv, witness, sampler, structure, secondphase or all.
    #[arg(long)]
    pub suite: String,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "KNAPCOUNT_THREADS", default_value_t = 1)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchAlgo {
    Subquad,
    Dyer,
    Both,
}

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub algo: BenchAlgo,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, env = "KNAPCOUNT_THREADS", default_value_t = 1)]
    pub threads: usize,
}

/// Parse `args` (program name first) and run, writing to `out` and `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{}", text);
            } else {
                let _ = write!(out, "{}", text);
            }
            return code;
        }
    };
    let echo: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let res = match cli.cmd {
        Cmd::Generate(a) => cmd_generate(&a, out),
        Cmd::Count(a) => cmd_count(&a, &echo, out),
        Cmd::Verify(a) => cmd_verify(&a, out),
        Cmd::Bench(a) => cmd_bench(&a, out),
        Cmd::Oracle(a) => cmd_oracle(&a, out),
        Cmd::ConvSelftest(a) => cmd_selftest(&a, out),
    };
    match res {
        Ok(code) => code,
        Err((code, msg)) => {
            if !msg.is_empty() {
                let _ = writeln!(err, "error: {}", msg);
            }
            code
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

type CmdResult = Result<i32, (i32, String)>;

fn usage(e: impl std::fmt::Display) -> (i32, String) {
    (EXIT_USAGE, e.to_string())
}

fn io_err(e: std::io::Error) -> (i32, String) {
    // reader went away (e.g. `| head`): stop quietly
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        return (EXIT_OK, String::new());
    }
    (EXIT_INTERNAL, e.to_string())
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> CmdResult {
    let kind = match a.kind {
        KindArg::Uniform => GenKind::Uniform,
        KindArg::BoundedRatio => GenKind::BoundedRatio { ell: a.ell },
        KindArg::TinyAdversarial => GenKind::TinyAdversarial,
        KindArg::CustomClasses => {
            let spec = a.classes.as_deref().ok_or_else(|| usage("custom_classes needs --classes"))?;
            GenKind::CustomClasses(parse_classes(spec).map_err(usage)?)
        }
    };
    let inst = generate(&kind, a.n, &a.capacity, a.seed).map_err(usage)?;
    let text = inst.to_text();
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("{}: {}", p.display(), e)))?,
        None => out.write_all(text.as_bytes()).map_err(io_err)?,
    }
    Ok(EXIT_OK)
}

fn load_instance(a: &CountArgs) -> Result<KnapsackInstance, (i32, String)> {
    if let Some(ws) = &a.weights {
        let cap = a.capacity.clone().ok_or_else(|| usage("--weights needs --capacity"))?;
        return KnapsackInstance::new(ws.clone(), cap).map_err(usage);
    }
    let path = a.input.as_ref().ok_or_else(|| usage("no instance: give a file or --weights/--capacity"))?;
    read_instance(path)
}

fn read_instance(path: &std::path::Path) -> Result<KnapsackInstance, (i32, String)> {
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(usage)?;
        s
    } else {
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {}", path.display(), e)))?
    };
    parse_instance(&text).map_err(usage)
}

fn params_for(a: &CountArgs, seed: u64) -> AlgoParams {
    let mut p = match a.preset {
        PresetArg::Practical => AlgoParams::with_epsilon(a.epsilon, seed),
        PresetArg::Bench => AlgoParams::bench(a.epsilon, seed),
        PresetArg::Theory => AlgoParams::theory(a.epsilon, seed),
    };
    p.threads = a.threads;
    if let Some(l) = a.leaf_variant {
        p.leaf_variant = match l {
            LeafArg::Auto => LeafVariant::Auto,
            LeafArg::Dp => LeafVariant::Dp,
            LeafArg::Cc => LeafVariant::Cc,
        };
    }
    if let Some(c) = a.case_split {
        p.case_split = match c {
            SplitArg::Paper => CaseSplit::Paper,
            SplitArg::Applicable => CaseSplit::Applicable,
        };
    }
    if let Some(c) = a.conv_path {
        p.conv_path = match c {
            ConvArg::Auto => ConvPath::Auto,
            ConvArg::Witness => ConvPath::Witness,
            ConvArg::Exact => ConvPath::Exact,
        };
    }
    if a.time_budget_ms.is_some() {
        p.time_budget_ms = a.time_budget_ms;
    }
    if a.max_queries.is_some() {
        p.max_queries = a.max_queries;
    }
    p
}

fn estimate_err(e: EstimateError) -> (i32, String) {
    match e {
        EstimateError::Params(_) => (EXIT_USAGE, e.to_string()),
        _ => (EXIT_INTERNAL, e.to_string()),
    }
}

/// Lower median.
pub fn median(mut xs: Vec<XReal>) -> XReal {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    xs[(xs.len() - 1) / 2]
}

fn cmd_count(a: &CountArgs, echo: &[String], out: &mut dyn Write) -> CmdResult {
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let inst = load_instance(a)?;
    let algo_name = match a.algo {
        AlgoArg::Subquad => "subquad",
        AlgoArg::Dyer => "dyer",
        AlgoArg::ExactEnum => "exact-enum",
        AlgoArg::ExactDp => "exact-dp",
    };
    let mut record = json!({
        "command": echo.join(" "),
        "algo": algo_name,
        "seed": a.seed,
        "digest": inst.digest(),
        "n": inst.n(),
        "epsilon": a.epsilon,
    });
    let mut code = EXIT_OK;
    match a.algo {
        AlgoArg::ExactEnum | AlgoArg::ExactDp => {
            let exact = if a.algo == AlgoArg::ExactEnum { count_enum(&inst) } else { count_dp(&inst) }.map_err(usage)?;
            record["estimate"] = json!(exact.to_string());
            record["estimate_exact"] = json!(XReal::from_biguint(&exact).to_exact_string());
            record["aborted"] = json!(false);
        }
        AlgoArg::Subquad | AlgoArg::Dyer => {
            let mut reports: Vec<EstimateReport> = Vec::with_capacity(a.repeats);
            for k in 0..a.repeats as u64 {
                let p = params_for(a, a.seed.wrapping_add(k));
                let rep = if a.algo == AlgoArg::Subquad { estimate_subquadratic(&inst, &p) } else { estimate_dyer(&inst, &p) };
                reports.push(rep.map_err(estimate_err)?);
            }
            let med = median(reports.iter().map(|r| r.estimate).collect());
            let chosen = reports.iter().find(|r| r.estimate == med).expect("median is one of the runs");
            let aborted = reports.iter().any(|r| r.aborted);
            record["estimate"] = json!(med.to_decimal_string());
            record["estimate_exact"] = json!(med.to_exact_string());
            record["aborted"] = json!(aborted);
            record["repeats"] = json!(a.repeats);
            if a.repeats > 1 {
                record["estimates"] = json!(reports.iter().map(|r| r.estimate.to_decimal_string()).collect::<Vec<_>>());
            }
            let mut diag = serde_json::to_value(chosen).map_err(|e| (EXIT_INTERNAL, e.to_string()))?;
            let times = diag.as_object_mut().and_then(|m| m.remove("times")).unwrap_or(Value::Null);
            record["diagnostics"] = diag;
            if a.timings {
                record["times"] = times;
            }
            if aborted && a.strict {
                code = EXIT_FAIL;
            }
        }
    }
    writeln!(out, "{}", record).map_err(io_err)?;
    Ok(code)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    if !verify::SUITES.contains(&a.suite.as_str()) {
        return Err(usage(format!("unknown suite {:?}; expected one of {}", a.suite, verify::SUITES.join(", "))));
    }
    let rows = verify::run_suite(&a.suite, a.trials, a.seed, a.threads).map_err(|e| (EXIT_INTERNAL, e.to_string()))?;
    writeln!(out, "{}", verify::CSV_HEADER).map_err(io_err)?;
    for r in &rows {
        writeln!(out, "{}", verify::csv_line(r)).map_err(io_err)?;
    }
    Ok(if rows.iter().any(|r| r.pass == Verdict::Fail) { EXIT_FAIL } else { EXIT_OK })
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CmdResult {
    let algos: &[&str] = match a.algo {
        BenchAlgo::Subquad => &["subquad"],
        BenchAlgo::Dyer => &["dyer"],
        BenchAlgo::Both => &["subquad", "dyer"],
    };
    let mut p = AlgoParams::bench(a.epsilon, a.seed);
    p.threads = a.threads;
    p.validate(2).map_err(usage)?;
    writeln!(out, "{}", verify::BENCH_HEADER).map_err(io_err)?;
    for r in verify::bench(&a.sizes, algos, a.seed, &p) {
        writeln!(out, "{},{},{},{},{}", r.n, r.algo, r.stage, r.ms, r.digest).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> CmdResult {
    let inst = read_instance(&a.input)?;
    let count = match &a.band {
        Some(b) if b.len() != 2 => return Err(usage("--band takes lo,hi")),
        Some(b) => count_band(&inst, &b[0], &b[1]),
        None if a.method == OracleMethod::Dp => count_dp(&inst),
        None => count_enum(&inst),
    }
    .map_err(usage)?;
    let record = json!({ "digest": inst.digest(), "n": inst.n(), "count": count.to_string() });
    writeln!(out, "{}", record).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn cmd_selftest(a: &SelftestArgs, out: &mut dyn Write) -> CmdResult {
    writeln!(out, "{}", verify::CSV_HEADER).map_err(io_err)?;
    let mut failed = false;
    for suite in ["ntt", "witness", "conv"] {
        let rows = verify::run_suite(suite, Some(a.trials), a.seed, 1).map_err(|e| (EXIT_INTERNAL, e.to_string()))?;
        for r in &rows {
            failed |= r.pass == Verdict::Fail;
            writeln!(out, "{}", verify::csv_line(r)).map_err(io_err)?;
        }
    }
    Ok(if failed { EXIT_FAIL } else { EXIT_OK })
}
