use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dirinfo_core::experiment::ModelSource;
use dirinfo_core::{
    load_model, markov, plugin_di, plugin_mi, read_rows, read_sequences, test_causality, test_independence_markov,
    write_sequences, Alphabet, AnyModel, ExperimentConfig, ExperimentKind, JointMarkovModel, ModelFile, SequenceFormat,
    Stream, SymbolSequencePair, UnivariateMarkovModel,
};
use serde_json::{json, Value};

const EXIT_RETAIN: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_REJECT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dirinfo",
    version,
    about = "Mutual and directed information of finite-alphabet Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a sequence file from a model.
    Simulate(SimulateArgs),
    /// Plug-in estimate of the MI or DI rate of a data file.
    Estimate(EstimateArgs),
    /// Likelihood-ratio test; exits 0 on retain, 3 on reject.
    Test(TestArgs),
    /// Analytic rate and asymptotic variance of a model.
    Variance(VarianceArgs),
    /// Run a Monte Carlo experiment and write per-trial CSV plus a summary.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ModelArg {
    /// Model JSON file, or one of `copy`, `noisy-copy:EPS`, `iid:M`.
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Number of transitions; the file has n + k rows.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = SequenceFormat::Csv)]
    format: SequenceFormat,
}

#[derive(Args, Clone, Copy)]
struct Which {
    /// Mutual information between consecutive X symbols.
    #[arg(long, conflicts_with = "di")]
    mi: bool,
    /// Directed information X -> Y (default).
    #[arg(long)]
    di: bool,
}

#[derive(Args)]
struct DataArgs {
    /// Sequence file, one `x,y` row per line.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Size of the X alphabet; inferred from the data if absent.
    #[arg(long)]
    m: Option<usize>,
    /// Size of the Y alphabet; inferred from the data if absent.
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, default_value_t = SequenceFormat::Csv)]
    format: SequenceFormat,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    which: Which,
    /// Report in bits instead of nats.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    which: Which,
    #[arg(long, default_value_t = dirinfo_core::inference::DEFAULT_ALPHA)]
    alpha: f64,
    /// Add `estimate_bits` to the report.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VarianceArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    which: Which,
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// chi2-null, clt, rate-dichotomy, coverage or identity-fuzz.
    #[arg(long)]
    kind: Option<ExperimentKind>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sample size, or a grid such as `1024,4096` or `2^10..2^20`.
    #[arg(long, value_parser = parse_sizes)]
    n: Option<Sizes>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Confidence level of the coverage experiment.
    #[arg(long)]
    level: Option<f64>,
    /// CSV path; the summary goes next to it as `.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct Sizes(Vec<usize>);

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let mut sizes = Vec::new();
    for token in s.split(',').map(str::trim) {
        if let Some((lo, hi)) = token.split_once("..") {
            let (base, lo) = parse_power(lo)?;
            let (base_hi, hi) = parse_power(hi)?;
            if base != base_hi || lo > hi {
                return Err(format!("bad range `{token}`"));
            }
            for e in lo..=hi {
                sizes.push(base.checked_pow(e).ok_or_else(|| format!("`{token}` overflows"))?);
            }
        } else {
            sizes.push(parse_size(token)?);
        }
    }
    Ok(Sizes(sizes))
}

fn parse_power(s: &str) -> Result<(usize, u32), String> {
    let (b, e) = s
        .split_once('^')
        .ok_or_else(|| format!("expected BASE^EXP, got `{s}`"))?;
    Ok((
        b.parse().map_err(|_| format!("bad base `{b}`"))?,
        e.parse().map_err(|_| format!("bad exponent `{e}`"))?,
    ))
}

fn parse_size(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    if let Some((b, e)) = s.split_once('^') {
        let (b, e): (usize, u32) = (
            b.parse().map_err(|_| format!("bad size `{s}`"))?,
            e.parse().map_err(|_| format!("bad size `{s}`"))?,
        );
        return b.checked_pow(e).ok_or_else(|| format!("`{s}` overflows"));
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(format!("bad size `{s}`")),
    }
}

fn resolve_model(spec: &str) -> Result<AnyModel> {
    let path = Path::new(spec);
    if path.exists() {
        return load_model(path).with_context(|| format!("loading model {spec}"));
    }
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (spec, None),
    };
    let model = match (name, param) {
        ("copy", None) => AnyModel::Joint(JointMarkovModel::copy()),
        ("noisy-copy", Some(eps)) => {
            AnyModel::Joint(JointMarkovModel::noisy_copy(eps.parse().context("noisy-copy:EPS")?)?)
        }
        ("iid", Some(m)) => {
            let m: usize = m.parse().context("iid:M")?;
            AnyModel::Univariate(UnivariateMarkovModel::iid(&vec![1.0 / m as f64; m])?)
        }
        _ => bail!("no model file `{spec}` and not a built-in model (copy, noisy-copy:EPS, iid:M)"),
    };
    Ok(model)
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut w = output(out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(value)?)?;
    w.flush()?;
    Ok(())
}

fn load_pair(args: &DataArgs, k: usize) -> Result<SymbolSequencePair> {
    let path = &args.data;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (m, ell) = match (args.m, args.ell) {
        (Some(m), Some(ell)) => (m, ell),
        (m, ell) => {
            let rows = read_rows(&bytes[..], args.format).with_context(|| format!("parsing {}", path.display()))?;
            let size = |v: Option<u64>| v.map_or(2, |s| (s as usize + 1).max(2));
            (
                m.unwrap_or_else(|| size(rows.iter().map(|r| r.x).max())),
                ell.unwrap_or_else(|| size(rows.iter().map(|r| r.y).max())),
            )
        }
    };
    read_sequences(&bytes[..], args.format, (Alphabet::new(m)?, Alphabet::new(ell)?), k)
        .with_context(|| format!("parsing {}", path.display()))
}

fn check_mi_order(args: &DataArgs) -> Result<()> {
    if args.k != 1 {
        bail!("the MI estimator is first order; use --k 1");
    }
    Ok(())
}

fn units(bits: bool) -> (&'static str, f64) {
    if bits {
        ("bits", std::f64::consts::LN_2)
    } else {
        ("nats", 1.0)
    }
}

fn simulate(args: SimulateArgs) -> Result<u8> {
    let model = resolve_model(&args.model.model)?;
    let pair = match &model {
        AnyModel::Joint(m) => m.simulate(args.n, args.seed),
        AnyModel::Univariate(m) => m.simulate(args.n, args.seed),
    };
    write_sequences(&pair, output(args.out.as_deref())?, args.format)?;
    Ok(EXIT_RETAIN)
}

fn estimate(args: EstimateArgs) -> Result<u8> {
    let (unit, scale) = units(args.bits);
    let value = if args.which.mi {
        check_mi_order(&args.data)?;
        let pair = load_pair(&args.data, 1)?;
        let est = plugin_mi(&pair.view(Stream::X))?;
        json!({"estimator": "mi", "estimate": est.i_hat / scale, "units": unit, "n": est.n, "k": 1, "m": est.m})
    } else {
        let pair = load_pair(&args.data, args.data.k)?;
        let est = plugin_di(&pair)?;
        json!({
            "estimator": "di", "estimate": est.i_hat / scale, "units": unit,
            "n": est.n, "k": est.k, "m": est.m, "ell": est.ell,
        })
    };
    write_json(&value, args.out.as_deref())?;
    Ok(EXIT_RETAIN)
}

fn test(args: TestArgs) -> Result<u8> {
    let report = if args.which.mi {
        check_mi_order(&args.data)?;
        let pair = load_pair(&args.data, 1)?;
        test_independence_markov(&pair.view(Stream::X), args.alpha)?
    } else {
        test_causality(&load_pair(&args.data, args.data.k)?, args.alpha)?
    };
    let mut value: Value = serde_json::from_str(&report.to_json()?)?;
    if args.bits {
        value["estimate_bits"] = json!(report.estimate_nats / std::f64::consts::LN_2);
    }
    write_json(&value, args.out.as_deref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if report.rejects() { EXIT_REJECT } else { EXIT_RETAIN })
}

fn variance(args: VarianceArgs) -> Result<u8> {
    let (unit, scale) = units(args.bits);
    let model = resolve_model(&args.model.model)?;
    let (estimator, rate, sigma_sq) = match (&model, args.which.mi, args.which.di) {
        (AnyModel::Univariate(m), _, false) => ("mi", markov::analytic_mi_rate(m)?, markov::sigma_sq_mi(m)?),
        (AnyModel::Joint(m), false, _) => ("di", markov::analytic_di_rate(m)?, markov::sigma_sq_di(m)?),
        (AnyModel::Univariate(_), _, true) => bail!("--di needs a joint model (one with `ell`)"),
        (AnyModel::Joint(_), true, _) => bail!("--mi needs a univariate model (one without `ell`)"),
    };
    let value = json!({
        "estimator": estimator,
        "rate": rate / scale,
        "sigma_sq": sigma_sq / (scale * scale),
        "units": unit,
    });
    write_json(&value, args.out.as_deref())?;
    Ok(EXIT_RETAIN)
}

fn experiment(args: ExperimentArgs) -> Result<u8> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut config =
                ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            // model paths in a config are relative to the config file
            if let (Some(ModelSource::Path(p)), Some(dir)) = (&mut config.model, path.parent()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            config
        }
        None => {
            let Some(kind) = args.kind else {
                bail!("give --kind or --config")
            };
            ExperimentConfig::new(kind, None, 1000, Vec::new(), 0)
        }
    };
    if let Some(kind) = args.kind {
        config.kind = kind;
    }
    if let Some(spec) = &args.model {
        config.model = Some(ModelSource::Inline(ModelFile::from(&resolve_model(spec)?)));
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(Sizes(n)) = args.n {
        config.n = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        config.alpha = alpha;
    }
    if let Some(level) = args.level {
        config.level = level;
    }
    if args.out.is_some() {
        config.out = args.out;
    }
    let results = dirinfo_core::run_experiment(&config)?;
    match &config.out {
        Some(path) => {
            let summary = results
                .save(path)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} and {}", path.display(), summary.display());
            println!("{}", results.summary_json()?);
        }
        None => {
            let mut w = output(None)?;
            results.write_csv(&mut w)?;
            w.flush()?;
            eprintln!("{}", results.summary_json()?);
        }
    }
    Ok(EXIT_RETAIN)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_RETAIN };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Variance(a) => variance(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
