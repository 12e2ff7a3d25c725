//! Reproducible Monte Carlo experiments over simulated chains.
//!
//! Trial `i` draws its randomness from `seed ^ splitmix64(i)` and trials run on
//! the rayon pool; results are collected in trial order.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::Stream;
use crate::empirical::{count_blocks, PairCounts};
use crate::error::{Error, Result};
use crate::estimators::{self, lr_statistic_di_from_counts, lr_statistic_mi_from_counts, plugin_di_from_counts};
use crate::inference::{self, SigmaSource};
use crate::markov::{self, AnyModel, JointMarkovModel, ModelFile, UnivariateMarkovModel};

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ splitmix64(trial)
}

/// Runs `f(trial, trial_seed)` for every trial in parallel; output is in trial order.
pub fn run_trials<T, F>(trials: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(i, trial_seed(seed, i as u64)))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "slope needs at least two matching points".into(),
        ));
    }
    if x.iter().chain(y).any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::InvalidArgument("log-log slope needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Chi2Null,
    Clt,
    RateDichotomy,
    Coverage,
    IdentityFuzz,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi2-null" => Ok(ExperimentKind::Chi2Null),
            "clt" => Ok(ExperimentKind::Clt),
            "rate-dichotomy" => Ok(ExperimentKind::RateDichotomy),
            "coverage" => Ok(ExperimentKind::Coverage),
            "identity-fuzz" => Ok(ExperimentKind::IdentityFuzz),
            other => Err(Error::InvalidArgument(format!("unknown experiment kind '{other}'"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Chi2Null => "chi2-null",
            ExperimentKind::Clt => "clt",
            ExperimentKind::RateDichotomy => "rate-dichotomy",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::IdentityFuzz => "identity-fuzz",
        })
    }
}

/// A model given by file path or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(ModelFile),
}

impl ModelSource {
    pub fn load(&self) -> Result<AnyModel> {
        match self {
            ModelSource::Path(p) => markov::load_model(p),
            ModelSource::Inline(file) => file.clone().into_model(),
        }
    }
}

fn default_alpha() -> f64 {
    inference::DEFAULT_ALPHA
}

fn default_level() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub model: Option<ModelSource>,
    pub trials: usize,
    /// One sample size, or the strictly increasing grid of a rate experiment.
    pub n: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Confidence level of the coverage experiment.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, model: Option<ModelSource>, trials: usize, n: Vec<usize>, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            model,
            trials,
            n,
            seed,
            alpha: default_alpha(),
            level: default_level(),
            out: None,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    /// Checks the config and loads its model.
    pub fn validate(&self) -> Result<Option<AnyModel>> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.n.is_empty() && self.kind != ExperimentKind::IdentityFuzz {
            return Err(Error::InvalidArgument("no sample size given".into()));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("n-grid must be strictly increasing".into()));
        }
        if self.n.len() > 1 && self.kind != ExperimentKind::RateDichotomy {
            return Err(Error::InvalidArgument(format!("{} takes a single n", self.kind)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument("alpha and level must lie in (0, 1)".into()));
        }
        let model = match (&self.model, self.kind) {
            (_, ExperimentKind::IdentityFuzz) => None,
            (None, kind) => return Err(Error::InvalidArgument(format!("{kind} needs a model"))),
            (Some(src), _) => Some(src.load()?),
        };
        if let Some(model) = &model {
            let k = model.k();
            if let Some(&n) = self.n.iter().find(|&&n| n < k + 1) {
                return Err(Error::InvalidArgument(format!("n = {n} is below k + 1 = {}", k + 1)));
            }
            markov::check_ergodic(model.joint())?;
        }
        Ok(model)
    }
}

/// What a model is estimated with: MI for single-stream models, DI otherwise.
#[derive(Clone, Debug)]
enum Target {
    Mi(UnivariateMarkovModel),
    Di(JointMarkovModel),
}

struct Sample {
    n: u64,
    i_hat: f64,
    statistic: f64,
}

impl Target {
    fn new(model: AnyModel) -> Result<Self> {
        let target = match model {
            AnyModel::Univariate(m) => Target::Mi(m.stationary_start()?),
            AnyModel::Joint(m) => Target::Di(m.stationary_start()?),
        };
        Ok(target)
    }

    fn name(&self) -> &'static str {
        match self {
            Target::Mi(_) => "mi",
            Target::Di(_) => "di",
        }
    }

    fn dof(&self) -> Result<u64> {
        match self {
            Target::Mi(m) => inference::dof_mi(m.m()),
            Target::Di(m) => inference::dof_di(m.m(), m.ell(), m.k()),
        }
    }

    fn rate(&self) -> Result<f64> {
        match self {
            Target::Mi(m) => markov::analytic_mi_rate(m),
            Target::Di(m) => markov::analytic_di_rate(m),
        }
    }

    fn sigma_sq(&self) -> Result<f64> {
        match self {
            Target::Mi(m) => markov::sigma_sq_mi(m),
            Target::Di(m) => markov::sigma_sq_di(m),
        }
    }

    fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        match self {
            Target::Mi(m) => {
                let seq = m.simulate(n, seed).view(Stream::X);
                let counts = PairCounts::from_sequence(&seq)?;
                Ok(Sample {
                    n: counts.n(),
                    i_hat: estimators::plugin_mi_from_counts(&counts).i_hat,
                    statistic: lr_statistic_mi_from_counts(&counts),
                })
            }
            Target::Di(m) => {
                let counts = count_blocks(&m.simulate(n, seed));
                Ok(Sample {
                    n: counts.n(),
                    i_hat: plugin_di_from_counts(&counts)?.i_hat,
                    statistic: lr_statistic_di_from_counts(&counts),
                })
            }
        }
    }
}

/// Mean absolute error and mean estimate at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub mean_i_hat: f64,
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: Option<ExperimentKind>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_critical: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<GridPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
}

/// Per-trial table plus summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub summary: Summary,
}

impl ExperimentResults {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    /// Writes `path` (CSV) and `path` with extension `summary.json`.
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        let summary_path = path.with_extension("summary.json");
        std::fs::write(&summary_path, self.summary_json()? + "\n")?;
        Ok(summary_path)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    let model = config.validate()?;
    let mut summary = Summary {
        kind: Some(config.kind),
        trials: config.trials,
        seed: config.seed,
        ..Summary::default()
    };
    if config.kind == ExperimentKind::IdentityFuzz {
        return identity_fuzz(config, summary);
    }
    let target = Target::new(model.expect("validated model"))?;
    summary.estimator = Some(target.name().to_string());
    match config.kind {
        ExperimentKind::Chi2Null => chi2_null(config, &target, summary),
        ExperimentKind::Clt => clt(config, &target, summary),
        ExperimentKind::RateDichotomy => rate_dichotomy(config, &target, summary),
        ExperimentKind::Coverage => coverage(config, &target, summary),
        ExperimentKind::IdentityFuzz => unreachable!(),
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn chi2_null(config: &ExperimentConfig, target: &Target, mut summary: Summary) -> Result<ExperimentResults> {
    let n = config.n[0];
    let dof = target.dof()?;
    let samples = collect(run_trials(config.trials, config.seed, |_, s| target.sample(n, s)))?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut statistics = Vec::with_capacity(samples.len());
    let mut rejections = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let p = inference::chi_sq_sf(s.statistic, dof);
        rejections += (p < config.alpha) as usize;
        statistics.push(s.statistic);
        rows.push(vec![i as f64, s.n as f64, s.i_hat, s.statistic, p]);
    }
    summary.dof = Some(dof);
    summary.true_rate = Some(target.rate()?);
    summary.ks_distance = Some(inference::ks_distance(&statistics, |x| inference::chi_sq_cdf(x, dof))?);
    summary.ks_critical = Some(inference::ks_critical_1pct(config.trials));
    summary.alpha = Some(config.alpha);
    summary.rejection_rate = Some(rejections as f64 / config.trials as f64);
    Ok(ExperimentResults {
        columns: vec!["trial", "n", "i_hat", "statistic", "p_value"],
        rows,
        summary,
    })
}

fn clt(config: &ExperimentConfig, target: &Target, mut summary: Summary) -> Result<ExperimentResults> {
    let n = config.n[0];
    let rate = target.rate()?;
    let sigma_sq = target.sigma_sq()?;
    if sigma_sq <= 0.0 {
        return Err(Error::InvalidArgument(
            "clt experiment needs a model with sigma^2 > 0".into(),
        ));
    }
    let sigma = sigma_sq.sqrt();
    let samples = collect(run_trials(config.trials, config.seed, |_, s| target.sample(n, s)))?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut z = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let zi = (s.n as f64).sqrt() * (s.i_hat - rate) / sigma;
        z.push(zi);
        rows.push(vec![i as f64, s.n as f64, s.i_hat, zi]);
    }
    summary.true_rate = Some(rate);
    summary.sigma_sq = Some(sigma_sq);
    summary.ks_distance = Some(inference::ks_distance(&z, inference::normal_cdf)?);
    summary.ks_critical = Some(inference::ks_critical_1pct(config.trials));
    Ok(ExperimentResults {
        columns: vec!["trial", "n", "i_hat", "z"],
        rows,
        summary,
    })
}

fn rate_dichotomy(config: &ExperimentConfig, target: &Target, mut summary: Summary) -> Result<ExperimentResults> {
    let rate = target.rate()?;
    let trials = config.trials;
    let total = trials * config.n.len();
    // trial seeds run over the whole grid so no two cells share a stream
    let samples = collect(run_trials(total, config.seed, |i, s| {
        target.sample(config.n[i / trials], s)
    }))?;
    let mut rows = Vec::with_capacity(total);
    let mut grid = Vec::with_capacity(config.n.len());
    for (g, &n) in config.n.iter().enumerate() {
        let cell = &samples[g * trials..(g + 1) * trials];
        let mut sum_i = 0.0;
        let mut sum_err = 0.0;
        for (t, s) in cell.iter().enumerate() {
            let err = (s.i_hat - rate).abs();
            sum_i += s.i_hat;
            sum_err += err;
            rows.push(vec![t as f64, n as f64, s.i_hat, err]);
        }
        grid.push(GridPoint {
            n,
            mean_i_hat: sum_i / trials as f64,
            mean_abs_error: sum_err / trials as f64,
        });
    }
    if grid.len() >= 2 {
        let ns: Vec<f64> = grid.iter().map(|p| p.n as f64).collect();
        let err: Vec<f64> = grid.iter().map(|p| p.mean_abs_error).collect();
        let mean: Vec<f64> = grid.iter().map(|p| p.mean_i_hat).collect();
        summary.slope_abs_error = loglog_slope(&ns, &err).ok();
        summary.slope_mean = loglog_slope(&ns, &mean).ok();
    }
    summary.true_rate = Some(rate);
    summary.grid = Some(grid);
    Ok(ExperimentResults {
        columns: vec!["trial", "n", "i_hat", "abs_error"],
        rows,
        summary,
    })
}

fn coverage(config: &ExperimentConfig, target: &Target, mut summary: Summary) -> Result<ExperimentResults> {
    let Target::Di(model) = target else {
        return Err(Error::InvalidArgument(
            "coverage experiment needs a joint (directed information) model".into(),
        ));
    };
    let n = config.n[0];
    let rate = markov::analytic_di_rate(model)?;
    let results = collect(run_trials(config.trials, config.seed, |_, s| {
        let pair = model.simulate(n, s);
        inference::confidence_interval_di(&pair, config.level, SigmaSource::Model(model))
    }))?;
    let mut covered = 0usize;
    let rows: Vec<Vec<f64>> = results
        .iter()
        .enumerate()
        .map(|(i, ci)| {
            let hit = ci.contains(rate);
            covered += hit as usize;
            vec![i as f64, n as f64, ci.center, ci.lower(), ci.upper(), hit as u8 as f64]
        })
        .collect();
    summary.true_rate = Some(rate);
    summary.sigma_sq = results.first().map(|ci| ci.sigma_hat * ci.sigma_hat);
    summary.level = Some(config.level);
    summary.coverage = Some(covered as f64 / config.trials as f64);
    Ok(ExperimentResults {
        columns: vec!["trial", "n", "i_hat", "lower", "upper", "covered"],
        rows,
        summary,
    })
}

/// One fuzzed input: a random strictly positive chain with random shape.
#[derive(Clone, Debug)]
pub struct FuzzCase {
    pub k: usize,
    pub m: usize,
    pub ell: usize,
    pub n: usize,
    pub model: JointMarkovModel,
}

/// Draws `k in {1,2}`, `m, ell in {2,3}`, `n in 50..=5000` and a random model.
pub fn fuzz_case(seed: u64) -> FuzzCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=2);
    let m = rng.random_range(2..=3);
    let ell = rng.random_range(2..=3);
    let n = rng.random_range(50..=5000);
    let model = JointMarkovModel::random_positive(k, m, ell, &mut rng).expect("small random model");
    FuzzCase { k, m, ell, n, model }
}

fn identity_fuzz(config: &ExperimentConfig, mut summary: Summary) -> Result<ExperimentResults> {
    let rows = collect(run_trials(config.trials, config.seed, |i, s| {
        let case = fuzz_case(s);
        let pair = case.model.simulate(case.n, splitmix64(s));
        let di = estimators::identity_check_di(&pair)?;
        let mi = estimators::identity_check_mi(&pair.view(Stream::X))?;
        Ok(vec![
            i as f64,
            case.n as f64,
            case.k as f64,
            case.m as f64,
            case.ell as f64,
            mi.lr_statistic,
            mi.scaled_plugin,
            mi.relative_deviation(),
            di.lr_statistic,
            di.scaled_plugin,
            di.relative_deviation(),
        ])
    }))?;
    summary.max_deviation = rows.iter().map(|r| r[7].max(r[10])).reduce(f64::max);
    Ok(ExperimentResults {
        columns: vec![
            "trial",
            "n",
            "k",
            "m",
            "ell",
            "lr_mi",
            "scaled_plugin_mi",
            "deviation_mi",
            "lr_di",
            "scaled_plugin_di",
            "deviation_di",
        ],
        rows,
        summary,
    })
}
