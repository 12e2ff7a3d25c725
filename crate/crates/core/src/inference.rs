//! Limit laws, p-values, confidence intervals and goodness-of-fit distances.

use serde::{Deserialize, Serialize};

use crate::alphabet::{SymbolSequence, SymbolSequencePair};
use crate::empirical::{count_blocks, PairCounts};
use crate::error::{Error, Result};
use crate::estimators::{self, lr_statistic_di_from_counts, plugin_di_from_counts};
use crate::markov::{self, JointMarkovModel, UnivariateMarkovModel};

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Asymptotic Kolmogorov critical constant at the 1% level; the critical
/// distance for `N` samples is `KS_CRITICAL_1PCT / sqrt(N)`.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

/// Degrees of freedom `(m-1)^2` of the independence test.
pub fn dof_mi(m: usize) -> Result<u64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "independence test needs m >= 2, got {m}"
        )));
    }
    let d = (m as u64 - 1)
        .checked_mul(m as u64 - 1)
        .ok_or_else(|| Error::InvalidArgument("degrees of freedom overflow".into()))?;
    Ok(d)
}

/// Degrees of freedom `ell^k (m^(k+1) - 1)(ell - 1)` of the causality test.
pub fn dof_di(m: usize, ell: usize, k: usize) -> Result<u64> {
    if m < 2 || ell < 2 || k < 1 {
        return Err(Error::InvalidArgument(format!(
            "causality test needs m >= 2, ell >= 2, k >= 1 (got m={m}, ell={ell}, k={k})"
        )));
    }
    let overflow = || Error::InvalidArgument("degrees of freedom overflow".into());
    let (m, ell) = (m as u64, ell as u64);
    let k32 = u32::try_from(k).map_err(|_| overflow())?;
    let ell_k = ell.checked_pow(k32).ok_or_else(overflow)?;
    let m_k1 = m.checked_pow(k32 + 1).ok_or_else(overflow)?;
    ell_k
        .checked_mul(m_k1 - 1)
        .and_then(|v| v.checked_mul(ell - 1))
        .ok_or_else(overflow)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 10_000;

/// Series for `P(a, x)`, accurate for `x < a + 1`.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Continued fraction for `Q(a, x)` (modified Lentz), accurate for `x >= a + 1`.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_p_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - gamma_q_continued_fraction(a, x)).clamp(0.0, 1.0)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).clamp(0.0, 1.0)
    } else {
        gamma_q_continued_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Survival function of the chi-squared law with `dof` degrees of freedom.
pub fn chi_sq_sf(x: f64, dof: u64) -> f64 {
    regularized_gamma_q(dof as f64 / 2.0, x.max(0.0) / 2.0)
}

pub fn chi_sq_cdf(x: f64, dof: u64) -> f64 {
    regularized_gamma_p(dof as f64 / 2.0, x.max(0.0) / 2.0)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`]: rational approximation refined by one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Kolmogorov distance `sup |F_N - F|` between the empirical distribution of
/// `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("KS distance needs at least one sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// `KS_CRITICAL_1PCT / sqrt(n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    KS_CRITICAL_1PCT / (n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Retain,
}

/// Outcome of a likelihood-ratio test; serializes to the report schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub estimate_nats: f64,
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    pub n: u64,
    pub k: usize,
    pub m: usize,
    /// Absent for the single-stream independence test.
    pub ell: Option<usize>,
    /// Plug-in asymptotic standard deviation, when the fitted chain allows it.
    pub sigma_hat: Option<f64>,
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn rejects(&self) -> bool {
        self.decision == Decision::Reject
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "significance level must be in (0, 1), got {alpha}"
        )))
    }
}

fn decide(p_value: f64, alpha: f64) -> Decision {
    if p_value < alpha {
        Decision::Reject
    } else {
        Decision::Retain
    }
}

fn small_sample_warning(n: u64, dof: u64) -> Option<String> {
    (n < 5 * dof).then(|| format!("chi-square approximation unreliable: n = {n} < 5 * dof = {}", 5 * dof))
}

/// Likelihood-ratio test of "X has no causal influence on Y" at order `pair.k()`.
pub fn test_causality(pair: &SymbolSequencePair, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let counts = count_blocks(pair);
    let layout = *counts.layout();
    let dof = dof_di(layout.m(), layout.ell(), layout.k())?;
    let estimate = plugin_di_from_counts(&counts)?;
    let statistic = lr_statistic_di_from_counts(&counts);
    let p_value = chi_sq_sf(statistic, dof);
    let mut warnings: Vec<String> = small_sample_warning(counts.n(), dof).into_iter().collect();
    let sigma_hat = match JointMarkovModel::fitted(&counts).and_then(|m| markov::sigma_sq_di(&m)) {
        Ok(s) => Some(s.sqrt()),
        Err(e) => {
            warnings.push(format!("sigma_hat unavailable: {e}"));
            None
        }
    };
    Ok(TestReport {
        estimate_nats: estimate.i_hat,
        statistic,
        dof,
        p_value,
        alpha,
        decision: decide(p_value, alpha),
        n: counts.n(),
        k: layout.k(),
        m: layout.m(),
        ell: Some(layout.ell()),
        sigma_hat,
        warnings,
    })
}

/// Maximum-likelihood first-order chain of a single stream.
pub fn fitted_univariate(counts: &PairCounts) -> Result<UnivariateMarkovModel> {
    let m = counts.m();
    let first = counts.first_marginal();
    if let Some(a) = first.iter().position(|&c| c == 0) {
        return Err(Error::FittedNotErgodic(format!(
            "symbol {a} never observed as a predecessor"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|a| (0..m).map(|b| counts.get(a, b) as f64 / first[a] as f64).collect())
        .collect();
    let model = UnivariateMarkovModel::from_rows(&rows).map_err(|e| Error::FittedNotErgodic(e.to_string()))?;
    markov::check_ergodic(model.as_joint()).map_err(|e| Error::FittedNotErgodic(e.to_string()))?;
    Ok(model)
}

/// Likelihood-ratio test of independence within first-order Markov chains.
pub fn test_independence_markov(seq: &SymbolSequence, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let counts = PairCounts::from_sequence(seq)?;
    let m = counts.m();
    let dof = dof_mi(m)?;
    let estimate = estimators::plugin_mi_from_counts(&counts);
    let statistic = estimators::lr_statistic_mi(seq)?;
    let p_value = chi_sq_sf(statistic, dof);
    let mut warnings: Vec<String> = small_sample_warning(counts.n(), dof).into_iter().collect();
    let sigma_hat = match fitted_univariate(&counts).and_then(|model| markov::sigma_sq_mi(&model)) {
        Ok(s) => Some(s.sqrt()),
        Err(e) => {
            warnings.push(format!("sigma_hat unavailable: {e}"));
            None
        }
    };
    Ok(TestReport {
        estimate_nats: estimate.i_hat,
        statistic,
        dof,
        p_value,
        alpha,
        decision: decide(p_value, alpha),
        n: counts.n(),
        k: 1,
        m,
        ell: None,
        sigma_hat,
        warnings,
    })
}

/// Where the asymptotic variance of a confidence interval comes from.
#[derive(Clone, Copy, Debug)]
pub enum SigmaSource<'a> {
    /// A known generating model.
    Model(&'a JointMarkovModel),
    /// The chain fitted to the sample's own block counts.
    Plugin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub sigma_hat: f64,
    /// True when `sigma_hat == 0` and the normal limit is degenerate.
    pub degenerate: bool,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower() <= value && value <= self.upper()
    }
}

/// Normal-approximation interval `I_hat +- z sigma / sqrt(n)` for the directed
/// information rate.
pub fn confidence_interval_di(
    pair: &SymbolSequencePair,
    level: f64,
    source: SigmaSource<'_>,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let counts = count_blocks(pair);
    let estimate = plugin_di_from_counts(&counts)?;
    let sigma_sq = match source {
        SigmaSource::Model(model) => markov::sigma_sq_di(model)?,
        SigmaSource::Plugin => markov::sigma_sq_di(&JointMarkovModel::fitted(&counts)?)?,
    };
    let sigma_hat = sigma_sq.sqrt();
    let z = normal_quantile((1.0 + level) / 2.0)?;
    Ok(ConfidenceInterval {
        center: estimate.i_hat,
        half_width: z * sigma_hat / (estimate.n as f64).sqrt(),
        level,
        sigma_hat,
        degenerate: sigma_hat == 0.0,
    })
}
