//! Plug-in estimators and likelihood-ratio statistics.
//!
//! The likelihood functions below maximize the Markov log-likelihood in closed
//! form directly from integer counts, without going through the entropy
//! functionals. The plug-in estimators go through [`crate::info`]. The two
//! paths meet in the exact identities `Delta_n = 2 n I_hat` for both the
//! independence test and the causality test, which the test suite checks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::alphabet::{SymbolSequence, SymbolSequencePair};
use crate::empirical::{count_blocks, empirical_law, ContextCounts, PairCounts};
use crate::error::Result;
use crate::info;
use crate::layout::SlotMask;

/// Plug-in estimate of the stationary mutual information `I(X_0; X_1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub i_hat: f64,
    pub n: u64,
    pub m: usize,
}

/// Plug-in estimate of the directed information rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiEstimate {
    pub i_hat: f64,
    pub n: u64,
    pub k: usize,
    pub m: usize,
    pub ell: usize,
}

/// `H(P_X0) + H(P_X1) - H(P_X0X1)` of the empirical law of consecutive pairs.
///
/// `P_X0` and `P_X1` are the two coordinate marginals of the pair law, which
/// differ by the end effects of the sample.
pub fn plugin_mi(seq: &SymbolSequence) -> Result<MiEstimate> {
    let counts = PairCounts::from_sequence(seq)?;
    Ok(plugin_mi_from_counts(&counts))
}

pub fn plugin_mi_from_counts(counts: &PairCounts) -> MiEstimate {
    let law = counts.to_distribution();
    MiEstimate {
        i_hat: info::mutual_information(&law, SlotMask::single(0), SlotMask::single(1)),
        n: counts.n(),
        m: counts.m(),
    }
}

/// `I(Y_0; X_{-k}^0 | Y_{-k}^{-1})` of the empirical `(k+1)`-block law.
pub fn plugin_di(pair: &SymbolSequencePair) -> Result<DiEstimate> {
    plugin_di_from_counts(&count_blocks(pair))
}

pub fn plugin_di_from_counts(counts: &ContextCounts) -> Result<DiEstimate> {
    let layout = *counts.layout();
    let law = empirical_law(counts)?;
    let i_hat = info::conditional_mutual_information(&law, layout.y_newest(), layout.x_block(), layout.y_past());
    Ok(DiEstimate {
        i_hat,
        n: counts.n(),
        k: layout.k(),
        m: layout.m(),
        ell: layout.ell(),
    })
}

/// `sum_c N(c) log(N(c) / total)`, i.e. `-total * H` of the normalized counts.
fn count_loglik(counts: impl IntoIterator<Item = (u64, u64)>, totals: impl Fn(u64) -> u64) -> f64 {
    let mut terms: Vec<f64> = counts
        .into_iter()
        .filter(|c| c.1 > 0)
        .map(|(key, c)| c as f64 * (c as f64 / totals(key) as f64).ln())
        .collect();
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    info::compensated_sum(terms)
}

/// Maximized log-likelihood of a first-order chain,
/// `sum_{a,a'} N(a,a') log(N(a,a') / N(a))`.
pub fn max_loglik_full_mi(counts: &PairCounts) -> f64 {
    let m = counts.m();
    let first = counts.first_marginal();
    let cells = (0..m * m).map(|i| (i as u64, counts.get(i / m, i % m)));
    count_loglik(cells, |i| first[i as usize / m])
}

/// Maximized log-likelihood of the i.i.d. model for `X_1, ..., X_n`,
/// `sum_a N_1(a) log(N_1(a) / n)` with `N_1` the counts of `X_1^n`.
pub fn max_loglik_null_mi(counts: &PairCounts) -> f64 {
    let n = counts.n();
    let second = counts.second_marginal();
    count_loglik(second.into_iter().enumerate().map(|(a, c)| (a as u64, c)), |_| n)
}

/// `Delta_n = 2 [max L_full - max L_null]` for the independence test.
pub fn lr_statistic_mi(seq: &SymbolSequence) -> Result<f64> {
    let counts = PairCounts::from_sequence(seq)?;
    Ok(lr_statistic_mi_from_counts(&counts))
}

/// The two maximized likelihoods are sums over the same observed transitions,
/// so their difference is accumulated cell by cell as
/// `N(a,a') log(N(a,a') n / (N_0(a) N_1(a')))`.
pub fn lr_statistic_mi_from_counts(counts: &PairCounts) -> f64 {
    let m = counts.m();
    let n = counts.n() as u128;
    let (first, second) = (counts.first_marginal(), counts.second_marginal());
    let mut terms = Vec::with_capacity(m * m);
    for (a, &fa) in first.iter().enumerate() {
        for (b, &sb) in second.iter().enumerate() {
            let c = counts.get(a, b);
            if c > 0 {
                terms.push(weighted_log_ratio(c, c as u128 * n, fa as u128 * sb as u128));
            }
        }
    }
    finish_lr(terms)
}

/// `c log(num / den)` for exact integer products, through `log1p` of their
/// exact difference so that ratios near 1 keep full relative precision.
fn weighted_log_ratio(c: u64, num: u128, den: u128) -> f64 {
    let diff = num as i128 - den as i128;
    c as f64 * (diff as f64 / den as f64).ln_1p()
}

fn finish_lr(mut terms: Vec<f64>) -> f64 {
    terms.sort_unstable_by(|a, b| b.abs().total_cmp(&a.abs()));
    (2.0 * info::compensated_sum(terms)).max(0.0)
}

/// Maximized log-likelihood of the order-k joint chain,
/// `sum_z N(z) log(N(z) / N(context(z)))`.
pub fn max_loglik_full_di(counts: &ContextCounts) -> f64 {
    let layout = *counts.layout();
    let contexts = counts.context_totals();
    count_loglik(counts.entries(), |z| contexts[&layout.context_of(z)])
}

/// Keys of the sub-blocks used by the factorized null likelihood.
struct NullKeys {
    // (x_{-k}^0, y_{-k}^{-1}): the context followed by the newest x symbol
    x_with_y_past: u64,
    y_block: u64,
    y_past: u64,
}

fn null_keys(counts: &ContextCounts, z: u64) -> NullKeys {
    let layout = counts.layout();
    let (a_new, _) = layout.decode_pair(layout.newest_pair(z));
    let context = layout.context_of(z);
    let ell = layout.ell() as u64;
    let y_block = layout
        .decode_block(z)
        .iter()
        .fold(0u64, |acc, &(_, b)| acc * ell + b as u64);
    NullKeys {
        x_with_y_past: context * layout.m() as u64 + a_new as u64,
        y_block,
        y_past: y_block / ell,
    }
}

/// Maximized log-likelihood over factorized transitions
/// `Q(a, b | context) = Qx(a | context) Qy(b | y-context)`.
pub fn max_loglik_null_di(counts: &ContextCounts) -> f64 {
    let layout = *counts.layout();
    let mut x_part: HashMap<u64, u64> = HashMap::new();
    let mut y_block: HashMap<u64, u64> = HashMap::new();
    let mut y_past: HashMap<u64, u64> = HashMap::new();
    let contexts = counts.context_totals();
    for (z, c) in counts.entries() {
        let keys = null_keys(counts, z);
        *x_part.entry(keys.x_with_y_past).or_insert(0) += c;
        *y_block.entry(keys.y_block).or_insert(0) += c;
        *y_past.entry(keys.y_past).or_insert(0) += c;
    }
    let m = layout.m() as u64;
    let ell = layout.ell() as u64;
    let x_ll = count_loglik(x_part, |key| contexts[&(key / m)]);
    let y_ll = count_loglik(y_block, |key| y_past[&(key / ell)]);
    x_ll + y_ll
}

/// `Delta_n = 2 [max L_full - max L_null]` for the causality test.
pub fn lr_statistic_di(pair: &SymbolSequencePair) -> f64 {
    lr_statistic_di_from_counts(&count_blocks(pair))
}

/// Accumulated block by block as
/// `N(z) log(N(z) N(y_past) / (N(x_block, y_past) N(y_block)))`, the difference
/// of the full and factorized conditional log-likelihoods of each block.
pub fn lr_statistic_di_from_counts(counts: &ContextCounts) -> f64 {
    let layout = *counts.layout();
    let entries = counts.entries();
    let mut x_part: HashMap<u64, u64> = HashMap::new();
    let mut y_block: HashMap<u64, u64> = HashMap::new();
    let mut y_past: HashMap<u64, u64> = HashMap::new();
    let keys: Vec<NullKeys> = entries.iter().map(|&(z, _)| null_keys(counts, z)).collect();
    for (k, &(_, c)) in keys.iter().zip(&entries) {
        *x_part.entry(k.x_with_y_past).or_insert(0) += c;
        *y_block.entry(k.y_block).or_insert(0) += c;
        *y_past.entry(k.y_past).or_insert(0) += c;
    }
    debug_assert!(layout.k() >= 1);
    let terms = keys
        .iter()
        .zip(&entries)
        .map(|(k, &(_, c))| {
            let num = c as u128 * y_past[&k.y_past] as u128;
            let den = x_part[&k.x_with_y_past] as u128 * y_block[&k.y_block] as u128;
            weighted_log_ratio(c, num, den)
        })
        .collect();
    finish_lr(terms)
}

/// Both sides of `Delta_n = 2 n I_hat`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lr_statistic: f64,
    pub scaled_plugin: f64,
}

impl IdentityCheck {
    /// `|Delta_n - 2 n I_hat| / max(|Delta_n|, 1e-12)`
    pub fn relative_deviation(&self) -> f64 {
        (self.lr_statistic - self.scaled_plugin).abs() / self.lr_statistic.abs().max(1e-12)
    }
}

pub fn identity_check_mi(seq: &SymbolSequence) -> Result<IdentityCheck> {
    let counts = PairCounts::from_sequence(seq)?;
    let est = plugin_mi_from_counts(&counts);
    Ok(IdentityCheck {
        lr_statistic: lr_statistic_mi_from_counts(&counts),
        scaled_plugin: 2.0 * est.n as f64 * est.i_hat,
    })
}

pub fn identity_check_di(pair: &SymbolSequencePair) -> Result<IdentityCheck> {
    let counts = count_blocks(pair);
    let est = plugin_di_from_counts(&counts)?;
    Ok(IdentityCheck {
        lr_statistic: lr_statistic_di_from_counts(&counts),
        scaled_plugin: 2.0 * est.n as f64 * est.i_hat,
    })
}

/// Joint and marginal counts of the rows `(x_i, y_i)` treated as i.i.d. pairs.
fn iid_tables(pair: &SymbolSequencePair) -> (Vec<u64>, Vec<u64>, Vec<u64>, f64) {
    let (a, b) = pair.alphabets();
    let (m, ell) = (a.size(), b.size());
    let mut joint = vec![0u64; m * ell];
    let mut px = vec![0u64; m];
    let mut py = vec![0u64; ell];
    for (&x, &y) in pair.x().iter().zip(pair.y()) {
        joint[x as usize * ell + y as usize] += 1;
        px[x as usize] += 1;
        py[y as usize] += 1;
    }
    (joint, px, py, pair.len() as f64)
}

/// Pearson statistic `n sum (P_XY - P_X P_Y)^2 / (P_X P_Y)` over all rows.
///
/// Cells where either marginal is empty are skipped.
pub fn pearson_chi_sq(pair: &SymbolSequencePair) -> f64 {
    let (joint, px, py, n) = iid_tables(pair);
    let ell = py.len();
    let mut total = 0.0;
    for (x, &cx) in px.iter().enumerate() {
        for (y, &cy) in py.iter().enumerate() {
            if cx == 0 || cy == 0 {
                continue;
            }
            let expected = (cx as f64 / n) * (cy as f64 / n);
            let observed = joint[x * ell + y] as f64 / n;
            total += (observed - expected).powi(2) / expected;
        }
    }
    n * total
}

/// Likelihood-ratio counterpart of [`pearson_chi_sq`]: `2 n D(P_XY || P_X P_Y)`.
pub fn iid_lr_statistic(pair: &SymbolSequencePair) -> f64 {
    let (joint, px, py, n) = iid_tables(pair);
    let ell = py.len();
    let mut terms = Vec::new();
    for (i, &c) in joint.iter().enumerate() {
        if c > 0 {
            let expected = px[i / ell] as f64 * py[i % ell] as f64 / n;
            terms.push(c as f64 * (c as f64 / expected).ln());
        }
    }
    (2.0 * info::compensated_sum(terms)).max(0.0)
}
