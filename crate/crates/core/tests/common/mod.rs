//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the estimation code of `dirinfo_core`. Models are
//! read through their public transition table only, whose layout is part of
//! the model-file format: row = context (base `m*ell`, oldest pair most
//! significant), column = `a*ell + b`.

#![allow(dead_code)]

use std::collections::HashMap;

use dirinfo_core::{Alphabet, JointMarkovModel, SymbolSequencePair, UnivariateMarkovModel};

/// Raw view of a joint chain.
pub struct Chain {
    pub k: usize,
    pub m: usize,
    pub ell: usize,
    pub q: usize,
    pub contexts: usize,
    pub t: Vec<f64>,
}

impl Chain {
    pub fn of(model: &JointMarkovModel) -> Self {
        let q = model.m() * model.ell();
        Chain {
            k: model.k(),
            m: model.m(),
            ell: model.ell(),
            q,
            contexts: q.pow(model.k() as u32),
            t: model.transition().to_vec(),
        }
    }

    pub fn blocks(&self) -> usize {
        self.contexts * self.q
    }

    /// Pairs of a block, oldest first.
    pub fn pairs(&self, mut block: usize) -> Vec<(u32, u32)> {
        let mut out = vec![(0, 0); self.k + 1];
        for slot in (0..=self.k).rev() {
            let s = block % self.q;
            out[slot] = ((s / self.ell) as u32, (s % self.ell) as u32);
            block /= self.q;
        }
        out
    }

    pub fn next_context(&self, block: usize) -> usize {
        block % self.contexts
    }
}

/// Stationary law of the context chain by plain power iteration.
pub fn power_iteration(model: &JointMarkovModel) -> Vec<f64> {
    let c = Chain::of(model);
    let mut pi = vec![1.0 / c.contexts as f64; c.contexts];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; c.contexts];
        for z in 0..c.blocks() {
            next[c.next_context(z)] += pi[z / c.q] * c.t[z];
        }
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

/// Stationary probability of each block, `pi(context) T(context, pair)`.
pub fn block_law(model: &JointMarkovModel) -> Vec<f64> {
    let c = Chain::of(model);
    let pi = power_iteration(model);
    (0..c.blocks()).map(|z| pi[z / c.q] * c.t[z]).collect()
}

type Key = Vec<u32>;

struct DiKeys {
    y_past: Key,
    y_block: Key,
    x_block_y_past: Key,
}

fn di_keys(pairs: &[(u32, u32)]) -> DiKeys {
    let k = pairs.len() - 1;
    let y_past: Key = pairs[..k].iter().map(|p| p.1).collect();
    let y_block: Key = pairs.iter().map(|p| p.1).collect();
    let mut x_block_y_past: Key = pairs.iter().map(|p| p.0).collect();
    x_block_y_past.extend(&y_past);
    DiKeys {
        y_past,
        y_block,
        x_block_y_past,
    }
}

/// `sum_z p(z) log[p(z) p(y_past) / (p(y_block) p(x_block, y_past))]` over a
/// list of weighted blocks.
pub fn cmi_direct(blocks: &[(Vec<(u32, u32)>, f64)]) -> f64 {
    let mut y_past: HashMap<Key, f64> = HashMap::new();
    let mut y_block: HashMap<Key, f64> = HashMap::new();
    let mut xy: HashMap<Key, f64> = HashMap::new();
    for (pairs, p) in blocks {
        let keys = di_keys(pairs);
        *y_past.entry(keys.y_past).or_default() += p;
        *y_block.entry(keys.y_block).or_default() += p;
        *xy.entry(keys.x_block_y_past).or_default() += p;
    }
    let mut total = 0.0;
    for (pairs, p) in blocks {
        if *p == 0.0 {
            continue;
        }
        let keys = di_keys(pairs);
        total += p * (p * y_past[&keys.y_past] / (y_block[&keys.y_block] * xy[&keys.x_block_y_past])).ln();
    }
    total
}

pub fn brute_force_di_rate(model: &JointMarkovModel) -> f64 {
    let c = Chain::of(model);
    let law = block_law(model);
    let blocks: Vec<_> = (0..c.blocks()).map(|z| (c.pairs(z), law[z])).collect();
    cmi_direct(&blocks)
}

fn windows(x: &[u32], y: &[u32], k: usize) -> HashMap<Vec<(u32, u32)>, u64> {
    let mut counts = HashMap::new();
    for i in k..x.len() {
        let w: Vec<(u32, u32)> = (i - k..=i).map(|j| (x[j], y[j])).collect();
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Plug-in directed information through a hash map of explicit windows.
pub fn brute_force_plugin_di(x: &[u32], y: &[u32], k: usize) -> f64 {
    let counts = windows(x, y, k);
    let n = (x.len() - k) as f64;
    let blocks: Vec<_> = counts.into_iter().map(|(w, c)| (w, c as f64 / n)).collect();
    cmi_direct(&blocks)
}

/// `2 [max L_full - max L_null]` summed time step by time step.
pub fn naive_lr_di(x: &[u32], y: &[u32], k: usize) -> f64 {
    let mut full: HashMap<Key, f64> = HashMap::new();
    let mut ctx: HashMap<Key, f64> = HashMap::new();
    let mut x_given_ctx: HashMap<Key, f64> = HashMap::new();
    let mut y_block: HashMap<Key, f64> = HashMap::new();
    let mut y_past: HashMap<Key, f64> = HashMap::new();
    let keys = |i: usize| {
        let mut c: Key = Vec::new();
        for j in i - k..i {
            c.push(x[j]);
            c.push(y[j]);
        }
        let mut f = c.clone();
        f.push(x[i]);
        let xc = f.clone();
        f.push(y[i]);
        let yp: Key = y[i - k..i].to_vec();
        let yb: Key = y[i - k..=i].to_vec();
        (f, c, xc, yb, yp)
    };
    for i in k..x.len() {
        let (f, c, xc, yb, yp) = keys(i);
        *full.entry(f).or_default() += 1.0;
        *ctx.entry(c).or_default() += 1.0;
        *x_given_ctx.entry(xc).or_default() += 1.0;
        *y_block.entry(yb).or_default() += 1.0;
        *y_past.entry(yp).or_default() += 1.0;
    }
    let mut delta = 0.0;
    for i in k..x.len() {
        let (f, c, xc, yb, yp) = keys(i);
        let l_full = (full[&f] / ctx[&c]).ln();
        let l_null = (x_given_ctx[&xc] / ctx[&c]).ln() + (y_block[&yb] / y_past[&yp]).ln();
        delta += l_full - l_null;
    }
    2.0 * delta
}

/// Plug-in `I(X_0; X_1)` of consecutive pairs, by direct summation.
pub fn naive_plugin_mi(x: &[u32], m: usize) -> f64 {
    let n = (x.len() - 1) as f64;
    let mut joint = vec![0.0; m * m];
    for w in x.windows(2) {
        joint[w[0] as usize * m + w[1] as usize] += 1.0 / n;
    }
    let p0: Vec<f64> = (0..m).map(|a| (0..m).map(|b| joint[a * m + b]).sum()).collect();
    let p1: Vec<f64> = (0..m).map(|b| (0..m).map(|a| joint[a * m + b]).sum()).collect();
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let p = joint[a * m + b];
            if p > 0.0 {
                total += p * (p / (p0[a] * p1[b])).ln();
            }
        }
    }
    total
}

/// LR statistic of the first-order chain against i.i.d. draws of `X_1..X_n`,
/// summed time step by time step.
pub fn naive_lr_mi(x: &[u32], m: usize) -> f64 {
    let n = (x.len() - 1) as f64;
    let mut pair = vec![0.0f64; m * m];
    let mut from = vec![0.0; m];
    let mut to = vec![0.0; m];
    for w in x.windows(2) {
        pair[w[0] as usize * m + w[1] as usize] += 1.0;
        from[w[0] as usize] += 1.0;
        to[w[1] as usize] += 1.0;
    }
    let mut delta = 0.0;
    for w in x.windows(2) {
        let (a, b) = (w[0] as usize, w[1] as usize);
        delta += (pair[a * m + b] / from[a]).ln() - (to[b] / n).ln();
    }
    2.0 * delta
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Batch-means estimate of the long-run variance of `values`.
pub fn batch_means(values: &[f64], batches: usize) -> f64 {
    let size = values.len() / batches;
    let means: Vec<f64> = values.chunks_exact(size).take(batches).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|b| (b - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    size as f64 * var
}

/// DI summand on blocks, `log p(y_0 | x_block, y_past) - log p(y_0 | y_past)`.
pub fn di_summand(model: &JointMarkovModel) -> Vec<f64> {
    let c = Chain::of(model);
    let law = block_law(model);
    let mut y_past: HashMap<Key, f64> = HashMap::new();
    let mut y_block: HashMap<Key, f64> = HashMap::new();
    let mut xy: HashMap<Key, f64> = HashMap::new();
    for (z, &p) in law.iter().enumerate() {
        let keys = di_keys(&c.pairs(z));
        *y_past.entry(keys.y_past).or_default() += p;
        *y_block.entry(keys.y_block).or_default() += p;
        *xy.entry(keys.x_block_y_past).or_default() += p;
    }
    (0..c.blocks())
        .map(|z| {
            let p = law[z];
            if p == 0.0 {
                return 0.0;
            }
            let keys = di_keys(&c.pairs(z));
            (p * y_past[&keys.y_past] / (y_block[&keys.y_block] * xy[&keys.x_block_y_past])).ln()
        })
        .collect()
}

/// MI summand `log(Q(b|a) / pi(b))` indexed by `a*m + b`.
pub fn mi_summand(model: &UnivariateMarkovModel) -> Vec<f64> {
    let m = model.m();
    let pi = power_iteration(model.as_joint());
    let t = model.transition();
    (0..m * m).map(|z| (t[z] / pi[z % m]).ln()).collect()
}

/// `Var f + 2 sum_{t=1}^{horizon} Cov(f_0, f_t)` on the stationary block chain.
pub fn autocovariance_sigma_sq(model: &JointMarkovModel, f: &[f64], horizon: usize) -> f64 {
    let c = Chain::of(model);
    let law = block_law(model);
    let mu: f64 = law.iter().zip(f).map(|(p, v)| p * v).sum();
    let h: Vec<f64> = f.iter().map(|v| v - mu).collect();
    let mut sigma = law.iter().zip(&h).map(|(p, v)| p * v * v).sum::<f64>();
    let mut v = h.clone();
    for _ in 0..horizon {
        // (P v)(z) = sum_s T(next(z), s) v(next(z) * q + s)
        let next: Vec<f64> = (0..c.blocks())
            .map(|z| {
                let nc = c.next_context(z);
                (0..c.q).map(|s| c.t[nc * c.q + s] * v[nc * c.q + s]).sum()
            })
            .collect();
        let cov: f64 = (0..c.blocks()).map(|z| law[z] * h[z] * next[z]).sum();
        sigma += 2.0 * cov;
        v = next;
        if cov.abs() < 1e-18 {
            break;
        }
    }
    sigma
}

/// Block indices visited by a sample, one per time step from `k` on.
pub fn block_path(pair: &SymbolSequencePair) -> Vec<usize> {
    let (a, b) = pair.alphabets();
    let (m, ell) = (a.size(), b.size());
    let q = m * ell;
    let k = pair.k();
    let (x, y) = (pair.x(), pair.y());
    (k..x.len())
        .map(|i| (i - k..=i).fold(0usize, |acc, j| acc * q + x[j] as usize * ell + y[j] as usize))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `Gamma(d / 2)` for a positive integer `d`, by the recursion from `Gamma(1)`
/// or `Gamma(1/2)`.
fn gamma_half_integer(d: u64) -> f64 {
    let (mut g, mut x) = if d.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while x < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Chi-square survival by quadrature of the density over `[0, x]`; `dof >= 2`.
pub fn chi_sq_sf_quadrature(x: f64, dof: u64) -> f64 {
    let half = dof as f64 / 2.0;
    let norm = 2f64.powf(half) * gamma_half_integer(dof);
    let density = move |t: f64| {
        if t <= 0.0 {
            if dof == 2 {
                0.5
            } else {
                0.0
            }
        } else {
            t.powf(half - 1.0) * (-t / 2.0).exp() / norm
        }
    };
    1.0 - simpson(&density, 0.0, x, 1e-14)
}

/// Standard normal distribution function by quadrature of the density.
pub fn normal_cdf_quadrature(x: f64) -> f64 {
    let phi = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let half = simpson(&phi, 0.0, x.abs(), 1e-15);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Normal quantile by bisection on the quadrature CDF.
pub fn bisect_normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_quadrature(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Applies symbol permutations to both streams.
pub fn relabel(pair: &SymbolSequencePair, px: &[u32], py: &[u32]) -> SymbolSequencePair {
    let x = pair.x().iter().map(|&s| px[s as usize]).collect();
    let y = pair.y().iter().map(|&s| py[s as usize]).collect();
    SymbolSequencePair::new(x, y, pair.alphabets(), pair.k()).unwrap()
}

pub fn pair_of(x: Vec<u32>, y: Vec<u32>, m: usize, ell: usize, k: usize) -> SymbolSequencePair {
    SymbolSequencePair::new(x, y, (Alphabet::new(m).unwrap(), Alphabet::new(ell).unwrap()), k).unwrap()
}

/// Doubly stochastic matrix: a random mixture of permutation matrices plus
/// `uniform_weight` of the all-`1/m` matrix.
pub fn birkhoff_mixture<R: rand::Rng>(m: usize, perms: usize, uniform_weight: f64, rng: &mut R) -> Vec<Vec<f64>> {
    use rand::seq::SliceRandom;
    let mut rows = vec![vec![uniform_weight / m as f64; m]; m];
    let weights: Vec<f64> = (0..perms).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let mut p: Vec<usize> = (0..m).collect();
        p.shuffle(rng);
        for (a, &b) in p.iter().enumerate() {
            rows[a][b] += (1.0 - uniform_weight) * w / total;
        }
    }
    rows
}
