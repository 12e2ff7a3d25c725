//! Order-k Markov chains on paired alphabets: construction, simulation,
//! stationary laws, analytic information rates and asymptotic variances.
//!
//! A [`JointMarkovModel`] stores its transition law densely with one row per
//! context and one column per pair, flattened so that entry `c * m*ell + s` is
//! `Q(s | c)`. With the indexing of [`BlockLayout`] that flat position is also
//! the index of the `(k+1)`-block formed by `c` followed by `s`.
//!
//! The asymptotic variances come from the Poisson equation on the lifted chain
//! of `(k+1)`-blocks: with `f_bar = f - E_pi f` and `(I - P) g = f_bar`, the
//! long-run variance of `sum f(Z_i)` per step is `E_pi[g^2] - E_pi[(P g)^2]`.
//!
//! [`analytic_di_rate`] evaluates `I(Y_0; X_{-k}^0 | Y_{-k}^{-1})` on the
//! stationary block law. That is the directed information rate when `Y` is
//! itself Markov of order at most `k`; for a general joint chain it is the
//! conditional-MI causality functional that the plug-in estimator targets.
//! The general entropy-rate form of the directed information is not computed.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, Symbol, SymbolSequencePair};
use crate::empirical::{ContextCounts, DiscreteDistribution, Projection};
use crate::error::{Error, Result};
use crate::info;
use crate::layout::{BlockLayout, SlotMask};

const STOCHASTIC_TOL: f64 = 1e-12;
/// Largest state space solved by dense LU; larger ones are iterated.
pub const DENSE_SOLVE_LIMIT: usize = 4096;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 1_000_000;
const FIXED_POINT_TOL: f64 = 1e-10;
const POISSON_RESIDUAL_TOL: f64 = 1e-9;
const VARIANCE_CLAMP: f64 = 1e-10;

/// Order-k Markov chain on `A x B`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointMarkovModel {
    layout: BlockLayout,
    transition: Vec<f64>,
    initial: Vec<f64>,
}

impl JointMarkovModel {
    /// `transition` is row-major with `(m*ell)^k` rows of `m*ell` entries;
    /// `initial` is a pmf over the `(m*ell)^k` contexts.
    pub fn new(k: usize, m: usize, ell: usize, transition: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        let layout = BlockLayout::new(k, m, ell)?;
        let rows = layout.context_space() as usize;
        let cols = layout.pair_base() as usize;
        if transition.len() != rows * cols {
            return Err(Error::InvalidModel(format!(
                "transition has {} entries, expected {rows} x {cols}",
                transition.len()
            )));
        }
        if initial.len() != rows {
            return Err(Error::InvalidModel(format!(
                "initial has {} entries, expected {rows}",
                initial.len()
            )));
        }
        for (r, row) in transition.chunks(cols).enumerate() {
            check_pmf(row).map_err(|e| Error::InvalidModel(format!("transition row {r}: {e}")))?;
        }
        check_pmf(&initial).map_err(|e| Error::InvalidModel(format!("initial: {e}")))?;
        Ok(JointMarkovModel {
            layout,
            transition,
            initial,
        })
    }

    /// Same as [`new`](Self::new) with a uniform initial context law.
    pub fn with_uniform_initial(k: usize, m: usize, ell: usize, transition: Vec<f64>) -> Result<Self> {
        let rows = BlockLayout::new(k, m, ell)?.context_space() as usize;
        Self::new(k, m, ell, transition, vec![1.0 / rows as f64; rows])
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    pub fn m(&self) -> usize {
        self.layout.m()
    }

    pub fn ell(&self) -> usize {
        self.layout.ell()
    }

    pub fn alphabets(&self) -> (Alphabet, Alphabet) {
        (
            Alphabet::new(self.m()).expect("m >= 1"),
            Alphabet::new(self.ell()).expect("ell >= 1"),
        )
    }

    /// Flat transition table, indexed by block.
    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `Q(. | context)` as a slice of length `m*ell`.
    pub fn row(&self, context: u64) -> &[f64] {
        let q = self.layout.pair_base() as usize;
        let start = context as usize * q;
        &self.transition[start..start + q]
    }

    /// Probability of `(a, b)` following `context`.
    pub fn prob(&self, context: u64, a: Symbol, b: Symbol) -> f64 {
        self.transition[self.layout.block(context, self.layout.encode_pair(a, b)) as usize]
    }

    /// Replaces the initial law.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Self::new(self.k(), self.m(), self.ell(), self.transition.clone(), initial)
    }

    /// Copy of the model started from its stationary context law.
    pub fn stationary_start(&self) -> Result<Self> {
        let law = stationary_law(self)?;
        Ok(JointMarkovModel {
            initial: law.context_probs.clone(),
            ..self.clone()
        })
    }

    /// `X` and `Y` evolving as independent chains of the same order.
    pub fn product(x: &UnivariateMarkovModel, y: &UnivariateMarkovModel) -> Result<Self> {
        if x.k() != y.k() {
            return Err(Error::InvalidModel("product chains must share the order k".into()));
        }
        let k = x.k();
        let (m, ell) = (x.m(), y.m());
        let layout = BlockLayout::new(k, m, ell)?;
        let mut transition = vec![0.0; layout.block_space() as usize];
        let mut initial = vec![0.0; layout.context_space() as usize];
        for c in 0..layout.context_space() {
            let (xc, yc) = split_context(&layout, c);
            initial[c as usize] = x.initial()[xc as usize] * y.initial()[yc as usize];
            for a in 0..m as Symbol {
                for b in 0..ell as Symbol {
                    let z = layout.block(c, layout.encode_pair(a, b));
                    transition[z as usize] = x.prob(xc, a) * y.prob(yc, b);
                }
            }
        }
        JointMarkovModel::new(k, m, ell, renormalize_rows(transition, m * ell), initial)
    }

    /// `X` i.i.d. uniform bits and `Y_i = X_{i-1}` flipped with probability `eps` (k = 1).
    pub fn noisy_copy(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidModel(format!("flip probability {eps} outside [0, 1]")));
        }
        let layout = BlockLayout::new(1, 2, 2)?;
        let mut transition = vec![0.0; 16];
        for c in 0..4u64 {
            let (x_prev, _) = layout.decode_pair(c);
            for a in 0..2 {
                for b in 0..2 {
                    let py = if b == x_prev { 1.0 - eps } else { eps };
                    transition[layout.block(c, layout.encode_pair(a, b)) as usize] = 0.5 * py;
                }
            }
        }
        JointMarkovModel::new(1, 2, 2, transition, vec![0.25; 4])
    }

    /// The exact copy model `Y_i = X_{i-1}` with `X` i.i.d. uniform bits.
    pub fn copy() -> Self {
        Self::noisy_copy(0.0).expect("valid parameters")
    }

    /// Strictly positive model with Dirichlet(1) rows and uniform initial law.
    pub fn random_positive<R: Rng + ?Sized>(k: usize, m: usize, ell: usize, rng: &mut R) -> Result<Self> {
        let layout = BlockLayout::new(k, m, ell)?;
        let q = layout.pair_base() as usize;
        let mut transition = Vec::with_capacity(layout.block_space() as usize);
        for _ in 0..layout.context_space() {
            transition.extend(random_simplex_point(q, rng));
        }
        Self::with_uniform_initial(k, m, ell, transition)
    }

    /// Maximum-likelihood transition law of observed block counts.
    ///
    /// Fails if a context was never observed or the fitted chain is not ergodic.
    pub fn fitted(counts: &ContextCounts) -> Result<Self> {
        let layout = *counts.layout();
        let q = layout.pair_base();
        let contexts = layout.context_space();
        if contexts > (1 << 24) {
            return Err(Error::FittedNotErgodic(format!(
                "{contexts} contexts is too many to fit densely"
            )));
        }
        let mut transition = vec![0.0; layout.block_space() as usize];
        let mut totals = vec![0u64; contexts as usize];
        for (z, c) in counts.entries() {
            totals[layout.context_of(z) as usize] += c;
        }
        if let Some(missing) = totals.iter().position(|&t| t == 0) {
            return Err(Error::FittedNotErgodic(format!("context {missing} was never observed")));
        }
        for (z, c) in counts.entries() {
            transition[z as usize] = c as f64 / totals[layout.context_of(z) as usize] as f64;
        }
        let n = counts.n() as f64;
        let initial = totals.iter().map(|&t| t as f64 / n).collect();
        let model = JointMarkovModel::new(
            layout.k(),
            layout.m(),
            layout.ell(),
            renormalize_rows(transition, q as usize),
            renormalize(initial),
        )
        .map_err(|e| Error::FittedNotErgodic(e.to_string()))?;
        match ergodicity(&model.layout, &model.transition) {
            Ok(()) => Ok(model),
            Err(e) => Err(Error::FittedNotErgodic(e.to_string())),
        }
    }

    /// Simulates `n` transitions after an initial context drawn from `initial`.
    pub fn simulate(&self, n: usize, seed: u64) -> SymbolSequencePair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Sampler::new(self).sample(n, &mut rng)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            k: self.k(),
            m: self.m(),
            ell: Some(self.ell()),
            transition: Matrix::Flat(self.transition.clone()),
            initial: self.initial.clone(),
        }
    }
}

/// The x-context and y-context of a joint context, as univariate indices.
fn split_context(layout: &BlockLayout, context: u64) -> (u64, u64) {
    let q = layout.pair_base();
    let (m, ell) = (layout.m() as u64, layout.ell() as u64);
    let mut digits = Vec::with_capacity(layout.k());
    let mut c = context;
    for _ in 0..layout.k() {
        digits.push(c % q);
        c /= q;
    }
    let (mut xc, mut yc) = (0, 0);
    for &s in digits.iter().rev() {
        xc = xc * m + s / ell;
        yc = yc * ell + s % ell;
    }
    (xc, yc)
}

/// Order-k Markov chain on a single alphabet.
///
/// Internally a joint chain whose second alphabet has one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct UnivariateMarkovModel {
    inner: JointMarkovModel,
}

impl UnivariateMarkovModel {
    pub fn new(k: usize, m: usize, transition: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        Ok(UnivariateMarkovModel {
            inner: JointMarkovModel::new(k, m, 1, transition, initial)?,
        })
    }

    /// First-order chain from its transition matrix, with a uniform initial law.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidModel("transition matrix must be square".into()));
        }
        Self::new(1, m, rows.concat(), vec![1.0 / m as f64; m])
    }

    /// i.i.d. chain whose every row is `p`.
    pub fn iid(p: &[f64]) -> Result<Self> {
        Self::from_rows(&vec![p.to_vec(); p.len()])
    }

    /// Strictly positive first-order chain with Dirichlet(1) rows.
    pub fn random_positive<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..m).map(|_| random_simplex_point(m, rng)).collect();
        Self::from_rows(&rows)
    }

    pub fn k(&self) -> usize {
        self.inner.k()
    }

    pub fn m(&self) -> usize {
        self.inner.m()
    }

    pub fn alphabet(&self) -> Alphabet {
        self.inner.alphabets().0
    }

    pub fn transition(&self) -> &[f64] {
        self.inner.transition()
    }

    pub fn initial(&self) -> &[f64] {
        self.inner.initial()
    }

    pub fn row(&self, context: u64) -> &[f64] {
        self.inner.row(context)
    }

    /// `Q(a | context)`.
    pub fn prob(&self, context: u64, a: Symbol) -> f64 {
        self.inner.prob(context, a, 0)
    }

    /// The same chain seen as a joint chain with a one-letter `Y` alphabet.
    pub fn as_joint(&self) -> &JointMarkovModel {
        &self.inner
    }

    pub fn stationary_start(&self) -> Result<Self> {
        Ok(UnivariateMarkovModel {
            inner: self.inner.stationary_start()?,
        })
    }

    /// Simulated pair whose `y` column is identically 0.
    pub fn simulate(&self, n: usize, seed: u64) -> SymbolSequencePair {
        self.inner.simulate(n, seed)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            ell: None,
            ..self.inner.to_file()
        }
    }
}

fn check_pmf(p: &[f64]) -> std::result::Result<(), String> {
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(format!("entry {bad} is not a probability"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

fn renormalize(mut p: Vec<f64>) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    p
}

fn renormalize_rows(mut t: Vec<f64>, cols: usize) -> Vec<f64> {
    for row in t.chunks_mut(cols) {
        let total: f64 = row.iter().sum();
        for v in row {
            *v /= total;
        }
    }
    t
}

/// A Dirichlet(1) draw, bounded away from zero.
pub fn random_simplex_point<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln() + 1e-3
        })
        .collect();
    renormalize(w)
}

/// Precomputed cumulative rows for fast repeated simulation.
#[derive(Clone, Debug)]
pub struct Sampler {
    layout: BlockLayout,
    cumulative: Vec<f64>,
    initial_cumulative: Vec<f64>,
}

impl Sampler {
    pub fn new(model: &JointMarkovModel) -> Self {
        let q = model.layout.pair_base() as usize;
        let mut cumulative = Vec::with_capacity(model.transition.len());
        for row in model.transition.chunks(q) {
            cumulative.extend(cumulate(row));
        }
        Sampler {
            layout: model.layout,
            cumulative,
            initial_cumulative: cumulate(&model.initial),
        }
    }

    /// Length `n + k` sample: initial context then `n` transitions.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SymbolSequencePair {
        let layout = &self.layout;
        let k = layout.k();
        let q = layout.pair_base() as usize;
        let contexts = layout.context_space();
        let mut x = Vec::with_capacity(n + k);
        let mut y = Vec::with_capacity(n + k);
        let mut context = draw(&self.initial_cumulative, rng.random()) as u64;
        let init = initial_pairs(layout, context);
        for (a, b) in init {
            x.push(a);
            y.push(b);
        }
        for _ in 0..n {
            let start = context as usize * q;
            let s = draw(&self.cumulative[start..start + q], rng.random()) as u64;
            let (a, b) = layout.decode_pair(s);
            x.push(a);
            y.push(b);
            context = (context * q as u64 + s) % contexts;
        }
        let (m, ell) = (layout.m(), layout.ell());
        SymbolSequencePair::new(
            x,
            y,
            (Alphabet::new(m).expect("m >= 1"), Alphabet::new(ell).expect("ell >= 1")),
            k,
        )
        .expect("simulated symbols are in range")
    }
}

fn initial_pairs(layout: &BlockLayout, context: u64) -> Vec<(Symbol, Symbol)> {
    // a context is a k-pair block without its newest pair
    let mut pairs = layout.decode_block(context * layout.pair_base());
    pairs.pop();
    pairs
}

fn cumulate(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

#[inline]
fn draw(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("nonempty row");
    let target = u * total;
    match cumulative.iter().position(|&c| target < c) {
        Some(i) => i,
        // round-off: fall back to the last cell with positive mass
        None => {
            let mut i = cumulative.len() - 1;
            while i > 0 && cumulative[i] == cumulative[i - 1] {
                i -= 1;
            }
            i
        }
    }
}

/// Stationary law of the context chain, lifted to `(k+1)`-blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryLaw {
    layout: BlockLayout,
    /// Law of `(X_{-k}^0, Y_{-k}^0)` under stationarity.
    pub block_pmf: DiscreteDistribution,
    /// Law of `(X_{-k}^{-1}, Y_{-k}^{-1})`.
    pub context_pmf: DiscreteDistribution,
    context_probs: Vec<f64>,
    block_probs: Vec<f64>,
}

impl StationaryLaw {
    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// Dense stationary probabilities of the contexts.
    pub fn context_probs(&self) -> &[f64] {
        &self.context_probs
    }

    /// Dense stationary probabilities of the blocks.
    pub fn block_probs(&self) -> &[f64] {
        &self.block_probs
    }
}

/// Successor contexts of `context` with positive probability.
fn successors<'a>(layout: &'a BlockLayout, transition: &'a [f64], context: u64) -> impl Iterator<Item = u64> + 'a {
    let q = layout.pair_base();
    (0..q).filter_map(move |s| {
        let z = layout.block(context, s);
        (transition[z as usize] > 0.0).then(|| layout.successor_context(z))
    })
}

/// Strongly connected components of the positive-transition digraph (Kosaraju).
pub fn communicating_classes(model: &JointMarkovModel) -> Vec<Vec<usize>> {
    classes(&model.layout, &model.transition)
}

fn classes(layout: &BlockLayout, transition: &[f64]) -> Vec<Vec<usize>> {
    let n = layout.context_space() as usize;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|c| successors(layout, transition, c as u64).map(|s| s as usize).collect())
        .collect();
    let mut radj = vec![Vec::new(); n];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            radj[v].push(u);
        }
    }
    // first pass: finishing order
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((u, i)) = stack.pop() {
            if i < adj[u].len() {
                stack.push((u, i + 1));
                let v = adj[u][i];
                if !visited[v] {
                    visited[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
            }
        }
    }
    // second pass on the reversed graph
    let mut component = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &root in order.iter().rev() {
        if component[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = Vec::new();
        let mut stack = vec![root];
        component[root] = id;
        while let Some(u) = stack.pop() {
            members.push(u);
            for &v in &radj[u] {
                if component[v] == usize::MAX {
                    component[v] = id;
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out.sort();
    out
}

/// Period of an irreducible chain: gcd of `level(u) + 1 - level(v)` over edges.
fn period(layout: &BlockLayout, transition: &[f64]) -> usize {
    let n = layout.context_space() as usize;
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in successors(layout, transition, u as u64) {
            let v = v as usize;
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn ergodicity(layout: &BlockLayout, transition: &[f64]) -> Result<()> {
    let classes = classes(layout, transition);
    if classes.len() != 1 {
        return Err(Error::NotErgodic { classes, period: 0 });
    }
    let p = period(layout, transition);
    if p != 1 {
        return Err(Error::NotErgodic { classes, period: p });
    }
    Ok(())
}

/// Checks irreducibility and aperiodicity of the context chain.
pub fn check_ergodic(model: &JointMarkovModel) -> Result<()> {
    ergodicity(&model.layout, &model.transition)
}

/// Unique stationary law of an irreducible aperiodic model.
pub fn stationary_law(model: &JointMarkovModel) -> Result<StationaryLaw> {
    ergodicity(&model.layout, &model.transition)?;
    let layout = model.layout;
    let n = layout.context_space() as usize;
    let pi = if n <= DENSE_SOLVE_LIMIT {
        stationary_dense(&layout, &model.transition)?
    } else {
        stationary_power(&layout, &model.transition)?
    };
    let residual = fixed_point_residual(&layout, &model.transition, &pi);
    if residual > FIXED_POINT_TOL {
        return Err(Error::Internal(format!("stationary residual {residual:e}")));
    }
    let block_probs: Vec<f64> = model
        .transition
        .iter()
        .enumerate()
        .map(|(z, &t)| pi[layout.context_of(z as u64) as usize] * t)
        .collect();
    let block_pmf = DiscreteDistribution::from_dense(layout.block_radices(), &block_probs)?;
    let context_pmf = DiscreteDistribution::from_dense(layout.context_radices(), &pi)?;
    Ok(StationaryLaw {
        layout,
        block_pmf,
        context_pmf,
        context_probs: pi,
        block_probs,
    })
}

/// `(P^T - I) pi = 0` with the last equation replaced by `sum pi = 1`.
fn stationary_dense(layout: &BlockLayout, transition: &[f64]) -> Result<Vec<f64>> {
    let n = layout.context_space() as usize;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        a[(c, c)] -= 1.0;
        for s in 0..layout.pair_base() {
            let z = layout.block(c as u64, s);
            let t = transition[z as usize];
            if t > 0.0 {
                let next = layout.successor_context(z) as usize;
                a[(next, c)] += t;
            }
        }
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Internal("stationary system is singular".into()))?;
    Ok(renormalize(pi.iter().map(|&v| v.max(0.0)).collect()))
}

fn step_distribution(layout: &BlockLayout, transition: &[f64], pi: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; pi.len()];
    for (c, &p) in pi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for s in 0..layout.pair_base() {
            let z = layout.block(c as u64, s);
            next[layout.successor_context(z) as usize] += p * transition[z as usize];
        }
    }
    next
}

fn stationary_power(layout: &BlockLayout, transition: &[f64]) -> Result<Vec<f64>> {
    let n = layout.context_space() as usize;
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..POWER_MAX_ITER {
        let next = step_distribution(layout, transition, &pi);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < POWER_TOL {
            return Ok(renormalize(pi));
        }
    }
    Err(Error::Internal("power iteration did not converge".into()))
}

/// `|| pi P - pi ||_1`
pub fn fixed_point_residual_of(model: &JointMarkovModel, pi: &[f64]) -> f64 {
    fixed_point_residual(&model.layout, &model.transition, pi)
}

fn fixed_point_residual(layout: &BlockLayout, transition: &[f64], pi: &[f64]) -> f64 {
    step_distribution(layout, transition, pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Stationary mutual information `I(X_0; X_1)` of a first-order chain.
pub fn analytic_mi_rate(model: &UnivariateMarkovModel) -> Result<f64> {
    require_first_order(model)?;
    let law = stationary_law(model.as_joint())?;
    let layout = model.as_joint().layout();
    let pairs = law.block_pmf.marginalize(layout.x_block())?;
    Ok(info::mutual_information(
        &pairs,
        SlotMask::single(0),
        SlotMask::single(1),
    ))
}

/// `I(Y_0; X_{-k}^0 | Y_{-k}^{-1})` under the stationary block law.
pub fn analytic_di_rate(model: &JointMarkovModel) -> Result<f64> {
    let law = stationary_law(model)?;
    Ok(di_functional(&law))
}

fn di_functional(law: &StationaryLaw) -> f64 {
    let layout = law.layout;
    info::conditional_mutual_information(&law.block_pmf, layout.y_newest(), layout.x_block(), layout.y_past())
}

fn require_first_order(model: &UnivariateMarkovModel) -> Result<()> {
    if model.k() != 1 {
        return Err(Error::InvalidArgument(format!(
            "mutual information rate needs a first-order chain, got k={}",
            model.k()
        )));
    }
    Ok(())
}

/// Result of a Poisson-equation variance computation.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticVariance {
    /// Long-run variance per step, clamped at zero.
    pub sigma_sq: f64,
    /// Stationary mean of the summand (the information rate).
    pub mean: f64,
    /// `|| (I - P) g - f_bar ||_inf`
    pub residual: f64,
    /// Per-block summand `f` on the `(k+1)`-block chain.
    pub summand: Vec<f64>,
    /// Poisson solution `g`, normalized so that `E_pi g = 0`.
    pub solution: Vec<f64>,
}

/// `f(a, a') = log(Q(a'|a) / pi(a'))` on pairs of a first-order chain.
pub fn mi_summand(model: &UnivariateMarkovModel, law: &StationaryLaw) -> Vec<f64> {
    let pi = law.context_probs();
    model
        .transition()
        .iter()
        .enumerate()
        .map(|(z, &q)| {
            let next = z % model.m();
            if q > 0.0 && pi[next] > 0.0 {
                (q / pi[next]).ln()
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-block log-ratio
/// `log P(x_{-k}^0, y_0 | y_past) - log P(y_0 | y_past) - log P(x_{-k}^0 | y_past)`
/// under the stationary law.
pub fn di_summand(law: &StationaryLaw) -> Result<Vec<f64>> {
    let layout = law.layout;
    let radices = layout.block_radices();
    let lookups = [layout.y_past(), layout.y_block(), layout.x_block() | layout.y_past()];
    let mut tables = Vec::with_capacity(3);
    for mask in lookups {
        let proj = Projection::new(&radices, mask)?;
        let marginal = law.block_pmf.marginalize(mask)?.to_dense();
        tables.push((proj, marginal));
    }
    Ok(law
        .block_probs()
        .iter()
        .enumerate()
        .map(|(z, &p)| {
            if p <= 0.0 {
                return 0.0;
            }
            let look = |t: &(Projection, Vec<f64>)| t.1[t.0.project(z as u64) as usize];
            let (y_past, y_all, xy_past) = (look(&tables[0]), look(&tables[1]), look(&tables[2]));
            (p * y_past / (y_all * xy_past)).ln()
        })
        .collect())
}

/// Long-run variance of `sum_i f(Z_i)` for the stationary `(k+1)`-block chain.
pub fn block_chain_variance(
    model: &JointMarkovModel,
    law: &StationaryLaw,
    summand: Vec<f64>,
) -> Result<AsymptoticVariance> {
    let layout = model.layout;
    let pi = law.block_probs();
    let transition = model.transition();
    if summand.len() != pi.len() {
        return Err(Error::InvalidArgument("summand must have one value per block".into()));
    }
    let mean = info::compensated_sum(pi.iter().zip(&summand).map(|(p, f)| p * f));
    let centered: Vec<f64> = summand.iter().map(|f| f - mean).collect();
    let n = pi.len();
    let g = if n <= DENSE_SOLVE_LIMIT {
        poisson_dense(&layout, transition, pi, &centered)?
    } else {
        poisson_series(&layout, transition, &centered)?
    };
    let pg = apply_block_chain(&layout, transition, &g);
    let residual = g
        .iter()
        .zip(&pg)
        .zip(&centered)
        .map(|((gi, pgi), fi)| (gi - pgi - fi).abs())
        .fold(0.0, f64::max);
    if residual > POISSON_RESIDUAL_TOL {
        return Err(Error::Internal(format!("Poisson residual {residual:e}")));
    }
    let e_g2 = info::compensated_sum(pi.iter().zip(&g).map(|(p, v)| p * v * v));
    let e_pg2 = info::compensated_sum(pi.iter().zip(&pg).map(|(p, v)| p * v * v));
    let raw = e_g2 - e_pg2;
    let sigma_sq = if raw >= 0.0 {
        raw
    } else if raw >= -VARIANCE_CLAMP {
        0.0
    } else {
        return Err(Error::Internal(format!("negative asymptotic variance {raw:e}")));
    };
    Ok(AsymptoticVariance {
        sigma_sq,
        mean,
        residual,
        summand,
        solution: g,
    })
}

/// `(P v)(z) = sum_s Q(s | succ(z)) v(succ(z) * q + s)`
fn apply_block_chain(layout: &BlockLayout, transition: &[f64], v: &[f64]) -> Vec<f64> {
    let q = layout.pair_base();
    (0..v.len() as u64)
        .map(|z| {
            let c = layout.successor_context(z);
            (0..q)
                .map(|s| {
                    let next = layout.block(c, s) as usize;
                    transition[next] * v[next]
                })
                .sum()
        })
        .collect()
}

/// Solves `(I - P + 1 pi^T) g = f_bar`, whose solution satisfies `pi g = 0`.
fn poisson_dense(layout: &BlockLayout, transition: &[f64], pi: &[f64], centered: &[f64]) -> Result<Vec<f64>> {
    let n = pi.len();
    let q = layout.pair_base();
    let mut a = DMatrix::<f64>::from_fn(n, n, |_, j| pi[j]);
    for z in 0..n {
        a[(z, z)] += 1.0;
        let c = layout.successor_context(z as u64);
        for s in 0..q {
            let next = layout.block(c, s) as usize;
            a[(z, next)] -= transition[next];
        }
    }
    let b = DVector::from_column_slice(centered);
    let g = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Internal("Poisson system is singular".into()))?;
    Ok(g.iter().copied().collect())
}

/// `g = sum_t P^t f_bar`, for state spaces too large to factor.
fn poisson_series(layout: &BlockLayout, transition: &[f64], centered: &[f64]) -> Result<Vec<f64>> {
    let mut g = centered.to_vec();
    let mut term = centered.to_vec();
    let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for _ in 0..POWER_MAX_ITER {
        term = apply_block_chain(layout, transition, &term);
        let size = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (gi, ti) in g.iter_mut().zip(&term) {
            *gi += ti;
        }
        if size < 1e-15 * scale {
            return Ok(g);
        }
    }
    Err(Error::Internal("Poisson series did not converge".into()))
}

/// Asymptotic variance of the plug-in mutual information of a first-order chain.
pub fn sigma_sq_mi(model: &UnivariateMarkovModel) -> Result<f64> {
    Ok(mi_variance(model)?.sigma_sq)
}

/// Full Poisson-equation result behind [`sigma_sq_mi`].
pub fn mi_variance(model: &UnivariateMarkovModel) -> Result<AsymptoticVariance> {
    require_first_order(model)?;
    let law = stationary_law(model.as_joint())?;
    let f = mi_summand(model, &law);
    block_chain_variance(model.as_joint(), &law, f)
}

/// Asymptotic variance of the plug-in directed information estimator.
pub fn sigma_sq_di(model: &JointMarkovModel) -> Result<f64> {
    Ok(di_variance(model)?.sigma_sq)
}

/// Full Poisson-equation result behind [`sigma_sq_di`].
pub fn di_variance(model: &JointMarkovModel) -> Result<AsymptoticVariance> {
    let law = stationary_law(model)?;
    let f = di_summand(&law)?;
    block_chain_variance(model, &law, f)
}

/// Whether the lifted context chain is doubly stochastic; for `k = 1` this is
/// the usual column-sum condition on `Q`.
pub fn is_doubly_stochastic(model: &UnivariateMarkovModel) -> bool {
    let joint = model.as_joint();
    let layout = joint.layout();
    let mut columns = vec![0.0; layout.context_space() as usize];
    for (z, &t) in joint.transition().iter().enumerate() {
        columns[layout.successor_context(z as u64) as usize] += t;
    }
    columns.iter().all(|c| (c - 1.0).abs() <= 1e-10)
}

/// A model file in either the joint or the univariate schema.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Joint(JointMarkovModel),
    Univariate(UnivariateMarkovModel),
}

impl AnyModel {
    pub fn k(&self) -> usize {
        match self {
            AnyModel::Joint(m) => m.k(),
            AnyModel::Univariate(m) => m.k(),
        }
    }

    /// The model as a joint chain (univariate models get a one-letter `Y`).
    pub fn joint(&self) -> &JointMarkovModel {
        match self {
            AnyModel::Joint(m) => m,
            AnyModel::Univariate(m) => m.as_joint(),
        }
    }
}

/// Row-major transition table, flat or nested by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matrix {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Matrix {
    fn into_flat(self) -> Vec<f64> {
        match self {
            Matrix::Flat(v) => v,
            Matrix::Rows(rows) => rows.concat(),
        }
    }
}

/// JSON schema `{k, m, ell, transition, initial}`; `ell` is absent for univariate models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    pub transition: Matrix,
    pub initial: Vec<f64>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<AnyModel> {
        let transition = self.transition.into_flat();
        match self.ell {
            Some(ell) => Ok(AnyModel::Joint(JointMarkovModel::new(
                self.k,
                self.m,
                ell,
                transition,
                self.initial,
            )?)),
            None => Ok(AnyModel::Univariate(UnivariateMarkovModel::new(
                self.k,
                self.m,
                transition,
                self.initial,
            )?)),
        }
    }
}

impl From<&AnyModel> for ModelFile {
    fn from(model: &AnyModel) -> Self {
        match model {
            AnyModel::Joint(m) => m.to_file(),
            AnyModel::Univariate(m) => m.to_file(),
        }
    }
}

pub fn parse_model(json: &str) -> Result<AnyModel> {
    serde_json::from_str::<ModelFile>(json)?.into_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn model_to_json(model: &AnyModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from(model))?)
}
