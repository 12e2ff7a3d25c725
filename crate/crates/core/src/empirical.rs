//! Block counting and the empirical (k+1)-block law.
//!
//! [`ContextCounts`] holds the number of times each `(k+1)`-block of pairs
//! `(X_{i-k}^i, Y_{i-k}^i)`, `1 <= i <= n`, occurs in a sample. Every estimator
//! in the crate is a function of these counts. No smoothing is applied: blocks
//! that were never observed carry zero mass.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{SymbolSequence, SymbolSequencePair};
use crate::error::{Error, Result};
use crate::layout::{BlockLayout, SlotMask};

/// Block spaces up to this size are counted into a dense array.
pub const DENSE_LIMIT: u64 = 1 << 22;

const NORMALIZATION_TOL: f64 = 1e-12;

/// A normalized pmf over a mixed-radix product of finite slots.
///
/// Only cells with positive mass are stored, sorted by flattened index. The
/// flattened index uses slot 0 as the most significant digit.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    radices: Vec<usize>,
    entries: Vec<(u64, f64)>,
}

impl DiscreteDistribution {
    /// Builds from a dense probability vector in flattened order.
    pub fn from_dense(radices: Vec<usize>, probs: &[f64]) -> Result<Self> {
        let space = space_size(&radices)?;
        if probs.len() as u64 != space {
            return Err(Error::InvalidArgument(format!(
                "pmf has {} cells but radices {radices:?} span {space}",
                probs.len()
            )));
        }
        let entries = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(i, &p)| (i as u64, p))
            .collect();
        Self::from_sorted_entries(radices, entries)
    }

    /// Builds from `(index, probability)` pairs; duplicates are summed.
    pub fn from_entries(radices: Vec<usize>, mut entries: Vec<(u64, f64)>) -> Result<Self> {
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
        for (i, p) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += p,
                _ => merged.push((i, p)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Self::from_sorted_entries(radices, merged)
    }

    fn from_sorted_entries(radices: Vec<usize>, entries: Vec<(u64, f64)>) -> Result<Self> {
        let space = space_size(&radices)?;
        let mut total = 0.0;
        for &(i, p) in &entries {
            if i >= space {
                return Err(Error::InvalidArgument(format!(
                    "index {i} outside space of size {space}"
                )));
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidArgument(format!("invalid probability {p} at index {i}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}, not 1")));
        }
        Ok(DiscreteDistribution { radices, entries })
    }

    /// Normalizes nonnegative integer counts.
    pub fn from_counts(radices: Vec<usize>, counts: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut entries: Vec<(u64, u64)> = counts.into_iter().filter(|c| c.1 > 0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        let total: u64 = entries.iter().map(|e| e.1).sum();
        if total == 0 {
            return Err(Error::InvalidArgument("cannot normalize zero counts".into()));
        }
        let n = total as f64;
        let entries = entries.into_iter().map(|(i, c)| (i, c as f64 / n)).collect();
        Self::from_entries(radices, entries)
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn slots(&self) -> usize {
        self.radices.len()
    }

    /// Size of the full index space.
    pub fn space_size(&self) -> u64 {
        self.radices.iter().map(|&r| r as u64).product()
    }

    /// Number of cells with positive mass.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// Positive-mass cells in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn prob(&self, index: u64) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.space_size() as usize];
        for &(i, p) in &self.entries {
            out[i as usize] = p;
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Slot digits of a flattened index.
    pub fn decode(&self, mut index: u64) -> Vec<usize> {
        let mut digits = vec![0; self.radices.len()];
        for (d, &r) in digits.iter_mut().zip(&self.radices).rev() {
            *d = (index % r as u64) as usize;
            index /= r as u64;
        }
        digits
    }

    pub fn encode(&self, digits: &[usize]) -> u64 {
        digits
            .iter()
            .zip(&self.radices)
            .fold(0, |acc, (&d, &r)| acc * r as u64 + d as u64)
    }

    /// Sums out every slot not in `keep`; kept slots retain their order.
    pub fn marginalize(&self, keep: SlotMask) -> Result<DiscreteDistribution> {
        let reducer = Projection::new(&self.radices, keep)?;
        if reducer.is_identity() {
            return Ok(self.clone());
        }
        let radices = reducer.kept_radices.clone();
        let space = space_size(&radices)?;
        let mut entries: Vec<(u64, f64)> = if space <= DENSE_LIMIT && space as usize <= 4 * self.entries.len().max(16) {
            let mut acc = vec![0.0; space as usize];
            for &(i, p) in &self.entries {
                acc[reducer.project(i) as usize] += p;
            }
            acc.into_iter()
                .enumerate()
                .filter(|e| e.1 != 0.0)
                .map(|(i, p)| (i as u64, p))
                .collect()
        } else {
            let mut acc: HashMap<u64, f64> = HashMap::with_capacity(self.entries.len());
            for &(i, p) in &self.entries {
                *acc.entry(reducer.project(i)).or_insert(0.0) += p;
            }
            let mut v: Vec<_> = acc.into_iter().filter(|e| e.1 != 0.0).collect();
            v.sort_unstable_by_key(|e| e.0);
            v
        };
        let total: f64 = entries.iter().map(|e| e.1).sum();
        for e in &mut entries {
            e.1 /= total;
        }
        Ok(DiscreteDistribution { radices, entries })
    }

    /// Product of independent slot groups: `self` slots first, then `other`.
    pub fn product(&self, other: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        let mut radices = self.radices.clone();
        radices.extend_from_slice(&other.radices);
        let scale = other.space_size();
        let mut entries = Vec::with_capacity(self.entries.len() * other.entries.len());
        for &(i, p) in &self.entries {
            for &(j, q) in &other.entries {
                entries.push((i * scale + j, p * q));
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        for e in &mut entries {
            e.1 /= total;
        }
        Ok(DiscreteDistribution { radices, entries })
    }
}

fn space_size(radices: &[usize]) -> Result<u64> {
    if radices.is_empty() {
        return Err(Error::InvalidArgument("distribution needs at least one slot".into()));
    }
    radices.iter().try_fold(1u64, |acc, &r| {
        if r == 0 {
            return Err(Error::InvalidArgument("slot radix must be positive".into()));
        }
        acc.checked_mul(r as u64)
            .ok_or_else(|| Error::InvalidArgument("index space overflows u64".into()))
    })
}

/// Maps a flattened index to its index in the kept-slot subspace.
#[derive(Clone, Debug)]
pub struct Projection {
    // For each kept slot, from most to least significant: (stride, radix).
    kept: Vec<(u64, u64)>,
    kept_radices: Vec<usize>,
    all: usize,
}

impl Projection {
    pub fn new(radices: &[usize], keep: SlotMask) -> Result<Self> {
        let mut kept = Vec::new();
        let mut kept_radices = Vec::new();
        let mut stride = 1u64;
        let mut strides = vec![0u64; radices.len()];
        for (j, &r) in radices.iter().enumerate().rev() {
            strides[j] = stride;
            stride *= r as u64;
        }
        for (j, &r) in radices.iter().enumerate() {
            if keep.contains(j) {
                kept.push((strides[j], r as u64));
                kept_radices.push(r);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyMask);
        }
        if radices.len() < 64 && keep.0 >> radices.len() != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask {:#b} names slots beyond {}",
                keep.0,
                radices.len()
            )));
        }
        Ok(Projection {
            kept,
            kept_radices,
            all: radices.len(),
        })
    }

    fn is_identity(&self) -> bool {
        self.kept.len() == self.all
    }

    /// Radices of the kept slots, in order.
    pub fn radices(&self) -> &[usize] {
        &self.kept_radices
    }

    #[inline]
    pub fn project(&self, index: u64) -> u64 {
        self.kept
            .iter()
            .fold(0, |acc, &(stride, radix)| acc * radix + (index / stride) % radix)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Storage {
    Dense(Vec<u64>),
    Sparse(HashMap<u64, u64>),
}

/// Counts of `(k+1)`-blocks of pairs: the sufficient statistic of a sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextCounts {
    layout: BlockLayout,
    storage: Storage,
    n: u64,
}

impl ContextCounts {
    pub fn empty(layout: BlockLayout) -> Self {
        let storage = if layout.block_space() <= DENSE_LIMIT {
            Storage::Dense(vec![0; layout.block_space() as usize])
        } else {
            Storage::Sparse(HashMap::new())
        };
        ContextCounts { layout, storage, n: 0 }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    /// Total number of counted blocks.
    pub fn n(&self) -> u64 {
        self.n
    }

    #[inline]
    pub fn add(&mut self, block: u64, count: u64) {
        if count == 0 {
            return;
        }
        match &mut self.storage {
            Storage::Dense(v) => v[block as usize] += count,
            Storage::Sparse(map) => *map.entry(block).or_insert(0) += count,
        }
        self.n += count;
    }

    pub fn get(&self, block: u64) -> u64 {
        match &self.storage {
            Storage::Dense(v) => v.get(block as usize).copied().unwrap_or(0),
            Storage::Sparse(map) => map.get(&block).copied().unwrap_or(0),
        }
    }

    /// Nonzero counts in increasing block order.
    pub fn entries(&self) -> Vec<(u64, u64)> {
        match &self.storage {
            Storage::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|e| *e.1 > 0)
                .map(|(i, &c)| (i as u64, c))
                .collect(),
            Storage::Sparse(map) => {
                let mut v: Vec<_> = map.iter().filter(|e| *e.1 > 0).map(|(&i, &c)| (i, c)).collect();
                v.sort_unstable();
                v
            }
        }
    }

    /// Dense count vector, if the block space is small enough.
    pub fn to_dense(&self) -> Option<Vec<u64>> {
        match &self.storage {
            Storage::Dense(v) => Some(v.clone()),
            Storage::Sparse(_) if self.layout.block_space() <= DENSE_LIMIT => {
                let mut v = vec![0; self.layout.block_space() as usize];
                for (i, c) in self.entries() {
                    v[i as usize] = c;
                }
                Some(v)
            }
            Storage::Sparse(_) => None,
        }
    }

    /// Adds `other` into `self`. Layouts must match.
    pub fn merge(&mut self, other: &ContextCounts) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::InvalidArgument(
                "cannot merge counts with different layouts".into(),
            ));
        }
        match &other.storage {
            Storage::Dense(v) => {
                for (i, &c) in v.iter().enumerate() {
                    self.add(i as u64, c);
                }
            }
            Storage::Sparse(map) => {
                for (&i, &c) in map {
                    self.add(i, c);
                }
            }
        }
        Ok(())
    }

    /// Counts aggregated onto the oldest `k` pairs (the conditioning contexts).
    pub fn context_totals(&self) -> HashMap<u64, u64> {
        let mut out = HashMap::new();
        for (z, c) in self.entries() {
            *out.entry(self.layout.context_of(z)).or_insert(0) += c;
        }
        out
    }

    pub fn to_file(&self) -> CountsFile {
        CountsFile {
            k: self.layout.k(),
            m: self.layout.m(),
            ell: self.layout.ell(),
            n: self.n,
            entries: self.entries(),
        }
    }

    pub fn from_file(file: &CountsFile) -> Result<Self> {
        let layout = BlockLayout::new(file.k, file.m, file.ell)?;
        let mut counts = ContextCounts::empty(layout);
        for &(i, c) in &file.entries {
            if i >= layout.block_space() {
                return Err(Error::InvalidArgument(format!("block index {i} out of range")));
            }
            counts.add(i, c);
        }
        if counts.n != file.n {
            return Err(Error::InvalidArgument(format!(
                "entries sum to {} but n = {}",
                counts.n, file.n
            )));
        }
        Ok(counts)
    }
}

/// Serialized form of [`ContextCounts`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsFile {
    pub k: usize,
    pub m: usize,
    pub ell: usize,
    pub n: u64,
    pub entries: Vec<(u64, u64)>,
}

pub fn layout_of(pair: &SymbolSequencePair) -> Result<BlockLayout> {
    let (a, b) = pair.alphabets();
    BlockLayout::new(pair.k(), a.size(), b.size())
}

/// Counts every `(k+1)`-block of the sample in one left-to-right pass.
pub fn count_blocks(pair: &SymbolSequencePair) -> ContextCounts {
    let layout = layout_of(pair).expect("validated pair has a valid layout");
    count_range(pair, &layout, pair.k()..pair.len())
}

/// Counts blocks ending at positions in `ends`; each block reads the `k` rows before its end.
fn count_range(pair: &SymbolSequencePair, layout: &BlockLayout, ends: Range<usize>) -> ContextCounts {
    let mut counts = ContextCounts::empty(*layout);
    let k = layout.k();
    let (x, y) = (pair.x(), pair.y());
    let ctx = layout.context_space();
    let q = layout.pair_base();
    let start = ends.start;
    let mut idx = 0u64;
    for i in start - k..start {
        idx = idx * q + layout.encode_pair(x[i], y[i]);
    }
    match &mut counts.storage {
        Storage::Dense(v) => {
            for i in ends {
                idx = (idx % ctx) * q + layout.encode_pair(x[i], y[i]);
                v[idx as usize] += 1;
                counts.n += 1;
            }
        }
        Storage::Sparse(_) => {
            for i in ends {
                idx = (idx % ctx) * q + layout.encode_pair(x[i], y[i]);
                counts.add(idx, 1);
            }
        }
    }
    counts
}

/// Counts in `shards` pieces with `k` rows of overlap, then merges.
pub fn count_blocks_sharded(pair: &SymbolSequencePair, shards: usize) -> ContextCounts {
    let layout = layout_of(pair).expect("validated pair has a valid layout");
    let k = pair.k();
    let n = pair.n();
    let shards = shards.clamp(1, n);
    let bounds: Vec<Range<usize>> = (0..shards)
        .map(|s| (k + s * n / shards)..(k + (s + 1) * n / shards))
        .collect();
    let parts: Vec<ContextCounts> = bounds.into_par_iter().map(|r| count_range(pair, &layout, r)).collect();
    let mut total = ContextCounts::empty(layout);
    for part in &parts {
        total.merge(part).expect("shards share a layout");
    }
    total
}

/// Normalizes block counts into the empirical block law.
pub fn empirical_law(counts: &ContextCounts) -> Result<DiscreteDistribution> {
    if counts.n() == 0 {
        return Err(Error::InvalidArgument("no blocks counted".into()));
    }
    DiscreteDistribution::from_counts(counts.layout().block_radices(), counts.entries())
}

/// Sums out slots of `dist` not selected by `keep`.
pub fn marginalize(dist: &DiscreteDistribution, keep: SlotMask) -> Result<DiscreteDistribution> {
    dist.marginalize(keep)
}

/// Counts of consecutive pairs `(X_{i-1}, X_i)` of a single stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairCounts {
    m: usize,
    counts: Vec<u64>,
    n: u64,
}

impl PairCounts {
    pub fn from_sequence(seq: &SymbolSequence) -> Result<Self> {
        if seq.len() < 2 {
            return Err(Error::SequenceTooShort { len: seq.len(), k: 1 });
        }
        let m = seq.alphabet().size();
        let mut counts = vec![0u64; m * m];
        for w in seq.symbols().windows(2) {
            counts[w[0] as usize * m + w[1] as usize] += 1;
        }
        Ok(PairCounts {
            m,
            counts,
            n: (seq.len() - 1) as u64,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Count of the transition `a -> b`.
    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.m + b]
    }

    /// Counts of `X_{i-1}`, i.e. the first coordinate.
    pub fn first_marginal(&self) -> Vec<u64> {
        (0..self.m).map(|a| (0..self.m).map(|b| self.get(a, b)).sum()).collect()
    }

    /// Counts of `X_i`, i.e. the second coordinate.
    pub fn second_marginal(&self) -> Vec<u64> {
        (0..self.m).map(|b| (0..self.m).map(|a| self.get(a, b)).sum()).collect()
    }

    /// Empirical pair law over slots `(X_0, X_1)`.
    pub fn to_distribution(&self) -> DiscreteDistribution {
        DiscreteDistribution::from_counts(
            vec![self.m, self.m],
            self.counts.iter().enumerate().map(|(i, &c)| (i as u64, c)),
        )
        .expect("n >= 1")
    }
}
