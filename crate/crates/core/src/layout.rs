//! Flattening of contexts and blocks of paired symbols to integer indices.
//!
//! A pair `(a, b)` maps to `a * ell + b`. A run of pairs `(a_0,b_0), ..., (a_j,b_j)`
//! maps to the base-`m*ell` number whose most significant digit is the oldest
//! pair. Contexts hold `k` pairs and blocks hold `k + 1`, so the block index of
//! context `c` followed by pair `s` is `c * m*ell + s`, and the context that
//! follows block `z` is `z mod (m*ell)^k`.
//!
//! As slots of a [`DiscreteDistribution`](crate::empirical::DiscreteDistribution)
//! the block has `2(k+1)` coordinates ordered `x_0, y_0, x_1, y_1, ..., x_k, y_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Set of slot positions, bit `j` selecting slot `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SlotMask(pub u64);

impl SlotMask {
    pub const EMPTY: SlotMask = SlotMask(0);

    pub fn single(slot: usize) -> Self {
        SlotMask(1 << slot)
    }

    pub fn all(slots: usize) -> Self {
        if slots >= 64 {
            SlotMask(u64::MAX)
        } else {
            SlotMask((1u64 << slots) - 1)
        }
    }

    pub fn contains(self, slot: usize) -> bool {
        self.0 >> slot & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: SlotMask) -> SlotMask {
        SlotMask(self.0 | other.0)
    }

    pub fn intersects(self, other: SlotMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }
}

impl std::ops::BitOr for SlotMask {
    type Output = SlotMask;
    fn bitor(self, rhs: SlotMask) -> SlotMask {
        self.union(rhs)
    }
}

/// Dimensions `(k, m, ell)` of a block space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockLayout {
    k: usize,
    m: usize,
    ell: usize,
    context_space: u64,
    block_space: u64,
}

impl BlockLayout {
    pub fn new(k: usize, m: usize, ell: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("order k must be at least 1".into()));
        }
        if m == 0 || ell == 0 {
            return Err(Error::InvalidArgument("alphabet sizes must be positive".into()));
        }
        if 2 * (k + 1) > 64 {
            return Err(Error::InvalidArgument(format!("order k={k} too large")));
        }
        let q = (m as u64)
            .checked_mul(ell as u64)
            .ok_or_else(|| Error::InvalidArgument("alphabet product overflows".into()))?;
        let overflow = || {
            Error::InvalidArgument(format!(
                "block space (m*ell)^(k+1) overflows for k={k}, m={m}, ell={ell}"
            ))
        };
        let context_space = q.checked_pow(k as u32).ok_or_else(overflow)?;
        let block_space = context_space.checked_mul(q).ok_or_else(overflow)?;
        Ok(BlockLayout {
            k,
            m,
            ell,
            context_space,
            block_space,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Number of distinct pairs, `m * ell`.
    pub fn pair_base(&self) -> u64 {
        (self.m * self.ell) as u64
    }

    /// `(m*ell)^k`
    pub fn context_space(&self) -> u64 {
        self.context_space
    }

    /// `(m*ell)^(k+1)`
    pub fn block_space(&self) -> u64 {
        self.block_space
    }

    #[inline]
    pub fn encode_pair(&self, a: u32, b: u32) -> u64 {
        a as u64 * self.ell as u64 + b as u64
    }

    #[inline]
    pub fn decode_pair(&self, s: u64) -> (u32, u32) {
        ((s / self.ell as u64) as u32, (s % self.ell as u64) as u32)
    }

    /// Context made of the oldest `k` pairs of block `z`.
    #[inline]
    pub fn context_of(&self, block: u64) -> u64 {
        block / self.pair_base()
    }

    /// Newest pair of block `z`.
    #[inline]
    pub fn newest_pair(&self, block: u64) -> u64 {
        block % self.pair_base()
    }

    /// Context following block `z`: its newest `k` pairs.
    #[inline]
    pub fn successor_context(&self, block: u64) -> u64 {
        block % self.context_space
    }

    #[inline]
    pub fn block(&self, context: u64, pair: u64) -> u64 {
        context * self.pair_base() + pair
    }

    /// Pairs of a block, oldest first.
    pub fn decode_block(&self, mut block: u64) -> Vec<(u32, u32)> {
        let q = self.pair_base();
        let mut out = vec![(0, 0); self.k + 1];
        for slot in out.iter_mut().rev() {
            *slot = self.decode_pair(block % q);
            block /= q;
        }
        out
    }

    pub fn encode_block(&self, pairs: &[(u32, u32)]) -> u64 {
        pairs
            .iter()
            .fold(0, |acc, &(a, b)| acc * self.pair_base() + self.encode_pair(a, b))
    }

    /// Per-slot radices `[m, ell, m, ell, ...]` of a `(k+1)`-block.
    pub fn block_radices(&self) -> Vec<usize> {
        (0..=self.k).flat_map(|_| [self.m, self.ell]).collect()
    }

    /// Per-slot radices of a `k`-context.
    pub fn context_radices(&self) -> Vec<usize> {
        (0..self.k).flat_map(|_| [self.m, self.ell]).collect()
    }

    pub fn x_slot(&self, j: usize) -> usize {
        2 * j
    }

    pub fn y_slot(&self, j: usize) -> usize {
        2 * j + 1
    }

    /// All `k+1` x-slots of the block.
    pub fn x_block(&self) -> SlotMask {
        (0..=self.k).fold(SlotMask::EMPTY, |acc, j| acc | SlotMask::single(self.x_slot(j)))
    }

    /// The `k` oldest x-slots.
    pub fn x_past(&self) -> SlotMask {
        (0..self.k).fold(SlotMask::EMPTY, |acc, j| acc | SlotMask::single(self.x_slot(j)))
    }

    /// All `k+1` y-slots.
    pub fn y_block(&self) -> SlotMask {
        (0..=self.k).fold(SlotMask::EMPTY, |acc, j| acc | SlotMask::single(self.y_slot(j)))
    }

    /// The `k` oldest y-slots.
    pub fn y_past(&self) -> SlotMask {
        (0..self.k).fold(SlotMask::EMPTY, |acc, j| acc | SlotMask::single(self.y_slot(j)))
    }

    pub fn y_newest(&self) -> SlotMask {
        SlotMask::single(self.y_slot(self.k))
    }

    pub fn x_newest(&self) -> SlotMask {
        SlotMask::single(self.x_slot(self.k))
    }

    /// Slots of the oldest `k` pairs.
    pub fn context_slots(&self) -> SlotMask {
        self.x_past() | self.y_past()
    }

    pub fn all_slots(&self) -> SlotMask {
        SlotMask::all(2 * (self.k + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_matches_formula() {
        let layout = BlockLayout::new(2, 3, 2).unwrap();
        let q = 6u64;
        let pairs = [(2, 1), (0, 1), (1, 0)];
        // index = sum_j (a_j*ell + b_j) * q^(k-j)
        let expected = 5 * q * q + q + 2;
        assert_eq!(layout.encode_block(&pairs), expected);
        assert_eq!(layout.decode_block(expected), pairs.to_vec());
        assert_eq!(layout.context_of(expected), 5 * q + 1);
        assert_eq!(layout.successor_context(expected), q + 2);
        assert_eq!(
            layout.block(layout.context_of(expected), layout.newest_pair(expected)),
            expected
        );
    }

    #[test]
    fn masks() {
        let layout = BlockLayout::new(1, 2, 2).unwrap();
        assert_eq!(layout.x_block(), SlotMask(0b0101));
        assert_eq!(layout.y_block(), SlotMask(0b1010));
        assert_eq!(layout.y_newest(), SlotMask(0b1000));
        assert_eq!(layout.y_past(), SlotMask(0b0010));
        assert_eq!(layout.context_slots(), SlotMask(0b0011));
        assert_eq!(layout.block_radices(), vec![2, 2, 2, 2]);
    }

    #[test]
    fn overflow_is_rejected() {
        assert!(BlockLayout::new(40, 4, 4).is_err());
        assert!(BlockLayout::new(0, 2, 2).is_err());
    }
}
