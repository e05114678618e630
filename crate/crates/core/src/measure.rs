//! Discretized measure spaces and the subsets used to weave two families.
//!
//! A continuous index set is replaced by finitely many weighted atoms, so every
//! integral against the measure becomes a weighted sum over canonical indices
//! `0..N`.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard for exhaustive partition scans (2^14 subsets).
pub const DEFAULT_ENUMERATION_LIMIT: usize = 14;

/// Hard cap: exhaustive enumeration walks a `u64` counter.
const MAX_ENUMERABLE: usize = 62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpace {
    weights: Vec<f64>,
}

impl MeasureSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        Ok(MeasureSpace { weights })
    }

    /// `n` atoms of unit mass.
    pub fn counting(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sub-space on the listed indices, keeping their order.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.weights[i]).collect())
    }

    pub fn full(&self) -> Partition {
        Partition::full(self.len())
    }

    pub fn empty(&self) -> Partition {
        Partition::empty(self.len())
    }
}

/// Convenience wrapper matching the plain-weights entry point.
pub fn build_space(weights: &[f64]) -> Result<MeasureSpace> {
    MeasureSpace::new(weights.to_vec())
}

/// A subset J of the canonical indices of a measure space of `len` atoms.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    len: usize,
    words: Vec<u64>,
}

impl Partition {
    pub fn empty(len: usize) -> Self {
        Partition { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn full(len: usize) -> Self {
        let mut p = Self::empty(len);
        for i in 0..len {
            p.insert(i);
        }
        p
    }

    /// Subset whose members are the set bits of `mask`. Requires `len <= 64`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        assert!(len <= 64, "from_mask supports at most 64 indices");
        let mut p = Self::empty(len);
        if len > 0 {
            let keep = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            p.words[0] = mask & keep;
        }
        p
    }

    pub fn from_members(len: usize, members: &[usize]) -> Self {
        let mut p = Self::empty(len);
        for &i in members {
            p.insert(i);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Number of members.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range for partition of {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range for partition of {}", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn complement(&self) -> Self {
        let mut out = Self::empty(self.len);
        for (o, w) in out.words.iter_mut().zip(&self.words) {
            *o = !w;
        }
        if !self.len.is_multiple_of(64) {
            let last = out.words.len() - 1;
            out.words[last] &= (1u64 << (self.len % 64)) - 1;
        }
        out
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.contains(i))
    }

    pub fn check_space(&self, space: &MeasureSpace) -> Result<()> {
        if self.len != space.len() {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    /// Bitmask as an integer when it fits.
    pub fn mask(&self) -> Option<u64> {
        match self.words.len() {
            0 => Some(0),
            1 => Some(self.words[0]),
            _ => None,
        }
    }

    /// Canonical ordering key (little-endian words compared from the top).
    fn sort_key(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().rev().copied()
    }
}

impl PartialOrd for Partition {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partition {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len.cmp(&other.len).then_with(|| self.sort_key().cmp(other.sort_key()))
    }
}

/// Decimal bitmask for up to 64 indices, `0x`-prefixed hex words beyond.
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mask() {
            Some(m) => write!(f, "{m}"),
            None => {
                write!(f, "0x")?;
                for w in self.words.iter().rev() {
                    write!(f, "{w:016x}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<usize> = self.members().collect();
        write!(f, "Partition{members:?}/{}", self.len)
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let members: Vec<usize> = self.members().collect();
        members.serialize(s)
    }
}

/// All 2^N subsets in increasing bitmask order.
pub fn enumerate_partitions(space: &MeasureSpace, limit: usize) -> Result<impl Iterator<Item = Partition>> {
    let n = space.len();
    if n > limit || n > MAX_ENUMERABLE {
        return Err(Error::TooManyIndices { n, limit: limit.min(MAX_ENUMERABLE) });
    }
    Ok((0..1u64 << n).map(move |m| Partition::from_mask(n, m)))
}

/// Raw mask range for callers that scan in parallel.
pub(crate) fn mask_count(n: usize, limit: usize) -> Result<u64> {
    if n > limit || n > MAX_ENUMERABLE {
        return Err(Error::TooManyIndices { n, limit: limit.min(MAX_ENUMERABLE) });
    }
    Ok(1u64 << n)
}

/// Seeded partition sample: always the empty and full subsets, then distinct
/// uniform draws. When `evaluate` is supplied (it returns the lower bound on a
/// partition), a single-flip descent from the worst sampled partition is
/// appended, stopping at a local minimum.
pub fn sample_partitions(
    space: &MeasureSpace,
    count: usize,
    seed: u64,
    evaluate: Option<&dyn Fn(&Partition) -> f64>,
) -> Vec<Partition> {
    let n = space.len();
    let mut out = vec![space.empty()];
    if n > 0 {
        out.push(space.full());
    }
    let mut seen: HashSet<Partition> = out.iter().cloned().collect();
    let powerset = if n < 63 { Some(1u64 << n) } else { None };
    let target = match powerset {
        Some(p) => (count as u64).min(p) as usize,
        None => count,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < target {
        let mut p = Partition::empty(n);
        for i in 0..n {
            if rng.random::<bool>() {
                p.insert(i);
            }
        }
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out.truncate(count.max(1));

    if let Some(eval) = evaluate {
        let scores: Vec<f64> = out.iter().map(eval).collect();
        let (mut best_idx, mut current) = (0, f64::INFINITY);
        for (i, &s) in scores.iter().enumerate() {
            if s < current {
                current = s;
                best_idx = i;
            }
        }
        let mut at = out[best_idx].clone();
        loop {
            let mut moved = false;
            for i in 0..n {
                let mut cand = at.clone();
                cand.flip(i);
                let value = eval(&cand);
                if seen.insert(cand.clone()) {
                    out.push(cand.clone());
                }
                if value < current {
                    current = value;
                    at = cand;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
    out
}
