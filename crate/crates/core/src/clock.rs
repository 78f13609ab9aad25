//! Bloom clocks and the vector clocks used as their ground-truth oracle.
//!
//! A Bloom clock is a counting Bloom filter of width `m`. At every event
//! `x` of process `i` the owning process applies `k` hash functions to the
//! pair `(i, x)` and increments each derived position (the local tick). A
//! receive first takes the pointwise maximum with the piggybacked clock and
//! then ticks. The test `By <= Bz` (componentwise) declares `y -> z`; it
//! never produces a false negative, but may produce false positives.
//!
//! Vector clocks follow the usual protocol and decide happened-before
//! exactly, so they serve as the oracle the Bloom clock is measured against.

use serde::{Deserialize, Serialize};
use std::fmt;
use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::error::{Error, Result};

/// Index of a process in the execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-process event sequence number. The first event at a process is 1;
/// 0 denotes the initial state before any event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventIndex(pub u64);

impl EventIndex {
    pub const FIRST: EventIndex = EventIndex(1);

    pub fn next(self) -> EventIndex {
        EventIndex(self.0 + 1)
    }
}

impl fmt::Display for EventIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `k` keyed hash functions mapping `(pid, x)` onto `[0, m)`.
///
/// Indices come from double hashing over one keyed 128-bit xxh3 digest:
/// `index_i = (h1 + i * h2) mod m` with `h2` forced odd. Indices within one
/// event may collide; each occurrence counts as a separate increment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFamily {
    k: u32,
    m: usize,
    seed: u64,
}

impl HashFamily {
    pub fn new(k: u32, m: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("hash count k must be at least 1"));
        }
        if m == 0 {
            return Err(Error::config("clock width m must be at least 1"));
        }
        Ok(HashFamily { k, m, seed })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Iterator over the `k` indices derived for event `x` at process `pid`.
    pub fn indices(&self, pid: ProcessId, x: EventIndex) -> impl Iterator<Item = usize> {
        let mut key = [0u8; 12];
        key[..4].copy_from_slice(&pid.0.to_le_bytes());
        key[4..].copy_from_slice(&x.0.to_le_bytes());
        let digest = xxh3_128_with_seed(&key, self.seed);
        let h1 = digest as u64;
        let h2 = ((digest >> 64) as u64) | 1;
        let m = self.m as u64;
        (0..u64::from(self.k)).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    /// The `k` derived indices, as a multiset in derivation order.
    pub fn derive(&self, pid: ProcessId, x: EventIndex) -> Vec<usize> {
        self.indices(pid, x).collect()
    }
}

fn check_width(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::config(format!("{what} width mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Length-`m` vector of event-hash counters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BloomClock {
    counters: Vec<u64>,
}

impl BloomClock {
    /// All-zero clock of width `m`.
    pub fn new(m: usize) -> Self {
        BloomClock {
            counters: vec![0; m],
        }
    }

    pub fn from_counters(counters: Vec<u64>) -> Self {
        BloomClock { counters }
    }

    pub fn width(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn into_counters(self) -> Vec<u64> {
        self.counters
    }

    /// Sum of all counters.
    pub fn sum(&self) -> u64 {
        self.counters.iter().sum()
    }

    /// Local tick for event `x` at `pid`: increments every derived index.
    pub fn tick(&mut self, pid: ProcessId, x: EventIndex, family: &HashFamily) -> Result<()> {
        check_width(self.width(), family.m(), "bloom clock vs hash family")?;
        for idx in family.indices(pid, x) {
            let slot = &mut self.counters[idx];
            *slot = slot.checked_add(1).ok_or(Error::Overflow { index: idx })?;
        }
        Ok(())
    }

    pub fn ticked(&self, pid: ProcessId, x: EventIndex, family: &HashFamily) -> Result<Self> {
        let mut out = self.clone();
        out.tick(pid, x, family)?;
        Ok(out)
    }

    /// Pointwise maximum, in place.
    pub fn merge(&mut self, other: &BloomClock) -> Result<()> {
        check_width(self.width(), other.width(), "bloom clock")?;
        for (a, &b) in self.counters.iter_mut().zip(&other.counters) {
            *a = (*a).max(b);
        }
        Ok(())
    }

    pub fn merged(&self, other: &BloomClock) -> Result<Self> {
        let mut out = self.clone();
        out.merge(other)?;
        Ok(out)
    }

    /// `true` iff every counter of `self` is at most the matching counter of
    /// `other`, which is the Bloom test declaring `self -> other`.
    pub fn leq(&self, other: &BloomClock) -> Result<bool> {
        check_width(self.width(), other.width(), "bloom clock")?;
        Ok(self.counters.iter().zip(&other.counters).all(|(a, b)| a <= b))
    }
}

/// Length-`n` vector clock.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorClock {
    counters: Vec<u64>,
}

impl VectorClock {
    pub fn new(n: usize) -> Self {
        VectorClock {
            counters: vec![0; n],
        }
    }

    pub fn from_counters(counters: Vec<u64>) -> Self {
        VectorClock { counters }
    }

    pub fn width(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn into_counters(self) -> Vec<u64> {
        self.counters
    }

    pub fn get(&self, pid: ProcessId) -> u64 {
        self.counters[pid.index()]
    }

    pub fn tick(&mut self, pid: ProcessId) -> Result<()> {
        let idx = pid.index();
        if idx >= self.width() {
            return Err(Error::config(format!(
                "process {pid} out of range for vector clock of width {}",
                self.width()
            )));
        }
        let slot = &mut self.counters[idx];
        *slot = slot.checked_add(1).ok_or(Error::Overflow { index: idx })?;
        Ok(())
    }

    pub fn ticked(&self, pid: ProcessId) -> Result<Self> {
        let mut out = self.clone();
        out.tick(pid)?;
        Ok(out)
    }

    pub fn merge(&mut self, other: &VectorClock) -> Result<()> {
        check_width(self.width(), other.width(), "vector clock")?;
        for (a, &b) in self.counters.iter_mut().zip(&other.counters) {
            *a = (*a).max(b);
        }
        Ok(())
    }

    pub fn merged(&self, other: &VectorClock) -> Result<Self> {
        let mut out = self.clone();
        out.merge(other)?;
        Ok(out)
    }

    pub fn leq(&self, other: &VectorClock) -> Result<bool> {
        check_width(self.width(), other.width(), "vector clock")?;
        Ok(self.counters.iter().zip(&other.counters).all(|(a, b)| a <= b))
    }

    /// Exact happened-before: `self <= other` and `self != other`.
    pub fn happened_before(&self, other: &VectorClock) -> Result<bool> {
        Ok(self.leq(other)? && self.counters != other.counters)
    }
}
