//! Shared global cache: single-level, set-associative, with per-strip counters.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of unit vertical columns the controller tracks.
pub const UNIT_STRIPS: usize = 64;

const INVALID: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum Replacement {
    Lru,
    Random { seed: u64 },
    /// Static RRIP with `m_bits`-wide re-reference prediction values.
    Rrip { m_bits: u8 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    /// Zero disables the cache: every access misses.
    pub capacity_bytes: u64,
    pub ways: usize,
    pub block_bytes: u64,
    pub replacement: Replacement,
}

impl CacheConfig {
    pub fn lru(capacity_bytes: u64, ways: usize, block_bytes: u64) -> Self {
        CacheConfig {
            capacity_bytes,
            ways,
            block_bytes,
            replacement: Replacement::Lru,
        }
    }

    pub fn fully_associative(capacity_bytes: u64, block_bytes: u64) -> Self {
        Self::lru(capacity_bytes, (capacity_bytes / block_bytes).max(1) as usize, block_bytes)
    }

    pub fn disabled(block_bytes: u64) -> Self {
        Self::lru(0, 1, block_bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.block_bytes.is_power_of_two() {
            return Err(Error::InvalidCache(format!(
                "block size {} is not a power of two",
                self.block_bytes
            )));
        }
        if self.ways == 0 {
            return Err(Error::InvalidCache("associativity must be at least 1".into()));
        }
        let set_bytes = self.ways as u64 * self.block_bytes;
        if !self.capacity_bytes.is_multiple_of(set_bytes) {
            return Err(Error::InvalidCache(format!(
                "capacity {} is not a multiple of ways * block = {set_bytes}",
                self.capacity_bytes
            )));
        }
        if let Replacement::Rrip { m_bits } = self.replacement {
            if !(1..=8).contains(&m_bits) {
                return Err(Error::InvalidCache(format!("rrip width {m_bits} not in 1..=8")));
            }
        }
        Ok(())
    }

    pub fn num_sets(&self) -> usize {
        if self.capacity_bytes == 0 {
            0
        } else {
            (self.capacity_bytes / (self.ways as u64 * self.block_bytes)) as usize
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
}

impl Outcome {
    pub fn is_hit(self) -> bool {
        self == Outcome::Hit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessResult {
    pub outcome: Outcome,
    /// A dirty line was evicted to make room.
    pub writeback: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripCounter {
    pub accesses: u64,
    pub misses: u64,
}

impl StripCounter {
    pub fn miss_ratio(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

/// Access counters. `per_strip` only sees accesses tagged with a strip, so
/// its sum equals the totals whenever every access is a tagged feature read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub total_accesses: u64,
    pub total_misses: u64,
    pub per_strip: Vec<StripCounter>,
}

impl Default for CacheStats {
    fn default() -> Self {
        CacheStats {
            total_accesses: 0,
            total_misses: 0,
            per_strip: vec![StripCounter::default(); UNIT_STRIPS],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cache {
    config: CacheConfig,
    num_sets: usize,
    tags: Vec<u64>,
    meta: Vec<u64>,
    dirty: Vec<bool>,
    clock: u64,
    rng: SplitMix64,
    stats: CacheStats,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        let num_sets = config.num_sets();
        let lines = num_sets * config.ways;
        let seed = match config.replacement {
            Replacement::Random { seed } => seed,
            _ => 0,
        };
        Ok(Cache {
            config,
            num_sets,
            tags: vec![INVALID; lines],
            meta: vec![0; lines],
            dirty: vec![false; lines],
            clock: 0,
            rng: SplitMix64::seed_from_u64(seed),
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn is_enabled(&self) -> bool {
        self.num_sets > 0
    }

    pub fn block_bytes(&self) -> u64 {
        self.config.block_bytes
    }

    /// Read access to the line holding `addr`.
    pub fn access(&mut self, addr: u64, strip: Option<u8>) -> Outcome {
        self.access_rw(addr, strip, false).outcome
    }

    /// Read or write access; writes allocate and mark the line dirty.
    pub fn access_rw(&mut self, addr: u64, strip: Option<u8>, write: bool) -> AccessResult {
        let (outcome, writeback) = self.lookup(addr / self.config.block_bytes, write);
        self.stats.total_accesses += 1;
        let missed = outcome == Outcome::Miss;
        self.stats.total_misses += missed as u64;
        if let Some(s) = strip {
            let c = &mut self.stats.per_strip[s as usize];
            c.accesses += 1;
            c.misses += missed as u64;
        }
        AccessResult { outcome, writeback }
    }

    fn lookup(&mut self, line: u64, write: bool) -> (Outcome, bool) {
        if self.num_sets == 0 {
            return (Outcome::Miss, false);
        }
        let ways = self.config.ways;
        let set = (line % self.num_sets as u64) as usize;
        let base = set * ways;
        self.clock += 1;

        if let Some(w) = (base..base + ways).find(|&i| self.tags[i] == line) {
            self.meta[w] = match self.config.replacement {
                Replacement::Rrip { .. } => 0,
                _ => self.clock,
            };
            self.dirty[w] |= write;
            return (Outcome::Hit, false);
        }

        let victim = match (base..base + ways).find(|&i| self.tags[i] == INVALID) {
            Some(w) => w,
            None => self.choose_victim(base, ways),
        };
        let writeback = self.tags[victim] != INVALID && self.dirty[victim];
        self.tags[victim] = line;
        self.dirty[victim] = write;
        self.meta[victim] = match self.config.replacement {
            Replacement::Rrip { m_bits } => (1u64 << m_bits) - 2,
            _ => self.clock,
        };
        (Outcome::Miss, writeback)
    }

    fn choose_victim(&mut self, base: usize, ways: usize) -> usize {
        match self.config.replacement {
            Replacement::Lru => (base..base + ways)
                .min_by_key(|&i| self.meta[i])
                .expect("ways >= 1"),
            Replacement::Random { .. } => base + (self.rng.next_u64() % ways as u64) as usize,
            Replacement::Rrip { m_bits } => {
                let distant = (1u64 << m_bits) - 1;
                loop {
                    if let Some(w) = (base..base + ways).find(|&i| self.meta[i] >= distant) {
                        break w;
                    }
                    for m in &mut self.meta[base..base + ways] {
                        *m += 1;
                    }
                }
            }
        }
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    /// Zeroes counters. Without `keep_contents` every line is invalidated and
    /// the number of dirty lines dropped (which must be written back) is returned.
    pub fn reset(&mut self, keep_contents: bool) -> u64 {
        self.stats = CacheStats::default();
        if keep_contents {
            return 0;
        }
        let dirty = self
            .tags
            .iter()
            .zip(&self.dirty)
            .filter(|(&t, &d)| t != INVALID && d)
            .count() as u64;
        self.tags.fill(INVALID);
        self.dirty.fill(false);
        self.meta.fill(0);
        dirty
    }

    /// Number of dirty resident lines.
    pub fn dirty_lines(&self) -> u64 {
        self.tags
            .iter()
            .zip(&self.dirty)
            .filter(|(&t, &d)| t != INVALID && d)
            .count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cold_miss_then_hit() {
        let mut c = Cache::new(CacheConfig::lru(1024, 2, 64)).unwrap();
        assert_eq!(c.access(100, None), Outcome::Miss);
        assert_eq!(c.access(100, None), Outcome::Hit);
        assert_eq!(c.access(64, None), Outcome::Hit);
    }

    #[test]
    fn two_way_lru_eviction() {
        // 8 sets of 2 ways; lines 0, 8, 16 share set 0
        let mut c = Cache::new(CacheConfig::lru(1024, 2, 64)).unwrap();
        for line in [0u64, 8, 16] {
            assert_eq!(c.access(line * 64, None), Outcome::Miss);
        }
        assert_eq!(c.access(0, None), Outcome::Miss);
        assert_eq!(c.access(16 * 64, None), Outcome::Hit);
    }

    #[test]
    fn distinct_cold_accesses_all_miss() {
        let mut c = Cache::new(CacheConfig::lru(4096, 4, 64)).unwrap();
        for i in 0..50u64 {
            c.access(i * 64, Some((i % 64) as u8));
        }
        assert_eq!(c.stats().total_misses, 50);
        let strip_sum: u64 = c.stats().per_strip.iter().map(|s| s.accesses).sum();
        assert_eq!(strip_sum, c.stats().total_accesses);
    }

    #[test]
    fn reset_zeroes_counters_and_keeps_lines() {
        let mut c = Cache::new(CacheConfig::lru(4096, 4, 64)).unwrap();
        c.access(0, Some(3));
        c.reset(true);
        assert_eq!(c.stats(), &CacheStats::default());
        assert_eq!(c.access(0, None), Outcome::Hit);
        c.reset(false);
        assert_eq!(c.access(0, None), Outcome::Miss);
    }

    #[test]
    fn disabled_cache_always_misses() {
        let mut c = Cache::new(CacheConfig::disabled(64)).unwrap();
        assert!(!c.is_enabled());
        assert_eq!(c.access(0, None), Outcome::Miss);
        assert_eq!(c.access(0, None), Outcome::Miss);
    }

    #[test]
    fn validation() {
        assert!(Cache::new(CacheConfig::lru(1000, 2, 64)).is_err());
        assert!(Cache::new(CacheConfig::lru(1024, 2, 48)).is_err());
        assert!(Cache::new(CacheConfig::lru(1024, 0, 64)).is_err());
        let rrip = CacheConfig {
            replacement: Replacement::Rrip { m_bits: 0 },
            ..CacheConfig::lru(1024, 2, 64)
        };
        assert!(Cache::new(rrip).is_err());
    }

    #[test]
    fn dirty_eviction_reports_writeback() {
        let mut c = Cache::new(CacheConfig::fully_associative(128, 64)).unwrap();
        c.access_rw(0, None, true);
        c.access_rw(64, None, false);
        let r = c.access_rw(128, None, false);
        assert_eq!(r, AccessResult { outcome: Outcome::Miss, writeback: true });
        assert_eq!(c.dirty_lines(), 0);
        c.access_rw(64, None, true);
        assert_eq!(c.reset(false), 1);
    }

    #[test]
    fn rrip_protects_reused_line_from_scan() {
        // one set of 4 ways; line 0 is reused, then a long scan streams through
        let cfg = CacheConfig {
            replacement: Replacement::Rrip { m_bits: 2 },
            ..CacheConfig::fully_associative(256, 64)
        };
        let mut c = Cache::new(cfg).unwrap();
        c.access(0, None);
        c.access(0, None);
        for line in 1..4u64 {
            c.access(line * 64, None);
        }
        c.access(4 * 64, None);
        assert_eq!(c.access(0, None), Outcome::Hit);
    }

    #[test]
    fn random_policy_is_seeded() {
        let cfg = CacheConfig {
            replacement: Replacement::Random { seed: 5 },
            ..CacheConfig::lru(1024, 4, 64)
        };
        let trace: Vec<u64> = (0..400u64).map(|i| (i * 7919) % 97 * 64).collect();
        let run = || {
            let mut c = Cache::new(cfg).unwrap();
            trace.iter().map(|&a| c.access(a, None)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    /// Reference LRU: each set is a recency-ordered list.
    fn list_lru(cfg: &CacheConfig, trace: &[u64]) -> Vec<bool> {
        let sets = cfg.num_sets();
        let mut lists: Vec<Vec<u64>> = vec![Vec::new(); sets];
        trace
            .iter()
            .map(|&a| {
                let line = a / cfg.block_bytes;
                let l = &mut lists[(line % sets as u64) as usize];
                let hit = if let Some(p) = l.iter().position(|&x| x == line) {
                    l.remove(p);
                    true
                } else {
                    false
                };
                l.insert(0, line);
                l.truncate(cfg.ways);
                hit
            })
            .collect()
    }

    proptest! {
        #[test]
        fn matches_list_lru(trace in proptest::collection::vec(0u64..8192, 1..800), ways in 1usize..5) {
            let cfg = CacheConfig::lru(64 * 4 * ways as u64, ways, 64);
            let mut c = Cache::new(cfg).unwrap();
            let got: Vec<bool> = trace.iter().map(|&a| c.access(a, None).is_hit()).collect();
            prop_assert_eq!(got, list_lru(&cfg, &trace));
        }

        #[test]
        fn footprint_within_capacity_only_cold_misses(trace in proptest::collection::vec(0u64..2048, 1..500)) {
            let mut c = Cache::new(CacheConfig::fully_associative(2048, 64)).unwrap();
            for &a in &trace {
                c.access(a, None);
            }
            let mut lines: Vec<u64> = trace.iter().map(|a| a / 64).collect();
            lines.sort();
            lines.dedup();
            prop_assert_eq!(c.stats().total_misses, lines.len() as u64);
        }
    }
}
