//! One set-associative, write-back, write-allocate cache instance with
//! true-LRU replacement, per-byte dirty masks and an MSHR table.
//!
//! Lines are keyed by line address (`addr / line_size`). A line whose fill
//! is still in flight is present in the tag array with `ready_at` in the
//! future; a second miss to it merges into the outstanding MSHR.

use serde::{Deserialize, Serialize};

/// Largest supported line, bounded by the 128-bit dirty mask.
pub const MAX_LINE_SIZE: u64 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub capacity: u64,
    pub line_size: u64,
    pub associativity: u32,
    pub hit_latency: u64,
    pub mshr_entries: u32,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig::new(2048, 64, 2, 2)
    }
}

impl CacheConfig {
    pub fn new(capacity: u64, line_size: u64, associativity: u32, hit_latency: u64) -> Self {
        CacheConfig { capacity, line_size, associativity, hit_latency, mshr_entries: 32 }
    }

    pub fn sets(&self) -> usize {
        (self.capacity / (self.line_size * self.associativity as u64)) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.line_size.is_power_of_two() || self.line_size < 8 || self.line_size > MAX_LINE_SIZE {
            return Err(format!("line size {} must be a power of two in [8, {MAX_LINE_SIZE}]", self.line_size));
        }
        if self.associativity == 0 {
            return Err("associativity must be at least 1".into());
        }
        let set_bytes = self.line_size * self.associativity as u64;
        if self.capacity == 0 || self.capacity % set_bytes != 0 {
            return Err(format!("capacity {} not divisible by line size × associativity", self.capacity));
        }
        if self.mshr_entries == 0 {
            return Err("at least one MSHR entry required".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheCounters {
    pub accesses: u64,
    pub hits: u64,
    /// Includes MSHR merges.
    pub misses: u64,
    pub mshr_merges: u64,
    /// Dirty lines sent to the next level (evictions and flushes).
    pub writebacks_out: u64,
    /// Dirty lines received from the level above.
    pub writebacks_in: u64,
    pub evictions: u64,
    pub invalidations: u64,
}

impl CacheCounters {
    pub fn add(&mut self, o: &CacheCounters) {
        self.accesses += o.accesses;
        self.hits += o.hits;
        self.misses += o.misses;
        self.mshr_merges += o.mshr_merges;
        self.writebacks_out += o.writebacks_out;
        self.writebacks_in += o.writebacks_in;
        self.evictions += o.evictions;
        self.invalidations += o.invalidations;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    Hit { way: usize },
    Pending { way: usize, ready: u64 },
    Miss,
}

/// A dirty line leaving a cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Victim {
    pub line: u64,
    pub dirty: u128,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Meta {
    line: u64,
    valid: bool,
    dirty: u128,
    last_use: u64,
    ready_at: u64,
}

#[derive(Debug, Clone)]
pub struct Cache {
    cfg: CacheConfig,
    sets: usize,
    ways: usize,
    meta: Vec<Meta>,
    data: Vec<u8>,
    has_data: bool,
    mshr: Vec<(u64, u64)>,
    stamp: u64,
    pub counters: CacheCounters,
}

fn mask_for(offset: usize, len: usize) -> u128 {
    let ones = if len >= 128 { u128::MAX } else { (1u128 << len) - 1 };
    ones << offset
}

impl Cache {
    pub fn new(cfg: CacheConfig) -> Self {
        Self::build(cfg, true)
    }

    /// Tag-only instance (instruction caches never hold dirty data).
    pub fn tags_only(cfg: CacheConfig) -> Self {
        Self::build(cfg, false)
    }

    fn build(cfg: CacheConfig, has_data: bool) -> Self {
        let sets = cfg.sets();
        let ways = cfg.associativity as usize;
        let data = if has_data { vec![0; sets * ways * cfg.line_size as usize] } else { Vec::new() };
        Cache {
            cfg,
            sets,
            ways,
            meta: vec![Meta::default(); sets * ways],
            data,
            has_data,
            mshr: Vec::new(),
            stamp: 0,
            counters: CacheCounters::default(),
        }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn line_size(&self) -> usize {
        self.cfg.line_size as usize
    }

    pub fn hit_latency(&self) -> u64 {
        self.cfg.hit_latency
    }

    fn set_of(&self, line: u64) -> usize {
        (line % self.sets as u64) as usize
    }

    fn slot(&self, set: usize, way: usize) -> usize {
        set * self.ways + way
    }

    fn find(&self, line: u64) -> Option<usize> {
        let set = self.set_of(line);
        (0..self.ways).find(|&w| {
            let m = &self.meta[self.slot(set, w)];
            m.valid && m.line == line
        })
    }

    fn touch(&mut self, idx: usize) {
        self.stamp += 1;
        self.meta[idx].last_use = self.stamp;
    }

    /// Look the line up; a hit or merge refreshes its LRU position.
    pub fn probe(&mut self, line: u64, now: u64) -> Probe {
        let Some(way) = self.find(line) else {
            return Probe::Miss;
        };
        let idx = self.slot(self.set_of(line), way);
        self.touch(idx);
        let ready = self.meta[idx].ready_at;
        if ready > now {
            Probe::Pending { way, ready }
        } else {
            Probe::Hit { way }
        }
    }

    pub fn contains(&self, line: u64) -> bool {
        self.find(line).is_some()
    }

    /// Earliest cycle ≥ `now` at which an MSHR is free. When the table is
    /// full the request waits for the oldest fill to complete.
    pub fn mshr_start(&mut self, now: u64) -> u64 {
        self.mshr.retain(|&(_, ready)| ready > now);
        if self.mshr.len() < self.cfg.mshr_entries as usize {
            return now;
        }
        let (i, &(_, ready)) = self
            .mshr
            .iter()
            .enumerate()
            .min_by_key(|(_, &(line, ready))| (ready, line))
            .expect("full table is non-empty");
        self.mshr.swap_remove(i);
        ready
    }

    pub fn mshr_push(&mut self, line: u64, ready: u64) {
        self.mshr.push((line, ready));
    }

    pub fn outstanding(&self, now: u64) -> usize {
        self.mshr.iter().filter(|&&(_, r)| r > now).count()
    }

    /// Install `line` (which must be absent), evicting the LRU way of its set.
    /// Returns the way and the dirty victim, if any.
    pub fn install(&mut self, line: u64, data: Option<&[u8]>, ready_at: u64) -> (usize, Option<Victim>) {
        debug_assert!(self.find(line).is_none());
        let set = self.set_of(line);
        let way = (0..self.ways)
            .find(|&w| !self.meta[self.slot(set, w)].valid)
            .unwrap_or_else(|| {
                (0..self.ways).min_by_key(|&w| self.meta[self.slot(set, w)].last_use).expect("ways > 0")
            });
        let idx = self.slot(set, way);
        let old = self.meta[idx];
        let victim = if old.valid {
            self.counters.evictions += 1;
            (old.dirty != 0).then(|| {
                self.counters.writebacks_out += 1;
                Victim { line: old.line, dirty: old.dirty, data: self.line_bytes(idx).to_vec() }
            })
        } else {
            None
        };
        self.meta[idx] = Meta { line, valid: true, dirty: 0, last_use: 0, ready_at };
        self.touch(idx);
        if self.has_data {
            let ls = self.line_size();
            let dst = &mut self.data[idx * ls..(idx + 1) * ls];
            match data {
                Some(src) => dst.copy_from_slice(src),
                None => dst.fill(0),
            }
        }
        (way, victim)
    }

    fn line_bytes(&self, idx: usize) -> &[u8] {
        if !self.has_data {
            return &[];
        }
        let ls = self.line_size();
        &self.data[idx * ls..(idx + 1) * ls]
    }

    pub fn line_data(&self, line: u64, way: usize) -> &[u8] {
        self.line_bytes(self.slot(self.set_of(line), way))
    }

    pub fn read(&self, line: u64, way: usize, offset: usize, buf: &mut [u8]) {
        let data = self.line_data(line, way);
        buf.copy_from_slice(&data[offset..offset + buf.len()]);
    }

    pub fn write(&mut self, line: u64, way: usize, offset: usize, bytes: &[u8]) {
        let idx = self.slot(self.set_of(line), way);
        let ls = self.line_size();
        self.data[idx * ls + offset..idx * ls + offset + bytes.len()].copy_from_slice(bytes);
        self.meta[idx].dirty |= mask_for(offset, bytes.len());
    }

    /// Merge the dirty bytes of a line written back from above.
    pub fn merge(&mut self, way: usize, victim: &Victim) {
        let idx = self.slot(self.set_of(victim.line), way);
        let ls = self.line_size();
        let dst = &mut self.data[idx * ls..(idx + 1) * ls];
        for (i, b) in victim.data.iter().enumerate() {
            if victim.dirty >> i & 1 == 1 {
                dst[i] = *b;
            }
        }
        self.meta[idx].dirty |= victim.dirty;
        self.counters.writebacks_in += 1;
    }

    /// Drop the line if present. Returns `(was_present, dirty victim)`.
    pub fn invalidate(&mut self, line: u64) -> (bool, Option<Victim>) {
        let Some(way) = self.find(line) else {
            return (false, None);
        };
        let idx = self.slot(self.set_of(line), way);
        let old = self.meta[idx];
        self.meta[idx].valid = false;
        self.meta[idx].dirty = 0;
        self.counters.invalidations += 1;
        let victim = (old.dirty != 0).then(|| {
            self.counters.writebacks_out += 1;
            Victim { line, dirty: old.dirty, data: self.line_bytes(idx).to_vec() }
        });
        (true, victim)
    }

    /// Every dirty line, in (set, way) order, without changing state.
    pub fn dirty_lines(&self) -> impl Iterator<Item = Victim> + '_ {
        self.meta.iter().enumerate().filter(|(_, m)| m.valid && m.dirty != 0).map(|(idx, m)| Victim {
            line: m.line,
            dirty: m.dirty,
            data: self.line_bytes(idx).to_vec(),
        })
    }

    /// Number of valid copies of `line` (the single-copy invariant says ≤ 1).
    pub fn copies_of(&self, line: u64) -> usize {
        let set = self.set_of(line);
        (0..self.ways).filter(|&w| {
            let m = &self.meta[self.slot(set, w)];
            m.valid && m.line == line
        })
        .count()
    }
}
