//! A brute-force reference cache, used as an oracle for [`Cache`].
//!
//! The reference keeps each set as a recency-ordered list and searches it
//! linearly; it shares no code with the real cache. Both are driven by the
//! same access trace and must report the same event for every access.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cache::{Cache, CacheConfig, Probe};

/// One access of a single-level trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceOp {
    Read(u64),
    /// A write of `len` bytes at the address (write-allocate).
    Write(u64, usize),
    /// Write back and invalidate the line holding the address.
    Flush(u64),
}

/// What one access did to the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEvent {
    Hit,
    /// A miss; `writeback` names the dirty line it evicted, if any.
    Miss { writeback: Option<u64> },
    /// A flush; `present` if the line was cached, `writeback` if it was dirty.
    Flush { present: bool, writeback: bool },
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    line: u64,
    dirty: bool,
}

/// True-LRU, write-back, write-allocate reference model.
#[derive(Debug, Clone)]
pub struct ReferenceCache {
    line_size: u64,
    ways: usize,
    /// Per set, most recently used first.
    sets: Vec<Vec<Entry>>,
}

impl ReferenceCache {
    pub fn new(cfg: &CacheConfig) -> Self {
        ReferenceCache {
            line_size: cfg.line_size,
            ways: cfg.associativity as usize,
            sets: vec![Vec::new(); cfg.sets()],
        }
    }

    pub fn access(&mut self, op: TraceOp) -> CacheEvent {
        let (addr, write) = match op {
            TraceOp::Read(a) => (a, false),
            TraceOp::Write(a, _) => (a, true),
            TraceOp::Flush(a) => return self.flush(a),
        };
        let line = addr / self.line_size;
        let n_sets = self.sets.len() as u64;
        let set = &mut self.sets[(line % n_sets) as usize];
        if let Some(pos) = set.iter().position(|e| e.line == line) {
            let mut e = set.remove(pos);
            e.dirty |= write;
            set.insert(0, e);
            return CacheEvent::Hit;
        }
        let mut writeback = None;
        if set.len() == self.ways {
            let victim = set.pop().expect("full set");
            if victim.dirty {
                writeback = Some(victim.line);
            }
        }
        set.insert(0, Entry { line, dirty: write });
        CacheEvent::Miss { writeback }
    }

    fn flush(&mut self, addr: u64) -> CacheEvent {
        let line = addr / self.line_size;
        let n_sets = self.sets.len() as u64;
        let set = &mut self.sets[(line % n_sets) as usize];
        match set.iter().position(|e| e.line == line) {
            Some(pos) => {
                let e = set.remove(pos);
                CacheEvent::Flush { present: true, writeback: e.dirty }
            }
            None => CacheEvent::Flush { present: false, writeback: false },
        }
    }
}

/// Drive a real [`Cache`] through `ops` with every fill complete at once.
pub fn replay(cache: &mut Cache, ops: &[TraceOp]) -> Vec<CacheEvent> {
    let ls = cache.line_size() as u64;
    ops.iter()
        .enumerate()
        .map(|(now, &op)| {
            let now = now as u64;
            let (addr, write) = match op {
                TraceOp::Read(a) => (a, None),
                TraceOp::Write(a, len) => (a, Some(len)),
                TraceOp::Flush(a) => {
                    let (present, victim) = cache.invalidate(a / ls);
                    return CacheEvent::Flush { present, writeback: victim.is_some() };
                }
            };
            let line = addr / ls;
            let (way, event) = match cache.probe(line, now) {
                Probe::Hit { way } | Probe::Pending { way, .. } => (way, CacheEvent::Hit),
                Probe::Miss => {
                    let (way, victim) = cache.install(line, None, now);
                    (way, CacheEvent::Miss { writeback: victim.map(|v| v.line) })
                }
            };
            if let Some(len) = write {
                cache.write(line, way, (addr % ls) as usize, &vec![0xA5; len]);
            }
            event
        })
        .collect()
}

/// The reference model's events for `ops`.
pub fn reference_replay(cfg: &CacheConfig, ops: &[TraceOp]) -> Vec<CacheEvent> {
    let mut r = ReferenceCache::new(cfg);
    ops.iter().map(|&op| r.access(op)).collect()
}

/// A random trace over a footprint of four times the capacity, with
/// reuse biased towards recently touched lines so that every event kind
/// occurs often.
pub fn random_trace(cfg: &CacheConfig, len: usize, seed: u64) -> Vec<TraceOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = 4 * cfg.capacity / cfg.line_size;
    let mut recent: Vec<u64> = Vec::new();
    (0..len)
        .map(|_| {
            let line = if !recent.is_empty() && rng.gen_bool(0.5) {
                recent[rng.gen_range(0..recent.len())]
            } else {
                rng.gen_range(0..lines)
            };
            recent.push(line);
            if recent.len() > 2 * cfg.associativity as usize * 4 {
                recent.remove(0);
            }
            let len = 1usize << rng.gen_range(0..4);
            let offset = rng.gen_range(0..cfg.line_size / len as u64) * len as u64;
            let addr = line * cfg.line_size + offset;
            match rng.gen_range(0..10) {
                0..=5 => TraceOp::Read(addr),
                6..=8 => TraceOp::Write(addr, len),
                _ => TraceOp::Flush(addr),
            }
        })
        .collect()
}

/// Index and events of the first access where the real cache and the
/// reference disagree.
pub fn first_divergence(cfg: &CacheConfig, ops: &[TraceOp]) -> Option<(usize, CacheEvent, CacheEvent)> {
    let real = replay(&mut Cache::new(*cfg), ops);
    let reference = reference_replay(cfg, ops);
    real.into_iter().zip(reference).enumerate().find(|(_, (a, b))| a != b).map(|(i, (a, b))| (i, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_evicts_dirty_lru_way() {
        let cfg = CacheConfig::new(256, 64, 2, 1);
        let mut r = ReferenceCache::new(&cfg);
        // Two sets; lines 0, 2, 4 all map to set 0.
        assert_eq!(r.access(TraceOp::Write(0, 8)), CacheEvent::Miss { writeback: None });
        assert_eq!(r.access(TraceOp::Read(128)), CacheEvent::Miss { writeback: None });
        assert_eq!(r.access(TraceOp::Read(0)), CacheEvent::Hit);
        assert_eq!(r.access(TraceOp::Read(256)), CacheEvent::Miss { writeback: None });
        assert_eq!(r.access(TraceOp::Read(128)), CacheEvent::Miss { writeback: Some(0) });
        assert_eq!(r.access(TraceOp::Flush(256)), CacheEvent::Flush { present: true, writeback: false });
    }

    #[test]
    fn real_cache_matches_reference_on_short_traces() {
        for assoc in [1, 2, 4] {
            let cfg = CacheConfig::new(1024, 32, assoc, 1);
            for seed in 0..20 {
                let ops = random_trace(&cfg, 2_000, seed);
                assert_eq!(first_divergence(&cfg, &ops), None, "assoc {assoc} seed {seed}");
            }
        }
    }
}
