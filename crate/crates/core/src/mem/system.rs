//! The full cache hierarchy of one chip plus its external memory.
//!
//! Data path: village L1D → city L2D → LLC slice → channel.
//! Fetch path: PE L1I → city L2I → LLC slice → channel.
//! LLC slices (one per prefecture) are selected by line address modulo the
//! slice count. No operation ever touches a cache instance that is not on
//! the requester's own path: the hierarchy is non-coherent by construction.
//!
//! The model is timing-annotated functional: the data effect of an access
//! is applied when it is presented, and its completion cycle is computed
//! analytically from hit latencies, MSHR occupancy and channel queues.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{Cache, CacheCounters, Probe, Victim};
use super::channel::{ChannelCounters, ChannelSet};
use super::store::GlobalMemory;
use super::trace::{AccessKind, Level, Origin, Outcome, TraceRecord};
use crate::chip::{AddressWindow, ChipConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("address {addr:#x} (+{len}) outside global memory")]
    OutOfRange { addr: u64, len: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Access {
    way: usize,
    ready: u64,
    outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Topology {
    pes_per_village: usize,
    pes_per_city: usize,
}

/// Counters summed over all instances of each level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCounters {
    pub l1d: CacheCounters,
    pub l1i: CacheCounters,
    pub l2d: CacheCounters,
    pub l2i: CacheCounters,
    pub llc: CacheCounters,
    pub hbm2: ChannelCounters,
    pub ddr4: ChannelCounters,
}

impl MemoryCounters {
    pub fn level(&self, level: Level) -> &CacheCounters {
        match level {
            Level::L1d => &self.l1d,
            Level::L1i => &self.l1i,
            Level::L2d => &self.l2d,
            Level::L2i => &self.l2i,
            Level::Llc => &self.llc,
        }
    }

    pub fn channel_bytes(&self) -> (u64, u64) {
        (self.hbm2.read_bytes + self.ddr4.read_bytes, self.hbm2.write_bytes + self.ddr4.write_bytes)
    }
}

#[derive(Debug, Clone)]
pub struct MemorySystem {
    topo: Topology,
    line_size: u64,
    l1d: Vec<Cache>,
    l1i: Vec<Cache>,
    l2d: Vec<Cache>,
    l2i: Vec<Cache>,
    llc: Vec<Cache>,
    pub memory: GlobalMemory,
    hbm2: ChannelSet,
    ddr4: ChannelSet,
    ddr4_window: Option<AddressWindow>,
    l1i_next_line: bool,
    trace: Option<Vec<TraceRecord>>,
}

impl MemorySystem {
    /// Build the hierarchy for a validated configuration.
    pub fn new(cfg: &ChipConfig) -> Self {
        let villages = cfg.cities() * cfg.villages_per_city as usize;
        let c = &cfg.caches;
        MemorySystem {
            topo: Topology { pes_per_village: cfg.pes_per_village as usize, pes_per_city: cfg.pes_per_city() },
            line_size: c.l1d.line_size,
            l1d: (0..villages).map(|_| Cache::new(c.l1d)).collect(),
            l1i: (0..cfg.total_pes()).map(|_| Cache::tags_only(c.l1i)).collect(),
            l2d: (0..cfg.cities()).map(|_| Cache::new(c.l2d)).collect(),
            l2i: (0..cfg.cities()).map(|_| Cache::tags_only(c.l2i)).collect(),
            llc: (0..cfg.prefectures as usize).map(|_| Cache::new(c.llc)).collect(),
            memory: GlobalMemory::new(cfg.memory.size),
            hbm2: ChannelSet::new(cfg.memory.hbm2.clone(), cfg.frequency_hz),
            ddr4: ChannelSet::new(cfg.memory.ddr4.clone(), cfg.frequency_hz),
            ddr4_window: cfg.memory.ddr4_window,
            l1i_next_line: c.l1i_next_line_prefetch,
            trace: None,
        }
    }

    pub fn line_size(&self) -> u64 {
        self.line_size
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn instances(&self, level: Level) -> &[Cache] {
        match level {
            Level::L1d => &self.l1d,
            Level::L1i => &self.l1i,
            Level::L2d => &self.l2d,
            Level::L2i => &self.l2i,
            Level::Llc => &self.llc,
        }
    }

    fn cache(&mut self, level: Level, inst: usize) -> &mut Cache {
        match level {
            Level::L1d => &mut self.l1d[inst],
            Level::L1i => &mut self.l1i[inst],
            Level::L2d => &mut self.l2d[inst],
            Level::L2i => &mut self.l2i[inst],
            Level::Llc => &mut self.llc[inst],
        }
    }

    pub fn village_of(&self, pe: usize) -> usize {
        pe / self.topo.pes_per_village
    }

    pub fn city_of(&self, pe: usize) -> usize {
        pe / self.topo.pes_per_city
    }

    pub fn llc_slice(&self, line: u64) -> usize {
        (line % self.llc.len() as u64) as usize
    }

    pub fn counters(&self) -> MemoryCounters {
        let sum = |v: &[Cache]| {
            let mut t = CacheCounters::default();
            for c in v {
                t.add(&c.counters);
            }
            t
        };
        MemoryCounters {
            l1d: sum(&self.l1d),
            l1i: sum(&self.l1i),
            l2d: sum(&self.l2d),
            l2i: sum(&self.l2i),
            llc: sum(&self.llc),
            hbm2: self.hbm2.totals(),
            ddr4: self.ddr4.totals(),
        }
    }

    fn check(&self, addr: u64, len: u64) -> Result<(), MemError> {
        if self.memory.in_range(addr, len) {
            Ok(())
        } else {
            Err(MemError::OutOfRange { addr, len })
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        cycle: u64,
        origin: Origin,
        level: Level,
        inst: usize,
        line: u64,
        kind: AccessKind,
        outcome: Outcome,
        writeback: bool,
    ) {
        if let Some(t) = &mut self.trace {
            t.push(TraceRecord {
                cycle,
                origin,
                level,
                instance: inst as u32,
                address: line * self.line_size,
                kind,
                outcome,
                writeback,
            });
        }
    }

    /// Make `line` present in (level, inst), filling from below on a miss.
    fn ensure(&mut self, level: Level, inst: usize, line: u64, arrival: u64, kind: AccessKind, origin: Origin) -> Access {
        let cache = self.cache(level, inst);
        let lat = cache.hit_latency();
        cache.counters.accesses += 1;
        let access = match cache.probe(line, arrival) {
            Probe::Hit { way } => {
                cache.counters.hits += 1;
                Access { way, ready: arrival + lat, outcome: Outcome::Hit }
            }
            Probe::Pending { way, ready } => {
                cache.counters.misses += 1;
                cache.counters.mshr_merges += 1;
                Access { way, ready: ready.max(arrival + lat), outcome: Outcome::Merge }
            }
            Probe::Miss => {
                cache.counters.misses += 1;
                let start = cache.mshr_start(arrival);
                let forward = start + lat;
                let (data, ready) = self.fill_from_below(level, inst, line, forward, origin);
                let cache = self.cache(level, inst);
                let (way, victim) = cache.install(line, data.as_deref(), ready);
                cache.mshr_push(line, ready);
                let wb = victim.is_some();
                if let Some(v) = victim {
                    self.writeback_below(level, inst, &v, forward, origin);
                }
                self.record(arrival, origin, level, inst, line, kind, Outcome::Miss, wb);
                return Access { way, ready, outcome: Outcome::Miss };
            }
        };
        self.record(arrival, origin, level, inst, line, kind, access.outcome, false);
        access
    }

    fn fill_from_below(&mut self, level: Level, inst: usize, line: u64, t: u64, origin: Origin) -> (Option<Vec<u8>>, u64) {
        let (next, next_inst, kind) = match level {
            Level::L1d => (Level::L2d, self.l1d_city(inst), AccessKind::Read),
            Level::L2d => (Level::Llc, self.llc_slice(line), AccessKind::Read),
            Level::L1i => (Level::L2i, self.city_of(inst), AccessKind::Fetch),
            Level::L2i => (Level::Llc, self.llc_slice(line), AccessKind::Fetch),
            Level::Llc => {
                let addr = line * self.line_size;
                let data = self.memory.read_vec(addr, self.line_size as usize);
                let ready = self.channel_submit(addr, t, false);
                return (Some(data), ready);
            }
        };
        let a = self.ensure(next, next_inst, line, t, kind, origin);
        let data = match level {
            Level::L1i | Level::L2i => None,
            _ => Some(self.cache(next, next_inst).line_data(line, a.way).to_vec()),
        };
        (data, a.ready)
    }

    /// Push a dirty line one level down; returns the cycle it is accepted.
    fn writeback_below(&mut self, level: Level, inst: usize, v: &Victim, t: u64, origin: Origin) -> u64 {
        let (next, next_inst) = match level {
            Level::L1d => (Level::L2d, self.l1d_city(inst)),
            Level::L2d => (Level::Llc, self.llc_slice(v.line)),
            Level::Llc => {
                let addr = v.line * self.line_size;
                self.memory.write_masked(addr, &v.data, v.dirty);
                return self.channel_submit(addr, t, true);
            }
            Level::L1i | Level::L2i => unreachable!("instruction caches hold no dirty data"),
        };
        let a = self.ensure(next, next_inst, v.line, t, AccessKind::Writeback, origin);
        self.cache(next, next_inst).merge(a.way, v);
        a.ready
    }

    fn l1d_city(&self, village: usize) -> usize {
        village * self.topo.pes_per_village / self.topo.pes_per_city
    }

    fn channel_submit(&mut self, addr: u64, t: u64, write: bool) -> u64 {
        let ls = self.line_size;
        match self.ddr4_window {
            Some(w) if w.contains(addr) => self.ddr4.submit(addr - w.base, ls, t, write),
            _ => self.hbm2.submit(addr, ls, t, write),
        }
    }

    /// Global load through the requesting PE's L1D. The access must not
    /// cross a line. Returns the cycle the data is available.
    pub fn read(&mut self, origin: Origin, addr: u64, buf: &mut [u8], now: u64) -> Result<u64, MemError> {
        self.check(addr, buf.len() as u64)?;
        let line = addr / self.line_size;
        let inst = self.village_of(origin.pe as usize);
        let a = self.ensure(Level::L1d, inst, line, now, AccessKind::Read, origin);
        self.l1d[inst].read(line, a.way, (addr % self.line_size) as usize, buf);
        Ok(a.ready)
    }

    /// Global store into the requesting PE's L1D (write-allocate).
    pub fn write(&mut self, origin: Origin, addr: u64, bytes: &[u8], now: u64) -> Result<u64, MemError> {
        self.check(addr, bytes.len() as u64)?;
        let line = addr / self.line_size;
        let inst = self.village_of(origin.pe as usize);
        let a = self.ensure(Level::L1d, inst, line, now, AccessKind::Write, origin);
        self.l1d[inst].write(line, a.way, (addr % self.line_size) as usize, bytes);
        Ok(a.ready)
    }

    /// Instruction fetch of the line holding `addr`. Returns `None` on an
    /// L1I hit (no stall) or the cycle the line arrives. With next-line
    /// prefetch on, a fetch also starts filling the following line when it
    /// is absent.
    pub fn fetch(&mut self, origin: Origin, addr: u64, now: u64) -> Result<Option<u64>, MemError> {
        self.check(addr, 4)?;
        let line = addr / self.line_size;
        let pe = origin.pe as usize;
        let a = self.ensure(Level::L1i, pe, line, now, AccessKind::Fetch, origin);
        if self.l1i_next_line {
            let next = line + 1;
            if self.memory.in_range(next * self.line_size, 4) && !self.l1i[pe].contains(next) {
                self.ensure(Level::L1i, pe, next, now, AccessKind::Fetch, origin);
            }
        }
        Ok((a.outcome != Outcome::Hit).then_some(a.ready))
    }

    fn flush_at(&mut self, level: Level, inst: usize, line: u64, now: u64, origin: Origin) -> u64 {
        let lat = self.cache(level, inst).hit_latency();
        let (present, victim) = self.cache(level, inst).invalidate(line);
        let outcome = if present { Outcome::Hit } else { Outcome::Miss };
        self.record(now, origin, level, inst, line, AccessKind::Flush, outcome, victim.is_some());
        match victim {
            Some(v) => self.writeback_below(level, inst, &v, now + lat, origin),
            None => now + lat,
        }
    }

    /// Write back (if dirty) and invalidate one L1D line of the requesting
    /// PE. Returns the cycle the writeback has been accepted.
    pub fn flush_line(&mut self, origin: Origin, addr: u64, now: u64) -> u64 {
        if !self.memory.in_range(addr, 1) {
            return now + 1;
        }
        let inst = self.village_of(origin.pe as usize);
        self.flush_at(Level::L1d, inst, addr / self.line_size, now, origin)
    }

    /// Flush every L1D line overlapping `[base, base + len)`, one line per
    /// cycle; returns the cycle the last writeback has been accepted.
    pub fn flush_range(&mut self, origin: Origin, base: u64, len: u64, now: u64) -> u64 {
        let mut done = now + 1;
        if len == 0 {
            return done;
        }
        let end = base.saturating_add(len).min(self.memory.size());
        if base >= end {
            return done;
        }
        let inst = self.village_of(origin.pe as usize);
        let first = base / self.line_size;
        let last = (end - 1) / self.line_size;
        for (i, line) in (first..=last).enumerate() {
            done = done.max(self.flush_at(Level::L1d, inst, line, now + i as u64, origin));
        }
        done
    }

    /// Write back (if dirty) and invalidate one line of the requesting PE's
    /// city L2D.
    pub fn flush_l2_line(&mut self, origin: Origin, addr: u64, now: u64) -> u64 {
        if !self.memory.in_range(addr, 1) {
            return now + 1;
        }
        let inst = self.city_of(origin.pe as usize);
        self.flush_at(Level::L2d, inst, addr / self.line_size, now, origin)
    }

    /// The memory image after writing back every dirty line of every cache:
    /// LLC contents first, then L2Ds, then L1Ds, each in instance order, so
    /// data closer to the PEs takes precedence.
    pub fn flushed_image(&self) -> GlobalMemory {
        let mut m = self.memory.clone();
        for level in [&self.llc, &self.l2d, &self.l1d] {
            for cache in level {
                for v in cache.dirty_lines() {
                    m.write_masked(v.line * self.line_size, &v.data, v.dirty);
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> MemorySystem {
        let mut m = MemorySystem::new(&ChipConfig::one_city());
        m.enable_trace();
        m
    }

    const O0: Origin = Origin { pe: 0, thread: 0 };
    const O1: Origin = Origin { pe: 4, thread: 0 };

    #[test]
    fn cold_miss_then_hit() {
        let mut m = sys();
        let mut b = [0u8; 8];
        let t0 = m.read(O0, 0x1000, &mut b, 0).unwrap();
        assert_eq!(t0, 2 + 14 + 40 + 150);
        let t1 = m.read(O0, 0x1008, &mut b, t0).unwrap();
        assert_eq!(t1, t0 + 2);
        let c = m.counters();
        assert_eq!((c.l1d.hits, c.l1d.misses), (1, 1));
        assert_eq!(c.hbm2.read_bytes, 64);
    }

    #[test]
    fn consecutive_misses_merge() {
        let mut m = sys();
        let mut b = [0u8; 8];
        let t0 = m.read(O0, 0x2000, &mut b, 10).unwrap();
        let t1 = m.read(O0, 0x2010, &mut b, 11).unwrap();
        assert_eq!(t0, t1);
        let c = m.counters();
        assert_eq!(c.l1d.mshr_merges, 1);
        assert_eq!(c.l2d.accesses, 1);
        assert_eq!(m.trace()[m.trace().len() - 1].outcome, Outcome::Merge);
    }

    #[test]
    fn dirty_lru_eviction_writes_back_once() {
        let mut m = sys();
        // L1D: 2 KiB, 2-way, 64 B lines → 16 sets; stride 1 KiB maps to set 0.
        m.write(O0, 0, &[1; 8], 0).unwrap();
        let mut b = [0u8; 8];
        m.read(O0, 1024, &mut b, 1000).unwrap();
        m.read(O0, 2048, &mut b, 2000).unwrap();
        let c = m.counters();
        assert_eq!(c.l1d.writebacks_out, 1);
        assert_eq!(c.l2d.writebacks_in, 1);
    }

    #[test]
    fn stores_stay_private_until_flushed() {
        let mut m = sys();
        let mut b = [0u8; 8];
        m.read(O1, 0x40, &mut b, 0).unwrap();
        m.write(O0, 0x40, &7u64.to_le_bytes(), 500).unwrap();
        m.read(O1, 0x40, &mut b, 600).unwrap();
        assert_eq!(u64::from_le_bytes(b), 0, "PE1 keeps its stale copy");
        let done = m.flush_line(O0, 0x40, 700);
        assert!(done > 700);
        m.flush_line(O1, 0x40, done);
        m.read(O1, 0x40, &mut b, done + 10).unwrap();
        assert_eq!(u64::from_le_bytes(b), 7);
    }

    #[test]
    fn flush_of_absent_line_is_free() {
        let mut m = sys();
        let before = m.counters();
        m.flush_line(O0, 0x5000, 0);
        let after = m.counters();
        assert_eq!(before, after);
    }

    #[test]
    fn flushed_image_prefers_upper_levels() {
        let mut m = sys();
        m.write(O0, 0x80, &[5; 8], 0).unwrap();
        m.flush_line(O0, 0x80, 300);
        m.write(O0, 0x80, &[6; 4], 600).unwrap();
        let img = m.flushed_image();
        assert_eq!(img.read_vec(0x80, 8), vec![6, 6, 6, 6, 5, 5, 5, 5]);
        assert_eq!(m.memory.read_vec(0x80, 8), vec![0; 8]);
    }

    #[test]
    fn out_of_range() {
        let mut m = sys();
        let mut b = [0u8; 8];
        assert!(m.read(O0, (1 << 32) - 4, &mut b, 0).is_err());
    }
}
