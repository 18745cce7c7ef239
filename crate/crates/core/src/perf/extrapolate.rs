//! Weak-scaling extrapolation from a simulated slice to a larger chip.

use crate::chip::{ChipConfig, RunStats};
use crate::mem::{CacheCounters, ChannelCounters, MemoryCounters};
use crate::pe::{FlopCounts, InsnCounts, PeCounters};
use crate::SimError;

fn scale_cache(c: &CacheCounters, k: u64) -> CacheCounters {
    CacheCounters {
        accesses: c.accesses * k,
        hits: c.hits * k,
        misses: c.misses * k,
        mshr_merges: c.mshr_merges * k,
        writebacks_out: c.writebacks_out * k,
        writebacks_in: c.writebacks_in * k,
        evictions: c.evictions * k,
        invalidations: c.invalidations * k,
    }
}

fn scale_channel(c: &ChannelCounters, k: u64) -> ChannelCounters {
    ChannelCounters {
        read_bytes: c.read_bytes * k,
        write_bytes: c.write_bytes * k,
        requests: c.requests * k,
        busy_until: c.busy_until,
    }
}

fn scale_insns(c: &InsnCounts, k: u64) -> InsnCounts {
    InsnCounts {
        integer: c.integer * k,
        float: c.float * k,
        sfu: c.sfu * k,
        global_memory: c.global_memory * k,
        local_memory: c.local_memory * k,
        control: c.control * k,
        special: c.special * k,
    }
}

fn scale_flops(c: &FlopCounts, k: u64) -> FlopCounts {
    FlopCounts { dp: c.dp * k, sp: c.sp * k, hp: c.hp * k }
}

/// A slice is a whole number of cities with the target's city layout,
/// and the target holds a whole number of such slices.
pub fn slice_ratio(sub: &ChipConfig, target: &ChipConfig) -> Result<u64, SimError> {
    if sub.villages_per_city != target.villages_per_city || sub.pes_per_village != target.pes_per_village {
        return Err(SimError::Config("sub-chip city layout differs from the target".into()));
    }
    if sub.flops_per_cycle != target.flops_per_cycle {
        return Err(SimError::Config("sub-chip and target differ in flops per cycle".into()));
    }
    let (s, t) = (sub.total_pes() as u64, target.total_pes() as u64);
    if s == 0 || t % s != 0 {
        return Err(SimError::Config(format!("{t} target PEs are not a whole number of {s}-PE slices")));
    }
    Ok(t / s)
}

/// Scale a slice's counters to the target chip, assuming every slice of the
/// target runs the same per-PE workload. Cycle counts are kept; wall time
/// follows the target clock. Every additive counter grows by the PE ratio:
/// each shared instance of the target serves proportionally more PEs, so
/// per-instance load times instance count equals the PE ratio at every
/// level. The result is flagged as model-derived.
pub fn extrapolate_full_chip(stats: &RunStats, sub: &ChipConfig, target: &ChipConfig) -> Result<RunStats, SimError> {
    let k = slice_ratio(sub, target)?;
    let m = &stats.memory;
    let memory = MemoryCounters {
        l1d: scale_cache(&m.l1d, k),
        l1i: scale_cache(&m.l1i, k),
        l2d: scale_cache(&m.l2d, k),
        l2i: scale_cache(&m.l2i, k),
        llc: scale_cache(&m.llc, k),
        hbm2: scale_channel(&m.hbm2, k),
        ddr4: scale_channel(&m.ddr4, k),
    };
    let pes: Vec<PeCounters> = (0..k).flat_map(|_| stats.pes.iter().copied()).collect();
    let mut totals = PeCounters::default();
    for p in &pes {
        totals.add(p);
    }
    if pes.is_empty() {
        totals = stats.totals;
        totals.flops = scale_flops(&totals.flops, k);
        totals.by_class = scale_insns(&totals.by_class, k);
    }
    Ok(RunStats {
        schema_version: stats.schema_version,
        config: format!("{} (extrapolated from {})", target.name, stats.config),
        model_derived: true,
        frequency_hz: target.frequency_hz,
        total_pes: target.total_pes() as u64,
        threads_activated: stats.threads_activated * k,
        cycles: stats.cycles,
        wall_seconds: target.cycles_to_seconds(stats.cycles),
        instructions: scale_insns(&stats.instructions, k),
        flops: scale_flops(&stats.flops, k),
        totals,
        memory,
        barrier_releases: stats.barrier_releases * k,
        sfu_ops: stats.sfu_ops * k,
        pes,
    })
}

/// Add the counters of two runs of equal duration on the same config
/// (used to check that extrapolation commutes with addition).
pub fn add_counters(a: &RunStats, b: &RunStats) -> RunStats {
    let mut out = a.clone();
    out.instructions.add(&b.instructions);
    out.flops.add(&b.flops);
    out.totals.add(&b.totals);
    for (x, y) in out.pes.iter_mut().zip(&b.pes) {
        x.add(y);
    }
    let (m, n) = (&mut out.memory, &b.memory);
    m.l1d.add(&n.l1d);
    m.l1i.add(&n.l1i);
    m.l2d.add(&n.l2d);
    m.l2i.add(&n.l2i);
    m.llc.add(&n.llc);
    for (x, y) in [(&mut m.hbm2, &n.hbm2), (&mut m.ddr4, &n.ddr4)] {
        x.read_bytes += y.read_bytes;
        x.write_bytes += y.write_bytes;
        x.requests += y.requests;
        x.busy_until = x.busy_until.max(y.busy_until);
    }
    out.barrier_releases += b.barrier_releases;
    out.sfu_ops += b.sfu_ops;
    out.threads_activated += b.threads_activated;
    out
}
