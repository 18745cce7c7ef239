use serde::{Deserialize, Serialize};

use crate::mem::MemoryCounters;
use crate::pe::{FlopCounts, InsnCounts, PeCounters};

/// Version of the serialized [`RunStats`] layout.
pub const STATS_SCHEMA_VERSION: u32 = 1;

/// Counters of one run. All derived rates are computed from these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub schema_version: u32,
    pub config: String,
    /// True when the numbers were scaled from a smaller simulation rather
    /// than measured.
    pub model_derived: bool,
    pub frequency_hz: f64,
    pub total_pes: u64,
    pub threads_activated: u64,
    pub cycles: u64,
    pub wall_seconds: f64,
    pub instructions: InsnCounts,
    pub flops: FlopCounts,
    /// Sum of the per-PE counters.
    pub totals: PeCounters,
    pub memory: MemoryCounters,
    pub barrier_releases: u64,
    pub sfu_ops: u64,
    pub pes: Vec<PeCounters>,
}

impl RunStats {
    pub fn achieved_flops(&self) -> f64 {
        if self.wall_seconds > 0.0 {
            self.flops.total() as f64 / self.wall_seconds
        } else {
            0.0
        }
    }

    pub fn achieved_gflops(&self) -> f64 {
        self.achieved_flops() / 1e9
    }

    /// External-memory bytes moved per second, both directions.
    pub fn delivered_bytes_per_sec(&self) -> f64 {
        let (r, w) = self.memory.channel_bytes();
        if self.wall_seconds > 0.0 {
            (r + w) as f64 / self.wall_seconds
        } else {
            0.0
        }
    }

    /// Flops per byte of external-memory traffic.
    pub fn arithmetic_intensity(&self) -> f64 {
        let (r, w) = self.memory.channel_bytes();
        if r + w == 0 {
            f64::INFINITY
        } else {
            self.flops.total() as f64 / (r + w) as f64
        }
    }

    /// Check the counter identities that must hold for every run; returns a
    /// description of the first violation.
    pub fn check_identities(&self) -> Result<(), String> {
        for (i, p) in self.pes.iter().enumerate() {
            if p.cycles != p.issue_cycles + p.stall_cycles {
                return Err(format!("PE {i}: cycles {} ≠ issue {} + stall {}", p.cycles, p.issue_cycles, p.stall_cycles));
            }
            let reasons = p.stall_memory + p.stall_sfu + p.stall_fetch + p.stall_dependency + p.stall_barrier + p.stall_idle;
            if reasons != p.stall_cycles {
                return Err(format!("PE {i}: stall reasons {reasons} ≠ stall cycles {}", p.stall_cycles));
            }
            if p.issued != p.by_class.total() {
                return Err(format!("PE {i}: issued {} ≠ class total {}", p.issued, p.by_class.total()));
            }
        }
        if self.totals.issued != self.instructions.total() {
            return Err("Σ issued ≠ Σ instructions by class".into());
        }
        for (name, level) in [
            ("l1d", &self.memory.l1d),
            ("l1i", &self.memory.l1i),
            ("l2d", &self.memory.l2d),
            ("l2i", &self.memory.l2i),
            ("llc", &self.memory.llc),
        ] {
            if level.hits + level.misses != level.accesses {
                return Err(format!("{name}: hits + misses ≠ accesses"));
            }
        }
        let m = &self.memory;
        if m.l2d.writebacks_in != m.l1d.writebacks_out {
            return Err("l2d writebacks in ≠ l1d writebacks out".into());
        }
        if m.llc.writebacks_in != m.l2d.writebacks_out {
            return Err("llc writebacks in ≠ l2d writebacks out".into());
        }
        Ok(())
    }
}
