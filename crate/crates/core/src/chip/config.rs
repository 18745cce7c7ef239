//! Chip configuration. The JSON form mirrors these structs field for field;
//! every field is optional and falls back to the defaults below, which
//! describe the 4096-PE, 1.2 GHz part.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mem::{CacheConfig, ChannelConfig};
use crate::perf::EnergyModel;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlopsPerCycle {
    pub dp: u32,
    pub sp: u32,
    pub hp: u32,
}

impl Default for FlopsPerCycle {
    fn default() -> Self {
        FlopsPerCycle { dp: 4, sp: 8, hp: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheGeometry {
    pub l1d: CacheConfig,
    pub l1i: CacheConfig,
    pub l2d: CacheConfig,
    pub l2i: CacheConfig,
    pub llc: CacheConfig,
    /// Optional: every instruction fetch also requests the next sequential
    /// line when it is not cached. Off by default.
    pub l1i_next_line_prefetch: bool,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        // Data-side MSHR tables grow with the number of threads behind
        // each level: 32 threads per L1D, 128 per L2D, 2048 per LLC slice.
        CacheGeometry {
            l1d: CacheConfig { mshr_entries: 64, ..CacheConfig::new(2 * 1024, 64, 2, 2) },
            l1i: CacheConfig::new(4 * 1024, 64, 2, 2),
            l2d: CacheConfig { mshr_entries: 128, ..CacheConfig::new(64 * 1024, 64, 8, 14) },
            l2i: CacheConfig::new(32 * 1024, 64, 4, 14),
            llc: CacheConfig { mshr_entries: 256, ..CacheConfig::new(4 * 1024 * 1024, 64, 16, 40) },
            l1i_next_line_prefetch: false,
        }
    }
}

impl CacheGeometry {
    pub fn set_line_size(&mut self, line: u64) {
        for c in self.all_mut() {
            c.line_size = line;
        }
    }

    pub fn set_associativity(&mut self, ways: u32) {
        for c in self.all_mut() {
            c.associativity = ways;
        }
    }

    fn all_mut(&mut self) -> [&mut CacheConfig; 5] {
        [&mut self.l1d, &mut self.l1i, &mut self.l2d, &mut self.l2i, &mut self.llc]
    }

    pub fn all(&self) -> [(&'static str, &CacheConfig); 5] {
        [("l1d", &self.l1d), ("l1i", &self.l1i), ("l2d", &self.l2d), ("l2i", &self.l2i), ("llc", &self.llc)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Instructions issued per PE per cycle.
    pub issue_width: u32,
    pub alu_latency: u64,
    pub fp_latency: u64,
    pub local_latency: u64,
    pub sfu_latency: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { issue_width: 2, alu_latency: 1, fp_latency: 4, local_latency: 1, sfu_latency: 16 }
    }
}

/// An address window served by the DDR4 channels instead of HBM2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressWindow {
    pub base: u64,
    pub length: u64,
}

impl AddressWindow {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr - self.base < self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    /// Size of the global address space in bytes.
    pub size: u64,
    pub hbm2: ChannelConfig,
    pub ddr4: ChannelConfig,
    pub ddr4_window: Option<AddressWindow>,
    pub pcie_lanes: u32,
    pub pcie_bytes_per_lane: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            size: 1 << 32,
            hbm2: ChannelConfig::hbm2(),
            ddr4: ChannelConfig::ddr4(2),
            ddr4_window: None,
            pcie_lanes: 48,
            pcie_bytes_per_lane: 2.0e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChipConfig {
    pub name: String,
    pub prefectures: u32,
    pub cities_per_prefecture: u32,
    pub villages_per_city: u32,
    pub pes_per_village: u32,
    pub frequency_hz: f64,
    pub flops_per_cycle: FlopsPerCycle,
    pub pipeline: PipelineConfig,
    pub caches: CacheGeometry,
    pub memory: MemoryConfig,
    pub local_storage_bytes: u64,
    pub energy: EnergyModel,
    /// Cycles without any architectural state change before a run is
    /// declared deadlocked.
    pub watchdog_cycles: u64,
    /// Base address of the program text in global memory.
    pub text_base: u64,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            name: "sc3-default".into(),
            prefectures: 16,
            cities_per_prefecture: 16,
            villages_per_city: 4,
            pes_per_village: 4,
            frequency_hz: 1.2e9,
            flops_per_cycle: FlopsPerCycle::default(),
            pipeline: PipelineConfig::default(),
            caches: CacheGeometry::default(),
            memory: MemoryConfig::default(),
            local_storage_bytes: 24 * 1024,
            energy: EnergyModel::default(),
            watchdog_cycles: 10_000_000,
            text_base: 0,
        }
    }
}

pub const THREADS_PER_PE: usize = 8;
pub const GROUP_SIZE: usize = 4;

impl ChipConfig {
    /// The default chip: 16 prefectures × 16 cities × 4 villages × 4 PEs.
    pub fn sc3() -> Self {
        Self::default()
    }

    /// The previous generation: 2048 PEs at 1.0 GHz, DDR4-3200 ×4 only.
    pub fn sc2() -> Self {
        let mut cfg = ChipConfig {
            name: "sc2".into(),
            prefectures: 8,
            frequency_hz: 1.0e9,
            flops_per_cycle: FlopsPerCycle { dp: 2, sp: 4, hp: 8 },
            ..Self::default()
        };
        cfg.memory.ddr4 = ChannelConfig::ddr4(4);
        cfg.memory.hbm2.channels = 0;
        cfg.memory.ddr4_window = Some(AddressWindow { base: 0, length: cfg.memory.size });
        cfg.memory.pcie_lanes = 32;
        cfg
    }

    /// One prefecture holding one city: sixteen PEs in four villages sharing
    /// one L2 and one LLC.
    pub fn one_city() -> Self {
        ChipConfig { name: "city1".into(), prefectures: 1, cities_per_prefecture: 1, ..Self::default() }
    }

    /// Operating point of the 800 MHz DGEMM power measurement, with the
    /// energy coefficients calibrated against it.
    pub fn calibration_800mhz() -> Self {
        ChipConfig {
            name: "sc3-800mhz-calibration".into(),
            frequency_hz: 0.8e9,
            energy: EnergyModel::calibrated_800mhz(),
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Input(format!("{}: {e}", path.display())))?;
        let cfg: ChipConfig =
            serde_json::from_str(&text).map_err(|e| SimError::Input(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn cities(&self) -> usize {
        (self.prefectures * self.cities_per_prefecture) as usize
    }

    pub fn pes_per_city(&self) -> usize {
        (self.villages_per_city * self.pes_per_village) as usize
    }

    pub fn total_pes(&self) -> usize {
        self.cities() * self.pes_per_city()
    }

    pub fn total_threads(&self) -> usize {
        self.total_pes() * THREADS_PER_PE
    }

    pub fn city_of_pe(&self, pe: usize) -> usize {
        pe / self.pes_per_city()
    }

    pub fn prefecture_of_pe(&self, pe: usize) -> usize {
        self.city_of_pe(pe) / self.cities_per_prefecture as usize
    }

    pub fn cycles_to_seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / self.frequency_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        for (name, v) in [
            ("prefectures", self.prefectures),
            ("cities_per_prefecture", self.cities_per_prefecture),
            ("villages_per_city", self.villages_per_city),
            ("pes_per_village", self.pes_per_village),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.frequency_hz > 0.0) {
            return bad("frequency_hz must be positive".into());
        }
        if self.pipeline.issue_width == 0 {
            return bad("issue_width must be at least 1".into());
        }
        if self.local_storage_bytes == 0 || self.local_storage_bytes > 1 << 20 {
            return bad("local_storage_bytes out of range".into());
        }
        let mut line = None;
        for (name, c) in self.caches.all() {
            c.validate().map_err(|m| SimError::Config(format!("{name}: {m}")))?;
            match line {
                None => line = Some(c.line_size),
                Some(l) if l != c.line_size => {
                    return bad("all cache levels must share one line size".into());
                }
                _ => {}
            }
        }
        let line = line.unwrap_or(64);
        for (name, ch) in [("hbm2", &self.memory.hbm2), ("ddr4", &self.memory.ddr4)] {
            ch.validate(line).map_err(|m| SimError::Config(format!("{name}: {m}")))?;
        }
        let any_hbm = self.memory.hbm2.channels > 0;
        let window_covers_all = self
            .memory
            .ddr4_window
            .is_some_and(|w| w.base == 0 && w.length >= self.memory.size);
        if !any_hbm && !window_covers_all {
            return bad("addresses outside the DDR4 window need HBM2 channels".into());
        }
        if self.memory.ddr4_window.is_some() && self.memory.ddr4.channels == 0 {
            return bad("a DDR4 window needs DDR4 channels".into());
        }
        if self.memory.size == 0 || self.memory.size % line != 0 {
            return bad("memory size must be a positive multiple of the line size".into());
        }
        Ok(())
    }
}
