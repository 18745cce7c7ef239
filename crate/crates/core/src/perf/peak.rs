//! Closed-form throughput models.

use serde::{Deserialize, Serialize};

use crate::chip::ChipConfig;
use crate::isa::Precision;
use crate::mem::peak_bandwidth;

/// Peak floating-point rate: PEs × frequency × flops per PE per cycle.
pub fn peak_flops(pes: u64, frequency_hz: f64, flops_per_cycle: u32) -> f64 {
    pes as f64 * frequency_hz * flops_per_cycle as f64
}

/// Attainable flops/s under the roofline bound.
pub fn roofline(intensity: f64, peak_flops: f64, peak_bytes_per_sec: f64) -> f64 {
    if intensity.is_infinite() {
        return peak_flops;
    }
    peak_flops.min(intensity * peak_bytes_per_sec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub pes: u64,
    pub frequency_hz: f64,
    pub dp: u32,
    pub sp: u32,
    pub hp: u32,
}

impl PeakModel {
    pub fn of(cfg: &ChipConfig) -> Self {
        PeakModel {
            pes: cfg.total_pes() as u64,
            frequency_hz: cfg.frequency_hz,
            dp: cfg.flops_per_cycle.dp,
            sp: cfg.flops_per_cycle.sp,
            hp: cfg.flops_per_cycle.hp,
        }
    }

    pub fn flops_per_cycle(&self, p: Precision) -> u32 {
        match p {
            Precision::Double => self.dp,
            Precision::Single => self.sp,
            Precision::Half => self.hp,
        }
    }

    pub fn peak(&self, p: Precision) -> f64 {
        peak_flops(self.pes, self.frequency_hz, self.flops_per_cycle(p))
    }
}

/// Peak external bandwidths of a configuration, bytes/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthModel {
    pub hbm2: f64,
    pub ddr4: f64,
    pub pcie: f64,
}

impl BandwidthModel {
    pub fn of(cfg: &ChipConfig) -> Self {
        BandwidthModel {
            hbm2: peak_bandwidth(&cfg.memory.hbm2),
            ddr4: peak_bandwidth(&cfg.memory.ddr4),
            pcie: cfg.memory.pcie_lanes as f64 * cfg.memory.pcie_bytes_per_lane,
        }
    }

    /// Bandwidth serving the default (non-windowed) address range.
    pub fn primary(&self) -> f64 {
        if self.hbm2 > 0.0 {
            self.hbm2
        } else {
            self.ddr4
        }
    }
}

/// Whole-system arithmetic for a machine built from identical chips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub nodes: u64,
    pub chips_per_node: u64,
    pub total_chips: u64,
    pub total_pes: u64,
    /// DP peak of the whole system at the configured frequency.
    pub rpeak_flops: f64,
    /// Per-chip frequency that would yield `target_rpeak_flops` (model-derived).
    pub target_rpeak_flops: Option<f64>,
    pub implied_frequency_hz: Option<f64>,
}

pub fn system_arithmetic_checks(
    nodes: u64,
    chips_per_node: u64,
    cfg: &ChipConfig,
    target_rpeak_flops: Option<f64>,
) -> SystemReport {
    let chips = nodes * chips_per_node;
    let pes = chips * cfg.total_pes() as u64;
    let per_hz = pes as f64 * cfg.flops_per_cycle.dp as f64;
    SystemReport {
        nodes,
        chips_per_node,
        total_chips: chips,
        total_pes: pes,
        rpeak_flops: per_hz * cfg.frequency_hz,
        target_rpeak_flops,
        implied_frequency_hz: target_rpeak_flops.filter(|_| per_hz > 0.0).map(|r| r / per_hz),
    }
}

/// Round to one decimal, as the vendor tables do.
pub fn one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
