//! Event-based energy model.
//!
//! ```text
//! energy = static_watts × t
//!        + Σ_p fma_equivalents_p × fma_joules_p        (fma_equivalents = flops / 2)
//!        + Σ_level accesses_level × access_joules_level
//!        + external_bytes × byte_joules
//! power  = energy / t
//! ```
//!
//! Only two measured numbers constrain the coefficients (total power and
//! energy efficiency of one DGEMM measurement), so the calibrated preset
//! pins exactly two: the static power, fixed as a share of the measured
//! total, and the DP FMA energy, solved from the remainder. Everything else
//! is zero in the preset and free for the user to set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{ChipConfig, RunStats, STATS_SCHEMA_VERSION};
use crate::mem::MemoryCounters;
use crate::pe::{FlopCounts, PeCounters};

use super::peak::PeakModel;
use crate::isa::Precision;

/// Measured board power of the calibration run, W.
pub const CALIBRATION_POWER_W: f64 = 300.4;
/// Measured energy efficiency of the calibration run, GFlops/W.
pub const CALIBRATION_GFLOPS_PER_W: f64 = 28.45;
/// Clock of the calibration run, Hz.
pub const CALIBRATION_FREQUENCY_HZ: f64 = 0.8e9;
/// Share of the calibration power attributed to static power.
pub const CALIBRATION_STATIC_SHARE: f64 = 0.30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerPrecision {
    pub dp: f64,
    pub sp: f64,
    pub hp: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerLevel {
    pub l1d: f64,
    pub l1i: f64,
    pub l2d: f64,
    pub l2i: f64,
    pub llc: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    pub static_watts: f64,
    /// Joules per lane FMA (two flops) at each precision.
    pub fma_joules: PerPrecision,
    pub access_joules: PerLevel,
    pub byte_joules: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EnergyError {
    #[error("run has zero wall time")]
    ZeroTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub seconds: f64,
    pub joules: f64,
    pub watts: f64,
    pub achieved_gflops: f64,
    /// Achieved GFlops ÷ W.
    pub gflops_per_watt: f64,
    /// Peak DP GFlops ÷ W (the alternative reading of the measured figure).
    pub peak_gflops_per_watt: Option<f64>,
}

impl EnergyModel {
    /// The calibrated preset: reproduces 300.4 W and 28.45 GFlops/W on the
    /// full-chip 800 MHz DGEMM scenario, with 30 % of the power static.
    pub fn calibrated_800mhz() -> Self {
        let achieved = CALIBRATION_GFLOPS_PER_W * CALIBRATION_POWER_W * 1e9;
        let static_watts = CALIBRATION_STATIC_SHARE * CALIBRATION_POWER_W;
        let dynamic = CALIBRATION_POWER_W - static_watts;
        EnergyModel {
            static_watts,
            fma_joules: PerPrecision { dp: dynamic / (achieved / 2.0), sp: 0.0, hp: 0.0 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.static_watts,
            self.fma_joules.dp,
            self.fma_joules.sp,
            self.fma_joules.hp,
            self.access_joules.l1d,
            self.access_joules.l1i,
            self.access_joules.l2d,
            self.access_joules.l2i,
            self.access_joules.llc,
            self.byte_joules,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err("energy coefficients must be finite and non-negative".into())
        }
    }

    /// Dynamic energy of the counted events (no static term).
    pub fn dynamic_joules(&self, flops: &FlopCounts, mem: &MemoryCounters) -> f64 {
        let f = &self.fma_joules;
        let a = &self.access_joules;
        let (r, w) = mem.channel_bytes();
        flops.dp as f64 / 2.0 * f.dp
            + flops.sp as f64 / 2.0 * f.sp
            + flops.hp as f64 / 2.0 * f.hp
            + mem.l1d.accesses as f64 * a.l1d
            + mem.l1i.accesses as f64 * a.l1i
            + mem.l2d.accesses as f64 * a.l2d
            + mem.l2i.accesses as f64 * a.l2i
            + mem.llc.accesses as f64 * a.llc
            + (r + w) as f64 * self.byte_joules
    }
}

/// Power and efficiency of a run under an energy model.
pub fn energy_report(stats: &RunStats, model: &EnergyModel, peak: Option<&PeakModel>) -> Result<EnergyReport, EnergyError> {
    let t = stats.wall_seconds;
    if !(t > 0.0) {
        return Err(EnergyError::ZeroTime);
    }
    let joules = model.static_watts * t + model.dynamic_joules(&stats.flops, &stats.memory);
    let watts = joules / t;
    let achieved_gflops = stats.achieved_gflops();
    Ok(EnergyReport {
        seconds: t,
        joules,
        watts,
        achieved_gflops,
        gflops_per_watt: achieved_gflops / watts,
        peak_gflops_per_watt: peak.map(|p| p.peak(Precision::Double) / 1e9 / watts),
    })
}

/// The measured full-chip DGEMM measurement expressed as run counters:
/// one second on the whole chip at the calibration clock, achieving
/// 28.45 GFlops/W × 300.4 W of DP throughput.
pub fn calibration_scenario(cfg: &ChipConfig) -> RunStats {
    let achieved = (CALIBRATION_GFLOPS_PER_W * CALIBRATION_POWER_W * 1e9).round() as u64;
    let cycles = cfg.frequency_hz.round() as u64;
    let flops = FlopCounts { dp: achieved, sp: 0, hp: 0 };
    let totals = PeCounters { cycles, flops, ..Default::default() };
    RunStats {
        schema_version: STATS_SCHEMA_VERSION,
        config: format!("{}:dgemm-calibration-scenario", cfg.name),
        model_derived: true,
        frequency_hz: cfg.frequency_hz,
        total_pes: cfg.total_pes() as u64,
        threads_activated: 0,
        cycles,
        wall_seconds: cfg.cycles_to_seconds(cycles),
        instructions: Default::default(),
        flops,
        totals,
        memory: MemoryCounters::default(),
        barrier_releases: 0,
        sfu_ops: 0,
        pes: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with(flops: u64, secs: f64) -> RunStats {
        let mut s = calibration_scenario(&ChipConfig::calibration_800mhz());
        s.flops.dp = flops;
        s.wall_seconds = secs;
        s
    }

    #[test]
    fn zero_events_is_static_power() {
        let m = EnergyModel { static_watts: 42.0, ..EnergyModel::calibrated_800mhz() };
        let r = energy_report(&stats_with(0, 3.0), &m, None).unwrap();
        assert_eq!(r.watts, 42.0);
    }

    #[test]
    fn zero_time_is_an_error() {
        assert_eq!(energy_report(&stats_with(5, 0.0), &EnergyModel::default(), None), Err(EnergyError::ZeroTime));
    }

    #[test]
    fn calibration_hits_targets() {
        let cfg = ChipConfig::calibration_800mhz();
        let r = energy_report(&calibration_scenario(&cfg), &cfg.energy, Some(&PeakModel::of(&cfg))).unwrap();
        assert!((r.watts / 300.4 - 1.0).abs() < 1e-9, "{}", r.watts);
        assert!((r.gflops_per_watt / 28.45 - 1.0).abs() < 1e-9);
        let peak_based = r.peak_gflops_per_watt.unwrap();
        assert!((peak_based - 13107.2 / 300.4).abs() < 1e-6);
    }

    #[test]
    fn doubling_flops_at_equal_power_doubles_efficiency() {
        let m = EnergyModel { static_watts: 100.0, ..Default::default() };
        let a = energy_report(&stats_with(1_000_000, 1.0), &m, None).unwrap();
        let b = energy_report(&stats_with(2_000_000, 1.0), &m, None).unwrap();
        assert_eq!(b.watts, a.watts);
        assert_eq!(b.gflops_per_watt, 2.0 * a.gflops_per_watt);
    }
}
