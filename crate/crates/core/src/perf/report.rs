//! Report emission in human, CSV and JSON form.
//!
//! The JSON report is `{"schema_version", "stats", "derived"}` where
//! `stats` is the lossless [`RunStats`] and `derived` holds computed rates.
//! The CSV report has one header row, one row per PE and a final `total`
//! row; its columns are listed in [`CSV_COLUMNS`].

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::energy::{energy_report, EnergyModel};
use super::peak::{one_decimal, BandwidthModel, PeakModel};
use crate::chip::{ChipConfig, RunStats, STATS_SCHEMA_VERSION};
use crate::isa::Precision;
use crate::pe::PeCounters;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Human,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "human" => Ok(ReportFormat::Human),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (human, csv, json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub peak_dp_flops: f64,
    pub achieved_flops: f64,
    /// Achieved ÷ DP peak.
    pub efficiency: f64,
    pub delivered_bytes_per_sec: f64,
    pub peak_bytes_per_sec: f64,
    pub arithmetic_intensity: Option<f64>,
    pub roofline_flops: f64,
    pub power_watts: Option<f64>,
    pub gflops_per_watt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub stats: RunStats,
    pub derived: Derived,
}

impl Report {
    pub fn new(stats: RunStats, cfg: &ChipConfig, energy: &EnergyModel) -> Self {
        let peak = PeakModel { pes: stats.total_pes, frequency_hz: stats.frequency_hz, ..PeakModel::of(cfg) };
        let peak_dp = peak.peak(Precision::Double);
        let bw = BandwidthModel::of(cfg).primary();
        let ai = stats.arithmetic_intensity();
        let e = energy_report(&stats, energy, Some(&peak)).ok();
        let derived = Derived {
            peak_dp_flops: peak_dp,
            achieved_flops: stats.achieved_flops(),
            efficiency: if peak_dp > 0.0 { stats.achieved_flops() / peak_dp } else { 0.0 },
            delivered_bytes_per_sec: stats.delivered_bytes_per_sec(),
            peak_bytes_per_sec: bw,
            arithmetic_intensity: ai.is_finite().then_some(ai),
            roofline_flops: super::peak::roofline(ai, peak_dp, bw),
            power_watts: e.map(|e| e.watts),
            gflops_per_watt: e.map(|e| e.gflops_per_watt).filter(|g| g.is_finite()),
        };
        Report { schema_version: STATS_SCHEMA_VERSION, stats, derived }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Human => self.to_human(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for (i, p) in self.stats.pes.iter().enumerate() {
            csv_row(&mut out, &i.to_string(), p);
        }
        csv_row(&mut out, "total", &self.stats.totals);
        out
    }

    pub fn to_human(&self) -> String {
        let s = &self.stats;
        let d = &self.derived;
        let mut o = String::new();
        let _ = writeln!(o, "report schema {}  config {}{}", self.schema_version, s.config, if s.model_derived { "  [model-derived]" } else { "" });
        let _ = writeln!(o, "cycles            {}", s.cycles);
        let _ = writeln!(o, "wall time         {:.6e} s at {:.1} MHz", s.wall_seconds, s.frequency_hz / 1e6);
        let _ = writeln!(o, "PEs / threads     {} / {}", s.total_pes, s.threads_activated);
        let _ = writeln!(o, "instructions      {}", s.instructions.total());
        let _ = writeln!(o, "flops (dp/sp/hp)  {} / {} / {}", s.flops.dp, s.flops.sp, s.flops.hp);
        let _ = writeln!(o, "peak DP           {:.1} TFlops ({:.4} GFlops)", one_decimal(d.peak_dp_flops / 1e12), d.peak_dp_flops / 1e9);
        let _ = writeln!(o, "achieved          {:.4} GFlops", d.achieved_flops / 1e9);
        let _ = writeln!(o, "efficiency        {:.2} % of DP peak", 100.0 * d.efficiency);
        let _ = writeln!(o, "memory traffic    {:.4} GB/s delivered (peak {:.1} GB/s)", d.delivered_bytes_per_sec / 1e9, d.peak_bytes_per_sec / 1e9);
        if let (Some(w), Some(e)) = (d.power_watts, d.gflops_per_watt) {
            let _ = writeln!(o, "power             {w:.2} W, {e:.2} GFlops/W");
        }
        let t = &s.totals;
        let _ = writeln!(o, "PE cycles         {} = {} issue + {} full-stall", t.cycles, t.issue_cycles, t.stall_cycles);
        let _ = writeln!(
            o,
            "stalls            memory {} sfu {} fetch {} dependency {} barrier {} idle {}",
            t.stall_memory, t.stall_sfu, t.stall_fetch, t.stall_dependency, t.stall_barrier, t.stall_idle
        );
        for (name, c) in [
            ("l1d", &s.memory.l1d),
            ("l1i", &s.memory.l1i),
            ("l2d", &s.memory.l2d),
            ("l2i", &s.memory.l2i),
            ("llc", &s.memory.llc),
        ] {
            let _ = writeln!(o, "{name:<17} {} hits, {} misses, {} writebacks", c.hits, c.misses, c.writebacks_out);
        }
        o
    }
}

pub const CSV_COLUMNS: [&str; 23] = [
    "pe",
    "cycles",
    "issue_cycles",
    "stall_cycles",
    "issued",
    "stall_memory",
    "stall_sfu",
    "stall_fetch",
    "stall_dependency",
    "stall_barrier",
    "stall_idle",
    "group_switches",
    "barrier_waits",
    "integer",
    "float",
    "sfu",
    "global_memory",
    "local_memory",
    "control",
    "special",
    "flops_dp",
    "flops_sp",
    "flops_hp",
];

fn csv_row(out: &mut String, label: &str, p: &PeCounters) {
    let c = &p.by_class;
    let _ = writeln!(
        out,
        "{label},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        p.cycles,
        p.issue_cycles,
        p.stall_cycles,
        p.issued,
        p.stall_memory,
        p.stall_sfu,
        p.stall_fetch,
        p.stall_dependency,
        p.stall_barrier,
        p.stall_idle,
        p.group_switches,
        p.barrier_waits,
        c.integer,
        c.float,
        c.sfu,
        c.global_memory,
        c.local_memory,
        c.control,
        c.special,
        p.flops.dp,
        p.flops.sp,
        p.flops.hp,
    );
}
