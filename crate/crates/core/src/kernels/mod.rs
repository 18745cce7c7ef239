//! Kernel generators, oracles and litmus tests.
//!
//! A generator turns parameters and a data seed into a [`KernelCase`]: the
//! assembly source, a ready launch descriptor and what a correct run must
//! produce. [`run_case`] simulates a case and checks it.
//!
//! The vecadd and DGEMM kernels read their per-thread work from the
//! argument block: the u64 at `args + 0` is the number of records, a thread
//! whose global id is not below it halts immediately, and record `gid` sits
//! at `args + 64 + gid × record_size`.

mod emit;

pub mod dgemm;
pub mod litmus;
pub mod manifest;
pub mod random;
pub mod vecadd;

use serde::{Deserialize, Serialize};

use crate::chip::{Chip, ChipConfig, LaunchDescriptor, RunStats};
use crate::mem::{AccessKind, Level, TraceRecord};
use crate::SimError;

pub use dgemm::{dgemm_oracle, gen_dgemm, DgemmParams, MatrixInit};
pub use litmus::{gen_litmus, LitmusKind, LitmusParams};
pub use vecadd::{gen_vecadd, vecadd_oracle, VecaddParams, VecaddVariant, VectorInit};

/// What a correct run of a case must produce.
#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    /// The flushed global image holds exactly `bytes` at `base`.
    Output { base: u64, bytes: Vec<u8> },
    /// The run never completes: the watchdog must fire.
    Deadlock,
    /// Message passing with a delayed flush: the consumer records the value
    /// it saw on every read of `data` into consecutive u64 slots at
    /// `results`. Every read that saw `value` must come no earlier than the
    /// producer village's first L1D write-back.
    Visibility { data: u64, results: u64, reads: usize, value: u64, producer_pe: usize, consumer_pe: usize },
}

/// Configuration properties a case relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Requirements {
    /// Minimum number of PEs.
    pub pes: usize,
    /// Minimum local-storage bytes per PE.
    pub local_bytes: u64,
    /// These two PEs must sit in different villages of the same city.
    pub distinct_villages: Option<(usize, usize)>,
    /// Watchdog limit to use instead of the configured one.
    pub watchdog_cycles: Option<u64>,
}

impl Requirements {
    pub fn check(&self, cfg: &ChipConfig) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if cfg.total_pes() < self.pes {
            return bad(format!("case needs {} PEs, config has {}", self.pes, cfg.total_pes()));
        }
        if cfg.local_storage_bytes < self.local_bytes {
            return bad(format!(
                "case needs {} bytes of local storage, config has {}",
                self.local_bytes, cfg.local_storage_bytes
            ));
        }
        if let Some((a, b)) = self.distinct_villages {
            let village = |pe: usize| pe / cfg.pes_per_village as usize;
            if a.max(b) >= cfg.total_pes() || village(a) == village(b) || cfg.city_of_pe(a) != cfg.city_of_pe(b) {
                return bad(format!("PEs {a} and {b} must be in different villages of one city"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KernelCase {
    pub name: String,
    /// The generator parameters, for reports.
    pub params: serde_json::Value,
    pub source: String,
    pub launch: LaunchDescriptor,
    pub expected: Expected,
    pub requirements: Requirements,
}

/// A kernel and its parameters, as written in suite manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kernel")]
pub enum KernelSpec {
    Vecadd(VecaddParams),
    Dgemm(DgemmParams),
    Litmus(LitmusParams),
}

impl KernelSpec {
    pub fn build(&self, cfg: &ChipConfig, seed: u64) -> Result<KernelCase, SimError> {
        match self {
            KernelSpec::Vecadd(p) => gen_vecadd(p, seed),
            KernelSpec::Dgemm(p) => gen_dgemm(p, seed),
            KernelSpec::Litmus(p) => gen_litmus(p, cfg),
        }
    }
}

/// Outcome of one checked case.
#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// SHA-256 of the output range, for output-checked cases.
    pub digest: Option<String>,
    /// Counters, when the run completed.
    pub stats: Option<RunStats>,
}

/// Simulate a case on `cfg` and check its expected outcome. Simulator
/// errors other than an expected deadlock are returned as errors; a wrong
/// result is a failed report.
pub fn run_case(cfg: &ChipConfig, case: &KernelCase, workers: usize) -> Result<CaseReport, SimError> {
    run_case_traced(cfg, case, workers, false).map(|(report, _)| report)
}

/// [`run_case`], also returning the memory trace when `trace` is set (a
/// deadlocked run yields no trace).
pub fn run_case_traced(
    cfg: &ChipConfig,
    case: &KernelCase,
    workers: usize,
    trace: bool,
) -> Result<(CaseReport, Vec<TraceRecord>), SimError> {
    case.requirements.check(cfg)?;
    let mut cfg = cfg.clone();
    if let Some(w) = case.requirements.watchdog_cycles {
        cfg.watchdog_cycles = w;
    }
    let report = |passed: bool, detail: String, digest: Option<String>, stats: Option<RunStats>| CaseReport {
        name: case.name.clone(),
        passed,
        detail,
        digest,
        stats,
    };
    let mut chip = Chip::build(cfg)?;
    chip.set_workers(workers);
    if trace || matches!(case.expected, Expected::Visibility { .. }) {
        chip.mem.enable_trace();
    }
    chip.launch(&case.launch)?;
    let outcome = chip.run();
    let report = match (&case.expected, outcome) {
        (Expected::Deadlock, Err(SimError::Deadlock(d))) => {
            return Ok((report(true, format!("deadlocked as expected: {d}"), None, None), Vec::new()))
        }
        (_, Err(e)) => return Err(e),
        (Expected::Deadlock, Ok(stats)) => {
            report(false, "completed but a deadlock was expected".into(), None, Some(stats))
        }
        (Expected::Output { base, bytes }, Ok(stats)) => {
            let image = chip.flushed_image();
            let got = image.read_vec(*base, bytes.len());
            let digest = image.digest_range(*base, bytes.len() as u64);
            match got.iter().zip(bytes).position(|(a, b)| a != b) {
                None => report(true, format!("{} output bytes match", bytes.len()), Some(digest), Some(stats)),
                Some(i) => {
                    let word = i / 8 * 8;
                    let word_of = |v: &[u8]| u64::from_le_bytes(v[word..word + 8].try_into().unwrap());
                    report(
                        false,
                        format!(
                            "first mismatch at {:#x}: got {:#018x}, expected {:#018x}",
                            *base + i as u64,
                            word_of(&got),
                            word_of(bytes)
                        ),
                        Some(digest),
                        Some(stats),
                    )
                }
            }
        }
        (Expected::Visibility { .. }, Ok(stats)) => {
            let (passed, detail) = check_visibility(&chip, &case.expected);
            report(passed, detail, None, Some(stats))
        }
    };
    let records = if trace { chip.mem.take_trace() } else { Vec::new() };
    Ok((report, records))
}

/// Check the delayed-flush visibility property against the memory trace.
fn check_visibility(chip: &Chip, expected: &Expected) -> (bool, String) {
    let Expected::Visibility { data, results, reads, value, producer_pe, consumer_pe } = *expected else {
        unreachable!("visibility check on another expectation");
    };
    let cfg = chip.config();
    let village = |pe: usize| pe / cfg.pes_per_village as usize;
    let line = chip.mem.line_size();
    let trace = chip.mem.trace();
    let first_writeback = trace
        .iter()
        .find(|r| r.level == Level::L1d && r.writeback && village(r.origin.pe as usize) == village(producer_pe))
        .map(|r| r.cycle);
    let consumer_reads: Vec<u64> = trace
        .iter()
        .filter(|r| {
            r.level == Level::L1d
                && r.kind == AccessKind::Read
                && r.origin.pe as usize == consumer_pe
                && r.address / line == data / line
        })
        .map(|r| r.cycle)
        .collect();
    if consumer_reads.len() != reads {
        return (false, format!("expected {reads} consumer reads of the data line, traced {}", consumer_reads.len()));
    }
    let image = chip.flushed_image();
    let mut new_seen = 0;
    for (i, &cycle) in consumer_reads.iter().enumerate() {
        let seen = image.read_u64(results + 8 * i as u64);
        if seen == value {
            new_seen += 1;
            match first_writeback {
                Some(wb) if cycle >= wb => {}
                _ => {
                    return (
                        false,
                        format!("read {i} at cycle {cycle} saw the new value before any producer write-back"),
                    )
                }
            }
        } else if seen != 0 {
            return (false, format!("read {i} saw {seen:#x}, neither old nor new value"));
        }
    }
    (true, format!("{new_seen} of {reads} reads saw the new value, none before the producer's write-back"))
}
