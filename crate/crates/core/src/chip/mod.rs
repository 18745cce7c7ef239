//! Chip assembly and the global clock loop.
//!
//! Within a cycle the fixed step order is: SFU arbitration, barrier
//! release, PE issue selection (pure, optionally parallel), then PE commit
//! in ascending PE index, then cycle-boundary group switches. Memory
//! channels and caches are advanced implicitly by the commits, which all
//! happen in PE order, so any worker count yields identical results.

mod config;
mod launch;
mod stats;

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{AddressWindow, CacheGeometry, ChipConfig, FlopsPerCycle, MemoryConfig, PipelineConfig, GROUP_SIZE, THREADS_PER_PE};
pub use launch::LaunchDescriptor;
pub use stats::{RunStats, STATS_SCHEMA_VERSION};

use crate::isa::Program;
use crate::mem::{GlobalMemory, MemorySystem};
use crate::pe::{PeCounters, PeEvent, PeParams, PeState, Scope, ThreadContext, ThreadStatus};
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadSnapshot {
    pub gid: u64,
    pub pe: usize,
    pub thread: usize,
    pub pc: usize,
    pub status: ThreadStatus,
}

/// Status of every live thread when the watchdog fired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockReport {
    pub cycle: u64,
    pub threads: Vec<ThreadSnapshot>,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no progress by cycle {}; {} live threads:", self.cycle, self.threads.len())?;
        for t in self.threads.iter().take(16) {
            write!(f, " [gid {} pe {} t{} pc {} {:?}]", t.gid, t.pe, t.thread, t.pc, t.status)?;
        }
        if self.threads.len() > 16 {
            write!(f, " …")?;
        }
        Ok(())
    }
}

/// One city's special function unit: accepts one request per cycle,
/// round-robin over the city's PEs.
#[derive(Debug, Clone)]
struct Sfu {
    queues: Vec<VecDeque<u8>>,
    next: usize,
    ops: u64,
}

impl Sfu {
    fn grant(&mut self) -> Option<(usize, u8)> {
        let n = self.queues.len();
        for k in 0..n {
            let pe = (self.next + k) % n;
            if let Some(t) = self.queues[pe].pop_front() {
                self.next = (pe + 1) % n;
                self.ops += 1;
                return Some((pe, t));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Default)]
struct BarrierCount {
    live: u32,
    arrived: u32,
}

pub struct Chip {
    cfg: ChipConfig,
    pes: Vec<PeState>,
    pub mem: MemorySystem,
    sfus: Vec<Sfu>,
    city_barriers: Vec<BarrierCount>,
    chip_barrier: BarrierCount,
    program: Program,
    threads_per_pe: usize,
    workers: usize,
    cycle: u64,
    barrier_releases: u64,
    launched: bool,
}

impl Chip {
    /// Instantiate every PE, cache and channel of a configuration.
    pub fn build(cfg: ChipConfig) -> Result<Chip, SimError> {
        cfg.validate()?;
        let pes = (0..cfg.total_pes()).map(|i| PeState::new(i, cfg.local_storage_bytes as usize)).collect();
        let sfus = (0..cfg.cities())
            .map(|_| Sfu { queues: vec![VecDeque::new(); cfg.pes_per_city()], next: 0, ops: 0 })
            .collect();
        Ok(Chip {
            mem: MemorySystem::new(&cfg),
            pes,
            sfus,
            city_barriers: vec![BarrierCount::default(); cfg.cities()],
            chip_barrier: BarrierCount::default(),
            program: Program::new(Vec::new(), 0, Vec::new()),
            threads_per_pe: 0,
            workers: 1,
            cycle: 0,
            barrier_releases: 0,
            launched: false,
            cfg,
        })
    }

    pub fn config(&self) -> &ChipConfig {
        &self.cfg
    }

    /// Number of workers used for the per-cycle issue-selection phase.
    /// Results are identical for every value.
    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    pub fn pes(&self) -> &[PeState] {
        &self.pes
    }

    pub fn threads(&self, pe: usize) -> &[ThreadContext; THREADS_PER_PE] {
        &self.pes[pe].threads
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Load the program and start every activated thread at the entry
    /// point, with group 0 active on every PE.
    pub fn launch(&mut self, d: &LaunchDescriptor) -> Result<(), SimError> {
        if self.launched {
            return Err(SimError::Launch("chip already launched".into()));
        }
        d.validate(&self.cfg)?;
        self.mem.memory = d.initial_memory(&self.cfg);
        let entry = d.program.entry();
        for (i, pe) in self.pes.iter_mut().enumerate() {
            for t in 0..d.threads_per_pe {
                pe.threads[t] = ThreadContext::launched(d.gid(i, t), entry, d.arg_addr);
            }
        }
        let per_city = (self.cfg.pes_per_city() * d.threads_per_pe) as u32;
        for b in &mut self.city_barriers {
            b.live = per_city;
        }
        self.chip_barrier.live = per_city * self.cfg.cities() as u32;
        self.program = d.program.clone();
        self.threads_per_pe = d.threads_per_pe;
        self.launched = true;
        Ok(())
    }

    fn snapshot(&self) -> DeadlockReport {
        let mut threads = Vec::new();
        for pe in &self.pes {
            for (t, th) in pe.threads.iter().enumerate() {
                if th.status.is_live() {
                    threads.push(ThreadSnapshot { gid: th.gid, pe: pe.id, thread: t, pc: th.pc, status: th.status });
                }
            }
        }
        DeadlockReport { cycle: self.cycle, threads }
    }

    fn release(&mut self, city: Option<usize>) {
        let (scope, range) = match city {
            Some(c) => (Scope::City, c * self.cfg.pes_per_city()..(c + 1) * self.cfg.pes_per_city()),
            None => (Scope::Chip, 0..self.pes.len()),
        };
        for pe in &mut self.pes[range] {
            for t in 0..THREADS_PER_PE {
                if pe.threads[t].status == ThreadStatus::AtBarrier(scope) {
                    pe.release(t);
                }
            }
        }
        self.barrier_releases += 1;
    }

    /// Advance the clock until every activated thread has halted.
    pub fn run(&mut self) -> Result<RunStats, SimError> {
        if !self.launched {
            return Err(SimError::Launch("no kernel launched".into()));
        }
        let pool = (self.workers > 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(self.workers).build())
            .transpose()
            .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;
        let params = PeParams { pipeline: self.cfg.pipeline, text_base: self.cfg.text_base };
        let width = self.cfg.pipeline.issue_width as usize;
        let line = self.mem.line_size();
        let sfu_latency = self.cfg.pipeline.sfu_latency.max(1);
        let per_city = self.cfg.pes_per_city();
        let mut last_progress = self.cycle;
        let mut events = Vec::new();
        let mut sels = Vec::with_capacity(self.pes.len());

        while self.chip_barrier.live > 0 {
            let now = self.cycle;
            let mut progress = false;

            for (c, sfu) in self.sfus.iter_mut().enumerate() {
                if let Some((p, t)) = sfu.grant() {
                    self.pes[c * per_city + p].sfu_granted(t as usize, now + sfu_latency - 1);
                }
            }

            for c in 0..self.city_barriers.len() {
                let b = &mut self.city_barriers[c];
                if b.arrived > 0 && b.arrived == b.live {
                    b.arrived = 0;
                    self.release(Some(c));
                    progress = true;
                }
            }
            let b = &mut self.chip_barrier;
            if b.arrived > 0 && b.arrived == b.live {
                b.arrived = 0;
                self.release(None);
                progress = true;
            }

            let program = &self.program;
            let select = |pe: &PeState| pe.select(program, now, width, params.text_base, line);
            sels.clear();
            match &pool {
                Some(pool) => pool.install(|| self.pes.par_iter().map(select).collect_into_vec(&mut sels)),
                None => sels.extend(self.pes.iter().map(select)),
            }

            for (i, sel) in sels.iter().enumerate() {
                events.clear();
                progress |= self.pes[i].commit(sel, &self.program, &mut self.mem, &params, now, &mut events)?;
                let city = i / per_city;
                for ev in &events {
                    match *ev {
                        PeEvent::SfuRequest { thread } => self.sfus[city].queues[i % per_city].push_back(thread),
                        PeEvent::BarrierArrive { scope: Scope::City, .. } => self.city_barriers[city].arrived += 1,
                        PeEvent::BarrierArrive { scope: Scope::Chip, .. } => self.chip_barrier.arrived += 1,
                        PeEvent::Halted { .. } => {
                            self.city_barriers[city].live -= 1;
                            self.chip_barrier.live -= 1;
                        }
                    }
                }
            }
            for pe in &mut self.pes {
                pe.end_of_cycle();
            }

            self.cycle += 1;
            if progress {
                last_progress = now;
            } else if now - last_progress >= self.cfg.watchdog_cycles {
                return Err(SimError::Deadlock(Box::new(self.snapshot())));
            }
        }
        Ok(self.stats())
    }

    pub fn stats(&self) -> RunStats {
        let pes: Vec<PeCounters> = self.pes.iter().map(|p| p.counters).collect();
        let mut totals = PeCounters::default();
        for p in &pes {
            totals.add(p);
        }
        RunStats {
            schema_version: STATS_SCHEMA_VERSION,
            config: self.cfg.name.clone(),
            model_derived: false,
            frequency_hz: self.cfg.frequency_hz,
            total_pes: self.pes.len() as u64,
            threads_activated: (self.pes.len() * self.threads_per_pe) as u64,
            cycles: self.cycle,
            wall_seconds: self.cfg.cycles_to_seconds(self.cycle),
            instructions: totals.by_class,
            flops: totals.flops,
            totals,
            memory: self.mem.counters(),
            barrier_releases: self.barrier_releases,
            sfu_ops: self.sfus.iter().map(|s| s.ops).sum(),
            pes,
        }
    }

    /// Global memory as it would look after every cache wrote back.
    pub fn flushed_image(&self) -> GlobalMemory {
        self.mem.flushed_image()
    }
}

/// Build, launch and run in one call.
pub fn simulate(cfg: &ChipConfig, launch: &LaunchDescriptor, workers: usize) -> Result<(Chip, RunStats), SimError> {
    let mut chip = Chip::build(cfg.clone())?;
    chip.set_workers(workers);
    chip.launch(launch)?;
    let stats = chip.run()?;
    Ok((chip, stats))
}
