//! Timing model of one processor element: eight hardware threads in two
//! groups of four, round-robin dual issue from the active group, a
//! per-thread register scoreboard, and explicit group switching.
//!
//! Each cycle is split in two phases. [`PeState::select`] is a pure
//! function of the PE's own state that picks the threads to issue; it may
//! run for all PEs in parallel. [`PeState::commit`] then executes the picks
//! against the shared memory system and must be called in PE-index order.

use serde::{Deserialize, Serialize};

use super::exec::{execute, sources, Control, Dest, GlobalPort, Scope, ThreadContext, ThreadStatus, Trap, TrapKind};
use crate::chip::{PipelineConfig, GROUP_SIZE, THREADS_PER_PE};
use crate::isa::{InsnClass, Instruction, Precision, Program};
use crate::mem::{MemError, MemorySystem, Origin};

const NEVER: u64 = u64::MAX;

/// Why a cycle with no issue was lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallReason {
    Memory,
    Sfu,
    Fetch,
    Dependency,
    Barrier,
    Idle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsnCounts {
    pub integer: u64,
    pub float: u64,
    pub sfu: u64,
    pub global_memory: u64,
    pub local_memory: u64,
    pub control: u64,
    pub special: u64,
}

impl InsnCounts {
    pub fn bump(&mut self, class: InsnClass) {
        match class {
            InsnClass::Integer => self.integer += 1,
            InsnClass::Float => self.float += 1,
            InsnClass::Sfu => self.sfu += 1,
            InsnClass::GlobalMemory => self.global_memory += 1,
            InsnClass::LocalMemory => self.local_memory += 1,
            InsnClass::Control => self.control += 1,
            InsnClass::Special => self.special += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.integer + self.float + self.sfu + self.global_memory + self.local_memory + self.control + self.special
    }

    pub fn add(&mut self, o: &InsnCounts) {
        self.integer += o.integer;
        self.float += o.float;
        self.sfu += o.sfu;
        self.global_memory += o.global_memory;
        self.local_memory += o.local_memory;
        self.control += o.control;
        self.special += o.special;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounts {
    pub dp: u64,
    pub sp: u64,
    pub hp: u64,
}

impl FlopCounts {
    pub fn bump(&mut self, prec: Precision, n: u64) {
        match prec {
            Precision::Double => self.dp += n,
            Precision::Single => self.sp += n,
            Precision::Half => self.hp += n,
        }
    }

    pub fn total(&self) -> u64 {
        self.dp + self.sp + self.hp
    }

    pub fn add(&mut self, o: &FlopCounts) {
        self.dp += o.dp;
        self.sp += o.sp;
        self.hp += o.hp;
    }
}

/// Per-PE counters. `cycles` counts the cycles during which the PE had at
/// least one live thread; it always equals `issue_cycles + stall_cycles`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeCounters {
    pub cycles: u64,
    pub issue_cycles: u64,
    pub stall_cycles: u64,
    pub issued: u64,
    pub stall_memory: u64,
    pub stall_sfu: u64,
    pub stall_fetch: u64,
    pub stall_dependency: u64,
    pub stall_barrier: u64,
    pub stall_idle: u64,
    pub group_switches: u64,
    pub barrier_waits: u64,
    pub by_class: InsnCounts,
    pub flops: FlopCounts,
}

impl PeCounters {
    pub fn add(&mut self, o: &PeCounters) {
        self.cycles += o.cycles;
        self.issue_cycles += o.issue_cycles;
        self.stall_cycles += o.stall_cycles;
        self.issued += o.issued;
        self.stall_memory += o.stall_memory;
        self.stall_sfu += o.stall_sfu;
        self.stall_fetch += o.stall_fetch;
        self.stall_dependency += o.stall_dependency;
        self.stall_barrier += o.stall_barrier;
        self.stall_idle += o.stall_idle;
        self.group_switches += o.group_switches;
        self.barrier_waits += o.barrier_waits;
        self.by_class.add(&o.by_class);
        self.flops.add(&o.flops);
    }
}

#[derive(Debug, Clone)]
struct Timing {
    gpr_ready: [u64; 32],
    fpr_ready: [u64; 32],
    /// Registers whose pending value comes from global memory.
    gpr_mem: u32,
    fpr_mem: u32,
    mem_ready: u64,
    /// Wake-up cycle for StalledOnMemory / StalledOnSfu.
    stall_until: u64,
    fetched_line: Option<u64>,
    fetch_ready: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            gpr_ready: [0; 32],
            fpr_ready: [0; 32],
            gpr_mem: 0,
            fpr_mem: 0,
            mem_ready: 0,
            stall_until: 0,
            fetched_line: None,
            fetch_ready: 0,
        }
    }
}

/// Threads picked to issue this cycle, or the reason nothing issues.
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    picks: [u8; THREADS_PER_PE],
    count: u8,
    /// Active threads whose next instruction line has not been fetched.
    needs_fetch: u8,
    stall: StallReason,
    live: bool,
}

impl Selection {
    pub fn picks(&self) -> &[u8] {
        &self.picks[..self.count as usize]
    }
}

/// Something the chip must act on after a PE committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeEvent {
    SfuRequest { thread: u8 },
    BarrierArrive { thread: u8, scope: Scope },
    Halted { thread: u8 },
}

/// Fixed per-run parameters the PE needs while committing.
#[derive(Debug, Clone, Copy)]
pub struct PeParams {
    pub pipeline: PipelineConfig,
    pub text_base: u64,
}

#[derive(Debug, Clone)]
pub struct PeState {
    pub id: usize,
    pub threads: [ThreadContext; THREADS_PER_PE],
    timing: [Timing; THREADS_PER_PE],
    pub active_group: u8,
    pub pending_switch: bool,
    pub cursor: u8,
    pub local: Vec<u8>,
    pub counters: PeCounters,
}

struct TimedPort<'a> {
    mem: &'a mut MemorySystem,
    origin: Origin,
    now: u64,
    ready: Option<u64>,
    blocking: Option<u64>,
}

impl TimedPort<'_> {
    fn bump(&mut self, t: u64) {
        self.ready = Some(self.ready.map_or(t, |r| r.max(t)));
    }
}

fn range_trap(e: MemError) -> TrapKind {
    match e {
        MemError::OutOfRange { addr, .. } => TrapKind::GlobalOutOfRange(addr),
    }
}

impl GlobalPort for TimedPort<'_> {
    fn load(&mut self, addr: u64, size: u8) -> Result<u64, TrapKind> {
        let mut buf = [0u8; 8];
        let t = self.mem.read(self.origin, addr, &mut buf[..size as usize], self.now).map_err(range_trap)?;
        self.bump(t);
        Ok(u64::from_le_bytes(buf))
    }

    fn store(&mut self, addr: u64, size: u8, value: u64) -> Result<(), TrapKind> {
        let bytes = value.to_le_bytes();
        let t = self.mem.write(self.origin, addr, &bytes[..size as usize], self.now).map_err(range_trap)?;
        self.bump(t);
        Ok(())
    }

    fn flush(&mut self, addr: u64) {
        self.blocking = Some(self.mem.flush_line(self.origin, addr, self.now));
    }

    fn flush_range(&mut self, base: u64, len: u64) {
        self.blocking = Some(self.mem.flush_range(self.origin, base, len, self.now));
    }

    fn l2flush(&mut self, addr: u64) {
        self.blocking = Some(self.mem.flush_l2_line(self.origin, addr, self.now));
    }
}

impl PeState {
    pub fn new(id: usize, local_bytes: usize) -> Self {
        PeState {
            id,
            threads: std::array::from_fn(|_| ThreadContext::idle()),
            timing: Default::default(),
            active_group: 0,
            pending_switch: false,
            cursor: 0,
            local: vec![0; local_bytes],
            counters: PeCounters::default(),
        }
    }

    pub fn is_live(&self) -> bool {
        self.threads.iter().any(|t| t.status.is_live())
    }

    fn group(&self, g: u8) -> std::ops::Range<usize> {
        let s = g as usize * GROUP_SIZE;
        s..s + GROUP_SIZE
    }

    fn line_of(pc: usize, params_text_base: u64, line: u64) -> u64 {
        (params_text_base + 4 * pc as u64) / line
    }

    /// Readiness of thread `t` at `now`: Ok(()) when it can issue, else
    /// the reason it cannot.
    fn readiness(&self, t: usize, program: &Program, now: u64, text_base: u64, line: u64) -> Result<(), StallReason> {
        let th = &self.threads[t];
        let tm = &self.timing[t];
        match th.status {
            ThreadStatus::Ready => {}
            ThreadStatus::StalledOnMemory if tm.stall_until <= now => {}
            ThreadStatus::StalledOnSfu if tm.stall_until <= now => {}
            ThreadStatus::StalledOnMemory => return Err(StallReason::Memory),
            ThreadStatus::StalledOnSfu => return Err(StallReason::Sfu),
            ThreadStatus::AtBarrier(_) => return Err(StallReason::Barrier),
            ThreadStatus::Idle | ThreadStatus::Halted => return Err(StallReason::Idle),
        }
        let Some(Ok(ins)) = program.fetch(th.pc) else {
            // Traps at commit.
            return Ok(());
        };
        if tm.fetched_line != Some(Self::line_of(th.pc, text_base, line)) || tm.fetch_ready > now {
            return Err(StallReason::Fetch);
        }
        let (srcs, _) = sources(&ins);
        for s in srcs.into_iter().flatten() {
            let (ready, from_mem) = match s {
                Dest::Gpr(r) => (tm.gpr_ready[r as usize], tm.gpr_mem >> r & 1 == 1),
                Dest::Fpr(r) => (tm.fpr_ready[r as usize], tm.fpr_mem >> r & 1 == 1),
            };
            if ready > now {
                return Err(if ready == NEVER {
                    StallReason::Sfu
                } else if from_mem {
                    StallReason::Memory
                } else {
                    StallReason::Dependency
                });
            }
        }
        Ok(())
    }

    /// Pick up to `width` distinct ready threads of the active group,
    /// scanning round-robin from the cursor.
    pub fn select(&self, program: &Program, now: u64, width: usize, text_base: u64, line: u64) -> Selection {
        let mut sel = Selection {
            picks: [0; THREADS_PER_PE],
            count: 0,
            needs_fetch: 0,
            stall: StallReason::Idle,
            live: self.is_live(),
        };
        if !sel.live {
            return sel;
        }
        let base = self.active_group as usize * GROUP_SIZE;
        let mut best = StallReason::Idle;
        for k in 0..GROUP_SIZE {
            let t = base + (self.cursor as usize + k) % GROUP_SIZE;
            match self.readiness(t, program, now, text_base, line) {
                Ok(()) => {
                    if (sel.count as usize) < width {
                        sel.picks[sel.count as usize] = t as u8;
                        sel.count += 1;
                    }
                }
                Err(reason) => {
                    if reason == StallReason::Fetch && self.timing[t].fetched_line.is_none_or(|l| {
                        l != Self::line_of(self.threads[t].pc, text_base, line)
                    }) {
                        sel.needs_fetch |= 1 << t;
                    }
                    if (reason as u8) < (best as u8) {
                        best = reason;
                    }
                }
            }
        }
        sel.stall = best;
        sel
    }

    fn fetch_line(&mut self, t: usize, mem: &mut MemorySystem, params: &PeParams, now: u64) {
        let line_size = mem.line_size();
        let pc = self.threads[t].pc;
        let addr = params.text_base + 4 * pc as u64;
        let origin = Origin { pe: self.id as u32, thread: t as u8 };
        if let Ok(r) = mem.fetch(origin, addr, now) {
            self.timing[t].fetched_line = Some(addr / line_size);
            self.timing[t].fetch_ready = r.unwrap_or(now);
        }
    }

    /// Execute the selected threads. Returns whether the PE made
    /// architectural progress this cycle.
    pub fn commit(
        &mut self,
        sel: &Selection,
        program: &Program,
        mem: &mut MemorySystem,
        params: &PeParams,
        now: u64,
        events: &mut Vec<PeEvent>,
    ) -> Result<bool, Trap> {
        if !sel.live {
            return Ok(false);
        }
        self.counters.cycles += 1;
        let mut progress = false;
        for t in 0..THREADS_PER_PE {
            if sel.needs_fetch >> t & 1 == 1 {
                self.fetch_line(t, mem, params, now);
            }
        }
        if sel.count == 0 {
            self.counters.stall_cycles += 1;
            match sel.stall {
                StallReason::Memory => self.counters.stall_memory += 1,
                StallReason::Sfu => self.counters.stall_sfu += 1,
                StallReason::Fetch => self.counters.stall_fetch += 1,
                StallReason::Dependency => self.counters.stall_dependency += 1,
                StallReason::Barrier => self.counters.stall_barrier += 1,
                StallReason::Idle => self.counters.stall_idle += 1,
            }
        } else {
            self.counters.issue_cycles += 1;
        }
        for &t in sel.picks() {
            progress |= self.issue(t as usize, program, mem, params, now, events)?;
            self.cursor = ((t as usize % GROUP_SIZE + 1) % GROUP_SIZE) as u8;
        }
        Ok(progress)
    }

    fn issue(
        &mut self,
        t: usize,
        program: &Program,
        mem: &mut MemorySystem,
        params: &PeParams,
        now: u64,
        events: &mut Vec<PeEvent>,
    ) -> Result<bool, Trap> {
        let pc = self.threads[t].pc;
        let gid = self.threads[t].gid;
        let trap = |kind| Trap { gid, pc, kind };
        let ins: Instruction = match program.fetch(pc) {
            None => return Err(trap(TrapKind::PcOutOfRange)),
            Some(Err(e)) => {
                let crate::isa::DecodeError::Illegal(w) = e;
                return Err(trap(TrapKind::Illegal(w)));
            }
            Some(Ok(ins)) => ins,
        };
        self.threads[t].status = ThreadStatus::Ready;
        let origin = Origin { pe: self.id as u32, thread: t as u8 };
        let mut port = TimedPort { mem: &mut *mem, origin, now, ready: None, blocking: None };
        let done = execute(&mut self.threads[t], &ins, &mut self.local, &mut port).map_err(trap)?;
        let (ready, blocking) = (port.ready, port.blocking);

        self.counters.issued += 1;
        self.counters.by_class.bump(ins.op.class());
        if let Some(p) = ins.prec {
            self.counters.flops.bump(p, ins.flops());
        }

        let p = &params.pipeline;
        let tm = &mut self.timing[t];
        let mem_ready = ready.map(|r| {
            let r = r.max(tm.mem_ready);
            tm.mem_ready = r;
            r
        });
        let (dest_ready, from_mem) = match (ins.op.class(), done.control) {
            (_, Control::Sfu) => (NEVER, false),
            (InsnClass::GlobalMemory, _) => (mem_ready.unwrap_or(now + 1), true),
            (InsnClass::LocalMemory, _) => (now + p.local_latency, false),
            (InsnClass::Float, _) => (now + p.fp_latency, false),
            _ => (now + p.alu_latency, false),
        };
        if let Some(d) = done.dest {
            let (ready_arr, mask) = match d {
                Dest::Gpr(r) => (&mut tm.gpr_ready[r as usize], (&mut tm.gpr_mem, r)),
                Dest::Fpr(r) => (&mut tm.fpr_ready[r as usize], (&mut tm.fpr_mem, r)),
            };
            *ready_arr = dest_ready;
            if from_mem {
                *mask.0 |= 1 << mask.1;
            } else {
                *mask.0 &= !(1 << mask.1);
            }
        }
        if let Some(b) = blocking {
            let until = b.max(tm.mem_ready);
            tm.mem_ready = until;
            tm.stall_until = until;
            self.threads[t].status = ThreadStatus::StalledOnMemory;
        }
        match done.control {
            Control::Next => {}
            Control::Halt => {
                self.threads[t].status = ThreadStatus::Halted;
                events.push(PeEvent::Halted { thread: t as u8 });
            }
            Control::Chg => self.pending_switch = true,
            Control::Barrier(scope) => {
                self.threads[t].status = ThreadStatus::AtBarrier(scope);
                self.counters.barrier_waits += 1;
                events.push(PeEvent::BarrierArrive { thread: t as u8, scope });
            }
            Control::Sfu => {
                self.threads[t].status = ThreadStatus::StalledOnSfu;
                tm.stall_until = NEVER;
                events.push(PeEvent::SfuRequest { thread: t as u8 });
            }
        }
        if self.threads[t].status != ThreadStatus::Halted {
            let line = Self::line_of(self.threads[t].pc, params.text_base, mem.line_size());
            if self.timing[t].fetched_line != Some(line) && self.threads[t].pc < program.len() {
                self.fetch_line(t, mem, params, now);
            }
        }
        Ok(done.progress)
    }

    /// The city SFU accepted this thread's request; its result is ready and
    /// the thread resumes at `resume`.
    pub fn sfu_granted(&mut self, t: usize, resume: u64) {
        let tm = &mut self.timing[t];
        tm.stall_until = resume;
        for r in tm.fpr_ready.iter_mut() {
            if *r == NEVER {
                *r = resume;
            }
        }
    }

    /// Release a thread from a barrier.
    pub fn release(&mut self, t: usize) {
        self.threads[t].status = ThreadStatus::Ready;
    }

    /// Cycle-boundary group switching: an explicit `chg` takes effect now;
    /// otherwise, if no thread of the active group can ever issue again
    /// without the other group (all halted or waiting at a barrier) while the
    /// other group has runnable threads, the PE switches to it.
    /// Returns true if the active group changed.
    pub fn end_of_cycle(&mut self) -> bool {
        let switch = if self.pending_switch {
            self.pending_switch = false;
            true
        } else {
            let runnable = |r: std::ops::Range<usize>| {
                self.threads[r].iter().any(|t| t.status.is_live() && !matches!(t.status, ThreadStatus::AtBarrier(_)))
            };
            !runnable(self.group(self.active_group)) && runnable(self.group(1 - self.active_group))
        };
        if switch {
            self.active_group = 1 - self.active_group;
            self.counters.group_switches += 1;
        }
        switch
    }
}
