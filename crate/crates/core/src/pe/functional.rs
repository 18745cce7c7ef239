//! Functional reference emulator used as the co-simulation oracle.
//!
//! Caches are bypassed and every memory effect is immediate. Execution
//! proceeds in rounds: in each round every PE, in index order, lets each
//! runnable thread of its active group execute one instruction in thread
//! order. Group switches (explicit `chg` or the automatic switch when the
//! active group is exhausted) and barrier releases apply between rounds,
//! with the same rules as the timing model.

use super::exec::{execute, Control, GlobalPort, Scope, ThreadContext, ThreadStatus, Trap, TrapKind};
use super::state::{FlopCounts, InsnCounts};
use crate::chip::{ChipConfig, LaunchDescriptor, GROUP_SIZE, THREADS_PER_PE};
use crate::chip::{DeadlockReport, ThreadSnapshot};
use crate::mem::GlobalMemory;
use crate::SimError;

struct FlatPort<'a>(&'a mut GlobalMemory);

impl GlobalPort for FlatPort<'_> {
    fn load(&mut self, addr: u64, size: u8) -> Result<u64, TrapKind> {
        if !self.0.in_range(addr, size as u64) {
            return Err(TrapKind::GlobalOutOfRange(addr));
        }
        let mut b = [0u8; 8];
        self.0.read(addr, &mut b[..size as usize]);
        Ok(u64::from_le_bytes(b))
    }

    fn store(&mut self, addr: u64, size: u8, value: u64) -> Result<(), TrapKind> {
        if !self.0.in_range(addr, size as u64) {
            return Err(TrapKind::GlobalOutOfRange(addr));
        }
        self.0.write(addr, &value.to_le_bytes()[..size as usize]);
        Ok(())
    }

    fn flush(&mut self, _: u64) {}
    fn flush_range(&mut self, _: u64, _: u64) {}
    fn l2flush(&mut self, _: u64) {}
}

#[derive(Debug, Clone)]
pub struct FunctionalResult {
    pub threads: Vec<[ThreadContext; THREADS_PER_PE]>,
    pub locals: Vec<Vec<u8>>,
    pub memory: GlobalMemory,
    pub rounds: u64,
    pub instructions: InsnCounts,
    pub flops: FlopCounts,
}

struct Pe {
    threads: [ThreadContext; THREADS_PER_PE],
    local: Vec<u8>,
    active: usize,
    pending: bool,
}

fn runnable(ts: &[ThreadContext]) -> bool {
    ts.iter().any(|t| t.status.is_live() && !matches!(t.status, ThreadStatus::AtBarrier(_)))
}

/// Execute a launch to completion without timing.
pub fn run_functional(cfg: &ChipConfig, launch: &LaunchDescriptor) -> Result<FunctionalResult, SimError> {
    cfg.validate()?;
    launch.validate(cfg)?;
    let program = &launch.program;
    let mut memory = launch.initial_memory(cfg);
    let entry = program.entry();
    let mut pes: Vec<Pe> = (0..cfg.total_pes())
        .map(|pe| Pe {
            threads: std::array::from_fn(|t| {
                if t < launch.threads_per_pe {
                    ThreadContext::launched(launch.gid(pe, t), entry, launch.arg_addr)
                } else {
                    ThreadContext::idle()
                }
            }),
            local: vec![0; cfg.local_storage_bytes as usize],
            active: 0,
            pending: false,
        })
        .collect();
    let per_city = cfg.pes_per_city();
    let mut instructions = InsnCounts::default();
    let mut flops = FlopCounts::default();
    let mut rounds = 0u64;
    let mut idle_rounds = 0u64;

    loop {
        if !pes.iter().any(|p| p.threads.iter().any(|t| t.status.is_live())) {
            break;
        }
        let mut progress = false;
        for pe in pes.iter_mut() {
            for t in pe.active * GROUP_SIZE..(pe.active + 1) * GROUP_SIZE {
                let th = &mut pe.threads[t];
                if th.status != ThreadStatus::Ready {
                    continue;
                }
                let pc = th.pc;
                let trap = |kind| SimError::Trap(Trap { gid: th.gid, pc, kind });
                let ins = match program.fetch(pc) {
                    None => return Err(trap(TrapKind::PcOutOfRange)),
                    Some(Err(crate::isa::DecodeError::Illegal(w))) => return Err(trap(TrapKind::Illegal(w))),
                    Some(Ok(ins)) => ins,
                };
                let gid = th.gid;
                let done = execute(th, &ins, &mut pe.local, &mut FlatPort(&mut memory))
                    .map_err(|kind| SimError::Trap(Trap { gid, pc, kind }))?;
                instructions.bump(ins.op.class());
                if let Some(p) = ins.prec {
                    flops.bump(p, ins.flops());
                }
                progress |= done.progress;
                match done.control {
                    Control::Next | Control::Sfu => {}
                    Control::Halt => th.status = ThreadStatus::Halted,
                    Control::Chg => pe.pending = true,
                    Control::Barrier(s) => th.status = ThreadStatus::AtBarrier(s),
                }
            }
        }
        // Barriers: a scope releases once every live thread in it waits there.
        for scope_pes in pes.chunks_mut(per_city) {
            progress |= release(scope_pes, Scope::City);
        }
        progress |= release(&mut pes, Scope::Chip);
        for pe in pes.iter_mut() {
            let other = 1 - pe.active;
            let switch = if pe.pending {
                pe.pending = false;
                true
            } else {
                let g = |i: usize| &pe.threads[i * GROUP_SIZE..(i + 1) * GROUP_SIZE];
                !runnable(g(pe.active)) && runnable(g(other))
            };
            if switch {
                pe.active = other;
            }
        }
        rounds += 1;
        if progress {
            idle_rounds = 0;
        } else {
            idle_rounds += 1;
            if idle_rounds >= cfg.watchdog_cycles {
                return Err(SimError::Deadlock(Box::new(snapshot(&pes, rounds))));
            }
        }
    }
    Ok(FunctionalResult {
        threads: pes.iter().map(|p| p.threads.clone()).collect(),
        locals: pes.into_iter().map(|p| p.local).collect(),
        memory,
        rounds,
        instructions,
        flops,
    })
}

fn release(pes: &mut [Pe], scope: Scope) -> bool {
    let all = || pes.iter().flat_map(|p| p.threads.iter());
    let waiting = all().filter(|t| t.status == ThreadStatus::AtBarrier(scope)).count();
    let live = all().filter(|t| t.status.is_live()).count();
    if waiting == 0 || waiting != live {
        return false;
    }
    for t in pes.iter_mut().flat_map(|p| p.threads.iter_mut()) {
        if t.status == ThreadStatus::AtBarrier(scope) {
            t.status = ThreadStatus::Ready;
        }
    }
    true
}

fn snapshot(pes: &[Pe], cycle: u64) -> DeadlockReport {
    let mut threads = Vec::new();
    for (i, pe) in pes.iter().enumerate() {
        for (t, th) in pe.threads.iter().enumerate() {
            if th.status.is_live() {
                threads.push(ThreadSnapshot { gid: th.gid, pe: i, thread: t, pc: th.pc, status: th.status });
            }
        }
    }
    DeadlockReport { cycle, threads }
}
