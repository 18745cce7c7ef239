//! Architectural semantics of every opcode, shared by the timing model and
//! the functional reference emulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lanes;
use crate::isa::{Instruction, Opcode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    City,
    Chip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreadStatus {
    /// Not activated by the launch.
    Idle,
    Ready,
    StalledOnMemory,
    StalledOnSfu,
    AtBarrier(Scope),
    Halted,
}

impl ThreadStatus {
    /// Launched and not yet halted.
    pub fn is_live(self) -> bool {
        !matches!(self, ThreadStatus::Idle | ThreadStatus::Halted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadContext {
    pub pc: usize,
    pub gpr: [u64; 32],
    pub fpr: [u64; 32],
    pub status: ThreadStatus,
    pub gid: u64,
}

impl ThreadContext {
    pub fn idle() -> Self {
        ThreadContext { pc: 0, gpr: [0; 32], fpr: [0; 32], status: ThreadStatus::Idle, gid: 0 }
    }

    pub fn launched(gid: u64, entry: usize, arg: u64) -> Self {
        let mut t = ThreadContext { pc: entry, gid, status: ThreadStatus::Ready, ..Self::idle() };
        t.gpr[1] = gid;
        t.gpr[2] = arg;
        t
    }

    fn set_gpr(&mut self, r: u8, v: u64) -> bool {
        if r == 0 {
            return false;
        }
        let changed = self.gpr[r as usize] != v;
        self.gpr[r as usize] = v;
        changed
    }

    fn set_fpr(&mut self, r: u8, v: u64) -> bool {
        let changed = self.fpr[r as usize] != v;
        self.fpr[r as usize] = v;
        changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum TrapKind {
    #[error("illegal instruction word {0:#010x}")]
    Illegal(u32),
    #[error("pc outside program text")]
    PcOutOfRange,
    #[error("unaligned {size}-byte access at {addr:#x}")]
    Unaligned { addr: u64, size: u8 },
    #[error("global address {0:#x} outside memory")]
    GlobalOutOfRange(u64),
    #[error("local storage address {0:#x} out of range")]
    LocalOutOfRange(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("thread {gid} at pc {pc}: {kind}")]
pub struct Trap {
    pub gid: u64,
    pub pc: usize,
    pub kind: TrapKind,
}

/// Global-memory side of execution. The timing model routes these through
/// the cache hierarchy; the functional emulator applies them to flat memory.
pub trait GlobalPort {
    fn load(&mut self, addr: u64, size: u8) -> Result<u64, TrapKind>;
    fn store(&mut self, addr: u64, size: u8, value: u64) -> Result<(), TrapKind>;
    fn flush(&mut self, addr: u64);
    fn flush_range(&mut self, base: u64, len: u64);
    fn l2flush(&mut self, addr: u64);
}

/// What the issuing PE must do after an instruction executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Next,
    Halt,
    Chg,
    Barrier(Scope),
    /// Result computed by the city SFU; the thread waits for it.
    Sfu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Gpr(u8),
    Fpr(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Executed {
    pub control: Control,
    pub dest: Option<Dest>,
    /// Architectural state changed (for the deadlock watchdog).
    pub progress: bool,
}

fn sext(imm: i16) -> u64 {
    imm as i64 as u64
}

fn check_align(addr: u64, size: u8) -> Result<(), TrapKind> {
    if addr % size as u64 == 0 {
        Ok(())
    } else {
        Err(TrapKind::Unaligned { addr, size })
    }
}

fn local_range(local: &[u8], addr: u64) -> Result<std::ops::Range<usize>, TrapKind> {
    match addr.checked_add(8) {
        Some(end) if end <= local.len() as u64 => Ok(addr as usize..end as usize),
        _ => Err(TrapKind::LocalOutOfRange(addr)),
    }
}

/// Execute one instruction of `ctx`, updating its pc and registers.
pub fn execute(
    ctx: &mut ThreadContext,
    ins: &Instruction,
    local: &mut [u8],
    port: &mut impl GlobalPort,
) -> Result<Executed, TrapKind> {
    use Opcode::*;
    let g = |r: u8| ctx.gpr[r as usize];
    let f = |r: u8| ctx.fpr[r as usize];
    let pc = ctx.pc;
    let mut next_pc = pc + 1;
    let mut control = Control::Next;
    let mut dest = None;
    let mut progress = false;

    let int = |op: Opcode, a: u64, b: u64| -> u64 {
        match op {
            Add => a.wrapping_add(b),
            Sub => a.wrapping_sub(b),
            And => a & b,
            Or => a | b,
            Xor => a ^ b,
            Shl => a << (b & 63),
            Shr => a >> (b & 63),
            Slt => ((a as i64) < (b as i64)) as u64,
            _ => unreachable!(),
        }
    };

    match ins.op {
        Nop => {}
        Add | Sub | And | Or | Xor | Shl | Shr | Slt => {
            let v = int(ins.op, g(ins.rs1), g(ins.rs2));
            progress = ctx.set_gpr(ins.rd, v);
            dest = Some(Dest::Gpr(ins.rd));
        }
        Addi => {
            let v = g(ins.rs1).wrapping_add(sext(ins.imm));
            progress = ctx.set_gpr(ins.rd, v);
            dest = Some(Dest::Gpr(ins.rd));
        }
        Lui => {
            progress = ctx.set_gpr(ins.rd, (ins.imm as u16 as u64) << 16);
            dest = Some(Dest::Gpr(ins.rd));
        }
        Fadd | Fsub | Fmul | Fmin | Fmax | Fdiv => {
            let prec = ins.prec.expect("FP op has precision");
            let v = lanes::binary(ins.op, prec, f(ins.rs1), f(ins.rs2));
            progress = ctx.set_fpr(ins.rd, v);
            dest = Some(Dest::Fpr(ins.rd));
            if ins.op == Fdiv {
                control = Control::Sfu;
            }
        }
        Fma => {
            let prec = ins.prec.expect("FP op has precision");
            let v = lanes::fma(prec, f(ins.rs1), f(ins.rs2), f(ins.rs3));
            progress = ctx.set_fpr(ins.rd, v);
            dest = Some(Dest::Fpr(ins.rd));
        }
        Fsqrt => {
            let prec = ins.prec.expect("FP op has precision");
            progress = ctx.set_fpr(ins.rd, lanes::sqrt(prec, f(ins.rs1)));
            dest = Some(Dest::Fpr(ins.rd));
            control = Control::Sfu;
        }
        Ld | Lw | Fld | Flw => {
            let size = ins.op.access_size().unwrap();
            let addr = g(ins.rs1).wrapping_add(sext(ins.imm));
            check_align(addr, size)?;
            let raw = port.load(addr, size)?;
            if ins.op == Lw {
                progress = ctx.set_gpr(ins.rd, raw as u32 as i32 as i64 as u64);
                dest = Some(Dest::Gpr(ins.rd));
            } else if ins.op == Ld {
                progress = ctx.set_gpr(ins.rd, raw);
                dest = Some(Dest::Gpr(ins.rd));
            } else {
                progress = ctx.set_fpr(ins.rd, raw);
                dest = Some(Dest::Fpr(ins.rd));
            }
        }
        Sd | Sw | Fsd | Fsw => {
            let size = ins.op.access_size().unwrap();
            let addr = g(ins.rs1).wrapping_add(sext(ins.imm));
            check_align(addr, size)?;
            let v = if ins.op.uses_fp_data() { f(ins.rs2) } else { g(ins.rs2) };
            port.store(addr, size, v)?;
            progress = true;
        }
        Lls | Flls => {
            let addr = g(ins.rs1).wrapping_add(sext(ins.imm));
            let range = local_range(local, addr)?;
            let v = u64::from_le_bytes(local[range].try_into().unwrap());
            if ins.op == Lls {
                progress = ctx.set_gpr(ins.rd, v);
                dest = Some(Dest::Gpr(ins.rd));
            } else {
                progress = ctx.set_fpr(ins.rd, v);
                dest = Some(Dest::Fpr(ins.rd));
            }
        }
        Sls | Fsls => {
            let addr = g(ins.rs1).wrapping_add(sext(ins.imm));
            let range = local_range(local, addr)?;
            let v = if ins.op == Fsls { f(ins.rs2) } else { g(ins.rs2) };
            local[range].copy_from_slice(&v.to_le_bytes());
            progress = true;
        }
        Beq | Bne | Blt | Bltu => {
            let (a, b) = (g(ins.rs1), g(ins.rs2));
            let taken = match ins.op {
                Beq => a == b,
                Bne => a != b,
                Blt => (a as i64) < (b as i64),
                _ => a < b,
            };
            if taken {
                next_pc = (pc as i64 + ins.imm as i64) as usize;
            }
        }
        Jal => {
            progress = ctx.set_gpr(ins.rd, (pc + 1) as u64);
            dest = Some(Dest::Gpr(ins.rd));
            next_pc = (pc as i64 + ins.imm as i64) as usize;
        }
        Jalr => {
            let target = g(ins.rs1).wrapping_add(sext(ins.imm));
            progress = ctx.set_gpr(ins.rd, (pc + 1) as u64);
            dest = Some(Dest::Gpr(ins.rd));
            next_pc = usize::try_from(target).unwrap_or(usize::MAX);
        }
        Halt => {
            control = Control::Halt;
            next_pc = pc;
            progress = true;
        }
        Chg => {
            control = Control::Chg;
            progress = true;
        }
        Flush => port.flush(g(ins.rs1).wrapping_add(sext(ins.imm))),
        Flushr => port.flush_range(g(ins.rs1), g(ins.rs2)),
        L2flush => port.l2flush(g(ins.rs1).wrapping_add(sext(ins.imm))),
        SyncCity => control = Control::Barrier(Scope::City),
        SyncChip => control = Control::Barrier(Scope::Chip),
        Tid => {
            progress = ctx.set_gpr(ins.rd, ctx.gid);
            dest = Some(Dest::Gpr(ins.rd));
        }
    }
    if dest == Some(Dest::Gpr(0)) {
        dest = None;
    }
    ctx.pc = next_pc;
    Ok(Executed { control, dest, progress })
}

/// Registers an instruction reads, for scoreboarding.
pub fn sources(ins: &Instruction) -> ([Option<Dest>; 3], usize) {
    use crate::isa::Format;
    let r = |n: u8| (n != 0).then_some(Dest::Gpr(n));
    let fr = |n: u8| Some(Dest::Fpr(n));
    let srcs = match ins.op.format() {
        Format::Reg3 | Format::Branch | Format::Pair => [r(ins.rs1), r(ins.rs2), None],
        Format::RegImm | Format::Load | Format::Addr => [r(ins.rs1), None, None],
        Format::Fp3 => [fr(ins.rs1), fr(ins.rs2), None],
        Format::Fp4 => [fr(ins.rs1), fr(ins.rs2), fr(ins.rs3)],
        Format::Fp2 => [fr(ins.rs1), None, None],
        Format::Store => {
            let data = if ins.op.uses_fp_data() { fr(ins.rs2) } else { r(ins.rs2) };
            [r(ins.rs1), data, None]
        }
        Format::Upper | Format::Jump | Format::Bare | Format::Dest => [None, None, None],
    };
    let n = srcs.iter().filter(|s| s.is_some()).count();
    (srcs, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Precision;
    use std::collections::HashMap;

    #[derive(Default)]
    struct Flat(HashMap<u64, u8>);

    impl GlobalPort for Flat {
        fn load(&mut self, addr: u64, size: u8) -> Result<u64, TrapKind> {
            let mut v = 0u64;
            for i in 0..size as u64 {
                v |= (*self.0.get(&(addr + i)).unwrap_or(&0) as u64) << (8 * i);
            }
            Ok(v)
        }
        fn store(&mut self, addr: u64, size: u8, value: u64) -> Result<(), TrapKind> {
            for i in 0..size as u64 {
                self.0.insert(addr + i, (value >> (8 * i)) as u8);
            }
            Ok(())
        }
        fn flush(&mut self, _: u64) {}
        fn flush_range(&mut self, _: u64, _: u64) {}
        fn l2flush(&mut self, _: u64) {}
    }

    fn run(ctx: &mut ThreadContext, ins: Instruction) -> Result<Executed, TrapKind> {
        let mut local = vec![0u8; 24 * 1024];
        execute(ctx, &ins, &mut local, &mut Flat::default())
    }

    #[test]
    fn add_registers() {
        let mut t = ThreadContext::launched(0, 0, 0);
        t.gpr[2] = 5;
        t.gpr[3] = 7;
        run(&mut t, Instruction::reg3(Opcode::Add, 1, 2, 3)).unwrap();
        assert_eq!(t.gpr[1], 12);
        assert_eq!(t.pc, 1);
    }

    #[test]
    fn r0_stays_zero() {
        let mut t = ThreadContext::launched(0, 0, 0);
        let e = run(&mut t, Instruction::reg_imm(Opcode::Addi, 0, 0, 9)).unwrap();
        assert_eq!(t.gpr[0], 0);
        assert_eq!(e.dest, None);
        assert!(!e.progress);
    }

    #[test]
    fn packed_sp_fma() {
        let mut t = ThreadContext::launched(0, 0, 0);
        t.fpr[2] = lanes::splat(Precision::Single, 2.0);
        t.fpr[3] = lanes::splat(Precision::Single, 3.0);
        t.fpr[4] = lanes::splat(Precision::Single, 1.0);
        let ins = Instruction::fma(Precision::Single, 1, 2, 3, 4);
        run(&mut t, ins).unwrap();
        assert_eq!(t.fpr[1], lanes::splat(Precision::Single, 7.0));
        assert_eq!(ins.flops(), 4);
    }

    #[test]
    fn local_storage_bound() {
        let mut t = ThreadContext::launched(0, 0, 0);
        t.gpr[5] = 24576;
        let e = run(&mut t, Instruction::store(Opcode::Sls, 1, 5, 0));
        assert_eq!(e, Err(TrapKind::LocalOutOfRange(24576)));
        t.gpr[5] = 24576 - 8;
        assert!(run(&mut t, Instruction::store(Opcode::Sls, 1, 5, 0)).is_ok());
    }

    #[test]
    fn unaligned_global_access_traps() {
        let mut t = ThreadContext::launched(0, 0, 0);
        t.gpr[5] = 0x1004;
        assert!(run(&mut t, Instruction::load(Opcode::Lw, 1, 5, 0)).is_ok());
        assert_eq!(
            run(&mut t, Instruction::load(Opcode::Ld, 1, 5, 0)),
            Err(TrapKind::Unaligned { addr: 0x1004, size: 8 })
        );
    }

    #[test]
    fn lw_sign_extends() {
        let mut t = ThreadContext::launched(0, 0, 0);
        let mut local = vec![0u8; 64];
        let mut mem = Flat::default();
        mem.store(0x10, 4, 0xffff_fffe).unwrap();
        t.gpr[5] = 0x10;
        execute(&mut t, &Instruction::load(Opcode::Lw, 6, 5, 0), &mut local, &mut mem).unwrap();
        assert_eq!(t.gpr[6] as i64, -2);
    }

    #[test]
    fn branches_and_jumps() {
        let mut t = ThreadContext::launched(0, 10, 0);
        t.gpr[4] = u64::MAX;
        run(&mut t, Instruction::branch(Opcode::Blt, 4, 0, -3)).unwrap();
        assert_eq!(t.pc, 7);
        run(&mut t, Instruction::branch(Opcode::Bltu, 4, 0, -3)).unwrap();
        assert_eq!(t.pc, 8);
        run(&mut t, Instruction::jal(31, 4)).unwrap();
        assert_eq!((t.pc, t.gpr[31]), (12, 9));
    }

    #[test]
    fn sfu_ops_report_sfu_control() {
        let mut t = ThreadContext::launched(0, 0, 0);
        t.fpr[1] = 4.0f64.to_bits();
        let e = run(&mut t, Instruction::fsqrt(Precision::Double, 2, 1)).unwrap();
        assert_eq!(e.control, Control::Sfu);
        assert_eq!(f64::from_bits(t.fpr[2]), 2.0);
    }
}
