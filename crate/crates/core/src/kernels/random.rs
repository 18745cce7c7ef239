//! Random race-free programs, for checking the timing model against the
//! functional model.
//!
//! Every thread gets a private 512-byte window of global memory, filled
//! with random data, and a private 256-byte slice of its PE's local
//! storage. A 512-byte shared window is only ever read. Threads never touch
//! each other's data, so any legal interleaving gives the same final state
//! and the timing model must agree with the functional model on every
//! register, every local-storage byte and the flushed global image.
//!
//! Program shape: a prologue that loads the thread's window bases and seeds
//! the registers from its window, a straight segment, one counted loop, a
//! second straight segment, and an epilogue that flushes the window.
//! Straight segments mix integer, FP, SFU, global and local memory
//! operations with forward branches and jumps, group switches, flushes,
//! city barriers and `tid`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chip::{simulate, ChipConfig, LaunchDescriptor, THREADS_PER_PE};
use crate::isa::{Instruction, Opcode, Precision, Program};
use crate::pe::run_functional;
use crate::SimError;

const WINDOW: u64 = 512;
const LOCAL_SLICE: u64 = 256;
const RECORD: u64 = 16;

// Registers with a fixed role.
const GLOBAL_BASE: u8 = 3;
const LOCAL_BASE: u8 = 4;
const SHARED_BASE: u8 = 5;
const COUNTER: u8 = 6;
const WINDOW_LEN: u8 = 7;
const SCRATCH: u8 = 8;
/// First integer register the random code may write.
const FIRST_FREE: u8 = 9;

/// Local storage a generated program needs per PE.
pub const LOCAL_BYTES: u64 = LOCAL_SLICE * THREADS_PER_PE as u64;

/// A branch or jump whose target is patched once its segment is complete.
struct Fixup {
    at: usize,
    skip: usize,
    absolute: bool,
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    text: Vec<Instruction>,
}

impl Gen<'_> {
    fn int_dest(&mut self) -> u8 {
        self.rng.gen_range(FIRST_FREE..32)
    }

    fn int_src(&mut self) -> u8 {
        self.rng.gen_range(0..32)
    }

    fn fp(&mut self) -> u8 {
        self.rng.gen_range(0..32)
    }

    fn prec(&mut self) -> Precision {
        *Precision::ALL.choose(self.rng).unwrap()
    }

    fn push(&mut self, i: Instruction) {
        self.text.push(i);
    }

    /// Emit one random operation; control transfers are recorded as fixups.
    fn item(&mut self, fixups: &mut Vec<Fixup>) {
        use Opcode::*;
        let r = &mut *self.rng;
        let pick = r.gen_range(0..100);
        match pick {
            0..=17 => {
                let op = *[Add, Sub, And, Or, Xor, Shl, Shr, Slt].choose(self.rng).unwrap();
                let (d, a, b) = (self.int_dest(), self.int_src(), self.int_src());
                self.push(Instruction::reg3(op, d, a, b));
            }
            18..=23 => {
                let (d, a, imm) = (self.int_dest(), self.int_src(), self.rng.gen::<i16>());
                self.push(Instruction::reg_imm(Addi, d, a, imm));
            }
            24..=25 => {
                let (d, imm) = (self.int_dest(), self.rng.gen::<i16>());
                self.push(Instruction::upper(d, imm));
            }
            26..=39 => {
                let op = *[Fadd, Fsub, Fmul, Fmin, Fmax].choose(self.rng).unwrap();
                let p = self.prec();
                let (d, a, b) = (self.fp(), self.fp(), self.fp());
                self.push(Instruction::fp3(op, p, d, a, b));
            }
            40..=45 => {
                let p = self.prec();
                let (d, a, b, c) = (self.fp(), self.fp(), self.fp(), self.fp());
                self.push(Instruction::fma(p, d, a, b, c));
            }
            46..=48 => {
                let p = self.prec();
                let (d, a, b) = (self.fp(), self.fp(), self.fp());
                if self.rng.gen_bool(0.5) {
                    self.push(Instruction::fp3(Fdiv, p, d, a, b));
                } else {
                    self.push(Instruction::fsqrt(p, d, a));
                }
            }
            49..=60 => {
                // Global load from the private or the shared window.
                let op = *[Ld, Lw, Fld, Flw].choose(self.rng).unwrap();
                let size = op.access_size().unwrap() as u64;
                let base = if self.rng.gen_bool(0.7) { GLOBAL_BASE } else { SHARED_BASE };
                let off = self.rng.gen_range(0..WINDOW / size) * size;
                let d = if op.uses_fp_data() { self.fp() } else { self.int_dest() };
                self.push(Instruction::load(op, d, base, off as i16));
            }
            61..=68 => {
                let op = *[Sd, Sw, Fsd, Fsw].choose(self.rng).unwrap();
                let size = op.access_size().unwrap() as u64;
                let off = self.rng.gen_range(0..WINDOW / size) * size;
                let s = if op.uses_fp_data() { self.fp() } else { self.int_src() };
                self.push(Instruction::store(op, s, GLOBAL_BASE, off as i16));
            }
            69..=76 => {
                let op = *[Lls, Sls, Flls, Fsls].choose(self.rng).unwrap();
                let off = self.rng.gen_range(0..=LOCAL_SLICE - 8) as i16;
                let fp = op.uses_fp_data();
                let is_load = matches!(op, Lls | Flls);
                let reg = match (fp, is_load) {
                    (true, _) => self.fp(),
                    (false, true) => self.int_dest(),
                    (false, false) => self.int_src(),
                };
                if is_load {
                    self.push(Instruction::load(op, reg, LOCAL_BASE, off));
                } else {
                    self.push(Instruction::store(op, reg, LOCAL_BASE, off));
                }
            }
            77..=84 => {
                let op = *[Beq, Bne, Blt, Bltu].choose(self.rng).unwrap();
                let (a, b) = (self.int_src(), self.int_src());
                fixups.push(Fixup { at: self.text.len(), skip: self.rng.gen_range(0..4), absolute: false });
                self.push(Instruction::branch(op, a, b, 0));
            }
            85..=86 => {
                let d = self.int_dest();
                fixups.push(Fixup { at: self.text.len(), skip: self.rng.gen_range(0..3), absolute: false });
                self.push(Instruction::jal(d, 0));
            }
            87 => {
                let d = self.int_dest();
                fixups.push(Fixup { at: self.text.len(), skip: self.rng.gen_range(0..3), absolute: true });
                self.push(Instruction::reg_imm(Addi, SCRATCH, 0, 0));
                self.push(Instruction::reg_imm(Jalr, d, SCRATCH, 0));
            }
            88..=90 => self.push(Instruction::simple(Chg)),
            91..=92 => {
                let off = self.rng.gen_range(0..WINDOW) as i16;
                let op = if self.rng.gen_bool(0.7) { Flush } else { L2flush };
                self.push(Instruction::addr(op, GLOBAL_BASE, off));
            }
            93 => self.push(Instruction::pair(Flushr, GLOBAL_BASE, WINDOW_LEN)),
            94..=95 => self.push(Instruction::simple(SyncCity)),
            _ => {
                let d = self.int_dest();
                self.push(Instruction::tid(d));
            }
        }
    }

    /// A run of `len` random items whose forward transfers stay inside it.
    fn segment(&mut self, len: usize) {
        let mut fixups = Vec::new();
        for _ in 0..len {
            self.item(&mut fixups);
        }
        let end = self.text.len();
        // A transfer must not land between an `addi scratch` and the `jalr`
        // that uses it; such targets move back onto the `addi`.
        let jalrs: Vec<usize> = fixups.iter().filter(|f| f.absolute).map(|f| f.at + 1).collect();
        let land = |t: usize| if jalrs.contains(&t) { t - 1 } else { t };
        for f in fixups {
            if f.absolute {
                // `addi scratch, r0, target` followed by `jalr rd, scratch, 0`.
                let target = land((f.at + 2 + f.skip).min(end));
                self.text[f.at].imm = target as i16;
            } else {
                let target = land((f.at + 1 + f.skip).min(end));
                self.text[f.at].imm = (target - f.at) as i16;
            }
        }
    }
}

/// Generate one program and its launch for `cfg`.
pub fn gen_random_program(cfg: &ChipConfig, threads_per_pe: usize, seed: u64) -> LaunchDescriptor {
    use Opcode::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Gen { rng: &mut rng, text: Vec::new() };

    // r3 / r4 from record gid, r5 from the header.
    g.push(Instruction::reg_imm(Addi, SCRATCH, 0, 4));
    g.push(Instruction::reg3(Shl, SCRATCH, 1, SCRATCH));
    g.push(Instruction::reg3(Add, SCRATCH, SCRATCH, 2));
    g.push(Instruction::load(Ld, GLOBAL_BASE, SCRATCH, 64));
    g.push(Instruction::load(Ld, LOCAL_BASE, SCRATCH, 72));
    g.push(Instruction::load(Ld, SHARED_BASE, 2, 8));
    g.push(Instruction::reg_imm(Addi, WINDOW_LEN, 0, WINDOW as i16));
    for r in FIRST_FREE..32 {
        g.push(Instruction::load(Ld, r, GLOBAL_BASE, (8 * (r as u64 % (WINDOW / 8))) as i16));
    }
    for f in 0..32u8 {
        let off = WINDOW - 8 - 8 * (f as u64 % (WINDOW / 8));
        g.push(Instruction::load(Fld, f, GLOBAL_BASE, off as i16));
    }

    let first = g.rng.gen_range(4..24);
    g.segment(first);
    let trips = g.rng.gen_range(1..5);
    g.push(Instruction::reg_imm(Addi, COUNTER, 0, trips));
    let top = g.text.len();
    let body = g.rng.gen_range(2..14);
    g.segment(body);
    g.push(Instruction::reg_imm(Addi, COUNTER, COUNTER, -1));
    let at = g.text.len();
    g.push(Instruction::branch(Bne, COUNTER, 0, top as i16 - at as i16));
    let last = g.rng.gen_range(4..24);
    g.segment(last);
    g.push(Instruction::pair(Flushr, GLOBAL_BASE, WINDOW_LEN));
    g.push(Instruction::halt());

    let program = Program::new(g.text, 0, Vec::new());
    let arg_addr = LaunchDescriptor::new(program.clone(), threads_per_pe).arg_addr;
    let threads = cfg.total_pes() * threads_per_pe;
    let header = 64 + RECORD * threads as u64;
    let shared = header.div_ceil(WINDOW) * WINDOW;
    let windows = shared + WINDOW;
    let mut args = vec![0u8; (windows + WINDOW * threads as u64) as usize];
    args[8..16].copy_from_slice(&(arg_addr + shared).to_le_bytes());
    for gid in 0..threads {
        let rec = (64 + RECORD * gid as u64) as usize;
        let window = arg_addr + windows + WINDOW * gid as u64;
        let local = LOCAL_SLICE * (gid % threads_per_pe) as u64;
        args[rec..rec + 8].copy_from_slice(&window.to_le_bytes());
        args[rec + 8..rec + 16].copy_from_slice(&local.to_le_bytes());
    }
    rng.fill(&mut args[shared as usize..]);
    LaunchDescriptor::new(program, threads_per_pe).with_args(args, arg_addr)
}

/// Run a launch in both models and describe the first disagreement.
pub fn compare_models(cfg: &ChipConfig, launch: &LaunchDescriptor, workers: usize) -> Result<(), String> {
    let func = run_functional(cfg, launch).map_err(|e| format!("functional model: {e}"))?;
    let (chip, _) = simulate(cfg, launch, workers).map_err(|e| format!("timing model: {e}"))?;
    for pe in 0..cfg.total_pes() {
        for (t, (a, b)) in chip.threads(pe).iter().zip(&func.threads[pe]).enumerate() {
            if let Some(r) = (0..32).find(|&r| a.gpr[r] != b.gpr[r]) {
                return Err(format!("PE {pe} thread {t}: r{r} = {:#x}, functional {:#x}", a.gpr[r], b.gpr[r]));
            }
            if let Some(r) = (0..32).find(|&r| a.fpr[r] != b.fpr[r]) {
                return Err(format!("PE {pe} thread {t}: f{r} = {:#x}, functional {:#x}", a.fpr[r], b.fpr[r]));
            }
            if a.pc != b.pc || a.status != b.status {
                return Err(format!("PE {pe} thread {t}: pc / status differ"));
            }
        }
        let local = &chip.pes()[pe].local;
        if let Some(i) = local.iter().zip(&func.locals[pe]).position(|(a, b)| a != b) {
            return Err(format!("PE {pe}: local byte {i} differs"));
        }
    }
    if let Some(a) = chip.flushed_image().first_difference(&func.memory) {
        return Err(format!("global memory differs at {a:#x}"));
    }
    Ok(())
}

/// Generate and compare `count` programs with seeds `seed, seed + 1, …`;
/// threads per PE cycle through 1..=8.
pub fn cosimulate(cfg: &ChipConfig, seed: u64, count: u64) -> Result<(), SimError> {
    if cfg.local_storage_bytes < LOCAL_BYTES {
        return Err(SimError::Config(format!("random programs need {LOCAL_BYTES} bytes of local storage")));
    }
    for i in 0..count {
        let tpp = 1 + (i as usize % THREADS_PER_PE);
        let launch = gen_random_program(cfg, tpp, seed + i);
        compare_models(cfg, &launch, 1)
            .map_err(|m| SimError::Validation(format!("program seed {}, {tpp} threads per PE: {m}", seed + i)))?;
    }
    Ok(())
}
