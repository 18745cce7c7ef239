//! Blocked DP matrix multiply `C = A × B` staged through local storage.
//!
//! All matrices are row-major. `C` is cut into `block_rows × block_cols`
//! blocks, one per PE (block `b` goes to PE `b`, row-major over blocks).
//! Inside a PE:
//!
//! * The A panel (`block_rows × k`) is copied into local storage once, each
//!   thread copying an equal contiguous share.
//! * The block's columns are walked in groups of `ct` columns. Each group's
//!   B panel (`k × ct`) is staged into one of two local buffers, each
//!   thread copying `k / threads` rows; while group `g` is computed from one
//!   buffer, group `g + 1` has already been staged into the other. A city
//!   barrier after every group keeps the buffers from being overwritten
//!   while a sibling thread still reads them.
//! * Thread `t` owns register tiles `t, t + threads, …` of the block's
//!   `rt`-row strips. A tile is `rt × ct` accumulators held in FP registers
//!   (`rt = 4`, `ct = 6` for the efficiency case: 24 accumulators, six B
//!   values, one A value and the constant zero in `f0`).
//!
//! Accumulation order is fixed: every element starts from +0.0 and takes
//! one fused multiply-add per `kk = 0, 1, …, k − 1` in ascending order,
//! which is exactly [`dgemm_oracle`], so results match bit for bit. Every
//! multiply-add is an `fma`, so the counted DP flops are exactly `2·m·n·k`.
//!
//! The local-storage working set is the A panel plus the two B buffers,
//! `(block_rows·k + 2·k·ct)·8` bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emit::{imm, ArgBlock, Emitter};
use super::{Expected, KernelCase, Requirements};
use crate::chip::{LaunchDescriptor, THREADS_PER_PE};
use crate::isa::parse_assembly;
use crate::SimError;

/// Local storage of the default PE, the generation-time budget.
pub const DEFAULT_LOCAL_BYTES: u64 = 24 * 1024;
const RECORD: u64 = 64;
const FIRST_ACC: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixInit {
    /// A and B uniform in [-1, 1).
    Random,
    /// A is the identity pattern (ones where row = column), B random.
    IdentityA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgemmParams {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub threads_per_pe: usize,
    pub init: MatrixInit,
}

/// Quantities derived from the parameters that shape the generated code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DgemmPlan {
    pub rt: usize,
    pub ct: usize,
    pub unroll: usize,
    pub a_batch: usize,
    pub b_batch_rows: usize,
    pub blocks: usize,
    pub groups: usize,
    pub working_set: u64,
    /// Row stride of B and C in elements: `n` padded so that a row spans
    /// an odd number of 64-byte lines, which spreads column walks over
    /// every cache set. The padding of C stays zero.
    pub ld: usize,
}

fn largest_divisor(n: usize, cap: usize) -> usize {
    (1..=cap.min(n.max(1))).rev().find(|d| n % d == 0).unwrap_or(1)
}

impl DgemmParams {
    pub fn plan(&self) -> Result<DgemmPlan, SimError> {
        let bad = |m: String| Err(SimError::Input(format!("dgemm: {m}")));
        let p = self;
        if p.m == 0 || p.n == 0 || p.k == 0 || p.block_rows == 0 || p.block_cols == 0 {
            return bad("dimensions and block sizes must be positive".into());
        }
        if p.m % p.block_rows != 0 || p.n % p.block_cols != 0 {
            return bad(format!("{}×{} is not divisible into {}×{} blocks", p.m, p.n, p.block_rows, p.block_cols));
        }
        if p.threads_per_pe == 0 || p.threads_per_pe > THREADS_PER_PE {
            return bad(format!("threads per PE must be in 1..={THREADS_PER_PE}"));
        }
        if p.k % p.threads_per_pe != 0 {
            return bad(format!("k = {} is not divisible by {} threads per PE", p.k, p.threads_per_pe));
        }
        let rt = [4, 2, 1].into_iter().find(|r| p.block_rows % r == 0).unwrap();
        let ct = [6, 4, 2, 1].into_iter().find(|c| p.block_cols % c == 0).unwrap();
        let working_set = ((p.block_rows * p.k + 2 * p.k * ct) * 8) as u64;
        if working_set > DEFAULT_LOCAL_BYTES {
            return bad(format!(
                "tile too large for local storage: {working_set} bytes needed, {DEFAULT_LOCAL_BYTES} available"
            ));
        }
        let share = p.block_rows * p.k / p.threads_per_pe;
        let rows_per_thread = p.k / p.threads_per_pe;
        Ok(DgemmPlan {
            rt,
            ct,
            unroll: if p.k > 1 { largest_divisor(p.k - 1, 16) } else { 1 },
            a_batch: largest_divisor(share, 24),
            b_batch_rows: largest_divisor(rows_per_thread, 24 / ct),
            blocks: (p.m / p.block_rows) * (p.n / p.block_cols),
            groups: p.block_cols / ct,
            working_set,
            ld: (p.n..).find(|l| (l * 8).div_ceil(64) % 2 == 1 && (l * 8) % 64 == 0).unwrap_or(p.n),
        })
    }
}

/// Triple-loop reference with the kernel's accumulation order.
pub fn dgemm_oracle(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for kk in 0..k {
                acc = a[i * k + kk].mul_add(b[kk * n + j], acc);
            }
            c[i * n + j] = acc;
        }
    }
    c
}

fn inputs(p: &DgemmParams, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = match p.init {
        MatrixInit::Random => (0..p.m * p.k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        MatrixInit::IdentityA => (0..p.m * p.k).map(|x| if x / p.k == x % p.k { 1.0 } else { 0.0 }).collect(),
    };
    let b = (0..p.k * p.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (a, b)
}

fn acc(plan: &DgemmPlan, i: usize, j: usize) -> usize {
    FIRST_ACC + i * plan.ct + j
}

/// One k step of the register tile: load `ct` B values, then per row one A
/// value followed by `ct` multiply-adds. `s` is the step's offset from the
/// current A / B pointers.
fn k_step(e: &mut Emitter, p: &DgemmParams, plan: &DgemmPlan, s: usize, first: bool) -> Result<(), SimError> {
    for j in 0..plan.ct {
        e.op(format!("lls f{}, {}(r17)", 1 + j, imm(((s * plan.ct + j) * 8) as i64)?));
    }
    for i in 0..plan.rt {
        e.op(format!("lls f7, {}(r16)", imm(((i * p.k + s) * 8) as i64)?));
        for j in 0..plan.ct {
            let a = acc(plan, i, j);
            let addend = if first { 0 } else { a };
            e.op(format!("fma.d f{a}, f7, f{}, f{addend}", 1 + j));
        }
    }
    Ok(())
}

/// Copy this thread's rows of a B group panel from global memory (`r14`)
/// into local storage (`r15`).
fn stage_b(e: &mut Emitter, p: &DgemmParams, plan: &DgemmPlan, label: &str) -> Result<(), SimError> {
    let rows = p.k / p.threads_per_pe;
    let br = plan.b_batch_rows;
    e.li(20, (rows / br) as i64)?;
    e.label(label);
    for rr in 0..br {
        for j in 0..plan.ct {
            let off = imm(((rr * plan.ld + j) * 8) as i64)?;
            e.op(format!("ld f{}, {off}(r14)", FIRST_ACC + rr * plan.ct + j));
        }
    }
    for rr in 0..br {
        for j in 0..plan.ct {
            e.op(format!("sls f{}, {}(r15)", FIRST_ACC + rr * plan.ct + j, (rr * plan.ct + j) * 8));
        }
    }
    e.add_const(14, 14, (br * plan.ld * 8) as i64, 24)?;
    e.op(format!("addi r15, r15, {}", imm((br * plan.ct * 8) as i64)?));
    e.op("addi r20, r20, -1");
    e.op(format!("bne r20, r0, {label}"));
    Ok(())
}

/// Touch both ends of this thread's B rows for the group `ahead` groups
/// past the one `r6` points at, so the later staging hits in the L2.
fn touch_b(e: &mut Emitter, p: &DgemmParams, plan: &DgemmPlan, ahead: usize) -> Result<(), SimError> {
    let rows = p.k / p.threads_per_pe;
    let row = (plan.ld * 8) as i64;
    e.op(format!("addi r27, r6, {}", imm((ahead * plan.ct * 8) as i64)?));
    for rr in 0..rows {
        let base = (rr % 2) as i64 * row;
        e.op(format!("ld r28, {}(r27)", imm(base)?));
        e.op(format!("ld r28, {}(r27)", imm(base + (plan.ct as i64 - 1) * 8)?));
        if rr % 2 == 1 && rr + 1 < rows {
            e.add_const(27, 27, 2 * row, 24)?;
        }
    }
    Ok(())
}

/// Generated assembly for the given shape.
pub fn dgemm_source(p: &DgemmParams) -> Result<String, SimError> {
    let plan = p.plan()?;
    let (k, n, t) = (p.k, plan.ld, p.threads_per_pe);
    let (rt, ct, u) = (plan.rt, plan.ct, plan.unroll);
    let lb = (p.block_rows * k * 8) as i64;
    let buf = (k * ct * 8) as i64;
    let mut e = Emitter::new(&format!(
        "dgemm {}x{}x{}, {}x{} blocks per PE, {}x{} register tiles, {} threads per PE\n\
         C = A × B, every element accumulated by fma from +0.0 in ascending k",
        p.m, p.n, k, p.block_rows, p.block_cols, rt, ct, t
    ));
    e.label("main");
    e.op("ld r3, 0(r2)");
    e.op("bltu r1, r3, work");
    e.op("halt");
    e.label("work");
    e.comment("thread record: A share, its local slot, B rows, B buffer offset, C tile, A tile, tile count");
    e.op("addi r21, r0, 6");
    e.op("shl r21, r1, r21");
    e.op("add r21, r21, r2");
    for (r, off) in [(4, 64), (5, 72), (6, 80), (7, 88), (8, 96), (9, 104), (10, 112)] {
        e.op(format!("ld r{r}, {off}(r21)"));
    }
    e.comment("request every line of this thread's A share up front");
    let share = p.block_rows * k / t;
    for off in (0..share * 8).step_by(64) {
        e.op(format!("ld r28, {}(r4)", imm(off as i64)?));
    }
    if plan.groups > 1 {
        e.comment("start fetching the second B group while the A panel is copied");
        touch_b(&mut e, p, &plan, 1)?;
    }
    e.comment("copy this thread's share of the A panel into local storage");
    let ab = plan.a_batch;
    e.li(20, (share / ab) as i64)?;
    e.label("stage_a");
    for i in 0..ab {
        e.op(format!("ld f{}, {}(r4)", FIRST_ACC + i, i * 8));
    }
    for i in 0..ab {
        e.op(format!("sls f{}, {}(r5)", FIRST_ACC + i, i * 8));
    }
    e.op(format!("addi r4, r4, {}", ab * 8));
    e.op(format!("addi r5, r5, {}", ab * 8));
    e.op("addi r20, r20, -1");
    e.op("bne r20, r0, stage_a");
    e.comment("r13: buffer of the group being computed; r25 toggles between the two");
    e.li(13, lb)?;
    e.li(25, lb ^ (lb + buf))?;
    e.op("add r15, r13, r7");
    e.op("add r14, r6, r0");
    stage_b(&mut e, p, &plan, "stage_b0")?;
    e.op("sync.city");
    e.li(22, (ct * 8) as i64)?;
    e.op("addi r11, r0, 0");
    e.op("addi r26, r0, 0");
    e.li(21, plan.groups as i64)?;
    e.label("group");
    e.op("addi r12, r11, 1");
    e.op("beq r12, r21, compute");
    e.comment("stage the next group into the other buffer");
    e.op("xor r15, r13, r25");
    e.op("add r15, r15, r7");
    e.op(format!("addi r14, r6, {}", imm((ct * 8) as i64)?));
    stage_b(&mut e, p, &plan, "stage_b")?;
    e.label("compute");
    e.op("add r16, r9, r0");
    e.op("add r19, r8, r26");
    e.op("add r20, r10, r0");
    e.op("beq r20, r0, group_done");
    e.label("tile");
    e.comment("allocate the tile's C lines early; the stores come after the k loop");
    for i in 0..rt {
        e.op(format!("ld r28, {}(r19)", imm(((i * n) * 8) as i64)?));
        e.op(format!("ld r28, {}(r19)", imm(((i * n + ct - 1) * 8) as i64)?));
    }
    if plan.groups > 2 {
        e.comment("before the last tile, pull the group after next toward the L2");
        e.op("addi r27, r0, 1");
        e.op("bne r20, r27, no_touch");
        e.op("addi r27, r11, 2");
        e.op("bltu r21, r27, no_touch");
        e.op("beq r21, r27, no_touch");
        touch_b(&mut e, p, &plan, 2)?;
        e.label("no_touch");
    }
    e.op("add r17, r13, r0");
    k_step(&mut e, p, &plan, 0, true)?;
    if k > 1 {
        e.op("addi r16, r16, 8");
        e.op(format!("addi r17, r17, {}", ct * 8));
        e.add_const(18, 17, ((k - 1) * ct * 8) as i64, 24)?;
        e.label("kloop");
        for s in 0..u {
            k_step(&mut e, p, &plan, s, false)?;
        }
        e.op(format!("addi r16, r16, {}", u * 8));
        e.op(format!("addi r17, r17, {}", imm((u * ct * 8) as i64)?));
        e.op("bne r17, r18, kloop");
    } else {
        e.op("addi r16, r16, 8");
    }
    e.comment("write the tile back and flush its lines");
    for i in 0..rt {
        for j in 0..ct {
            e.op(format!("sd f{}, {}(r19)", acc(&plan, i, j), imm(((i * n + j) * 8) as i64)?));
        }
    }
    for i in 0..rt {
        e.add_const(23, 19, (i * n * 8) as i64, 24)?;
        e.op("flushr r23, r22");
    }
    e.add_const(16, 16, ((t * rt * k - k) * 8) as i64, 24)?;
    e.add_const(19, 19, (t * rt * n * 8) as i64, 24)?;
    e.op("addi r20, r20, -1");
    e.op("bne r20, r0, tile");
    e.label("group_done");
    e.op("sync.city");
    e.op("xor r13, r13, r25");
    e.op(format!("addi r6, r6, {}", ct * 8));
    e.op(format!("addi r26, r26, {}", ct * 8));
    e.op("addi r11, r11, 1");
    e.op("bne r11, r21, group");
    e.op("halt");
    Ok(e.finish())
}

/// Build a DGEMM case.
pub fn gen_dgemm(p: &DgemmParams, seed: u64) -> Result<KernelCase, SimError> {
    let plan = p.plan()?;
    let source = dgemm_source(p)?;
    let program = parse_assembly(&source).map_err(|e| SimError::Input(format!("generated dgemm: {e}")))?;
    let t = p.threads_per_pe;
    let arg_addr = LaunchDescriptor::new(program.clone(), t).arg_addr;
    let threads = plan.blocks * t;
    let mut args = ArgBlock::new(arg_addr);
    args.reserve(64 + RECORD as usize * threads, 64);
    let (a, b) = inputs(p, seed);
    let a_at = args.reserve(a.len() * 8, 4096);
    let b_at = args.reserve(p.k * plan.ld * 8, 4096);
    let c_at = args.reserve(p.m * plan.ld * 8, 4096);
    args.put_f64s(a_at, &a);
    for row in 0..p.k {
        args.put_f64s(b_at + (row * plan.ld * 8) as u64, &b[row * p.n..(row + 1) * p.n]);
    }
    args.put_u64(arg_addr, threads as u64);

    let (k, n, r, c) = (p.k as u64, p.n as u64, p.block_rows as u64, p.block_cols as u64);
    let (rt, ct) = (plan.rt as u64, plan.ct as u64);
    let col_blocks = n / c;
    let share = r * k / t as u64;
    let rows_per_thread = k / t as u64;
    let tiles = r / rt;
    for blk in 0..plan.blocks as u64 {
        let (bi, bj) = (blk / col_blocks, blk % col_blocks);
        for th in 0..t as u64 {
            let rec = arg_addr + 64 + RECORD * (blk * t as u64 + th);
            let fields = [
                a_at + (bi * r * k + th * share) * 8,
                th * share * 8,
                b_at + (th * rows_per_thread * plan.ld as u64 + bj * c) * 8,
                th * rows_per_thread * ct * 8,
                c_at + ((bi * r + th * rt) * plan.ld as u64 + bj * c) * 8,
                th * rt * k * 8,
                if th < tiles { (tiles - th).div_ceil(t as u64) } else { 0 },
            ];
            for (i, v) in fields.into_iter().enumerate() {
                args.put_u64(rec + 8 * i as u64, v);
            }
        }
    }
    let mut padded = vec![0.0; p.m * plan.ld];
    for (row, vals) in dgemm_oracle(p.m, p.n, p.k, &a, &b).chunks(p.n).enumerate() {
        padded[row * plan.ld..row * plan.ld + p.n].copy_from_slice(vals);
    }
    let expected = super::emit::f64_bytes(&padded);
    let launch = LaunchDescriptor::new(program, t).with_args(args.bytes, arg_addr);
    Ok(KernelCase {
        name: format!("dgemm-{}x{}x{}", p.m, p.n, p.k),
        params: serde_json::to_value(p).expect("params serialize"),
        source,
        launch,
        expected: Expected::Output { base: c_at, bytes: expected },
        requirements: Requirements { pes: plan.blocks, local_bytes: plan.working_set, ..Default::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_identity_and_flops() {
        let p = DgemmParams { m: 8, n: 8, k: 8, block_rows: 8, block_cols: 8, threads_per_pe: 4, init: MatrixInit::IdentityA };
        let (a, b) = inputs(&p, 1);
        assert_eq!(dgemm_oracle(8, 8, 8, &a, &b), b);
    }

    #[test]
    fn oracle_order_is_ascending_fma() {
        let a = [1e-17, 1.0, -1.0];
        let b = [1.0, 1.0, 1.0];
        // 1e-17, then + 1 absorbs it, then − 1 → 0; descending order keeps 1e-17.
        assert_eq!(dgemm_oracle(1, 1, 3, &a, &b), vec![0.0]);
    }

    #[test]
    fn plan_picks_register_tiles() {
        let p = DgemmParams { m: 256, n: 192, k: 64, block_rows: 32, block_cols: 96, threads_per_pe: 4, init: MatrixInit::Random };
        let plan = p.plan().unwrap();
        assert_eq!((plan.rt, plan.ct, plan.unroll, plan.blocks, plan.groups), (4, 6, 9, 16, 16));
        assert!(plan.working_set <= DEFAULT_LOCAL_BYTES);
    }

    #[test]
    fn oversized_tile_is_rejected() {
        let p = DgemmParams { m: 64, n: 64, k: 128, block_rows: 64, block_cols: 8, threads_per_pe: 4, init: MatrixInit::Random };
        let e = p.plan().unwrap_err().to_string();
        assert!(e.contains("tile too large for local storage"), "{e}");
    }
}
