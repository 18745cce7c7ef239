//! Element-wise DP vector addition `c[i] = a[i] + b[i]`, the memory-bound
//! latency-hiding demonstrator.
//!
//! Every activated thread owns a contiguous slice of `n / threads` elements
//! and walks it in chunks of eight: eight loads of `a`, eight of `b`, eight
//! adds, eight stores. The dual-group variant launches all eight hardware
//! threads per PE; after issuing a chunk's loads, the last thread of each
//! group executes `chg`, so the other group issues its loads while the
//! first group's are in flight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::emit::{ArgBlock, Emitter};
use super::{Expected, KernelCase, Requirements};
use crate::chip::{LaunchDescriptor, GROUP_SIZE, THREADS_PER_PE};
use crate::isa::parse_assembly;
use crate::SimError;

const CHUNK: usize = 8;
const RECORD: u64 = 32;
/// Per-thread slices are spaced so that the `a`, `b` and `c` lines a thread
/// works on at the same time fall into different L1D sets: consecutive
/// slices are two lines apart in set index, `b` is one line and `c` eight
/// lines off `a`. Without this every stream of every thread collides in a
/// single set of the 2-way L1D.
const SET_SPAN: usize = 1024;
const SLICE_SKEW: usize = 128;
const B_SKEW: usize = 64;
const C_SKEW: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VecaddVariant {
    /// One thread group (four threads) per PE.
    SingleGroup,
    /// Both thread groups, double-buffered with `chg`.
    DualGroup,
}

impl VecaddVariant {
    pub fn threads_per_pe(self) -> usize {
        match self {
            VecaddVariant::SingleGroup => GROUP_SIZE,
            VecaddVariant::DualGroup => THREADS_PER_PE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum VectorInit {
    /// Every element of `a` and `b` equal to `value`.
    Constant { value: f64 },
    /// Uniform in [-1, 1) from the case seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VecaddParams {
    pub n: usize,
    pub variant: VecaddVariant,
    /// Number of PEs that take part.
    pub pes: usize,
    /// Distance between participating PEs: PEs `0, s, 2s, ...` work and the
    /// threads of the PEs in between get empty slices. A stride of one PE per village
    /// gives each participant a village L1D to itself.
    #[serde(default = "one")]
    pub pe_stride: usize,
    pub init: VectorInit,
}

fn one() -> usize {
    1
}

fn inputs(p: &VecaddParams, seed: u64) -> (Vec<f64>, Vec<f64>) {
    match p.init {
        VectorInit::Constant { value } => (vec![value; p.n], vec![value; p.n]),
        VectorInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = (0..p.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..p.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (a, b)
        }
    }
}

/// The oracle: element-wise sum.
pub fn vecadd_oracle(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Assembly for one variant. Per-thread slices come from the argument
/// block: record `gid` at `args + 64 + 32·gid` holds `a`, `b`, `c`
/// pointers and the element count.
pub fn vecadd_source(variant: VecaddVariant) -> String {
    let dual = variant == VecaddVariant::DualGroup;
    let mut e = Emitter::new(&format!(
        "vecadd, {} variant: c[i] = a[i] + b[i] in DP over per-thread slices",
        if dual { "dual-group" } else { "single-group" }
    ));
    e.label("main");
    e.op("ld r3, 0(r2)");
    e.op("bltu r1, r3, work");
    e.op("halt");
    e.label("work");
    e.op("addi r4, r0, 5");
    e.op("shl r4, r1, r4");
    e.op("add r4, r4, r2");
    e.op("ld r5, 64(r4)");
    e.op("ld r6, 72(r4)");
    e.op("ld r7, 80(r4)");
    e.op("ld r8, 88(r4)");
    e.op("add r9, r7, r0");
    e.op("addi r10, r0, 3");
    e.op("shl r11, r8, r10");
    if dual {
        e.comment("r12 = 0 only on the last thread of each group, which hands the PE over");
        e.op("addi r13, r0, 3");
        e.op("and r12, r1, r13");
        e.op("xor r12, r12, r13");
    }
    e.op("shr r15, r8, r10");
    e.op("beq r15, r0, tail");
    e.label("chunk");
    for j in 0..CHUNK {
        e.op(format!("ld f{}, {}(r5)", 1 + j, 8 * j));
    }
    for j in 0..CHUNK {
        e.op(format!("ld f{}, {}(r6)", 9 + j, 8 * j));
    }
    if dual {
        e.op("bne r12, r0, nochg");
        e.op("chg");
        e.label("nochg");
    }
    for j in 0..CHUNK {
        e.op(format!("fadd.d f{}, f{}, f{}", 17 + j, 1 + j, 9 + j));
    }
    for j in 0..CHUNK {
        e.op(format!("sd f{}, {}(r7)", 17 + j, 8 * j));
    }
    e.op(format!("addi r5, r5, {}", 8 * CHUNK));
    e.op(format!("addi r6, r6, {}", 8 * CHUNK));
    e.op(format!("addi r7, r7, {}", 8 * CHUNK));
    e.op("addi r15, r15, -1");
    e.op("bne r15, r0, chunk");
    e.label("tail");
    e.op(format!("addi r16, r0, {}", CHUNK - 1));
    e.op("and r16, r8, r16");
    e.op("beq r16, r0, done");
    e.label("single");
    e.op("ld f1, 0(r5)");
    e.op("ld f9, 0(r6)");
    e.op("fadd.d f17, f1, f9");
    e.op("sd f17, 0(r7)");
    e.op("addi r5, r5, 8");
    e.op("addi r6, r6, 8");
    e.op("addi r7, r7, 8");
    e.op("addi r16, r16, -1");
    e.op("bne r16, r0, single");
    e.label("done");
    e.op("flushr r9, r11");
    e.op("halt");
    e.finish()
}

/// Build a vecadd case.
pub fn gen_vecadd(p: &VecaddParams, seed: u64) -> Result<KernelCase, SimError> {
    let tpp = p.variant.threads_per_pe();
    let threads = p.pes * tpp;
    if p.n == 0 || p.pes == 0 || p.pe_stride == 0 {
        return Err(SimError::Input("vecadd needs n > 0, at least one PE and a PE stride of at least 1".into()));
    }
    if p.n % threads != 0 {
        return Err(SimError::Input(format!("vecadd: n = {} is not divisible by {threads} activated threads", p.n)));
    }
    let source = vecadd_source(p.variant);
    let program = parse_assembly(&source).map_err(|e| SimError::Input(format!("generated vecadd: {e}")))?;
    let arg_addr = LaunchDescriptor::new(program.clone(), tpp).arg_addr;
    let mut args = ArgBlock::new(arg_addr);
    let span_pes = (p.pes - 1) * p.pe_stride + 1;
    let records = span_pes * tpp;
    args.reserve(64 + RECORD as usize * records, 64);
    let per = p.n / threads;
    let stride = (per * 8).next_multiple_of(SET_SPAN) + SLICE_SKEW;
    let span = threads * stride;
    let (a, b) = inputs(p, seed);
    let a_at = args.reserve(span, 4096);
    let b_at = args.reserve(span + B_SKEW, 4096) + B_SKEW as u64;
    let c_at = args.reserve(span + C_SKEW, 4096) + C_SKEW as u64;
    let c = vecadd_oracle(&a, &b);
    let mut expected = vec![0u8; span];
    args.put_u64(arg_addr, records as u64);
    for g in 0..threads {
        let gid = (g / tpp) * p.pe_stride * tpp + g % tpp;
        let rec = arg_addr + 64 + RECORD * gid as u64;
        let off = (g * stride) as u64;
        let slice = g * per..(g + 1) * per;
        args.put_f64s(a_at + off, &a[slice.clone()]);
        args.put_f64s(b_at + off, &b[slice.clone()]);
        expected[g * stride..g * stride + per * 8].copy_from_slice(&super::emit::f64_bytes(&c[slice]));
        args.put_u64(rec, a_at + off);
        args.put_u64(rec + 8, b_at + off);
        args.put_u64(rec + 16, c_at + off);
        args.put_u64(rec + 24, per as u64);
    }
    let launch = LaunchDescriptor::new(program, tpp).with_args(args.bytes, arg_addr);
    Ok(KernelCase {
        name: format!("vecadd-{}-{}", if tpp == GROUP_SIZE { "single" } else { "dual" }, p.n),
        params: serde_json::to_value(p).expect("params serialize"),
        source,
        launch,
        expected: Expected::Output { base: c_at, bytes: expected },
        requirements: Requirements { pes: span_pes, ..Default::default() },
    })
}
