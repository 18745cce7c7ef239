//! Message-passing litmus tests for the non-coherent hierarchy.
//!
//! A producer thread writes a datum `D` and then a flag `F`; a consumer
//! waits for the flag and reads the datum into a result slot `R`. The
//! producer runs on PE 0 and the consumer on the first PE of the second
//! village, so the two do not share an L1D but do share the city's L2.
//! Every other thread halts at once.
//!
//! The argument block header holds `D`, `F`, `R`, the producer and consumer
//! global ids and the value to publish, at offsets 8 through 48; `D`, `F`
//! and `R` each sit on their own 4 KiB page.

use serde::{Deserialize, Serialize};

use super::emit::{ArgBlock, Emitter};
use super::{Expected, KernelCase, Requirements};
use crate::chip::{ChipConfig, LaunchDescriptor};
use crate::isa::parse_assembly;
use crate::SimError;

/// The value the producer publishes.
pub const MESSAGE: u64 = 0xDEAD_BEEF;
/// Consumer reads in the delayed-flush case.
pub const POLL_READS: usize = 64;
const PRODUCER_DELAY: i64 = 300;
const SPIN_WATCHDOG: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LitmusKind {
    /// Producer flushes `D` then `F`; the consumer flushes before each read.
    /// `R` must hold the new value.
    MpFlushed,
    /// Both sides synchronize with city barriers but nobody flushes. The
    /// consumer cached `D` before the producer wrote it, so it reads the
    /// stale value.
    MpNoFlushStale,
    /// Nobody flushes and the consumer spins on `F`: the flag never becomes
    /// visible, and the watchdog reports a deadlock.
    MpNoFlushSpin,
    /// Producer and consumer on the same PE share an L1D and need no flush.
    MpSinglePe,
    /// The producer writes, waits, then flushes while the consumer keeps
    /// re-reading `D`, flushing before each read. Reads that return the new
    /// value must come after the producer's write-back.
    MpDelayedFlush,
}

impl LitmusKind {
    pub const ALL: [LitmusKind; 5] = [
        LitmusKind::MpFlushed,
        LitmusKind::MpNoFlushStale,
        LitmusKind::MpNoFlushSpin,
        LitmusKind::MpSinglePe,
        LitmusKind::MpDelayedFlush,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LitmusKind::MpFlushed => "mp-flushed",
            LitmusKind::MpNoFlushStale => "mp-no-flush-stale",
            LitmusKind::MpNoFlushSpin => "mp-no-flush-spin",
            LitmusKind::MpSinglePe => "mp-single-pe",
            LitmusKind::MpDelayedFlush => "mp-delayed-flush",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LitmusParams {
    pub kind: LitmusKind,
}

fn prologue(e: &mut Emitter) {
    e.label("main");
    e.op("ld r3, 8(r2)");
    e.op("ld r4, 16(r2)");
    e.op("ld r5, 24(r2)");
    e.op("ld r6, 32(r2)");
    e.op("ld r7, 40(r2)");
    e.op("ld r8, 48(r2)");
    e.op("beq r1, r6, producer");
    e.op("beq r1, r7, consumer");
    e.op("halt");
}

/// Assembly for one litmus kind.
pub fn litmus_source(kind: LitmusKind) -> String {
    let mut e = Emitter::new(&format!(
        "litmus {}: r3 = D, r4 = F, r5 = R, r6 / r7 = producer / consumer gid, r8 = value",
        kind.name()
    ));
    prologue(&mut e);
    match kind {
        LitmusKind::MpFlushed => {
            e.label("producer");
            e.op("sd r8, 0(r3)");
            e.op("flush 0(r3)");
            e.op("addi r9, r0, 1");
            e.op("sd r9, 0(r4)");
            e.op("flush 0(r4)");
            e.op("halt");
            e.label("consumer");
            e.op("flush 0(r4)");
            e.op("ld r9, 0(r4)");
            e.op("beq r9, r0, consumer");
            e.op("flush 0(r3)");
            e.op("ld r10, 0(r3)");
            e.op("sd r10, 0(r5)");
            e.op("flush 0(r5)");
            e.op("halt");
        }
        LitmusKind::MpNoFlushStale => {
            e.label("producer");
            e.op("sync.city");
            e.op("sd r8, 0(r3)");
            e.op("addi r9, r0, 1");
            e.op("sd r9, 0(r4)");
            e.op("sync.city");
            e.op("halt");
            e.label("consumer");
            e.comment("bring D into this village's L1D before it is written");
            e.op("ld r10, 0(r3)");
            e.op("sync.city");
            e.op("sync.city");
            e.op("ld r10, 0(r3)");
            e.op("sd r10, 0(r5)");
            e.op("flush 0(r5)");
            e.op("halt");
        }
        LitmusKind::MpNoFlushSpin => {
            e.label("producer");
            e.op("sd r8, 0(r3)");
            e.op("addi r9, r0, 1");
            e.op("sd r9, 0(r4)");
            e.op("halt");
            e.label("consumer");
            e.op("ld r9, 0(r4)");
            e.op("beq r9, r0, consumer");
            e.op("ld r10, 0(r3)");
            e.op("sd r10, 0(r5)");
            e.op("flush 0(r5)");
            e.op("halt");
        }
        LitmusKind::MpSinglePe => {
            e.label("producer");
            e.op("sd r8, 0(r3)");
            e.op("addi r9, r0, 1");
            e.op("sd r9, 0(r4)");
            e.op("halt");
            e.label("consumer");
            e.op("ld r9, 0(r4)");
            e.op("beq r9, r0, consumer");
            e.op("ld r10, 0(r3)");
            e.op("sd r10, 0(r5)");
            e.op("flush 0(r5)");
            e.op("halt");
        }
        LitmusKind::MpDelayedFlush => {
            e.label("producer");
            e.op("sd r8, 0(r3)");
            e.op(format!("addi r11, r0, {PRODUCER_DELAY}"));
            e.label("delay");
            e.op("addi r11, r11, -1");
            e.op("bne r11, r0, delay");
            e.op("flush 0(r3)");
            e.op("halt");
            e.label("consumer");
            e.op(format!("addi r12, r0, {POLL_READS}"));
            e.op("add r13, r5, r0");
            e.label("poll");
            e.op("flush 0(r3)");
            e.op("ld r10, 0(r3)");
            e.op("sd r10, 0(r13)");
            e.op("addi r13, r13, 8");
            e.op("addi r12, r12, -1");
            e.op("bne r12, r0, poll");
            e.op(format!("addi r14, r0, {}", POLL_READS * 8));
            e.op("flushr r5, r14");
            e.op("halt");
        }
    }
    e.finish()
}

/// Build a litmus case for `cfg`.
pub fn gen_litmus(p: &LitmusParams, cfg: &ChipConfig) -> Result<KernelCase, SimError> {
    let source = litmus_source(p.kind);
    let program = parse_assembly(&source).map_err(|e| SimError::Input(format!("generated litmus: {e}")))?;
    let single = p.kind == LitmusKind::MpSinglePe;
    let tpp = if single { 2 } else { 1 };
    let producer_pe = 0;
    let consumer_pe = if single { 0 } else { cfg.pes_per_village as usize };
    let (producer, consumer) = if single { (0, 1) } else { (0, (consumer_pe * tpp) as u64) };

    let arg_addr = LaunchDescriptor::new(program.clone(), tpp).arg_addr;
    let mut args = ArgBlock::new(arg_addr);
    args.reserve(64, 64);
    let d = args.reserve(8, 4096);
    let f = args.reserve(8, 4096);
    let r = args.reserve(8 * POLL_READS, 4096);
    for (i, v) in [d, f, r, producer, consumer, MESSAGE].into_iter().enumerate() {
        args.put_u64(arg_addr + 8 + 8 * i as u64, v);
    }
    let launch = LaunchDescriptor::new(program, tpp).with_args(args.bytes, arg_addr);

    let word = |v: u64| Expected::Output { base: r, bytes: v.to_le_bytes().to_vec() };
    let expected = match p.kind {
        LitmusKind::MpFlushed | LitmusKind::MpSinglePe => word(MESSAGE),
        LitmusKind::MpNoFlushStale => word(0),
        LitmusKind::MpNoFlushSpin => Expected::Deadlock,
        LitmusKind::MpDelayedFlush => {
            Expected::Visibility { data: d, results: r, reads: POLL_READS, value: MESSAGE, producer_pe, consumer_pe }
        }
    };
    let requirements = Requirements {
        pes: consumer_pe + 1,
        distinct_villages: (!single).then_some((producer_pe, consumer_pe)),
        watchdog_cycles: (p.kind == LitmusKind::MpNoFlushSpin).then_some(SPIN_WATCHDOG),
        ..Default::default()
    };
    Ok(KernelCase {
        name: p.kind.name().into(),
        params: serde_json::to_value(p).expect("params serialize"),
        source,
        launch,
        expected,
        requirements,
    })
}
