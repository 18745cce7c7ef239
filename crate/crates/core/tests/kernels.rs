//! Kernel generators checked against their oracles on the simulated chip.

use std::path::PathBuf;

use sc3sim::chip::{simulate, ChipConfig, RunStats};
use sc3sim::kernels::manifest::{default_suite, SuiteManifest};
use sc3sim::kernels::random::cosimulate;
use sc3sim::kernels::{
    gen_dgemm, gen_litmus, gen_vecadd, run_case, run_case_traced, DgemmParams, Expected, KernelCase, LitmusKind,
    LitmusParams, MatrixInit, VecaddParams, VecaddVariant, VectorInit,
};

fn city() -> ChipConfig {
    ChipConfig::one_city()
}

fn vecadd(n: usize, variant: VecaddVariant, init: VectorInit, seed: u64) -> KernelCase {
    gen_vecadd(&VecaddParams { n, variant, pes: 16, pe_stride: 1, init }, seed).unwrap()
}

fn dgemm(n: usize, block: usize, init: MatrixInit) -> DgemmParams {
    DgemmParams { m: n, n, k: n, block_rows: block, block_cols: block, threads_per_pe: 4, init }
}

fn output(case: &KernelCase) -> (u64, &[u8]) {
    match &case.expected {
        Expected::Output { base, bytes } => (*base, bytes),
        other => panic!("not an output case: {other:?}"),
    }
}

fn passes(case: &KernelCase) -> RunStats {
    let report = run_case(&city(), case, 1).unwrap();
    assert!(report.passed, "{}: {}", case.name, report.detail);
    let stats = report.stats.unwrap();
    stats.check_identities().unwrap();
    stats
}

#[test]
fn vecadd_of_ones_is_all_twos() {
    let case = vecadd(1024, VecaddVariant::SingleGroup, VectorInit::Constant { value: 1.0 }, 0);
    let (_, bytes) = output(&case);
    let values: Vec<f64> = bytes.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(values.iter().filter(|&&v| v == 2.0).count(), 1024);
    assert!(values.iter().all(|&v| v == 2.0 || v == 0.0));
    let stats = passes(&case);
    assert_eq!(stats.flops.dp, 1024);
}

#[test]
fn random_vecadd_matches_the_oracle_in_both_variants() {
    for variant in [VecaddVariant::SingleGroup, VecaddVariant::DualGroup] {
        passes(&vecadd(1024, variant, VectorInit::Random, 7));
    }
}

#[test]
fn both_vecadd_variants_write_identical_output() {
    let cfg = city();
    let single = vecadd(4096, VecaddVariant::SingleGroup, VectorInit::Random, 7);
    let dual = vecadd(4096, VecaddVariant::DualGroup, VectorInit::Random, 7);
    let (sb, sbytes) = output(&single);
    let (db, dbytes) = output(&dual);
    let (sc, _) = simulate(&cfg, &single.launch, 1).unwrap();
    let (dc, _) = simulate(&cfg, &dual.launch, 1).unwrap();
    let s_img = sc.flushed_image().read_vec(sb, sbytes.len());
    let d_img = dc.flushed_image().read_vec(db, dbytes.len());
    let values = |v: &[u8]| v.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).filter(|&x| x != 0).collect::<Vec<_>>();
    assert_eq!(values(&s_img), values(&d_img));
}

#[test]
fn dual_group_vecadd_hides_latency() {
    let spec = |variant| VecaddParams { n: 16384, variant, pes: 4, pe_stride: 4, init: VectorInit::Random };
    let single = passes(&gen_vecadd(&spec(VecaddVariant::SingleGroup), 7).unwrap());
    let dual = passes(&gen_vecadd(&spec(VecaddVariant::DualGroup), 7).unwrap());
    let speedup = single.cycles as f64 / dual.cycles as f64;
    assert!(speedup >= 1.5, "dual-group speedup {speedup:.2} below 1.5");
    assert!(dual.totals.stall_cycles < single.totals.stall_cycles);
}

#[test]
fn identity_dgemm_copies_b() {
    let case = gen_dgemm(&dgemm(8, 8, MatrixInit::IdentityA), 5).unwrap();
    let stats = passes(&case);
    assert_eq!(stats.flops.dp, 1024);
}

#[test]
fn dgemm_32_matches_the_triple_loop_bit_for_bit() {
    let stats = passes(&gen_dgemm(&dgemm(32, 8, MatrixInit::Random), 42).unwrap());
    assert_eq!(stats.flops.dp, 2 * 32 * 32 * 32);
    assert!(stats.achieved_gflops() > 0.0);
}

#[test]
fn dgemm_64_matches_the_triple_loop_bit_for_bit() {
    let stats = passes(&gen_dgemm(&dgemm(64, 16, MatrixInit::Random), 42).unwrap());
    assert_eq!(stats.flops.dp, 2 * 64 * 64 * 64);
}

#[test]
fn oversized_tiles_are_rejected() {
    assert!(gen_dgemm(&dgemm(128, 128, MatrixInit::Random), 1).is_err());
}

#[test]
fn corrupted_expectation_reports_the_first_mismatching_address() {
    let mut case = vecadd(1024, VecaddVariant::SingleGroup, VectorInit::Random, 7);
    let Expected::Output { base, bytes } = &mut case.expected else { unreachable!() };
    let base = *base;
    bytes[8 * 100] ^= 1;
    let report = run_case(&city(), &case, 1).unwrap();
    assert!(!report.passed);
    assert!(report.detail.contains(&format!("{:#x}", base + 800)), "{}", report.detail);
}

fn litmus(kind: LitmusKind, cfg: &ChipConfig) -> KernelCase {
    gen_litmus(&LitmusParams { kind }, cfg).unwrap()
}

#[test]
fn litmus_outcomes_on_the_default_city() {
    let cfg = city();
    for kind in LitmusKind::ALL {
        let report = run_case(&cfg, &litmus(kind, &cfg), 1).unwrap();
        assert!(report.passed, "{}: {}", kind.name(), report.detail);
    }
}

/// Latency sets: (L1, L2, LLC, HBM2) in cycles.
const LATENCIES: [(u64, u64, u64, u64); 3] = [(2, 14, 40, 150), (1, 4, 10, 20), (4, 30, 80, 400)];

fn swept_configs() -> Vec<ChipConfig> {
    let mut out = Vec::new();
    for line in [32, 64, 128] {
        for ways in [1, 2, 4] {
            for (l1, l2, llc, hbm) in LATENCIES {
                let mut cfg = city();
                cfg.caches.set_line_size(line);
                cfg.caches.set_associativity(ways);
                cfg.caches.l1d.hit_latency = l1;
                cfg.caches.l1i.hit_latency = l1;
                cfg.caches.l2d.hit_latency = l2;
                cfg.caches.l2i.hit_latency = l2;
                cfg.caches.llc.hit_latency = llc;
                cfg.memory.hbm2.latency_cycles = hbm;
                cfg.name = format!("line {line} ways {ways} latencies {l1}/{l2}/{llc}/{hbm}");
                out.push(cfg);
            }
        }
    }
    out
}

#[test]
fn flushed_message_passing_holds_on_every_swept_configuration() {
    for cfg in swept_configs() {
        let report = run_case(&cfg, &litmus(LitmusKind::MpFlushed, &cfg), 1).unwrap();
        assert!(report.passed, "{}: {}", cfg.name, report.detail);
    }
}

#[test]
fn new_data_never_appears_before_the_producer_writes_back() {
    for cfg in swept_configs() {
        let case = litmus(LitmusKind::MpDelayedFlush, &cfg);
        let (report, _) = run_case_traced(&cfg, &case, 1, true).unwrap();
        assert!(report.passed, "{}: {}", cfg.name, report.detail);
    }
}

#[test]
fn unflushed_spin_deadlocks() {
    let cfg = city();
    let report = run_case(&cfg, &litmus(LitmusKind::MpNoFlushSpin, &cfg), 1).unwrap();
    assert!(report.passed, "{}", report.detail);
    assert!(report.stats.is_none());
}

#[test]
fn race_free_random_programs_agree_with_the_functional_model() {
    cosimulate(&city(), 10_000, 200).unwrap();
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn checked_in_suite_matches_the_built_in_cases_and_digests() {
    let saved = SuiteManifest::load(&repo_root().join("configs/suite.json")).unwrap();
    let built = default_suite();
    assert_eq!(saved.cases.len(), built.cases.len());
    for (s, b) in saved.cases.iter().zip(&built.cases) {
        assert_eq!((&s.name, &s.spec, s.seed), (&b.name, &b.spec, b.seed));
    }
    for report in saved.run(&city(), None, 1).unwrap() {
        assert!(report.passed, "{}: {}", report.name, report.detail);
    }
}

#[test]
fn seed_override_regenerates_data_but_still_checks_the_oracle() {
    let suite = default_suite();
    let idx = suite.cases.iter().position(|c| c.name == "dgemm-32").unwrap();
    let a = suite.run_one(idx, &city(), Some(1), 1).unwrap();
    let b = suite.run_one(idx, &city(), Some(2), 1).unwrap();
    assert!(a.passed && b.passed);
    assert_ne!(a.digest, b.digest);
}
