//! Chip construction, kernel launch, the clock loop, barriers and the
//! deadlock watchdog.

use sc3sim::chip::{simulate, Chip, ChipConfig, LaunchDescriptor, RunStats};
use sc3sim::isa::parse_assembly;
use sc3sim::kernels::{gen_vecadd, VecaddParams, VecaddVariant, VectorInit};
use sc3sim::mem::Level;
use sc3sim::pe::ThreadStatus;
use sc3sim::SimError;

fn launch(src: &str, threads: usize) -> LaunchDescriptor {
    LaunchDescriptor::new(parse_assembly(src).unwrap(), threads)
}

fn run(cfg: &ChipConfig, src: &str, threads: usize) -> RunStats {
    simulate(cfg, &launch(src, threads), 1).unwrap().1
}

#[test]
fn default_chip_has_4096_pes_and_32768_threads() {
    let cfg = ChipConfig::sc3();
    assert_eq!(cfg.total_pes(), 4096);
    assert_eq!(cfg.total_threads(), 32768);
    let chip = Chip::build(cfg).unwrap();
    assert_eq!(chip.pes().len(), 4096);
    assert_eq!(chip.mem.instances(Level::L1d).len(), 1024);
    assert_eq!(chip.mem.instances(Level::L1i).len(), 4096);
    assert_eq!(chip.mem.instances(Level::L2d).len(), 256);
    assert_eq!(chip.mem.instances(Level::Llc).len(), 16);
}

#[test]
fn one_city_chip_has_one_l2_and_one_llc() {
    let cfg = ChipConfig { prefectures: 1, cities_per_prefecture: 1, ..ChipConfig::sc3() };
    let chip = Chip::build(cfg.clone()).unwrap();
    assert_eq!(chip.pes().len(), cfg.pes_per_city());
    assert_eq!(chip.mem.instances(Level::L2d).len(), 1);
    assert_eq!(chip.mem.instances(Level::L2i).len(), 1);
    assert_eq!(chip.mem.instances(Level::Llc).len(), 1);
}

#[test]
fn zero_cities_per_prefecture_is_rejected() {
    let cfg = ChipConfig { cities_per_prefecture: 0, ..ChipConfig::one_city() };
    assert!(matches!(Chip::build(cfg), Err(SimError::Config(_))));
}

#[test]
fn launch_sets_thread_ids_and_argument_register() {
    let cfg = ChipConfig::one_city();
    let d = launch("halt", 1);
    let mut chip = Chip::build(cfg.clone()).unwrap();
    chip.launch(&d).unwrap();
    for pe in 0..cfg.total_pes() {
        let t = chip.threads(pe);
        assert_eq!(t[0].status, ThreadStatus::Ready);
        assert_eq!(t[0].gpr[1], pe as u64);
        assert_eq!(t[0].gpr[2], d.arg_addr);
        assert!(t[1..].iter().all(|t| t.status == ThreadStatus::Idle));
    }
}

#[test]
fn eight_threads_start_with_group_zero_active() {
    let mut chip = Chip::build(ChipConfig::one_city()).unwrap();
    chip.launch(&launch("halt", 8)).unwrap();
    for pe in chip.pes() {
        assert_eq!(pe.active_group, 0);
        assert!(pe.threads.iter().all(|t| t.status == ThreadStatus::Ready));
    }
}

#[test]
fn nine_threads_per_pe_is_rejected() {
    let mut chip = Chip::build(ChipConfig::one_city()).unwrap();
    assert!(matches!(chip.launch(&launch("halt", 9)), Err(SimError::Launch(_))));
}

#[test]
fn halt_only_program_executes_one_instruction_per_thread() {
    let cfg = ChipConfig::one_city();
    for threads in [1, 3, 8] {
        let stats = run(&cfg, "halt", threads);
        assert_eq!(stats.threads_activated, (cfg.total_pes() * threads) as u64);
        assert_eq!(stats.instructions.total(), stats.threads_activated);
        stats.check_identities().unwrap();
    }
}

#[test]
fn watchdog_reports_threads_stuck_behind_a_spinning_peer() {
    // gids 0 and 1 wait at the city barrier, gid 2 spins forever, the rest
    // halt (which removes them from the barrier count).
    let src = "addi r5, r0, 2\nblt r1, r5, wait\nbeq r1, r5, spin\nhalt\nwait: sync.city\nhalt\nspin: jal r0, spin";
    let cfg = ChipConfig { watchdog_cycles: 2_000, ..ChipConfig::one_city() };
    let Err(SimError::Deadlock(report)) = simulate(&cfg, &launch(src, 1), 1).map(|_| ()) else {
        panic!("expected a deadlock");
    };
    assert_eq!(report.threads.len(), 3);
    let status = |gid: u64| report.threads.iter().find(|t| t.gid == gid).unwrap().status;
    assert_eq!(status(0), ThreadStatus::AtBarrier(sc3sim::pe::Scope::City));
    assert_eq!(status(1), ThreadStatus::AtBarrier(sc3sim::pe::Scope::City));
    assert_eq!(status(2), ThreadStatus::Ready);
    assert!(report.cycle >= cfg.watchdog_cycles);
}

/// Replacing `sync.city` by a `nop` must not change the run length when the
/// barrier releases on the cycle after the last arrival.
fn barrier_costs_one_cycle(prologue: &str) {
    let cfg = ChipConfig::one_city();
    let with = run(&cfg, &format!("{prologue}sync.city\nhalt"), 1);
    let without = run(&cfg, &format!("{prologue}nop\nhalt"), 1);
    assert_eq!(with.barrier_releases, 1);
    assert_eq!(with.cycles, without.cycles, "release must come the cycle after the last arrival");
}

#[test]
fn simultaneous_arrivals_release_on_the_next_cycle() {
    barrier_costs_one_cycle("");
}

#[test]
fn staggered_arrivals_release_after_the_last_one() {
    // gid 0 counts down from 200 before arriving; everybody else waits.
    barrier_costs_one_cycle("bne r1, r0, go\naddi r5, r0, 200\nloop: addi r5, r5, -1\nbne r5, r0, loop\ngo: ");
}

#[test]
fn chip_barrier_spans_cities() {
    let cfg = ChipConfig { cities_per_prefecture: 2, ..ChipConfig::one_city() };
    let src = "bne r1, r0, go\naddi r5, r0, 50\nloop: addi r5, r5, -1\nbne r5, r0, loop\ngo: sync.chip\nhalt";
    let stats = run(&cfg, src, 2);
    assert_eq!(stats.barrier_releases, 1);
    stats.check_identities().unwrap();
}

fn vecadd_case() -> sc3sim::kernels::KernelCase {
    let p = VecaddParams {
        n: 2048,
        variant: VecaddVariant::DualGroup,
        pes: 16,
        init: VectorInit::Random,
        pe_stride: 1,
    };
    gen_vecadd(&p, 11).unwrap()
}

#[test]
fn worker_count_does_not_change_anything() {
    let cfg = ChipConfig::one_city();
    let case = vecadd_case();
    let (c1, s1) = simulate(&cfg, &case.launch, 1).unwrap();
    for workers in [2, 4, 7] {
        let (cn, sn) = simulate(&cfg, &case.launch, workers).unwrap();
        assert_eq!(s1, sn, "stats differ with {workers} workers");
        assert!(c1.flushed_image().same_contents(&cn.flushed_image()));
        assert_eq!(serde_json::to_string(&s1).unwrap(), serde_json::to_string(&sn).unwrap());
    }
}

#[test]
fn counter_identities_hold_on_a_kernel_run() {
    let (_, stats) = simulate(&ChipConfig::one_city(), &vecadd_case().launch, 1).unwrap();
    stats.check_identities().unwrap();
    assert_eq!(stats.flops.dp, 2048);
    assert_eq!(stats.totals.cycles, stats.pes.iter().map(|p| p.cycles).sum::<u64>());
}

#[test]
fn relaunching_a_chip_is_an_error() {
    let mut chip = Chip::build(ChipConfig::one_city()).unwrap();
    chip.launch(&launch("halt", 1)).unwrap();
    assert!(matches!(chip.launch(&launch("halt", 1)), Err(SimError::Launch(_))));
}
