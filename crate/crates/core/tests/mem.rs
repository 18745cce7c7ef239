//! Cache hierarchy, flushes and external-memory channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sc3sim::chip::ChipConfig;
use sc3sim::mem::reference::{first_divergence, random_trace, reference_replay, replay, TraceOp};
use sc3sim::mem::{deinterleave, interleave, peak_bandwidth, ChannelConfig, ChannelSet, Level, MemorySystem, Origin};

const PE0: Origin = Origin { pe: 0, thread: 0 };

fn city() -> (ChipConfig, MemorySystem) {
    let cfg = ChipConfig::one_city();
    let mem = MemorySystem::new(&cfg);
    (cfg, mem)
}

#[test]
fn cold_read_misses_then_hits_at_l1_latency() {
    let (cfg, mut mem) = city();
    let mut buf = [0u8; 8];
    let first = mem.read(PE0, 0x4000, &mut buf, 0).unwrap();
    assert!(first > cfg.caches.l1d.hit_latency);
    let second = mem.read(PE0, 0x4008, &mut buf, first).unwrap();
    assert_eq!(second, first + cfg.caches.l1d.hit_latency);
    let c = mem.counters().l1d;
    assert_eq!((c.accesses, c.hits, c.misses), (2, 1, 1));
}

#[test]
fn back_to_back_misses_to_one_line_share_a_fill() {
    let (_, mut mem) = city();
    let mut buf = [0u8; 8];
    let a = mem.read(PE0, 0x8000, &mut buf, 0).unwrap();
    let b = mem.read(Origin { pe: 1, thread: 0 }, 0x8010, &mut buf, 1).unwrap();
    assert_eq!(a, b, "the merged request completes with the fill");
    let c = mem.counters();
    assert_eq!(c.l1d.mshr_merges, 1);
    assert_eq!(c.l2d.accesses, 1);
    assert_eq!(c.hbm2.requests, 1);
}

#[test]
fn evicting_a_dirty_lru_way_writes_back_exactly_once() {
    let (cfg, mut mem) = city();
    let l1 = &cfg.caches.l1d;
    let stride = l1.sets() as u64 * l1.line_size; // same set each time
    let mut buf = [0u8; 8];
    mem.write(PE0, 0, &[1; 8], 0).unwrap();
    for (i, k) in (1..=l1.associativity as u64).enumerate() {
        mem.read(PE0, k * stride, &mut buf, 1000 * (i as u64 + 1)).unwrap();
    }
    let c = mem.counters();
    assert_eq!(c.l1d.writebacks_out, 1);
    assert_eq!(c.l2d.writebacks_in, 1);
    // The written data reached L2 and comes back on a re-read.
    mem.read(PE0, 0, &mut buf, 10_000).unwrap();
    assert_eq!(buf, [1; 8]);
}

#[test]
fn flushing_a_dirty_line_writes_it_back_and_invalidates() {
    let (cfg, mut mem) = city();
    mem.write(PE0, 0x2000, &7u64.to_le_bytes(), 0).unwrap();
    let line = 0x2000 / cfg.caches.l1d.line_size;
    assert!(mem.instances(Level::L1d)[0].contains(line));
    mem.flush_line(PE0, 0x2000, 500);
    assert!(!mem.instances(Level::L1d)[0].contains(line));
    assert_eq!(mem.counters().l1d.writebacks_out, 1);
    assert_eq!(mem.counters().l2d.writebacks_in, 1);
}

#[test]
fn flushing_an_absent_line_changes_nothing() {
    let (_, mut mem) = city();
    let before = mem.counters();
    let image = mem.flushed_image();
    mem.flush_line(PE0, 0x9000, 0);
    let after = mem.counters();
    assert_eq!(after.l1d.writebacks_out, before.l1d.writebacks_out);
    assert_eq!(after.l2d, before.l2d);
    assert_eq!(after.hbm2, before.hbm2);
    assert!(mem.flushed_image().same_contents(&image));
}

#[test]
fn flush_range_covers_every_overlapping_line() {
    let (cfg, mut mem) = city();
    let ls = cfg.caches.l1d.line_size;
    for i in 0..4 {
        mem.write(PE0, 0x3000 + i * ls, &[0xAB; 8], i).unwrap();
    }
    // [base, base + len) touches lines 0..=3 even though it starts mid-line.
    mem.flush_range(PE0, 0x3000 + 8, 3 * ls, 100);
    assert_eq!(mem.counters().l1d.writebacks_out, 4);
    for i in 0..4 {
        assert!(!mem.instances(Level::L1d)[0].contains(0x3000 / ls + i));
    }
}

#[test]
fn stores_stay_invisible_to_other_villages_until_flushed() {
    let (cfg, mut mem) = city();
    let other = Origin { pe: cfg.pes_per_village, thread: 0 };
    let mut buf = [0u8; 8];
    mem.read(other, 0x5000, &mut buf, 0).unwrap();
    mem.write(PE0, 0x5000, &9u64.to_le_bytes(), 1000).unwrap();
    mem.read(other, 0x5000, &mut buf, 2000).unwrap();
    assert_eq!(u64::from_le_bytes(buf), 0, "peer L1D still holds the old line");
    mem.flush_line(PE0, 0x5000, 3000);
    mem.flush_line(other, 0x5000, 4000);
    mem.read(other, 0x5000, &mut buf, 5000).unwrap();
    assert_eq!(u64::from_le_bytes(buf), 9);
}

#[test]
fn idle_channel_read_takes_the_fixed_latency() {
    let cfg = ChannelConfig::hbm2();
    let mut ch = ChannelSet::new(cfg.clone(), 1.2e9);
    assert_eq!(ch.submit(0, 64, 100, false), 100 + cfg.latency_cycles);
}

#[test]
fn back_to_back_requests_are_spaced_by_the_transfer_time() {
    // One DDR4 channel moves 25.6 GB/s; at 0.8 GHz that is 32 B per cycle.
    let cfg = ChannelConfig::ddr4(1);
    let mut ch = ChannelSet::new(cfg.clone(), 0.8e9);
    let first = ch.submit(0, 64, 0, false);
    let times: Vec<u64> = (1..5).map(|i| ch.submit(i * 64, 64, 0, false)).collect();
    assert_eq!(first, cfg.latency_cycles);
    assert_eq!(times, vec![first + 2, first + 4, first + 6, first + 8]);
}

#[test]
fn saturating_random_traffic_stays_within_95_to_100_percent_of_peak() {
    let freq = 1.2e9;
    for cfg in [ChannelConfig::hbm2(), ChannelConfig::ddr4(2)] {
        let mut ch = ChannelSet::new(cfg.clone(), freq);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000u64;
        let mut last = 0;
        for _ in 0..n {
            let addr = rng.gen_range(0..1u64 << 32) / 64 * 64;
            last = last.max(ch.submit(addr, 64, 0, false));
        }
        let seconds = (last - cfg.latency_cycles) as f64 / freq;
        let delivered = (n * 64) as f64 / seconds;
        let peak = peak_bandwidth(&cfg);
        assert!(delivered <= peak * 1.000_001, "{}: {delivered} > {peak}", cfg.technology);
        assert!(delivered >= 0.95 * peak, "{}: {delivered} < 95% of {peak}", cfg.technology);
    }
}

#[test]
fn table_bandwidths() {
    assert_eq!(peak_bandwidth(&ChannelConfig::ddr4(2)), 51.2e9);
    assert_eq!(peak_bandwidth(&ChannelConfig::hbm2()), 1228.8e9);
    assert_eq!(peak_bandwidth(&ChannelConfig { channels: 0, ..ChannelConfig::hbm2() }), 0.0);
}

#[test]
fn interleave_is_a_uniform_bijection() {
    let cfg = ChannelConfig::hbm2();
    assert_eq!(interleave(&cfg, 0), (0, 0));
    assert_eq!(interleave(&cfg, cfg.interleave_bytes).0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hist = vec![0u64; cfg.channels as usize];
    let n = 1_000_000;
    for _ in 0..n {
        let a = rng.gen_range(0..1u64 << 34);
        let (c, off) = interleave(&cfg, a);
        assert_eq!(deinterleave(&cfg, c, off), a);
        hist[c as usize] += 1;
    }
    let mean = n as f64 / hist.len() as f64;
    for h in hist {
        assert!((h as f64 - mean).abs() / mean < 0.01, "channel histogram skewed: {h} vs {mean}");
    }
}

#[test]
fn every_cache_instance_matches_the_reference_model_over_1e5_accesses() {
    let (cfg, mem) = city();
    for (level, geometry) in [Level::L1d, Level::L1i, Level::L2d, Level::L2i, Level::Llc]
        .into_iter()
        .zip(cfg.caches.all())
    {
        for (i, inst) in mem.instances(level).iter().enumerate() {
            let seed = (level as u64) << 8 | i as u64;
            let mut ops = random_trace(geometry.1, 100_000, seed);
            if matches!(level, Level::L1i | Level::L2i) {
                // Instruction caches are tag-only and are never written.
                for op in &mut ops {
                    if let TraceOp::Write(a, _) = *op {
                        *op = TraceOp::Read(a);
                    }
                }
            }
            let real = replay(&mut inst.clone(), &ops);
            let reference = reference_replay(geometry.1, &ops);
            assert_eq!(real.len(), reference.len());
            if let Some(at) = real.iter().zip(&reference).position(|(a, b)| a != b) {
                panic!("{} #{i}: access {at} gave {:?}, reference {:?}", geometry.0, real[at], reference[at]);
            }
        }
    }
}

#[test]
fn swept_geometries_match_the_reference_model() {
    for line in [32, 64, 128] {
        for ways in [1, 2, 4, 8] {
            let mut cfg = ChipConfig::one_city();
            cfg.caches.set_line_size(line);
            cfg.caches.set_associativity(ways);
            for (name, geometry) in cfg.caches.all() {
                let ops = random_trace(geometry, 20_000, line ^ ways as u64);
                assert_eq!(first_divergence(geometry, &ops), None, "{name} line {line} ways {ways}");
            }
        }
    }
}
