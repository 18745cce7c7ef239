//! External memory channels: a FIFO bandwidth server per channel with a
//! fixed access latency.
//!
//! Time inside a channel is kept exactly as an integer number of ticks,
//! where one core cycle is `bytes_per_second` ticks and transferring one
//! byte takes `frequency_hz` ticks. A request arriving at cycle `a`
//! completes at `max(a + latency, previous completion + transfer time)`,
//! rounded up to a whole cycle.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub technology: String,
    pub channels: u32,
    /// Transfers per second on one channel.
    pub transfers_per_sec: f64,
    /// Bytes moved per transfer on one channel.
    pub bytes_per_transfer: u32,
    pub latency_cycles: u64,
    pub interleave_bytes: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::hbm2()
    }
}

impl ChannelConfig {
    /// Four HBM2 stacks, 1024 pins at 2.4 Gb/s each.
    pub fn hbm2() -> Self {
        ChannelConfig {
            technology: "HBM2".into(),
            channels: 4,
            transfers_per_sec: 2.4e9,
            bytes_per_transfer: 1024 / 8,
            latency_cycles: 150,
            interleave_bytes: 256,
        }
    }

    /// DDR4-3200 with 64-bit channels.
    pub fn ddr4(channels: u32) -> Self {
        ChannelConfig {
            technology: "DDR4-3200".into(),
            channels,
            transfers_per_sec: 3.2e9,
            bytes_per_transfer: 8,
            latency_cycles: 250,
            interleave_bytes: 256,
        }
    }

    pub fn channel_bytes_per_sec(&self) -> f64 {
        self.transfers_per_sec * self.bytes_per_transfer as f64
    }

    /// A configuration with zero channels is allowed and means the
    /// technology is absent.
    pub fn validate(&self, line_size: u64) -> Result<(), String> {
        if self.channels == 0 {
            return Ok(());
        }
        if !(self.transfers_per_sec >= 1.0) || self.transfers_per_sec.fract() != 0.0 {
            return Err("transfers_per_sec must be a positive whole number".into());
        }
        if self.bytes_per_transfer == 0 {
            return Err("bytes_per_transfer must be positive".into());
        }
        if !self.interleave_bytes.is_power_of_two() || self.interleave_bytes < line_size {
            return Err(format!(
                "interleave granularity {} must be a power of two ≥ the line size {line_size}",
                self.interleave_bytes
            ));
        }
        Ok(())
    }
}

/// Aggregate peak bandwidth in bytes/s: channels × rate × width.
pub fn peak_bandwidth(cfg: &ChannelConfig) -> f64 {
    cfg.channels as f64 * cfg.channel_bytes_per_sec()
}

/// Map an address (relative to the start of the technology's window) to a
/// channel and a channel-local address. Granularity-sized blocks are dealt
/// round-robin across channels; the map is a bijection.
pub fn interleave(cfg: &ChannelConfig, addr: u64) -> (u32, u64) {
    let g = cfg.interleave_bytes;
    let n = cfg.channels as u64;
    let block = addr / g;
    ((block % n) as u32, (block / n) * g + addr % g)
}

/// Inverse of [`interleave`].
pub fn deinterleave(cfg: &ChannelConfig, channel: u32, offset: u64) -> u64 {
    let g = cfg.interleave_bytes;
    ((offset / g) * cfg.channels as u64 + channel as u64) * g + offset % g
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounters {
    pub read_bytes: u64,
    pub write_bytes: u64,
    pub requests: u64,
    /// Last completion cycle seen on this channel.
    pub busy_until: u64,
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    cfg: ChannelConfig,
    /// Ticks per cycle (= per-channel bytes per second).
    ticks_per_cycle: u128,
    /// Ticks per byte (= core frequency in Hz).
    ticks_per_byte: u128,
    last: Vec<u128>,
    pub counters: Vec<ChannelCounters>,
}

impl ChannelSet {
    pub fn new(cfg: ChannelConfig, frequency_hz: f64) -> Self {
        let n = cfg.channels as usize;
        ChannelSet {
            ticks_per_cycle: cfg.channel_bytes_per_sec().round() as u128,
            ticks_per_byte: frequency_hz.round() as u128,
            cfg,
            last: vec![0; n],
            counters: vec![ChannelCounters::default(); n],
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Serve a request of `bytes` at window-relative address `addr`
    /// arriving at cycle `arrival`; returns the completion cycle.
    pub fn submit(&mut self, addr: u64, bytes: u64, arrival: u64, write: bool) -> u64 {
        let (ch, _) = interleave(&self.cfg, addr);
        let ch = ch as usize;
        let earliest = (arrival + self.cfg.latency_cycles) as u128 * self.ticks_per_cycle;
        let done = earliest.max(self.last[ch] + bytes as u128 * self.ticks_per_byte);
        self.last[ch] = done;
        let cycle = done.div_ceil(self.ticks_per_cycle) as u64;
        let c = &mut self.counters[ch];
        c.requests += 1;
        if write {
            c.write_bytes += bytes;
        } else {
            c.read_bytes += bytes;
        }
        c.busy_until = c.busy_until.max(cycle);
        cycle
    }

    pub fn totals(&self) -> ChannelCounters {
        let mut t = ChannelCounters::default();
        for c in &self.counters {
            t.read_bytes += c.read_bytes;
            t.write_bytes += c.write_bytes;
            t.requests += c.requests;
            t.busy_until = t.busy_until.max(c.busy_until);
        }
        t
    }
}
