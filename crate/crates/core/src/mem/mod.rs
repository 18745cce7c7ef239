//! Software-managed, non-coherent cache hierarchy and external memory.

mod cache;
pub mod reference;
mod channel;
mod store;
mod system;
mod trace;

pub use cache::{Cache, CacheConfig, CacheCounters, Probe, Victim, MAX_LINE_SIZE};
pub use channel::{deinterleave, interleave, peak_bandwidth, ChannelConfig, ChannelCounters, ChannelSet};
pub use store::GlobalMemory;
pub use system::{MemError, MemoryCounters, MemorySystem};
pub use trace::{AccessKind, Level, Origin, Outcome, TraceRecord};
