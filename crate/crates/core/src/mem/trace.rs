//! Optional per-request access trace.
//!
//! One line per request presented to a cache instance, whitespace
//! separated, in this column order:
//!
//! ```text
//! cycle pe thread level instance line_address kind outcome writeback
//! ```
//!
//! * `level` is one of `l1d l1i l2d l2i llc`;
//! * `kind` is one of `read write fetch writeback flush`; `writeback` is a
//!   dirty line arriving from the level above;
//! * `outcome` is `hit`, `miss` or `merge` (a miss that joined an
//!   outstanding fill); for `flush` it is `hit` when the line was present;
//! * the final column is `1` when the request pushed a dirty line to the
//!   next level (eviction or flush), else `0`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    L1d,
    L1i,
    L2d,
    L2i,
    Llc,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::L1d, Level::L1i, Level::L2d, Level::L2i, Level::Llc];

    pub fn name(self) -> &'static str {
        match self {
            Level::L1d => "l1d",
            Level::L1i => "l1i",
            Level::L2d => "l2d",
            Level::L2i => "l2i",
            Level::Llc => "llc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
    Fetch,
    Writeback,
    Flush,
}

impl AccessKind {
    pub fn name(self) -> &'static str {
        match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
            AccessKind::Fetch => "fetch",
            AccessKind::Writeback => "writeback",
            AccessKind::Flush => "flush",
        }
    }

    /// Whether the access leaves the line dirty.
    pub fn dirties(self) -> bool {
        matches!(self, AccessKind::Write | AccessKind::Writeback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Hit,
    Miss,
    Merge,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Hit => "hit",
            Outcome::Miss => "miss",
            Outcome::Merge => "merge",
        }
    }

    /// Tag-array view: a merge found the line's tag already allocated.
    pub fn tag_hit(self) -> bool {
        !matches!(self, Outcome::Miss)
    }
}

/// Requesting PE and hardware thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Origin {
    pub pe: u32,
    pub thread: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub origin: Origin,
    pub level: Level,
    pub instance: u32,
    pub address: u64,
    pub kind: AccessKind,
    pub outcome: Outcome,
    pub writeback: bool,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {:#x} {} {} {}",
            self.cycle,
            self.origin.pe,
            self.origin.thread,
            self.level.name(),
            self.instance,
            self.address,
            self.kind.name(),
            self.outcome.name(),
            u8::from(self.writeback)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_order() {
        let r = TraceRecord {
            cycle: 12,
            origin: Origin { pe: 3, thread: 5 },
            level: Level::L2d,
            instance: 0,
            address: 0x1040,
            kind: AccessKind::Writeback,
            outcome: Outcome::Merge,
            writeback: true,
        };
        assert_eq!(r.to_string(), "12 3 5 l2d 0 0x1040 writeback merge 1");
    }
}
