//! Processor-element model: instruction semantics, packed FP lanes, the
//! multithreaded issue model and the functional reference emulator.

mod exec;
mod functional;
pub mod lanes;
mod state;

pub use exec::{execute, sources, Control, Dest, Executed, GlobalPort, Scope, ThreadContext, ThreadStatus, Trap, TrapKind};
pub use functional::{run_functional, FunctionalResult};
pub use state::{FlopCounts, InsnCounts, PeCounters, PeEvent, PeParams, PeState, Selection, StallReason};
