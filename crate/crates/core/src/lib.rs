//! Cycle-approximate simulator of a hierarchical MIMD many-core processor:
//! prefectures of cities of villages of eight-thread processor elements,
//! behind a software-managed, non-coherent cache hierarchy.

pub mod chip;
pub mod isa;
pub mod kernels;
pub mod mem;
pub mod pe;
pub mod perf;

use thiserror::Error;

/// Top-level error type shared by the library entry points.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("input: {0}")]
    Input(String),
    #[error("config: {0}")]
    Config(String),
    #[error("launch: {0}")]
    Launch(String),
    #[error("trap: {0}")]
    Trap(#[from] pe::Trap),
    #[error("deadlock: {0}")]
    Deadlock(Box<chip::DeadlockReport>),
    #[error("validation: {0}")]
    Validation(String),
}
