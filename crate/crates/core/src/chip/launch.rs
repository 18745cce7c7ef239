//! Host-side kernel launch: what the management processor would hand to
//! the PEs.
//!
//! Register convention for every activated thread: `r1` = global thread
//! id, `r2` = address of the argument block. Global thread ids are numbered
//! PE-major: `gid = pe × threads_per_pe + thread`.

use crate::isa::Program;
use crate::mem::GlobalMemory;
use crate::SimError;

use super::{ChipConfig, THREADS_PER_PE};

#[derive(Debug, Clone)]
pub struct LaunchDescriptor {
    pub program: Program,
    pub threads_per_pe: usize,
    pub args: Vec<u8>,
    pub arg_addr: u64,
}

fn overlaps(a: (u64, u64), b: (u64, u64)) -> bool {
    a.1 > 0 && b.1 > 0 && a.0 < b.0 + b.1 && b.0 < a.0 + a.1
}

impl LaunchDescriptor {
    /// Launch with an empty argument block placed on the first 4 KiB
    /// boundary above the program image.
    pub fn new(program: Program, threads_per_pe: usize) -> Self {
        let end = program.data_base + program.data.len() as u64;
        let arg_addr = end.max(program.text_bytes()).div_ceil(4096) * 4096;
        LaunchDescriptor { program, threads_per_pe, args: Vec::new(), arg_addr }
    }

    pub fn with_args(mut self, args: Vec<u8>, arg_addr: u64) -> Self {
        self.args = args;
        self.arg_addr = arg_addr;
        self
    }

    pub fn validate(&self, cfg: &ChipConfig) -> Result<(), SimError> {
        if self.threads_per_pe == 0 || self.threads_per_pe > THREADS_PER_PE {
            return Err(SimError::Launch(format!(
                "threads per PE must be in 1..={THREADS_PER_PE}, got {}",
                self.threads_per_pe
            )));
        }
        let size = cfg.memory.size;
        let text = (cfg.text_base, self.program.text_bytes());
        let data = (self.program.data_base, self.program.data.len() as u64);
        let args = (self.arg_addr, self.args.len() as u64);
        for (name, (base, len)) in [("text", text), ("data", data), ("argument block", args)] {
            if base.checked_add(len).is_none_or(|end| end > size) {
                return Err(SimError::Launch(format!("{name} [{base:#x}, +{len}) outside global memory")));
            }
        }
        if overlaps(args, text) || overlaps(args, data) {
            return Err(SimError::Launch("argument block overlaps program image".into()));
        }
        if overlaps(text, data) {
            return Err(SimError::Launch("data segment overlaps program text".into()));
        }
        Ok(())
    }

    /// Initial contents of global memory: text words, data segment and
    /// argument block.
    pub fn initial_memory(&self, cfg: &ChipConfig) -> GlobalMemory {
        let mut m = GlobalMemory::new(cfg.memory.size);
        let text: Vec<u8> = self.program.words().iter().flat_map(|w| w.to_le_bytes()).collect();
        m.write(cfg.text_base, &text);
        m.write(self.program.data_base, &self.program.data);
        m.write(self.arg_addr, &self.args);
        m
    }

    pub fn gid(&self, pe: usize, thread: usize) -> u64 {
        (pe * self.threads_per_pe + thread) as u64
    }
}
