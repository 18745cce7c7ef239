//! Small helpers for generating assembly text and argument blocks.

use std::fmt::{Display, Write};

use crate::SimError;

/// Accumulates assembly source, one statement per line.
#[derive(Debug, Default)]
pub(crate) struct Emitter {
    out: String,
}

impl Emitter {
    pub fn new(title: &str) -> Self {
        let mut e = Emitter::default();
        for line in title.lines() {
            let _ = writeln!(e.out, "# {line}");
        }
        e
    }

    pub fn label(&mut self, name: &str) {
        let _ = writeln!(self.out, "{name}:");
    }

    pub fn op(&mut self, text: impl Display) {
        let _ = writeln!(self.out, "        {text}");
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.out, "        # {text}");
    }

    /// Load a constant in `0..2^31` into an integer register.
    pub fn li(&mut self, rd: u8, value: i64) -> Result<(), SimError> {
        if let Ok(v) = i16::try_from(value) {
            self.op(format!("addi r{rd}, r0, {v}"));
            return Ok(());
        }
        if !(0..1 << 31).contains(&value) {
            return Err(SimError::Input(format!("constant {value} out of range for li")));
        }
        let lo = value as u16 as i16;
        let hi = (value - lo as i64) >> 16;
        self.op(format!("lui r{rd}, {hi}"));
        if lo != 0 {
            self.op(format!("addi r{rd}, r{rd}, {lo}"));
        }
        Ok(())
    }

    /// `rd = rs + value`, using `scratch` when the value needs more than an
    /// immediate.
    pub fn add_const(&mut self, rd: u8, rs: u8, value: i64, scratch: u8) -> Result<(), SimError> {
        match i16::try_from(value) {
            Ok(v) => self.op(format!("addi r{rd}, r{rs}, {v}")),
            Err(_) => {
                self.li(scratch, value)?;
                self.op(format!("add r{rd}, r{rs}, r{scratch}"));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Check that a memory-operand offset fits the 16-bit immediate.
pub(crate) fn imm(value: i64) -> Result<i16, SimError> {
    i16::try_from(value).map_err(|_| SimError::Input(format!("offset {value} exceeds the 16-bit immediate range")))
}

/// Builder for a launch argument block. Offsets are relative to the block
/// base; [`ArgBlock::addr`] turns them into global addresses.
#[derive(Debug, Clone)]
pub(crate) struct ArgBlock {
    pub base: u64,
    pub bytes: Vec<u8>,
}

impl ArgBlock {
    pub fn new(base: u64) -> Self {
        ArgBlock { base, bytes: Vec::new() }
    }

    pub fn align(&mut self, to: usize) {
        let n = self.bytes.len().div_ceil(to) * to;
        self.bytes.resize(n, 0);
    }

    /// Reserve `len` zero bytes aligned to `align`; returns the global address.
    pub fn reserve(&mut self, len: usize, align: usize) -> u64 {
        self.align(align);
        let at = self.bytes.len();
        self.bytes.resize(at + len, 0);
        self.base + at as u64
    }

    pub fn put_u64(&mut self, addr: u64, v: u64) {
        let at = (addr - self.base) as usize;
        self.bytes[at..at + 8].copy_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64s(&mut self, addr: u64, vals: &[f64]) {
        let at = (addr - self.base) as usize;
        for (i, v) in vals.iter().enumerate() {
            self.bytes[at + 8 * i..at + 8 * i + 8].copy_from_slice(&v.to_bits().to_le_bytes());
        }
    }
}

pub(crate) fn f64_bytes(vals: &[f64]) -> Vec<u8> {
    vals.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    #[test]
    fn li_covers_wide_constants() {
        for v in [0i64, 5, -7, 32767, 32768, 65535, 0x1234_5678, 0x7fff_8000, 0x0001_8000] {
            let mut e = Emitter::new("li");
            e.li(3, v).unwrap();
            e.op("halt");
            let p = parse_assembly(&e.finish()).unwrap();
            let mut t = crate::pe::ThreadContext::launched(0, 0, 0);
            let mut local = [0u8; 8];
            struct NoMem;
            impl crate::pe::GlobalPort for NoMem {
                fn load(&mut self, _: u64, _: u8) -> Result<u64, crate::pe::TrapKind> {
                    unreachable!()
                }
                fn store(&mut self, _: u64, _: u8, _: u64) -> Result<(), crate::pe::TrapKind> {
                    unreachable!()
                }
                fn flush(&mut self, _: u64) {}
                fn flush_range(&mut self, _: u64, _: u64) {}
                fn l2flush(&mut self, _: u64) {}
            }
            for ins in p.instructions().unwrap() {
                crate::pe::execute(&mut t, &ins, &mut local, &mut NoMem).unwrap();
            }
            assert_eq!(t.gpr[3] as i64, v, "{v:#x}");
        }
    }
}
