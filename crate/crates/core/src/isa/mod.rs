//! Instruction set of the processor element.
//!
//! Every instruction is one little-endian 32-bit word:
//!
//! ```text
//! 31      26 25   21 20   16 15   11 10    6 5      0
//! | opcode  |  a    |  b    |  c    |  d    | funct  |   register forms
//! | opcode  |  a    |  b    |      imm[15:0]         |   immediate forms
//! ```
//!
//! Field `a` is the destination (or the data register of a store, or the
//! first comparand of a branch), `b` the base / first source, `c` and `d`
//! the second and third sources. `funct[1:0]` carries the floating-point
//! precision. Fields an opcode does not use must be zero; any other pattern
//! decodes as an illegal instruction. The all-zero word is `nop`.

mod asm;
mod disasm;
mod image;

pub use asm::{parse_assembly, AsmError};
pub use disasm::{disassemble, format_instruction};
pub use image::{ImageError, IMAGE_MAGIC, IMAGE_VERSION};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub const NUM_REGS: u8 = 32;

/// Floating-point precision of an FP opcode. Narrow precisions are packed
/// as SIMD lanes into the 64-bit FP registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Precision {
    Double,
    Single,
    Half,
}

impl Precision {
    pub const ALL: [Precision; 3] = [Precision::Double, Precision::Single, Precision::Half];

    pub fn lanes(self) -> u32 {
        match self {
            Precision::Double => 1,
            Precision::Single => 2,
            Precision::Half => 4,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Precision::Double => "d",
            Precision::Single => "s",
            Precision::Half => "h",
        }
    }

    fn from_suffix(s: &str) -> Option<Self> {
        match s {
            "d" => Some(Precision::Double),
            "s" => Some(Precision::Single),
            "h" => Some(Precision::Half),
            _ => None,
        }
    }

    fn code(self) -> u32 {
        match self {
            Precision::Double => 1,
            Precision::Single => 2,
            Precision::Half => 3,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Precision::Double),
            2 => Some(Precision::Single),
            3 => Some(Precision::Half),
            _ => None,
        }
    }
}

/// Operand layout of an opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `rd, rs1, rs2`
    Reg3,
    /// `rd, rs1, imm`
    RegImm,
    /// `rd, imm`
    Upper,
    /// `fd, fs1, fs2` with precision
    Fp3,
    /// `fd, fs1, fs2, fs3` with precision
    Fp4,
    /// `fd, fs1` with precision
    Fp2,
    /// `rd, imm(rs1)`
    Load,
    /// `rs2, imm(rs1)`
    Store,
    /// `rs1, rs2, target`
    Branch,
    /// `rd, target`
    Jump,
    /// no operands
    Bare,
    /// `imm(rs1)`
    Addr,
    /// `rs1, rs2`
    Pair,
    /// `rd`
    Dest,
}

/// Coarse instruction classes used for statistics and issue accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InsnClass {
    Integer,
    Float,
    Sfu,
    GlobalMemory,
    LocalMemory,
    Control,
    Special,
}

macro_rules! opcodes {
    ($( $name:ident = $code:literal, $mn:literal, $fmt:ident, $class:ident; )*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Opcode {
            $( $name, )*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$( Opcode::$name, )*];

            pub fn code(self) -> u32 {
                match self { $( Opcode::$name => $code, )* }
            }

            pub fn from_code(code: u32) -> Option<Self> {
                match code { $( $code => Some(Opcode::$name), )* _ => None }
            }

            /// Base mnemonic (without precision suffix).
            pub fn mnemonic(self) -> &'static str {
                match self { $( Opcode::$name => $mn, )* }
            }

            pub fn format(self) -> Format {
                match self { $( Opcode::$name => Format::$fmt, )* }
            }

            pub fn class(self) -> InsnClass {
                match self { $( Opcode::$name => InsnClass::$class, )* }
            }
        }
    };
}

opcodes! {
    Nop = 0, "nop", Bare, Control;
    Add = 1, "add", Reg3, Integer;
    Sub = 2, "sub", Reg3, Integer;
    And = 3, "and", Reg3, Integer;
    Or = 4, "or", Reg3, Integer;
    Xor = 5, "xor", Reg3, Integer;
    Shl = 6, "shl", Reg3, Integer;
    Shr = 7, "shr", Reg3, Integer;
    Slt = 8, "slt", Reg3, Integer;
    Addi = 9, "addi", RegImm, Integer;
    Lui = 10, "lui", Upper, Integer;
    Fadd = 11, "fadd", Fp3, Float;
    Fsub = 12, "fsub", Fp3, Float;
    Fmul = 13, "fmul", Fp3, Float;
    Fma = 14, "fma", Fp4, Float;
    Fmin = 15, "fmin", Fp3, Float;
    Fmax = 16, "fmax", Fp3, Float;
    Fdiv = 17, "fdiv", Fp3, Sfu;
    Fsqrt = 18, "fsqrt", Fp2, Sfu;
    Ld = 19, "ld", Load, GlobalMemory;
    Lw = 20, "lw", Load, GlobalMemory;
    Sd = 21, "sd", Store, GlobalMemory;
    Sw = 22, "sw", Store, GlobalMemory;
    Fld = 23, "ld", Load, GlobalMemory;
    Flw = 24, "lw", Load, GlobalMemory;
    Fsd = 25, "sd", Store, GlobalMemory;
    Fsw = 26, "sw", Store, GlobalMemory;
    Lls = 27, "lls", Load, LocalMemory;
    Sls = 28, "sls", Store, LocalMemory;
    Flls = 29, "lls", Load, LocalMemory;
    Fsls = 30, "sls", Store, LocalMemory;
    Beq = 31, "beq", Branch, Control;
    Bne = 32, "bne", Branch, Control;
    Blt = 33, "blt", Branch, Control;
    Bltu = 34, "bltu", Branch, Control;
    Jal = 35, "jal", Jump, Control;
    Jalr = 36, "jalr", RegImm, Control;
    Halt = 37, "halt", Bare, Control;
    Chg = 38, "chg", Bare, Special;
    Flush = 39, "flush", Addr, Special;
    Flushr = 40, "flushr", Pair, Special;
    L2flush = 41, "l2flush", Addr, Special;
    SyncCity = 42, "sync.city", Bare, Special;
    SyncChip = 43, "sync.chip", Bare, Special;
    Tid = 44, "tid", Dest, Special;
}

impl Opcode {
    pub fn is_fp(self) -> bool {
        matches!(self.format(), Format::Fp2 | Format::Fp3 | Format::Fp4)
    }

    /// True for memory opcodes whose register operand lives in the FP file.
    pub fn uses_fp_data(self) -> bool {
        matches!(
            self,
            Opcode::Fld | Opcode::Flw | Opcode::Fsd | Opcode::Fsw | Opcode::Flls | Opcode::Fsls
        )
    }

    /// Access size in bytes for memory opcodes.
    pub fn access_size(self) -> Option<u8> {
        match self {
            Opcode::Ld | Opcode::Sd | Opcode::Fld | Opcode::Fsd => Some(8),
            Opcode::Lls | Opcode::Sls | Opcode::Flls | Opcode::Fsls => Some(8),
            Opcode::Lw | Opcode::Sw | Opcode::Flw | Opcode::Fsw => Some(4),
            _ => None,
        }
    }

    /// Select the integer or FP variant of a memory mnemonic.
    pub(crate) fn memory_variant(self, fp: bool) -> Opcode {
        use Opcode::*;
        match (self, fp) {
            (Ld | Fld, false) => Ld,
            (Ld | Fld, true) => Fld,
            (Lw | Flw, false) => Lw,
            (Lw | Flw, true) => Flw,
            (Sd | Fsd, false) => Sd,
            (Sd | Fsd, true) => Fsd,
            (Sw | Fsw, false) => Sw,
            (Sw | Fsw, true) => Fsw,
            (Lls | Flls, false) => Lls,
            (Lls | Flls, true) => Flls,
            (Sls | Fsls, false) => Sls,
            (Sls | Fsls, true) => Fsls,
            (other, _) => other,
        }
    }

    /// Flops contributed per lane by one execution.
    pub fn flops_per_lane(self) -> u64 {
        match self {
            Opcode::Fma => 2,
            Opcode::Fadd | Opcode::Fsub | Opcode::Fmul | Opcode::Fdiv | Opcode::Fsqrt => 1,
            _ => 0,
        }
    }
}

/// A decoded instruction. Operand fields an opcode does not use are zero,
/// which keeps `decode(encode(i)) == i` an equality on plain values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub rs3: u8,
    pub imm: i16,
    pub prec: Option<Precision>,
}

impl Instruction {
    fn bare(op: Opcode) -> Self {
        Instruction { op, rd: 0, rs1: 0, rs2: 0, rs3: 0, imm: 0, prec: None }
    }

    pub fn nop() -> Self {
        Self::bare(Opcode::Nop)
    }

    pub fn halt() -> Self {
        Self::bare(Opcode::Halt)
    }

    pub fn simple(op: Opcode) -> Self {
        debug_assert_eq!(op.format(), Format::Bare);
        Self::bare(op)
    }

    pub fn reg3(op: Opcode, rd: u8, rs1: u8, rs2: u8) -> Self {
        Instruction { rd, rs1, rs2, ..Self::bare(op) }
    }

    pub fn reg_imm(op: Opcode, rd: u8, rs1: u8, imm: i16) -> Self {
        Instruction { rd, rs1, imm, ..Self::bare(op) }
    }

    pub fn upper(rd: u8, imm: i16) -> Self {
        Instruction { rd, imm, ..Self::bare(Opcode::Lui) }
    }

    pub fn fp3(op: Opcode, prec: Precision, rd: u8, rs1: u8, rs2: u8) -> Self {
        Instruction { rd, rs1, rs2, prec: Some(prec), ..Self::bare(op) }
    }

    pub fn fma(prec: Precision, rd: u8, rs1: u8, rs2: u8, rs3: u8) -> Self {
        Instruction { rd, rs1, rs2, rs3, prec: Some(prec), ..Self::bare(Opcode::Fma) }
    }

    pub fn fsqrt(prec: Precision, rd: u8, rs1: u8) -> Self {
        Instruction { rd, rs1, prec: Some(prec), ..Self::bare(Opcode::Fsqrt) }
    }

    pub fn load(op: Opcode, rd: u8, base: u8, offset: i16) -> Self {
        debug_assert_eq!(op.format(), Format::Load);
        Instruction { rd, rs1: base, imm: offset, ..Self::bare(op) }
    }

    pub fn store(op: Opcode, data: u8, base: u8, offset: i16) -> Self {
        debug_assert_eq!(op.format(), Format::Store);
        Instruction { rs2: data, rs1: base, imm: offset, ..Self::bare(op) }
    }

    pub fn branch(op: Opcode, rs1: u8, rs2: u8, offset: i16) -> Self {
        Instruction { rs1, rs2, imm: offset, ..Self::bare(op) }
    }

    pub fn jal(rd: u8, offset: i16) -> Self {
        Instruction { rd, imm: offset, ..Self::bare(Opcode::Jal) }
    }

    pub fn addr(op: Opcode, base: u8, offset: i16) -> Self {
        Instruction { rs1: base, imm: offset, ..Self::bare(op) }
    }

    pub fn pair(op: Opcode, rs1: u8, rs2: u8) -> Self {
        Instruction { rs1, rs2, ..Self::bare(op) }
    }

    pub fn tid(rd: u8) -> Self {
        Instruction { rd, ..Self::bare(Opcode::Tid) }
    }

    /// Check the type invariants: register ranges, precision presence, and
    /// zeroed unused fields.
    pub fn is_well_formed(&self) -> bool {
        let regs_ok = [self.rd, self.rs1, self.rs2, self.rs3].iter().all(|&r| r < NUM_REGS);
        regs_ok && self.op.is_fp() == self.prec.is_some() && decode(encode(self)) == Ok(*self)
    }

    /// Relative branch or jump target, for control opcodes with one.
    pub fn branch_target(&self, pc: usize) -> Option<i64> {
        match self.op.format() {
            Format::Branch | Format::Jump => Some(pc as i64 + self.imm as i64),
            _ => None,
        }
    }

    pub fn lanes(&self) -> u32 {
        self.prec.map_or(1, Precision::lanes)
    }

    /// Flops this instruction performs when executed.
    pub fn flops(&self) -> u64 {
        self.op.flops_per_lane() * self.lanes() as u64
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_instruction(self, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("illegal instruction word {0:#010x}")]
    Illegal(u32),
}

const IMM_MASK: u32 = 0xffff;

fn field(word: u32, shift: u32) -> u8 {
    ((word >> shift) & 0x1f) as u8
}

pub fn encode(ins: &Instruction) -> u32 {
    let op = ins.op.code() << 26;
    let a = |r: u8| (r as u32 & 0x1f) << 21;
    let b = |r: u8| (r as u32 & 0x1f) << 16;
    let c = |r: u8| (r as u32 & 0x1f) << 11;
    let d = |r: u8| (r as u32 & 0x1f) << 6;
    let imm = ins.imm as u16 as u32;
    let prec = ins.prec.map_or(0, Precision::code);
    match ins.op.format() {
        Format::Reg3 => op | a(ins.rd) | b(ins.rs1) | c(ins.rs2),
        Format::RegImm | Format::Load => op | a(ins.rd) | b(ins.rs1) | imm,
        Format::Upper | Format::Jump => op | a(ins.rd) | imm,
        Format::Fp3 => op | a(ins.rd) | b(ins.rs1) | c(ins.rs2) | prec,
        Format::Fp4 => op | a(ins.rd) | b(ins.rs1) | c(ins.rs2) | d(ins.rs3) | prec,
        Format::Fp2 => op | a(ins.rd) | b(ins.rs1) | prec,
        Format::Store => op | a(ins.rs2) | b(ins.rs1) | imm,
        Format::Branch => op | a(ins.rs1) | b(ins.rs2) | imm,
        Format::Bare => op,
        Format::Addr => op | b(ins.rs1) | imm,
        Format::Pair => op | b(ins.rs1) | c(ins.rs2),
        Format::Dest => op | a(ins.rd),
    }
}

pub fn decode(word: u32) -> Result<Instruction, DecodeError> {
    let illegal = Err(DecodeError::Illegal(word));
    let Some(op) = Opcode::from_code(word >> 26) else {
        return illegal;
    };
    let a = field(word, 21);
    let b = field(word, 16);
    let c = field(word, 11);
    let d = field(word, 6);
    let funct = word & 0x3f;
    let imm = (word & IMM_MASK) as u16 as i16;
    let low21 = word & 0x1f_ffff;
    let base = Instruction::bare(op);
    // Every arm checks that the bits the format leaves unused are zero.
    let ins = match op.format() {
        Format::Reg3 if d == 0 && funct == 0 => Instruction { rd: a, rs1: b, rs2: c, ..base },
        Format::RegImm | Format::Load => Instruction { rd: a, rs1: b, imm, ..base },
        Format::Upper | Format::Jump if b == 0 => Instruction { rd: a, imm, ..base },
        Format::Fp3 | Format::Fp4 | Format::Fp2 => {
            let Some(prec) = Precision::from_code(funct & 0x3) else {
                return illegal;
            };
            if funct & !0x3 != 0 {
                return illegal;
            }
            match op.format() {
                Format::Fp3 if d == 0 => Instruction { rd: a, rs1: b, rs2: c, prec: Some(prec), ..base },
                Format::Fp4 => Instruction { rd: a, rs1: b, rs2: c, rs3: d, prec: Some(prec), ..base },
                Format::Fp2 if c == 0 && d == 0 => Instruction { rd: a, rs1: b, prec: Some(prec), ..base },
                _ => return illegal,
            }
        }
        Format::Store => Instruction { rs2: a, rs1: b, imm, ..base },
        Format::Branch => Instruction { rs1: a, rs2: b, imm, ..base },
        Format::Bare if low21 == 0 && a == 0 => base,
        Format::Addr if a == 0 => Instruction { rs1: b, imm, ..base },
        Format::Pair if a == 0 && d == 0 && funct == 0 => Instruction { rs1: b, rs2: c, ..base },
        Format::Dest if b == 0 && c == 0 && d == 0 && funct == 0 => Instruction { rd: a, ..base },
        _ => return illegal,
    };
    Ok(ins)
}

/// An assembled program: text words, the data segment and symbol tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    words: Vec<u32>,
    decoded: Vec<Result<Instruction, DecodeError>>,
    pub data_base: u64,
    pub data: Vec<u8>,
    /// Text labels, label -> instruction index.
    pub labels: BTreeMap<String, usize>,
    /// Data labels, label -> byte address.
    pub data_labels: BTreeMap<String, u64>,
}

impl Program {
    pub fn new(text: Vec<Instruction>, data_base: u64, data: Vec<u8>) -> Self {
        let words = text.iter().map(encode).collect();
        Self::from_words(words, data_base, data)
    }

    pub fn from_words(words: Vec<u32>, data_base: u64, data: Vec<u8>) -> Self {
        let decoded = words.iter().map(|&w| decode(w)).collect();
        Program {
            words,
            decoded,
            data_base,
            data,
            labels: BTreeMap::new(),
            data_labels: BTreeMap::new(),
        }
    }

    pub fn with_labels(mut self, labels: BTreeMap<String, usize>) -> Self {
        self.labels = labels;
        self
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn fetch(&self, pc: usize) -> Option<Result<Instruction, DecodeError>> {
        self.decoded.get(pc).copied()
    }

    /// All instructions, or the first illegal word.
    pub fn instructions(&self) -> Result<Vec<Instruction>, DecodeError> {
        self.decoded.iter().copied().collect()
    }

    /// Launch entry: the `main` label when present, else instruction 0.
    pub fn entry(&self) -> usize {
        self.labels.get("main").copied().unwrap_or(0)
    }

    /// Byte footprint of the text when loaded at `text_base`.
    pub fn text_bytes(&self) -> u64 {
        self.words.len() as u64 * 4
    }

    /// Same instruction words and data segment, ignoring symbol names.
    pub fn same_image(&self, other: &Program) -> bool {
        self.words == other.words && self.data_base == other.data_base && self.data == other.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (0..Opcode::ALL.len(), 0u8..32, 0u8..32, 0u8..32, 0u8..32, any::<i16>(), 0usize..3).prop_map(
            |(oi, a, b, c, d, imm, p)| {
                let op = Opcode::ALL[oi];
                let prec = Precision::ALL[p];
                match op.format() {
                    Format::Reg3 => Instruction::reg3(op, a, b, c),
                    Format::RegImm => Instruction::reg_imm(op, a, b, imm),
                    Format::Upper => Instruction::upper(a, imm),
                    Format::Fp3 => Instruction::fp3(op, prec, a, b, c),
                    Format::Fp4 => Instruction::fma(prec, a, b, c, d),
                    Format::Fp2 => Instruction::fsqrt(prec, a, b),
                    Format::Load => Instruction::load(op, a, b, imm),
                    Format::Store => Instruction::store(op, a, b, imm),
                    Format::Branch => Instruction::branch(op, a, b, imm),
                    Format::Jump => Instruction::jal(a, imm),
                    Format::Bare => Instruction::simple(op),
                    Format::Addr => Instruction::addr(op, b, imm),
                    Format::Pair => Instruction::pair(op, a, b),
                    Format::Dest => Instruction::tid(a),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(ins in arb_instruction()) {
            prop_assert_eq!(decode(encode(&ins)), Ok(ins));
            prop_assert!(ins.is_well_formed());
        }

        #[test]
        fn decode_is_left_inverse_on_legal_words(word in any::<u32>()) {
            if let Ok(ins) = decode(word) {
                prop_assert_eq!(encode(&ins), word);
            }
        }
    }

    #[test]
    fn zero_word_is_nop() {
        assert_eq!(decode(0), Ok(Instruction::nop()));
        assert_eq!(encode(&Instruction::nop()), 0);
    }

    #[test]
    fn unassigned_patterns_are_illegal() {
        assert!(decode(63 << 26).is_err());
        // nop with a stray register field
        assert!(decode(1 << 21).is_err());
        // fadd without a precision
        assert!(decode(Opcode::Fadd.code() << 26).is_err());
        // fsqrt with a second source
        let w = encode(&Instruction::fsqrt(Precision::Double, 1, 2)) | (3 << 11);
        assert!(decode(w).is_err());
    }

    #[test]
    fn opcode_codes_are_unique() {
        let mut codes: Vec<u32> = Opcode::ALL.iter().map(|o| o.code()).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), Opcode::ALL.len());
        assert!(codes.iter().all(|&c| c < 64));
    }

    #[test]
    fn flops_per_instruction() {
        assert_eq!(Instruction::fma(Precision::Single, 1, 2, 3, 4).flops(), 4);
        assert_eq!(Instruction::fma(Precision::Half, 1, 2, 3, 4).flops(), 8);
        assert_eq!(Instruction::fp3(Opcode::Fadd, Precision::Double, 1, 2, 3).flops(), 1);
        assert_eq!(Instruction::fp3(Opcode::Fmax, Precision::Double, 1, 2, 3).flops(), 0);
    }
}
