//! Line-oriented assembler.
//!
//! ```text
//! # comment
//! .data 0x10000          # switch to the data segment, set its base
//! table: .word64 1, 2, 0xff
//!        .space 64
//! .text
//! main:  tid r5
//! loop:  addi r1, r1, -1
//!        bne r1, r0, loop
//!        fma.d f1, f2, f3, f4
//!        ld f6, 8(r2)
//!        halt
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Format, Instruction, Opcode, Precision, Program, NUM_REGS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub column: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("register `{0}` out of range")]
    RegisterOutOfRange(String),
    #[error("expected {expected} register, found `{found}`")]
    WrongRegisterFile { expected: &'static str, found: String },
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("immediate {0} out of 16-bit range")]
    ImmediateOutOfRange(i64),
    #[error("branch target `{0}` out of 16-bit offset range")]
    TargetOutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RegFile {
    Int,
    Fp,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Fixup {
    index: usize,
    label: String,
    line: usize,
    column: usize,
}

enum Section {
    Text,
    Data,
}

struct Assembler {
    text: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
    data_labels: BTreeMap<String, u64>,
    data_base: Option<u64>,
    data: Vec<u8>,
    fixups: Vec<Fixup>,
    section: Section,
}

/// Assemble source text into a [`Program`]. Identical input always yields a
/// bit-identical program.
pub fn parse_assembly(source: &str) -> Result<Program, AsmError> {
    let mut asm = Assembler {
        text: Vec::new(),
        labels: BTreeMap::new(),
        data_labels: BTreeMap::new(),
        data_base: None,
        data: Vec::new(),
        fixups: Vec::new(),
        section: Section::Text,
    };
    for (i, raw) in source.lines().enumerate() {
        asm.line(i + 1, raw)?;
    }
    asm.finish()
}

fn err(line: usize, column: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, column, kind }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Split `s` on commas, tracking 1-based columns relative to `offset`.
fn split_operands(s: &str, offset: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices().chain(std::iter::once((s.len(), ','))) {
        if c == ',' {
            let piece = &s[start..i];
            let lead = piece.len() - piece.trim_start().len();
            out.push(Token { text: piece.trim(), column: offset + start + lead + 1 });
            start = i + 1;
        }
    }
    out
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, body) = match tok.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, tok.strip_prefix('+').unwrap_or(tok)),
    };
    let value = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()? as i128
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse::<u64>().ok()? as i128
    };
    let value = if neg { -value } else { value };
    if value < i64::MIN as i128 || value > u64::MAX as i128 {
        return None;
    }
    // Hex literals above i64::MAX are bit patterns.
    Some(value as i64)
}

impl Assembler {
    fn line(&mut self, lineno: usize, raw: &str) -> Result<(), AsmError> {
        let code = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let mut rest = code;
        let mut col0 = 0usize;
        // Leading labels.
        loop {
            let trimmed = rest.trim_start();
            col0 += rest.len() - trimmed.len();
            rest = trimmed;
            let Some(colon) = rest.find(':') else { break };
            let candidate = &rest[..colon];
            if !is_ident(candidate) || candidate.contains(' ') {
                break;
            }
            self.define_label(candidate, lineno, col0 + 1)?;
            rest = &rest[colon + 1..];
            col0 += colon + 1;
        }
        let body = rest.trim_end();
        if body.is_empty() {
            return Ok(());
        }
        let mnemonic_end = body.find(char::is_whitespace).unwrap_or(body.len());
        let mnemonic = &body[..mnemonic_end];
        let operand_text = &body[mnemonic_end..];
        let operands = if operand_text.trim().is_empty() {
            Vec::new()
        } else {
            split_operands(operand_text, col0 + mnemonic_end)
        };
        let mcol = col0 + 1;
        if mnemonic.starts_with('.') {
            return self.directive(mnemonic, &operands, lineno, mcol);
        }
        if let Section::Data = self.section {
            return Err(err(lineno, mcol, AsmErrorKind::Syntax("instruction in .data section".into())));
        }
        let ins = self.instruction(mnemonic, &operands, lineno, mcol)?;
        self.text.push(ins);
        Ok(())
    }

    fn define_label(&mut self, name: &str, line: usize, column: usize) -> Result<(), AsmError> {
        if self.labels.contains_key(name) || self.data_labels.contains_key(name) {
            return Err(err(line, column, AsmErrorKind::DuplicateLabel(name.to_string())));
        }
        match self.section {
            Section::Text => {
                self.labels.insert(name.to_string(), self.text.len());
            }
            Section::Data => {
                let base = self.data_base.unwrap_or(0);
                self.data_labels.insert(name.to_string(), base + self.data.len() as u64);
            }
        }
        Ok(())
    }

    fn directive(&mut self, name: &str, ops: &[Token<'_>], line: usize, col: usize) -> Result<(), AsmError> {
        let syntax = |c: usize, m: &str| err(line, c, AsmErrorKind::Syntax(m.to_string()));
        match name {
            ".text" => {
                if !ops.is_empty() {
                    return Err(syntax(col, ".text takes no operands"));
                }
                self.section = Section::Text;
            }
            ".data" => {
                match ops {
                    [] => {}
                    [base] => {
                        let value = parse_int(base.text)
                            .filter(|v| *v >= 0)
                            .ok_or_else(|| syntax(base.column, "expected a data base address"))?
                            as u64;
                        match self.data_base {
                            Some(existing) if existing != value => {
                                return Err(syntax(base.column, "data base already set"));
                            }
                            _ => self.data_base = Some(value),
                        }
                    }
                    _ => return Err(syntax(col, ".data takes at most one operand")),
                }
                self.section = Section::Data;
            }
            ".word64" | ".byte" | ".space" => {
                if !matches!(self.section, Section::Data) {
                    return Err(syntax(col, "data directive outside .data"));
                }
                if ops.is_empty() {
                    return Err(syntax(col, "missing operand"));
                }
                for op in ops {
                    let value =
                        parse_int(op.text).ok_or_else(|| syntax(op.column, "expected an integer"))?;
                    if name == ".word64" {
                        self.data.extend_from_slice(&value.to_le_bytes());
                    } else if name == ".byte" {
                        let byte = u8::try_from(value).map_err(|_| syntax(op.column, "byte out of range"))?;
                        self.data.push(byte);
                    } else {
                        if !(0..=1 << 30).contains(&value) {
                            return Err(syntax(op.column, "bad .space size"));
                        }
                        self.data.resize(self.data.len() + value as usize, 0);
                    }
                }
            }
            _ => return Err(err(line, col, AsmErrorKind::UnknownMnemonic(name.to_string()))),
        }
        Ok(())
    }

    fn lookup(mnemonic: &str) -> Option<(Opcode, Option<Precision>)> {
        if let Some(op) = Opcode::ALL.iter().find(|o| !o.is_fp() && o.mnemonic() == mnemonic) {
            return Some((*op, None));
        }
        let (base, suffix) = mnemonic.rsplit_once('.')?;
        let prec = Precision::from_suffix(suffix)?;
        let op = Opcode::ALL.iter().find(|o| o.is_fp() && o.mnemonic() == base)?;
        Some((*op, Some(prec)))
    }

    fn instruction(
        &mut self,
        mnemonic: &str,
        ops: &[Token<'_>],
        line: usize,
        col: usize,
    ) -> Result<Instruction, AsmError> {
        let (op, prec) = Self::lookup(mnemonic)
            .ok_or_else(|| err(line, col, AsmErrorKind::UnknownMnemonic(mnemonic.to_string())))?;
        let fmt = op.format();
        let arity = match fmt {
            Format::Reg3 | Format::RegImm | Format::Fp3 | Format::Branch => 3,
            Format::Fp4 => 4,
            Format::Upper | Format::Fp2 | Format::Load | Format::Store | Format::Jump | Format::Pair => 2,
            Format::Addr | Format::Dest => 1,
            Format::Bare => 0,
        };
        if ops.len() != arity {
            return Err(err(
                line,
                col,
                AsmErrorKind::Syntax(format!("`{mnemonic}` takes {arity} operand(s), found {}", ops.len())),
            ));
        }
        let reg = |t: &Token<'_>, file: RegFile| parse_reg(t, file, line);
        let imm16 = |t: &Token<'_>| parse_imm16(t, line, false);
        let ins = match fmt {
            Format::Reg3 => Instruction::reg3(
                op,
                reg(&ops[0], RegFile::Int)?,
                reg(&ops[1], RegFile::Int)?,
                reg(&ops[2], RegFile::Int)?,
            ),
            Format::RegImm => {
                Instruction::reg_imm(op, reg(&ops[0], RegFile::Int)?, reg(&ops[1], RegFile::Int)?, imm16(&ops[2])?)
            }
            Format::Upper => Instruction::upper(reg(&ops[0], RegFile::Int)?, parse_imm16(&ops[1], line, true)?),
            Format::Fp3 => Instruction::fp3(
                op,
                prec.expect("fp opcode"),
                reg(&ops[0], RegFile::Fp)?,
                reg(&ops[1], RegFile::Fp)?,
                reg(&ops[2], RegFile::Fp)?,
            ),
            Format::Fp4 => Instruction::fma(
                prec.expect("fp opcode"),
                reg(&ops[0], RegFile::Fp)?,
                reg(&ops[1], RegFile::Fp)?,
                reg(&ops[2], RegFile::Fp)?,
                reg(&ops[3], RegFile::Fp)?,
            ),
            Format::Fp2 => {
                Instruction::fsqrt(prec.expect("fp opcode"), reg(&ops[0], RegFile::Fp)?, reg(&ops[1], RegFile::Fp)?)
            }
            Format::Load | Format::Store => {
                let (file, r) = parse_any_reg(&ops[0], line)?;
                let (offset, base) = parse_mem_operand(&ops[1], line)?;
                let op = op.memory_variant(file == RegFile::Fp);
                if fmt == Format::Load {
                    Instruction::load(op, r, base, offset)
                } else {
                    Instruction::store(op, r, base, offset)
                }
            }
            Format::Branch => {
                let a = reg(&ops[0], RegFile::Int)?;
                let b = reg(&ops[1], RegFile::Int)?;
                let offset = self.target(&ops[2], line)?;
                Instruction::branch(op, a, b, offset)
            }
            Format::Jump => {
                let rd = reg(&ops[0], RegFile::Int)?;
                let offset = self.target(&ops[1], line)?;
                Instruction::jal(rd, offset)
            }
            Format::Bare => Instruction::simple(op),
            Format::Addr => {
                let (offset, base) = parse_mem_operand(&ops[0], line)?;
                Instruction::addr(op, base, offset)
            }
            Format::Pair => Instruction::pair(op, reg(&ops[0], RegFile::Int)?, reg(&ops[1], RegFile::Int)?),
            Format::Dest => Instruction::tid(reg(&ops[0], RegFile::Int)?),
        };
        Ok(ins)
    }

    /// Numeric targets are relative offsets; labels are fixed up later.
    fn target(&mut self, tok: &Token<'_>, line: usize) -> Result<i16, AsmError> {
        if let Some(v) = parse_int(tok.text) {
            return i16::try_from(v).map_err(|_| err(line, tok.column, AsmErrorKind::ImmediateOutOfRange(v)));
        }
        if !is_ident(tok.text) {
            return Err(err(line, tok.column, AsmErrorKind::Syntax(format!("bad target `{}`", tok.text))));
        }
        self.fixups.push(Fixup {
            index: self.text.len(),
            label: tok.text.to_string(),
            line,
            column: tok.column,
        });
        Ok(0)
    }

    fn finish(mut self) -> Result<Program, AsmError> {
        for fix in &self.fixups {
            let Some(&target) = self.labels.get(&fix.label) else {
                return Err(err(fix.line, fix.column, AsmErrorKind::UndefinedLabel(fix.label.clone())));
            };
            let offset = target as i64 - fix.index as i64;
            let offset = i16::try_from(offset)
                .map_err(|_| err(fix.line, fix.column, AsmErrorKind::TargetOutOfRange(fix.label.clone())))?;
            self.text[fix.index].imm = offset;
        }
        let len = self.text.len() as i64;
        for (i, ins) in self.text.iter().enumerate() {
            if let Some(t) = ins.branch_target(i) {
                if !(0..len).contains(&t) {
                    return Err(err(0, 0, AsmErrorKind::TargetOutOfRange(format!("{t}"))));
                }
            }
        }
        let mut program = Program::new(self.text, self.data_base.unwrap_or(0), self.data).with_labels(self.labels);
        program.data_labels = self.data_labels;
        Ok(program)
    }
}

fn parse_reg(tok: &Token<'_>, file: RegFile, line: usize) -> Result<u8, AsmError> {
    let (found, r) = parse_any_reg(tok, line)?;
    if found != file {
        let expected = match file {
            RegFile::Int => "an integer",
            RegFile::Fp => "a floating-point",
        };
        return Err(err(line, tok.column, AsmErrorKind::WrongRegisterFile { expected, found: tok.text.into() }));
    }
    Ok(r)
}

fn parse_any_reg(tok: &Token<'_>, line: usize) -> Result<(RegFile, u8), AsmError> {
    let t = tok.text;
    let file = match t.as_bytes().first() {
        Some(b'r') => RegFile::Int,
        Some(b'f') => RegFile::Fp,
        _ => return Err(err(line, tok.column, AsmErrorKind::Syntax(format!("expected a register, found `{t}`")))),
    };
    let digits = &t[1..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err(line, tok.column, AsmErrorKind::Syntax(format!("expected a register, found `{t}`"))));
    }
    match digits.parse::<u32>() {
        Ok(n) if n < NUM_REGS as u32 => Ok((file, n as u8)),
        _ => Err(err(line, tok.column, AsmErrorKind::RegisterOutOfRange(t.to_string()))),
    }
}

fn parse_imm16(tok: &Token<'_>, line: usize, allow_unsigned: bool) -> Result<i16, AsmError> {
    let v = parse_int(tok.text)
        .ok_or_else(|| err(line, tok.column, AsmErrorKind::Syntax(format!("expected an immediate, found `{}`", tok.text))))?;
    let max = if allow_unsigned { 0xffff } else { i16::MAX as i64 };
    if v < i16::MIN as i64 || v > max {
        return Err(err(line, tok.column, AsmErrorKind::ImmediateOutOfRange(v)));
    }
    Ok(v as u16 as i16)
}

/// `imm(rN)` or `(rN)`.
fn parse_mem_operand(tok: &Token<'_>, line: usize) -> Result<(i16, u8), AsmError> {
    let t = tok.text;
    let bad = || err(line, tok.column, AsmErrorKind::Syntax(format!("expected `offset(rN)`, found `{t}`")));
    let open = t.find('(').ok_or_else(bad)?;
    let inner = t[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let offset_text = t[..open].trim();
    let offset = if offset_text.is_empty() {
        0
    } else {
        parse_imm16(&Token { text: offset_text, column: tok.column }, line, false)?
    };
    let base_tok = Token { text: inner.trim(), column: tok.column + open + 1 };
    let base = parse_reg(&base_tok, RegFile::Int, line)?;
    Ok((offset, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Opcode;

    fn one(src: &str) -> Instruction {
        parse_assembly(src).unwrap().instructions().unwrap()[0]
    }

    #[test]
    fn register_form() {
        assert_eq!(one("add r1, r2, r3"), Instruction::reg3(Opcode::Add, 1, 2, 3));
    }

    #[test]
    fn self_loop_resolves_to_own_index() {
        let p = parse_assembly("nop\nloop: bne r1, r0, loop").unwrap();
        let ins = p.instructions().unwrap()[1];
        assert_eq!(ins.branch_target(1), Some(1));
        assert_eq!(p.labels["loop"], 1);
    }

    #[test]
    fn quad_precision_is_unknown() {
        let e = parse_assembly("fma.q f1,f2,f3,f4").unwrap_err();
        assert_eq!(e.kind, AsmErrorKind::UnknownMnemonic("fma.q".into()));
        assert_eq!((e.line, e.column), (1, 1));
    }

    #[test]
    fn error_kinds() {
        let kind = |s: &str| parse_assembly(s).unwrap_err().kind;
        assert!(matches!(kind("add r1, r2, r32"), AsmErrorKind::RegisterOutOfRange(_)));
        assert!(matches!(kind("beq r1, r2, nowhere"), AsmErrorKind::UndefinedLabel(_)));
        assert!(matches!(kind("addi r1, r1, 40000"), AsmErrorKind::ImmediateOutOfRange(40000)));
        assert!(matches!(kind("a: nop\na: nop"), AsmErrorKind::DuplicateLabel(_)));
        assert!(matches!(kind("add r1, r2"), AsmErrorKind::Syntax(_)));
        assert!(matches!(kind("fadd.d f1, r2, f3"), AsmErrorKind::WrongRegisterFile { .. }));
        assert!(matches!(kind("frobnicate r1"), AsmErrorKind::UnknownMnemonic(_)));
    }

    #[test]
    fn error_column_points_at_operand() {
        let e = parse_assembly("  add r1, r2, r99").unwrap_err();
        assert_eq!(e.column, 15);
    }

    #[test]
    fn memory_operands_select_register_file() {
        assert_eq!(one("ld f6, 8(r2)").op, Opcode::Fld);
        assert_eq!(one("ld r6, -8(r2)"), Instruction::load(Opcode::Ld, 6, 2, -8));
        assert_eq!(one("sls f3, 16(r4)"), Instruction::store(Opcode::Fsls, 3, 4, 16));
        assert_eq!(one("flush (r7)"), Instruction::addr(Opcode::Flush, 7, 0));
    }

    #[test]
    fn data_directives() {
        let p = parse_assembly(".data 0x1000\nv: .word64 1, -1\n.space 3\nw: .word64 0x10\n.text\nhalt").unwrap();
        assert_eq!(p.data_base, 0x1000);
        assert_eq!(p.data.len(), 8 + 8 + 3 + 8);
        assert_eq!(&p.data[8..16], &(-1i64).to_le_bytes());
        assert_eq!(p.data_labels["w"], 0x1000 + 19);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn lui_accepts_unsigned_halfword() {
        assert_eq!(one("lui r1, 0xffff").imm, -1);
        assert_eq!(one("sync.city").op, Opcode::SyncCity);
        assert_eq!(one("fsqrt.h f1, f2").prec, Some(Precision::Half));
    }

    #[test]
    fn deterministic() {
        let src = "main: tid r3\nloop: addi r3, r3, -1\nbne r3, r0, loop\nhalt";
        assert_eq!(parse_assembly(src).unwrap(), parse_assembly(src).unwrap());
    }
}
