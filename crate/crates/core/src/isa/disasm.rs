use std::collections::BTreeMap;
use std::fmt::Write;

use super::{Format, Instruction, Program};

fn r(n: u8) -> String {
    format!("r{n}")
}

fn f(n: u8) -> String {
    format!("f{n}")
}

/// Render one instruction. Branch and jump targets print as `target` when
/// given, otherwise as the numeric relative offset.
pub fn format_instruction(ins: &Instruction, target: Option<&str>) -> String {
    let name = match ins.prec {
        Some(p) => format!("{}.{}", ins.op.mnemonic(), p.suffix()),
        None => ins.op.mnemonic().to_string(),
    };
    let data = |n: u8| if ins.op.uses_fp_data() { f(n) } else { r(n) };
    let tgt = || target.map_or_else(|| ins.imm.to_string(), str::to_string);
    let operands = match ins.op.format() {
        Format::Reg3 => format!("{}, {}, {}", r(ins.rd), r(ins.rs1), r(ins.rs2)),
        Format::RegImm => format!("{}, {}, {}", r(ins.rd), r(ins.rs1), ins.imm),
        Format::Upper => format!("{}, {:#x}", r(ins.rd), ins.imm as u16),
        Format::Fp3 => format!("{}, {}, {}", f(ins.rd), f(ins.rs1), f(ins.rs2)),
        Format::Fp4 => format!("{}, {}, {}, {}", f(ins.rd), f(ins.rs1), f(ins.rs2), f(ins.rs3)),
        Format::Fp2 => format!("{}, {}", f(ins.rd), f(ins.rs1)),
        Format::Load => format!("{}, {}({})", data(ins.rd), ins.imm, r(ins.rs1)),
        Format::Store => format!("{}, {}({})", data(ins.rs2), ins.imm, r(ins.rs1)),
        Format::Branch => format!("{}, {}, {}", r(ins.rs1), r(ins.rs2), tgt()),
        Format::Jump => format!("{}, {}", r(ins.rd), tgt()),
        Format::Bare => String::new(),
        Format::Addr => format!("{}({})", ins.imm, r(ins.rs1)),
        Format::Pair => format!("{}, {}", r(ins.rs1), r(ins.rs2)),
        Format::Dest => r(ins.rd),
    };
    if operands.is_empty() {
        name
    } else {
        format!("{name} {operands}")
    }
}

/// Render a program as assembly that re-assembles to the same instruction
/// words and data segment. Illegal words (only possible in images loaded from
/// binary) are rendered as comments and do not survive the round trip.
pub fn disassemble(program: &Program) -> String {
    let mut out = String::new();
    let _ = writeln!(out, ".data {:#x}", program.data_base);
    write_data(&mut out, &program.data);
    out.push_str(".text\n");

    let mut names: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        names.entry(idx).or_default().push(name.clone());
    }
    for pc in 0..program.len() {
        if let Some(Ok(ins)) = program.fetch(pc) {
            if let Some(t) = ins.branch_target(pc) {
                let t = t as usize;
                names.entry(t).or_insert_with(|| vec![format!("L{t}")]);
            }
        }
    }

    for (pc, word) in program.words().iter().enumerate() {
        if let Some(labels) = names.get(&pc) {
            for l in labels {
                let _ = writeln!(out, "{l}:");
            }
        }
        match program.fetch(pc) {
            Some(Ok(ins)) => {
                let target = ins.branch_target(pc).and_then(|t| names.get(&(t as usize))).map(|v| v[0].as_str());
                let _ = writeln!(out, "    {}", format_instruction(&ins, target));
            }
            _ => {
                let _ = writeln!(out, "    # illegal word {word:#010x}");
            }
        }
    }
    // Labels that point one past the last instruction.
    for labels in names.range(program.len()..).map(|(_, v)| v) {
        for l in labels {
            let _ = writeln!(out, "{l}:");
        }
    }
    out
}

fn write_data(out: &mut String, data: &[u8]) {
    let mut chunks = data.chunks_exact(8).peekable();
    while let Some(chunk) = chunks.next() {
        let value = u64::from_le_bytes(chunk.try_into().unwrap());
        if value == 0 {
            let mut zeros = 8;
            while chunks.peek().is_some_and(|c| c.iter().all(|&b| b == 0)) {
                chunks.next();
                zeros += 8;
            }
            let _ = writeln!(out, "    .space {zeros}");
        } else {
            let _ = writeln!(out, "    .word64 {value:#x}");
        }
    }
    let tail = &data[data.len() - data.len() % 8..];
    if !tail.is_empty() {
        if tail.iter().all(|&b| b == 0) {
            let _ = writeln!(out, "    .space {}", tail.len());
        } else {
            let bytes: Vec<String> = tail.iter().map(|b| format!("{b:#x}")).collect();
            let _ = writeln!(out, "    .byte {}", bytes.join(", "));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    #[test]
    fn single_halt() {
        let p = parse_assembly("halt").unwrap();
        let text = disassemble(&p);
        assert!(text.lines().any(|l| l.trim() == "halt"));
        assert_eq!(format_instruction(&Instruction::halt(), None), "halt");
    }

    #[test]
    fn empty_program() {
        let p = parse_assembly("").unwrap();
        let text = disassemble(&p);
        assert_eq!(text, ".data 0x0\n.text\n");
        assert!(parse_assembly(&text).unwrap().same_image(&p));
    }

    #[test]
    fn round_trip_with_labels_and_data() {
        let src = "\
.data 0x2000
buf: .word64 -1
     .space 3
     .word64 7, 0
     .space 17
     .word64 -1
.text
main: tid r5
loop: addi r5, r5, -1
      fma.s f1, f2, f3, f4
      sd f1, 8(r2)
      lw r9, -4(r3)
      bne r5, r0, loop
      jal r31, done
      chg
done: halt
";
        let p = parse_assembly(src).unwrap();
        let text = disassemble(&p);
        let q = parse_assembly(&text).unwrap();
        assert!(q.same_image(&p), "{text}");
    }
}
