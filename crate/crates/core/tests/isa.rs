//! Assembler, encoder and disassembler behaviour seen from outside the crate.

use std::path::PathBuf;

use proptest::prelude::*;
use sc3sim::isa::{decode, disassemble, encode, parse_assembly, Instruction, Opcode, Precision, Program};
use sc3sim::kernels::dgemm::dgemm_source;
use sc3sim::kernels::litmus::litmus_source;
use sc3sim::kernels::manifest::default_suite;
use sc3sim::kernels::vecadd::vecadd_source;
use sc3sim::kernels::{KernelSpec, LitmusKind, VecaddVariant};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn one(src: &str) -> Instruction {
    let p = parse_assembly(src).unwrap();
    assert_eq!(p.len(), 1);
    p.instructions().unwrap()[0]
}

#[test]
fn add_parses_into_register_fields() {
    assert_eq!(one("add r1, r2, r3"), Instruction::reg3(Opcode::Add, 1, 2, 3));
}

#[test]
fn self_branch_targets_its_own_index() {
    let p = parse_assembly("nop\nloop: bne r1, r0, loop\nhalt").unwrap();
    let ins = p.instructions().unwrap();
    assert_eq!(ins[1].branch_target(1), Some(1));
}

#[test]
fn quad_precision_does_not_exist() {
    let err = parse_assembly("fma.q f1, f2, f3, f4").unwrap_err();
    assert!(err.to_string().contains("fma.q"), "{err}");
}

#[test]
fn zero_word_decodes_as_nop() {
    assert_eq!(decode(0).unwrap(), Instruction::nop());
    assert_eq!(encode(&Instruction::nop()), 0);
}

#[test]
fn unassigned_opcode_is_illegal() {
    assert!(decode(0x3F << 26).is_err());
}

#[test]
fn single_halt_disassembles_to_halt() {
    let p = Program::new(vec![Instruction::halt()], 0, Vec::new());
    assert!(disassemble(&p).lines().any(|l| l.trim() == "halt"));
}

#[test]
fn image_round_trip_preserves_words_and_data() {
    let src = ".data 0x8000\nv: .word64 7, 9\n.text\nmain: ld r3, 0(r2)\nfma.d f1, f2, f3, f4\nhalt";
    let p = parse_assembly(src).unwrap();
    let back = Program::from_image(&p.to_image()).unwrap();
    assert!(p.same_image(&back));
}

fn assert_disassembly_round_trips(src: &str) {
    let p = parse_assembly(src).unwrap();
    let text = disassemble(&p);
    let again = parse_assembly(&text).unwrap_or_else(|e| panic!("re-assembling disassembly: {e}\n{text}"));
    assert!(p.same_image(&again), "disassembly does not reassemble to the same image");
}

#[test]
fn kernels_survive_disassembly() {
    assert_disassembly_round_trips(&vecadd_source(VecaddVariant::SingleGroup));
    assert_disassembly_round_trips(&vecadd_source(VecaddVariant::DualGroup));
    for kind in LitmusKind::ALL {
        assert_disassembly_round_trips(&litmus_source(kind));
    }
    for case in &default_suite().cases {
        if let KernelSpec::Dgemm(p) = &case.spec {
            assert_disassembly_round_trips(&dgemm_source(p).unwrap());
        }
    }
}

#[test]
fn assembling_twice_is_bit_identical() {
    let src = vecadd_source(VecaddVariant::DualGroup);
    assert_eq!(parse_assembly(&src).unwrap().to_image(), parse_assembly(&src).unwrap().to_image());
}

#[test]
fn checked_in_kernel_sources_are_current() {
    let dir = repo_root().join("kernels");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    assert_eq!(read("vecadd-single.s"), vecadd_source(VecaddVariant::SingleGroup));
    assert_eq!(read("vecadd-dual.s"), vecadd_source(VecaddVariant::DualGroup));
    for kind in LitmusKind::ALL {
        assert_eq!(read(&format!("litmus-{}.s", kind.name())), litmus_source(kind));
    }
    for name in ["dgemm-32", "dgemm-64"] {
        let suite = default_suite();
        let Some(KernelSpec::Dgemm(p)) = suite.find(name).map(|c| c.spec) else { panic!("{name} missing") };
        assert_eq!(read(&format!("{name}.s")), dgemm_source(&p).unwrap());
    }
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let src = std::fs::read_to_string(&path).unwrap();
        parse_assembly(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

fn arb_reg() -> impl Strategy<Value = u8> {
    0u8..32
}

fn arb_prec() -> impl Strategy<Value = Precision> {
    prop_oneof![Just(Precision::Double), Just(Precision::Single), Just(Precision::Half)]
}

fn arb_instruction() -> impl Strategy<Value = Instruction> {
    prop_oneof![
        (arb_reg(), arb_reg(), arb_reg()).prop_map(|(a, b, c)| Instruction::reg3(Opcode::Xor, a, b, c)),
        (arb_reg(), arb_reg(), any::<i16>()).prop_map(|(a, b, i)| Instruction::reg_imm(Opcode::Addi, a, b, i)),
        (arb_prec(), arb_reg(), arb_reg(), arb_reg(), arb_reg()).prop_map(|(p, a, b, c, d)| Instruction::fma(p, a, b, c, d)),
        (arb_prec(), arb_reg(), arb_reg()).prop_map(|(p, a, b)| Instruction::fsqrt(p, a, b)),
        (arb_reg(), arb_reg(), any::<i16>()).prop_map(|(a, b, i)| Instruction::load(Opcode::Ld, a, b, i)),
        (arb_reg(), arb_reg(), any::<i16>()).prop_map(|(a, b, i)| Instruction::store(Opcode::Fsw, a, b, i)),
        (arb_reg(), arb_reg(), any::<i16>()).prop_map(|(a, b, i)| Instruction::branch(Opcode::Bltu, a, b, i)),
        (arb_reg(), any::<i16>()).prop_map(|(a, i)| Instruction::jal(a, i)),
        (arb_reg(), any::<i16>()).prop_map(|(b, i)| Instruction::addr(Opcode::Flush, b, i)),
        (arb_reg(), arb_reg()).prop_map(|(a, b)| Instruction::pair(Opcode::Flushr, a, b)),
        Just(Instruction::simple(Opcode::Chg)),
        Just(Instruction::simple(Opcode::SyncChip)),
    ]
}

proptest! {
    #[test]
    fn decode_inverts_encode(ins in arb_instruction()) {
        prop_assert_eq!(decode(encode(&ins)).unwrap(), ins);
    }

    #[test]
    fn programs_round_trip_through_disassembly(body in prop::collection::vec(arb_instruction(), 1..40)) {
        // Keep branch targets inside the program so the listing can name them.
        let n = body.len() as i64 + 1;
        let text: Vec<Instruction> = body
            .into_iter()
            .enumerate()
            .map(|(pc, mut ins)| {
                if ins.branch_target(pc).is_some() {
                    ins.imm = ((ins.imm as i64).rem_euclid(n) - pc as i64) as i16;
                }
                ins
            })
            .chain([Instruction::halt()])
            .collect();
        let p = Program::new(text, 0x4000, vec![1, 2, 3]);
        let again = parse_assembly(&disassemble(&p)).unwrap();
        prop_assert!(p.same_image(&again));
    }
}
