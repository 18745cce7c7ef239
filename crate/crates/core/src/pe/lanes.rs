//! Packed floating-point lane arithmetic on 64-bit registers.
//!
//! DP uses the whole register; SP packs two `f32` lanes (lane 0 in bits
//! 31:0); HP packs four binary16 lanes (lane 0 in bits 15:0). Every lane
//! result is rounded once to the instruction's precision, except HP fused
//! multiply-add, which is evaluated in `f64` and then rounded to binary16
//! and can therefore differ from a correctly rounded fused result in rare
//! double-rounding cases.

use half::f16;

use crate::isa::{Opcode, Precision};

fn map_lanes(prec: Precision, srcs: &[u64], f: impl Fn(&[f64]) -> f64) -> u64 {
    let (width, lanes) = match prec {
        Precision::Double => return f(&srcs.iter().map(|&s| f64::from_bits(s)).collect::<Vec<_>>()).to_bits(),
        Precision::Single => (32, 2),
        Precision::Half => (16, 4),
    };
    let mask = (1u64 << width) - 1;
    let mut out = 0u64;
    let mut vals = [0f64; 3];
    for lane in 0..lanes {
        let shift = lane * width;
        for (v, &s) in vals.iter_mut().zip(srcs) {
            let bits = (s >> shift) & mask;
            *v = match prec {
                Precision::Single => f32::from_bits(bits as u32) as f64,
                _ => f16::from_bits(bits as u16).to_f64(),
            };
        }
        let r = f(&vals[..srcs.len()]);
        let bits = match prec {
            Precision::Single => (r as f32).to_bits() as u64,
            _ => f16::from_f64(r).to_bits() as u64,
        };
        out |= bits << shift;
    }
    out
}

fn min_num(a: f64, b: f64) -> f64 {
    a.min(b)
}

fn max_num(a: f64, b: f64) -> f64 {
    a.max(b)
}

/// Two-operand lane-wise operation (`fadd fsub fmul fmin fmax fdiv`).
///
/// SP and HP evaluate each lane in `f64` and round once; for these
/// operations the wider intermediate is exact enough that the result is
/// the correctly rounded one.
pub fn binary(op: Opcode, prec: Precision, a: u64, b: u64) -> u64 {
    let f: fn(f64, f64) -> f64 = match op {
        Opcode::Fadd => |x, y| x + y,
        Opcode::Fsub => |x, y| x - y,
        Opcode::Fmul => |x, y| x * y,
        Opcode::Fdiv => |x, y| x / y,
        Opcode::Fmin => min_num,
        Opcode::Fmax => max_num,
        _ => panic!("{op:?} is not a binary FP op"),
    };
    if prec == Precision::Single {
        // Keep SP arithmetic in f32 so that the single rounding is exact.
        return sp_lanes(a, b, 0, |x, y, _| match op {
            Opcode::Fadd => x + y,
            Opcode::Fsub => x - y,
            Opcode::Fmul => x * y,
            Opcode::Fdiv => x / y,
            Opcode::Fmin => x.min(y),
            _ => x.max(y),
        });
    }
    map_lanes(prec, &[a, b], |v| f(v[0], v[1]))
}

fn sp_lanes(a: u64, b: u64, c: u64, f: impl Fn(f32, f32, f32) -> f32) -> u64 {
    let mut out = 0;
    for lane in 0..2 {
        let s = lane * 32;
        let get = |r: u64| f32::from_bits((r >> s) as u32);
        out |= (f(get(a), get(b), get(c)).to_bits() as u64) << s;
    }
    out
}

/// Fused multiply-add `a × b + c` per lane.
pub fn fma(prec: Precision, a: u64, b: u64, c: u64) -> u64 {
    match prec {
        Precision::Double => f64::from_bits(a).mul_add(f64::from_bits(b), f64::from_bits(c)).to_bits(),
        Precision::Single => sp_lanes(a, b, c, |x, y, z| x.mul_add(y, z)),
        Precision::Half => map_lanes(prec, &[a, b, c], |v| v[0].mul_add(v[1], v[2])),
    }
}

/// Lane-wise square root.
pub fn sqrt(prec: Precision, a: u64) -> u64 {
    match prec {
        Precision::Single => sp_lanes(a, 0, 0, |x, _, _| x.sqrt()),
        _ => map_lanes(prec, &[a], |v| v[0].sqrt()),
    }
}

/// Pack `lanes` copies of `x` at the given precision.
pub fn splat(prec: Precision, x: f64) -> u64 {
    match prec {
        Precision::Double => x.to_bits(),
        Precision::Single => {
            let b = (x as f32).to_bits() as u64;
            b | b << 32
        }
        Precision::Half => {
            let b = f16::from_f64(x).to_bits() as u64;
            b | b << 16 | b << 32 | b << 48
        }
    }
}

/// Unpack every lane as `f64`.
pub fn unpack(prec: Precision, r: u64) -> Vec<f64> {
    match prec {
        Precision::Double => vec![f64::from_bits(r)],
        Precision::Single => (0..2).map(|l| f32::from_bits((r >> (32 * l)) as u32) as f64).collect(),
        Precision::Half => (0..4).map(|l| f16::from_bits((r >> (16 * l)) as u16).to_f64()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_fma_all_precisions() {
        for p in Precision::ALL {
            let r = fma(p, splat(p, 2.0), splat(p, 3.0), splat(p, 1.0));
            assert_eq!(r, splat(p, 7.0), "{p:?}");
            assert_eq!(unpack(p, r), vec![7.0; p.lanes() as usize]);
        }
    }

    #[test]
    fn lanes_are_independent() {
        let a = (1.5f32.to_bits() as u64) | (4.0f32.to_bits() as u64) << 32;
        let b = (2.0f32.to_bits() as u64) | (0.5f32.to_bits() as u64) << 32;
        assert_eq!(unpack(Precision::Single, binary(Opcode::Fmul, Precision::Single, a, b)), vec![3.0, 2.0]);
        assert_eq!(unpack(Precision::Single, binary(Opcode::Fmin, Precision::Single, a, b)), vec![1.5, 0.5]);
    }

    #[test]
    fn sqrt_and_div() {
        assert_eq!(sqrt(Precision::Double, 4.0f64.to_bits()), 2.0f64.to_bits());
        assert_eq!(sqrt(Precision::Half, splat(Precision::Half, 9.0)), splat(Precision::Half, 3.0));
        let q = binary(Opcode::Fdiv, Precision::Double, 1.0f64.to_bits(), 4.0f64.to_bits());
        assert_eq!(f64::from_bits(q), 0.25);
    }

    #[test]
    fn half_rounding_matches_native() {
        let a = f16::from_f32(0.1);
        let b = f16::from_f32(0.2);
        let r = binary(Opcode::Fadd, Precision::Half, a.to_bits() as u64, b.to_bits() as u64);
        assert_eq!(r as u16, f16::from_f64(a.to_f64() + b.to_f64()).to_bits());
    }

    #[test]
    fn dp_fma_is_fused() {
        let a = 1.0 + 2f64.powi(-30);
        let r = fma(Precision::Double, a.to_bits(), a.to_bits(), (-1.0f64).to_bits());
        assert_eq!(f64::from_bits(r), a.mul_add(a, -1.0));
        assert_ne!(f64::from_bits(r), a * a - 1.0);
    }
}
