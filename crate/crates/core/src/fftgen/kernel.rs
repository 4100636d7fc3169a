//! Straight-line radix-r butterfly kernels built from radix-2 decimation-in-frequency
//! stages, with strength-reduced rotations.

use serde::Serialize;

use super::emitter::Emitter;
use super::twiddle::{kernel_twiddles, TwiddleClass};
use crate::isa::{Opcode, Reg};

/// Sign bit of an IEEE-754 single.
pub const SIGN_BIT: u32 = 0x8000_0000;

/// How a result that only needs to change register is materialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MoveStyle {
    /// Rename the slot; no instruction.
    Free,
    /// Integer `MOV`.
    Int,
    /// `FADD x + 0.0`.
    Fp,
}

/// How `(re, im) -> (im, -re)` is materialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NegJStyle {
    /// `FADD` for the copy, `FSUB 0 - x` for the negation.
    FpFp,
    /// `MOV` for the copy, `FSUB 0 - x` for the negation.
    IntFp,
    /// `MOV` for the copy, `IXOR` with the sign bit for the negation.
    IntInt,
}

/// How the per-pass twiddle table is addressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TwiddleAddr {
    /// One pointer register initialised once and advanced with `IADD` per factor.
    Advance,
    /// Each load uses its own constant offset register.
    Offsets,
}

/// How imaginary-plane addresses are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImAddr {
    /// Constant offsets that already include the plane base.
    Offsets,
    /// A dedicated imaginary base register in every pass.
    BaseReg,
    /// A dedicated imaginary base register in the last pass only.
    BaseRegLast,
}

/// Code-shape choices for one radix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelStyle {
    pub unity_inner: MoveStyle,
    pub unity_last: MoveStyle,
    pub neg_j: NegJStyle,
    /// Route in-kernel general and equal-magnitude rotations through the complex unit
    /// when it is available.
    pub complex_inner: bool,
    pub twiddle_addr: TwiddleAddr,
    pub twiddle_addr_complex: TwiddleAddr,
    pub im_addr: ImAddr,
}

impl KernelStyle {
    pub fn for_radix(radix: usize) -> KernelStyle {
        match radix {
            2 => KernelStyle {
                unity_inner: MoveStyle::Int,
                unity_last: MoveStyle::Free,
                neg_j: NegJStyle::IntFp,
                complex_inner: false,
                twiddle_addr: TwiddleAddr::Advance,
                twiddle_addr_complex: TwiddleAddr::Advance,
                im_addr: ImAddr::Offsets,
            },
            4 => KernelStyle {
                unity_inner: MoveStyle::Fp,
                unity_last: MoveStyle::Free,
                neg_j: NegJStyle::FpFp,
                complex_inner: false,
                twiddle_addr: TwiddleAddr::Advance,
                twiddle_addr_complex: TwiddleAddr::Advance,
                im_addr: ImAddr::BaseRegLast,
            },
            8 => KernelStyle {
                unity_inner: MoveStyle::Int,
                unity_last: MoveStyle::Int,
                neg_j: NegJStyle::IntFp,
                complex_inner: false,
                twiddle_addr: TwiddleAddr::Advance,
                twiddle_addr_complex: TwiddleAddr::Offsets,
                im_addr: ImAddr::Offsets,
            },
            _ => KernelStyle {
                unity_inner: MoveStyle::Int,
                unity_last: MoveStyle::Fp,
                neg_j: NegJStyle::IntInt,
                complex_inner: true,
                twiddle_addr: TwiddleAddr::Advance,
                twiddle_addr_complex: TwiddleAddr::Advance,
                im_addr: ImAddr::BaseReg,
            },
        }
    }

    pub fn twiddle_addr(&self, complex: bool) -> TwiddleAddr {
        if complex {
            self.twiddle_addr_complex
        } else {
            self.twiddle_addr
        }
    }
}

/// Slot index of the real part of element `e`; the imaginary part follows it.
pub fn re_slot(e: usize) -> usize {
    2 * e
}

pub fn im_slot(e: usize) -> usize {
    2 * e + 1
}

/// Bit reversal of `m` over `log2(radix)` bits: the kernel position holding output `m`.
pub fn output_position(m: usize, radix: usize) -> usize {
    let bits = radix.trailing_zeros();
    if bits == 0 {
        return 0;
    }
    m.reverse_bits() >> (usize::BITS - bits)
}

/// Emits one radix-`radix` kernel over elements `first..first + radix`. Output `m` ends up
/// in element `first + output_position(m, radix)`.
pub(crate) fn emit_kernel(
    em: &mut Emitter,
    radix: usize,
    first: usize,
    complex: bool,
    style: &KernelStyle,
) {
    // kernel_twiddles lists stages from span `radix` down, block by block, exponent
    // 0..span/2, which is exactly the butterfly order.
    let mut counter = vec![0usize; radix + 1];
    for tw in kernel_twiddles(radix) {
        let half = tw.span / 2;
        let k = counter[tw.span];
        counter[tw.span] += 1;
        let a = first + (k / half) * tw.span + tw.exponent;
        butterfly(
            em,
            a,
            a + half,
            tw.class,
            tw.value,
            tw.span == 2,
            complex,
            style,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn butterfly(
    em: &mut Emitter,
    a: usize,
    c: usize,
    class: TwiddleClass,
    w: (f64, f64),
    last: bool,
    complex: bool,
    style: &KernelStyle,
) {
    let (ar, ai) = (em.slot(re_slot(a)), em.slot(im_slot(a)));
    let (cr, ci) = (em.slot(re_slot(c)), em.slot(im_slot(c)));
    let tr = em.fresh();
    let ti = em.fresh();
    em.op(Opcode::Fsub, tr, ar, cr);
    em.op(Opcode::Fsub, ti, ai, ci);
    em.op(Opcode::Fadd, ar, ar, cr);
    em.op(Opcode::Fadd, ai, ai, ci);
    rotate(em, c, tr, ti, class, w, last, complex, style);
}

/// Writes `(tr + j·ti)·w` into element `c`, consuming the scratch registers `tr`, `ti`.
#[allow(clippy::too_many_arguments)]
fn rotate(
    em: &mut Emitter,
    c: usize,
    tr: Reg,
    ti: Reg,
    class: TwiddleClass,
    w: (f64, f64),
    last: bool,
    complex: bool,
    style: &KernelStyle,
) {
    let (rs, is) = (re_slot(c), im_slot(c));
    let zero = em.zero;
    match class {
        TwiddleClass::Unity => {
            let mv = if last {
                style.unity_last
            } else {
                style.unity_inner
            };
            match mv {
                MoveStyle::Free => {
                    em.rebind(rs, tr);
                    em.rebind(is, ti);
                }
                MoveStyle::Int => {
                    em.mov(em.slot(rs), tr);
                    em.mov(em.slot(is), ti);
                    em.release(tr);
                    em.release(ti);
                }
                MoveStyle::Fp => {
                    em.op(Opcode::Fadd, em.slot(rs), tr, zero);
                    em.op(Opcode::Fadd, em.slot(is), ti, zero);
                    em.release(tr);
                    em.release(ti);
                }
            }
        }
        // (tr + j·ti)·(−j) = ti − j·tr
        TwiddleClass::NegJ => negate_swap(em, rs, is, ti, tr, style),
        // (tr + j·ti)·j = −ti + j·tr
        TwiddleClass::PosJ => negate_swap(em, is, rs, tr, ti, style),
        TwiddleClass::Negate => {
            em.op(Opcode::Fsub, em.slot(rs), zero, tr);
            em.op(Opcode::Fsub, em.slot(is), zero, ti);
            em.release(tr);
            em.release(ti);
        }
        TwiddleClass::EqualMag | TwiddleClass::General if complex && style.complex_inner => {
            complex_multiply(em, rs, is, tr, ti, w);
        }
        TwiddleClass::EqualMag => {
            // w = (σr·k, σi·k). re = k(σr·tr − σi·ti), im = k(σr·ti + σi·tr).
            let k = w.0.abs() as f32;
            let (sr, si) = (w.0.signum(), w.1.signum());
            let sum = em.fresh();
            let diff = em.fresh();
            em.op(Opcode::Fadd, sum, tr, ti);
            em.op(Opcode::Fsub, diff, tr, ti);
            let (re_src, re_k) = if sr == si { (diff, sr) } else { (sum, sr) };
            let (im_src, im_k) = if sr == si { (sum, si) } else { (diff, si) };
            // σr == σi:  re = σr·k·(tr − ti), im = σi·k·(tr + ti).
            // σr == −σi: re = σr·k·(tr + ti), im = σi·k·(tr − ti).
            let kr = em.konst_f32((re_k as f32) * k);
            em.op(Opcode::Fmul, em.slot(rs), re_src, kr);
            let ki = em.konst_f32((im_k as f32) * k);
            em.op(Opcode::Fmul, em.slot(is), im_src, ki);
            for r in [tr, ti, sum, diff] {
                em.release(r);
            }
        }
        TwiddleClass::General => {
            let wr = em.konst_f32(w.0 as f32);
            let wi = em.konst_keep((w.1 as f32).to_bits(), &[wr]);
            real_multiply(em, rs, is, tr, ti, wr, wi);
            em.release(tr);
            em.release(ti);
        }
    }
}

/// `(dst_copy, dst_neg) = (copy, −neg)` using the configured instruction mix.
fn negate_swap(
    em: &mut Emitter,
    dst_copy: usize,
    dst_neg: usize,
    copy: Reg,
    neg: Reg,
    style: &KernelStyle,
) {
    let zero = em.zero;
    match style.neg_j {
        NegJStyle::FpFp => {
            em.op(Opcode::Fadd, em.slot(dst_copy), copy, zero);
            em.op(Opcode::Fsub, em.slot(dst_neg), zero, neg);
        }
        NegJStyle::IntFp => {
            em.mov(em.slot(dst_copy), copy);
            em.op(Opcode::Fsub, em.slot(dst_neg), zero, neg);
        }
        NegJStyle::IntInt => {
            em.mov(em.slot(dst_copy), copy);
            let sign = em.konst(SIGN_BIT);
            em.op(Opcode::Ixor, em.slot(dst_neg), neg, sign);
        }
    }
    em.release(copy);
    em.release(neg);
}

/// Six-flop complex multiply of `(xr, xi)` by `(wr, wi)` into the given slots.
pub(crate) fn real_multiply(
    em: &mut Emitter,
    rs: usize,
    is: usize,
    xr: Reg,
    xi: Reg,
    wr: Reg,
    wi: Reg,
) {
    let t1 = em.fresh();
    let t2 = em.fresh();
    let t3 = em.fresh();
    em.op(Opcode::Fmul, t1, xr, wr);
    em.op(Opcode::Fmul, t2, xi, wi);
    em.op(Opcode::Fmul, t3, xr, wi);
    em.op(Opcode::Fsub, em.slot(rs), t1, t2);
    em.op(Opcode::Fmul, t1, xi, wr);
    em.op(Opcode::Fadd, em.slot(is), t3, t1);
    for r in [t1, t2, t3] {
        em.release(r);
    }
}

/// Complex-unit multiply of `(xr, xi)` by the constant `w` into the given slots.
fn complex_multiply(em: &mut Emitter, rs: usize, is: usize, xr: Reg, xi: Reg, w: (f64, f64)) {
    let wr = em.konst_f32(w.0 as f32);
    let wi = em.konst_keep((w.1 as f32).to_bits(), &[wr]);
    em.push(crate::isa::Instruction::lod_coeff(wr, wi));
    em.op(Opcode::MulReal, em.slot(rs), xr, xi);
    em.op(Opcode::MulImag, em.slot(is), xr, xi);
    em.release(xr);
    em.release(xi);
}
