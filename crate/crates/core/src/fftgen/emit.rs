//! Whole-program emission: per-pass addressing, loads, kernels, twiddles and stores.

use std::collections::BTreeMap;

use serde::Serialize;

use super::emitter::{Emitter, Role, Tag};
use super::kernel::{
    emit_kernel, im_slot, output_position, re_slot, real_multiply, ImAddr, KernelStyle, TwiddleAddr,
};
use super::schedule::schedule;
use super::{FftPlan, PlanError};
use crate::cycles::{instruction_cost, CycleBreakdown, CycleCategory};
use crate::isa::{Instruction, Opcode, Program, Reg};
use crate::machine::{MachineConfig, MemoryMode};

const TID: Reg = Reg(0);
const ZERO: Reg = Reg(1);
const BASE: Reg = Reg(2);
/// Twiddle pointer (or `j`) in non-final passes, digit-reversed thread index in the last.
const AUX: Reg = Reg(3);
const BASE_IM: Reg = Reg(4);
const AUX_IM: Reg = Reg(5);

/// Scratch registers beyond the data slots: two butterfly differences plus three
/// multiply temporaries, or two twiddle parts plus three multiply temporaries.
const SPARE_VALUES: usize = 5;

fn log2(x: usize) -> u32 {
    x.trailing_zeros()
}

/// Register map for a given number of data elements held at once.
fn new_emitter(elements: usize, style: &KernelStyle, regs: usize) -> Result<Emitter, PlanError> {
    let fixed = if style.im_addr == ImAddr::Offsets {
        4
    } else {
        6
    };
    let values = 2 * elements + SPARE_VALUES;
    if fixed + values + 2 > regs {
        return Err(PlanError::Config(format!(
            "{regs} registers per thread cannot hold {elements} elements"
        )));
    }
    let value_regs = (fixed..fixed + values).map(|r| Reg(r as u16)).collect();
    let const_regs = (fixed + values..regs).map(|r| Reg(r as u16)).collect();
    Ok(Emitter::new(ZERO, value_regs, 2 * elements, const_regs))
}

/// Emits the unscheduled instruction stream of every pass.
fn emit_passes(plan: &FftPlan, config: &MachineConfig) -> Result<Emitter, PlanError> {
    if config.threads != plan.threads {
        return Err(PlanError::Config(format!(
            "config has {} threads, plan needs {}",
            config.threads, plan.threads
        )));
    }
    let style = KernelStyle::for_radix(plan.radix);
    let mut em = new_emitter(plan.radix, &style, config.regs_per_thread)?;
    let complex = config.complex_enabled;
    for p in 0..plan.passes() {
        if plan.is_last(p) {
            emit_last_pass(&mut em, plan, p, complex, &style);
        } else {
            let banked = config.memory == MemoryMode::Vm && plan.vm_eligible[p];
            emit_inner_pass(&mut em, plan, p, complex, banked, &style);
        }
    }
    Ok(em)
}

/// Data address `offset` in the imaginary plane relative to `base` / `base_im`.
fn im_operands(
    em: &mut Emitter,
    use_reg: bool,
    base: Reg,
    base_im: Reg,
    offset: usize,
    n: usize,
) -> (Reg, Reg) {
    if use_reg {
        (base_im, em.konst(offset as u32))
    } else {
        (base, em.konst((n + offset) as u32))
    }
}

fn emit_inner_pass(
    em: &mut Emitter,
    plan: &FftPlan,
    p: usize,
    complex: bool,
    banked: bool,
    style: &KernelStyle,
) {
    let (r, s, n) = (plan.schedule[p], plan.strides[p], plan.points);
    let (lr, ls) = (log2(r), log2(s));

    em.set_tag(p, Role::Addressing);
    let (base, j) = if p == 0 {
        (TID, TID)
    } else {
        let k = em.konst(ls);
        em.op(Opcode::Ishr, BASE, TID, k);
        let k = em.konst(ls + lr);
        em.op(Opcode::Ishl, BASE, BASE, k);
        let k = em.konst((s - 1) as u32);
        em.op(Opcode::Iand, AUX, TID, k);
        em.op(Opcode::Ior, BASE, BASE, AUX);
        (BASE, AUX)
    };
    let im_reg = style.im_addr == ImAddr::BaseReg;
    if im_reg {
        let k = em.konst(n as u32);
        em.op(Opcode::Iadd, BASE_IM, base, k);
    }

    em.set_role(Role::DataLoad);
    for k in 0..r {
        let off = em.konst((k * s) as u32);
        em.op(Opcode::Lod, em.slot(re_slot(k)), base, off);
        let (b, off) = im_operands(em, im_reg, base, BASE_IM, k * s, n);
        em.op(Opcode::Lod, em.slot(im_slot(k)), b, off);
    }

    em.set_role(Role::Kernel);
    emit_kernel(em, r, 0, complex, style);

    let table = plan.layout.twiddles[p];
    let addr_style = style.twiddle_addr(complex);
    if addr_style == TwiddleAddr::Advance {
        em.set_role(Role::TwiddleAddr);
        let k = em.konst(table.base as u32);
        em.op(Opcode::Iadd, AUX, j, k);
    }
    for m in 1..r {
        let e = output_position(m, r);
        let wr = em.fresh();
        let wi = em.fresh();
        em.set_role(Role::TwiddleLoad);
        match addr_style {
            TwiddleAddr::Advance => {
                em.op(Opcode::Lod, wr, AUX, ZERO);
                let k = em.konst(s as u32);
                em.op(Opcode::Lod, wi, AUX, k);
                if m + 1 < r {
                    em.set_role(Role::TwiddleAddr);
                    let k = em.konst((2 * s) as u32);
                    em.op(Opcode::Iadd, AUX, AUX, k);
                }
            }
            TwiddleAddr::Offsets => {
                let k = em.konst(table.re_addr(m, 0) as u32);
                em.op(Opcode::Lod, wr, j, k);
                let k = em.konst(table.im_addr(m, 0) as u32);
                em.op(Opcode::Lod, wi, j, k);
            }
        }
        em.set_role(Role::Twiddle);
        let (rs, is) = (re_slot(e), im_slot(e));
        let (xr, xi) = (em.slot(rs), em.slot(is));
        if complex {
            em.push(Instruction::lod_coeff(wr, wi));
            let t = em.fresh();
            em.op(Opcode::MulImag, t, xr, xi);
            em.op(Opcode::MulReal, xr, xr, xi);
            em.rebind(is, t);
        } else {
            real_multiply(em, rs, is, xr, xi, wr, wi);
        }
        em.release(wr);
        em.release(wi);
    }

    em.set_role(Role::Store);
    let op = if banked {
        Opcode::SaveBank
    } else {
        Opcode::Save
    };
    for m in 0..r {
        let e = output_position(m, r);
        let off = em.konst((m * s) as u32);
        em.store(op, em.slot(re_slot(e)), base, off);
        let (b, off) = im_operands(em, im_reg, base, BASE_IM, m * s, n);
        em.store(op, em.slot(im_slot(e)), b, off);
    }
}

/// A run of consecutive thread-index bits that moves as a unit under digit reversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BitField {
    src: u32,
    width: u32,
    dst: u32,
}

/// Bit fields mapping thread `t` to the frequency offset of its first last-pass element.
fn reversal_fields(plan: &FftPlan) -> Vec<BitField> {
    let r = plan.schedule[plan.passes() - 1];
    let lt = log2(plan.threads);
    let dest = |i: u32| log2(plan.frequency_of((1usize << i) * r));
    let mut fields: Vec<BitField> = Vec::new();
    for i in 0..lt {
        let d = dest(i);
        match fields.last_mut() {
            Some(f) if f.src + f.width == i && f.dst + f.width == d => f.width += 1,
            _ => fields.push(BitField {
                src: i,
                width: 1,
                dst: d,
            }),
        }
    }
    fields
}

/// Emits `dst = fields(TID)` and returns the register holding the result.
fn emit_reversal(em: &mut Emitter, plan: &FftPlan, dst: Reg) -> Reg {
    let lt = log2(plan.threads);
    let fields = reversal_fields(plan);
    if let [f] = fields[..] {
        if f.src == f.dst {
            return TID;
        }
    }
    let mut first = true;
    for f in fields {
        let x = if first { dst } else { em.fresh() };
        let below = f.src > 0;
        let above = f.src + f.width < lt;
        let mask = ((1u32 << f.width) - 1) << f.dst;
        let mut src = TID;
        if f.src > f.dst {
            let k = em.konst(f.src - f.dst);
            em.op(Opcode::Ishr, x, TID, k);
            src = x;
            if above {
                let k = em.konst(mask);
                em.op(Opcode::Iand, x, x, k);
            }
        } else {
            if f.src < f.dst {
                let k = em.konst(f.dst - f.src);
                em.op(Opcode::Ishl, x, TID, k);
                src = x;
            }
            if below || above {
                let k = em.konst(mask);
                em.op(Opcode::Iand, x, src, k);
                src = x;
            }
        }
        if first {
            if src != x {
                em.mov(x, src);
            }
            first = false;
        } else {
            em.op(Opcode::Ior, dst, dst, src);
            em.release(x);
        }
    }
    dst
}

fn emit_last_pass(em: &mut Emitter, plan: &FftPlan, p: usize, complex: bool, style: &KernelStyle) {
    let (r, n, t) = (plan.schedule[p], plan.points, plan.threads);
    let blocks = plan.blocks(p);
    let im_reg = style.im_addr != ImAddr::Offsets;

    em.set_tag(p, Role::Addressing);
    let k = em.konst(log2(r));
    em.op(Opcode::Ishl, BASE, TID, k);
    if im_reg {
        let k = em.konst(n as u32);
        em.op(Opcode::Iadd, BASE_IM, BASE, k);
    }

    // Every block is loaded before any is stored: block q's outputs overwrite the
    // inputs of other blocks.
    em.set_role(Role::DataLoad);
    for q in 0..blocks {
        for k in 0..r {
            let e = q * r + k;
            let addr = q * t * r + k;
            let off = em.konst(addr as u32);
            em.op(Opcode::Lod, em.slot(re_slot(e)), BASE, off);
            let (b, off) = im_operands(em, im_reg, BASE, BASE_IM, addr, n);
            em.op(Opcode::Lod, em.slot(im_slot(e)), b, off);
        }
    }

    // A trailing smaller radix runs that radix's own kernel shape.
    let kernel_style = KernelStyle::for_radix(r);
    em.set_role(Role::Kernel);
    for q in 0..blocks {
        emit_kernel(em, r, q * r, complex, &kernel_style);
    }

    em.set_role(Role::Addressing);
    let rev = emit_reversal(em, plan, AUX);
    if im_reg {
        let k = em.konst(n as u32);
        em.op(Opcode::Iadd, AUX_IM, rev, k);
    }

    em.set_role(Role::Store);
    for q in 0..blocks {
        let block_base = plan.frequency_of(q * t * r);
        for m in 0..r {
            let e = q * r + output_position(m, r);
            let addr = block_base + m * n / r;
            let off = em.konst(addr as u32);
            em.store(Opcode::Save, em.slot(re_slot(e)), rev, off);
            let (b, off) = im_operands(em, im_reg, rev, AUX_IM, addr, n);
            em.store(Opcode::Save, em.slot(im_slot(e)), b, off);
        }
    }
}

/// Generates the complete, scheduled FFT program for `plan` on `config`.
pub fn emit_program(plan: &FftPlan, config: &MachineConfig) -> Result<Program, PlanError> {
    let em = emit_passes(plan, config)?;
    let mut code = schedule(&em.code, &em.tags, config);
    code.push(Instruction::op0(Opcode::Halt));
    Ok(Program::new(code, BTreeMap::new()).with_threads(plan.threads))
}

fn tagged(plan: &FftPlan, config: &MachineConfig) -> Result<Vec<(Instruction, Tag)>, PlanError> {
    let em = emit_passes(plan, config)?;
    Ok(em.code.into_iter().zip(em.tags).collect())
}

/// Address arithmetic of one pass, in emission order, including the `SETI`s it needs.
pub fn gen_addressing(
    plan: &FftPlan,
    config: &MachineConfig,
    pass: usize,
) -> Result<Vec<Instruction>, PlanError> {
    Ok(tagged(plan, config)?
        .into_iter()
        .filter(|(_, t)| t.pass == pass && t.role == Role::Addressing)
        .map(|(i, _)| i)
        .collect())
}

/// A standalone kernel over elements held in slots `0..2·radix`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCode {
    pub radix: usize,
    pub complex: bool,
    pub instructions: Vec<Instruction>,
    /// Instruction count per category.
    pub counts: BTreeMap<CycleCategory, usize>,
}

pub fn gen_kernel(radix: usize, complex: bool) -> Result<KernelCode, PlanError> {
    if !super::SUPPORTED_RADICES.contains(&radix) {
        return Err(PlanError::UnsupportedRadix(radix));
    }
    let style = KernelStyle::for_radix(radix);
    let mut em = new_emitter(radix, &style, super::regs_for_radix(radix))?;
    emit_kernel(&mut em, radix, 0, complex, &style);
    let mut counts = BTreeMap::new();
    for i in &em.code {
        *counts.entry(CycleCategory::of(i.opcode)).or_insert(0) += 1;
    }
    Ok(KernelCode {
        radix,
        complex,
        instructions: em.code,
        counts,
    })
}

/// Per-thread instruction counts and machine cycles of one pass's arithmetic: kernel,
/// twiddle pointer updates and twiddle multiplies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassBudget {
    pub pass: usize,
    pub counts: BTreeMap<CycleCategory, usize>,
    pub cycles: CycleBreakdown,
}

pub fn pass_budget(
    plan: &FftPlan,
    config: &MachineConfig,
    pass: usize,
) -> Result<PassBudget, PlanError> {
    let mut counts = BTreeMap::new();
    let mut cycles = CycleBreakdown::default();
    for (i, t) in tagged(plan, config)? {
        if t.pass == pass
            && matches!(t.role, Role::Kernel | Role::TwiddleAddr | Role::Twiddle)
            && i.opcode != Opcode::Seti
        {
            let cat = CycleCategory::of(i.opcode);
            *counts.entry(cat).or_insert(0) += 1;
            cycles.add(cat, instruction_cost(&i, config));
        }
    }
    Ok(PassBudget {
        pass,
        counts,
        cycles,
    })
}
