//! Instruction buffer with a renaming value-register pool and a constant-register cache.

use std::collections::VecDeque;

use crate::isa::{Instruction, Opcode, Reg};

/// What an emitted instruction is for. Drives scheduling constraints and the per-pass
/// budget reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Data load/store base and natural-order write-back address arithmetic.
    Addressing,
    /// Twiddle pointer set-up and advance.
    TwiddleAddr,
    DataLoad,
    TwiddleLoad,
    Kernel,
    /// Inter-pass twiddle multiplication.
    Twiddle,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tag {
    pub pass: usize,
    pub role: Role,
}

/// Physical registers holding FFT values. Each logical slot (real or imaginary part of a
/// kernel element) maps to one register; the rest are free scratch registers. Rebinding
/// a slot renames instead of copying.
#[derive(Debug, Clone)]
struct ValuePool {
    slots: Vec<Reg>,
    free: VecDeque<Reg>,
}

/// Registers holding `SETI` constants, evicted least-recently-used.
#[derive(Debug, Clone)]
struct ConstCache {
    regs: Vec<Reg>,
    value: Vec<Option<u32>>,
    last_use: Vec<u64>,
    clock: u64,
}

#[derive(Debug, Clone)]
pub struct Emitter {
    pub code: Vec<Instruction>,
    pub tags: Vec<Tag>,
    pub zero: Reg,
    tag: Tag,
    pool: ValuePool,
    consts: ConstCache,
}

impl Emitter {
    /// `value_regs` must hold at least `slots` registers; the first `slots` back the
    /// logical slots initially.
    pub fn new(zero: Reg, value_regs: Vec<Reg>, slots: usize, const_regs: Vec<Reg>) -> Self {
        assert!(value_regs.len() >= slots && const_regs.len() >= 2);
        let mut free: VecDeque<Reg> = value_regs.into();
        let slot_regs = free.drain(..slots).collect();
        let n = const_regs.len();
        Emitter {
            code: Vec::new(),
            tags: Vec::new(),
            zero,
            tag: Tag {
                pass: 0,
                role: Role::Kernel,
            },
            pool: ValuePool {
                slots: slot_regs,
                free,
            },
            consts: ConstCache {
                regs: const_regs,
                value: vec![None; n],
                last_use: vec![0; n],
                clock: 0,
            },
        }
    }

    pub fn set_tag(&mut self, pass: usize, role: Role) {
        self.tag = Tag { pass, role };
    }

    pub fn set_role(&mut self, role: Role) {
        self.tag.role = role;
    }

    pub fn push(&mut self, instr: Instruction) {
        self.code.push(instr);
        self.tags.push(self.tag);
    }

    pub fn op(&mut self, op: Opcode, d: Reg, a: Reg, b: Reg) {
        self.push(Instruction::op3(op, d, a, b));
    }

    pub fn mov(&mut self, d: Reg, a: Reg) {
        self.push(Instruction::mov(d, a));
    }

    pub fn store(&mut self, op: Opcode, value: Reg, base: Reg, offset: Reg) {
        self.push(Instruction::store(op, value, base, offset));
    }

    /// Register holding `value`, loading it with SETI when it is not cached. Zero maps to
    /// the never-written zero register. `keep` lists registers that must not be evicted.
    pub fn konst_keep(&mut self, value: u32, keep: &[Reg]) -> Reg {
        if value == 0 {
            return self.zero;
        }
        let c = &mut self.consts;
        c.clock += 1;
        if let Some(i) = c.value.iter().position(|v| *v == Some(value)) {
            c.last_use[i] = c.clock;
            return c.regs[i];
        }
        let victim = (0..c.regs.len())
            .filter(|&i| !keep.contains(&c.regs[i]))
            .min_by_key(|&i| (c.value[i].is_some(), c.last_use[i]))
            .expect("constant cache holds at least two registers");
        c.value[victim] = Some(value);
        c.last_use[victim] = c.clock;
        let reg = c.regs[victim];
        self.push(Instruction::seti(reg, value));
        reg
    }

    pub fn konst(&mut self, value: u32) -> Reg {
        self.konst_keep(value, &[])
    }

    pub fn konst_f32(&mut self, value: f32) -> Reg {
        self.konst(value.to_bits())
    }

    pub fn slot(&self, s: usize) -> Reg {
        self.pool.slots[s]
    }

    /// A free scratch register. Registers are recycled in FIFO order.
    pub fn fresh(&mut self) -> Reg {
        self.pool
            .free
            .pop_front()
            .expect("value pool has spare registers")
    }

    pub fn release(&mut self, r: Reg) {
        debug_assert!(!self.pool.free.contains(&r) && !self.pool.slots.contains(&r));
        self.pool.free.push_back(r);
    }

    /// Makes `r` the register of slot `s` and frees the slot's previous register.
    pub fn rebind(&mut self, s: usize, r: Reg) {
        let old = std::mem::replace(&mut self.pool.slots[s], r);
        self.pool.free.push_back(old);
    }
}
