//! Instruction set, text assembler/disassembler and static validation.
//!
//! Assembly is one instruction per line. Registers are written `Rn`, immediates are
//! decimal (optionally negative) or `0x` hexadecimal, `--` starts a comment and a line
//! of the form `name:` defines a label. A trailing `;` after an instruction is accepted.
//!
//! ```text
//! LOD_COEFF R30, R31; -- load tw_real, tw_imag into cache
//! MUL_REAL R6, R8, R9; -- R6 = (R8 * tw_real) - (R9 * tw_imag)
//! MUL_IMAG R7, R8, R9; -- R7 = (R8 * tw_imag) + (R9 * tw_real)
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{MachineConfig, MemoryMode};

/// Register index within a thread's register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub u16);

impl Reg {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Opcode {
    Iadd,
    Isub,
    Ixor,
    Ishl,
    Ishr,
    Iand,
    Ior,
    Mov,
    Seti,
    Fadd,
    Fsub,
    Fmul,
    LodCoeff,
    MulReal,
    MulImag,
    CoeffEn,
    CoeffDis,
    Lod,
    Save,
    SaveBank,
    Brnz,
    Nop,
    Halt,
}

/// Which operand slots an opcode uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `OP Rd, Ra, Rb`
    DestSrcSrc,
    /// `OP Rd, Ra`
    DestSrc,
    /// `OP Rd, imm`
    DestImm,
    /// `OP Ra, Rb`
    SrcSrc,
    /// `OP Rv, Ra, Rb` — stores `Rv` to address `Ra + Rb`
    Store,
    /// `OP Rc, label`
    Branch,
    None,
}

impl Opcode {
    pub const ALL: [Opcode; 23] = [
        Opcode::Iadd,
        Opcode::Isub,
        Opcode::Ixor,
        Opcode::Ishl,
        Opcode::Ishr,
        Opcode::Iand,
        Opcode::Ior,
        Opcode::Mov,
        Opcode::Seti,
        Opcode::Fadd,
        Opcode::Fsub,
        Opcode::Fmul,
        Opcode::LodCoeff,
        Opcode::MulReal,
        Opcode::MulImag,
        Opcode::CoeffEn,
        Opcode::CoeffDis,
        Opcode::Lod,
        Opcode::Save,
        Opcode::SaveBank,
        Opcode::Brnz,
        Opcode::Nop,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Iadd => "IADD",
            Opcode::Isub => "ISUB",
            Opcode::Ixor => "IXOR",
            Opcode::Ishl => "ISHL",
            Opcode::Ishr => "ISHR",
            Opcode::Iand => "IAND",
            Opcode::Ior => "IOR",
            Opcode::Mov => "MOV",
            Opcode::Seti => "SETI",
            Opcode::Fadd => "FADD",
            Opcode::Fsub => "FSUB",
            Opcode::Fmul => "FMUL",
            Opcode::LodCoeff => "LOD_COEFF",
            Opcode::MulReal => "MUL_REAL",
            Opcode::MulImag => "MUL_IMAG",
            Opcode::CoeffEn => "COEFF_EN",
            Opcode::CoeffDis => "COEFF_DIS",
            Opcode::Lod => "LOD",
            Opcode::Save => "SAVE",
            Opcode::SaveBank => "SAVE_BANK",
            Opcode::Brnz => "BRNZ",
            Opcode::Nop => "NOP",
            Opcode::Halt => "HALT",
        }
    }

    pub fn shape(self) -> Shape {
        use Opcode::*;
        match self {
            Iadd | Isub | Ixor | Ishl | Ishr | Iand | Ior | Fadd | Fsub | Fmul | MulReal
            | MulImag | Lod => Shape::DestSrcSrc,
            Mov => Shape::DestSrc,
            Seti => Shape::DestImm,
            LodCoeff => Shape::SrcSrc,
            Save | SaveBank => Shape::Store,
            Brnz => Shape::Branch,
            CoeffEn | CoeffDis | Nop | Halt => Shape::None,
        }
    }

    /// Opcodes that need the complex functional unit.
    pub fn needs_complex(self) -> bool {
        matches!(
            self,
            Opcode::LodCoeff
                | Opcode::MulReal
                | Opcode::MulImag
                | Opcode::CoeffEn
                | Opcode::CoeffDis
        )
    }

    pub fn needs_vm(self) -> bool {
        self == Opcode::SaveBank
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Opcode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        Opcode::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic() == upper)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dest: Option<Reg>,
    pub src1: Option<Reg>,
    pub src2: Option<Reg>,
    /// Data register of a store.
    pub src3: Option<Reg>,
    /// SETI literal, or the resolved target index of a BRNZ.
    pub imm: Option<u32>,
}

impl Instruction {
    fn bare(opcode: Opcode) -> Self {
        Instruction {
            opcode,
            dest: None,
            src1: None,
            src2: None,
            src3: None,
            imm: None,
        }
    }

    pub fn op0(opcode: Opcode) -> Self {
        debug_assert_eq!(opcode.shape(), Shape::None);
        Self::bare(opcode)
    }

    pub fn op3(opcode: Opcode, dest: Reg, a: Reg, b: Reg) -> Self {
        debug_assert_eq!(opcode.shape(), Shape::DestSrcSrc);
        Instruction {
            dest: Some(dest),
            src1: Some(a),
            src2: Some(b),
            ..Self::bare(opcode)
        }
    }

    pub fn mov(dest: Reg, src: Reg) -> Self {
        Instruction {
            dest: Some(dest),
            src1: Some(src),
            ..Self::bare(Opcode::Mov)
        }
    }

    pub fn seti(dest: Reg, imm: u32) -> Self {
        Instruction {
            dest: Some(dest),
            imm: Some(imm),
            ..Self::bare(Opcode::Seti)
        }
    }

    pub fn lod_coeff(re: Reg, im: Reg) -> Self {
        Instruction {
            src1: Some(re),
            src2: Some(im),
            ..Self::bare(Opcode::LodCoeff)
        }
    }

    /// `SAVE`/`SAVE_BANK value -> [base + offset]`.
    pub fn store(opcode: Opcode, value: Reg, base: Reg, offset: Reg) -> Self {
        debug_assert_eq!(opcode.shape(), Shape::Store);
        Instruction {
            src1: Some(base),
            src2: Some(offset),
            src3: Some(value),
            ..Self::bare(opcode)
        }
    }

    pub fn brnz(cond: Reg, target: u32) -> Self {
        Instruction {
            src1: Some(cond),
            imm: Some(target),
            ..Self::bare(Opcode::Brnz)
        }
    }

    /// Registers read by this instruction.
    pub fn reads(&self) -> impl Iterator<Item = Reg> {
        [self.src1, self.src2, self.src3].into_iter().flatten()
    }

    /// Register written by this instruction.
    pub fn writes(&self) -> Option<Reg> {
        self.dest
    }

    fn registers(&self) -> impl Iterator<Item = Reg> {
        [self.dest, self.src1, self.src2, self.src3]
            .into_iter()
            .flatten()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    pub vm: bool,
    pub complex: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramMeta {
    pub features: Features,
    pub regs_per_thread: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    pub labels: BTreeMap<String, usize>,
    pub meta: ProgramMeta,
}

impl Program {
    /// Builds a program and infers its feature and register metadata.
    pub fn new(instructions: Vec<Instruction>, labels: BTreeMap<String, usize>) -> Self {
        let mut program = Program {
            instructions,
            labels,
            meta: ProgramMeta::default(),
        };
        program.refresh_meta();
        program
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.meta.threads = Some(threads);
        self
    }

    pub fn refresh_meta(&mut self) {
        let mut features = Features::default();
        let mut max_reg = None;
        for instr in &self.instructions {
            features.vm |= instr.opcode.needs_vm();
            features.complex |= instr.opcode.needs_complex();
            for r in instr.registers() {
                max_reg = max_reg.max(Some(r.0));
            }
        }
        self.meta.features = features;
        self.meta.regs_per_thread = max_reg.map_or(1, |r| r as usize + 1);
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: malformed operand `{operand}`")]
    MalformedOperand { line: usize, operand: String },
    #[error("line {line}: `{mnemonic}` expects {expected} operand(s), found {found}")]
    OperandCount {
        line: usize,
        mnemonic: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: register R{index} out of range (limit {limit})")]
    RegisterOutOfRange {
        line: usize,
        index: u64,
        limit: usize,
    },
    #[error("line {line}: malformed directive `{text}`")]
    Directive { line: usize, text: String },
}

/// Largest register file the eGPU SM supports per thread.
pub const MAX_REGS_PER_THREAD: usize = 1024;

fn parse_reg(line: usize, text: &str) -> Result<Reg, AsmError> {
    let malformed = || AsmError::MalformedOperand {
        line,
        operand: text.to_string(),
    };
    let digits = text
        .strip_prefix('R')
        .or_else(|| text.strip_prefix('r'))
        .ok_or_else(malformed)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let index: u64 = digits.parse().map_err(|_| malformed())?;
    if index as usize >= MAX_REGS_PER_THREAD {
        return Err(AsmError::RegisterOutOfRange {
            line,
            index,
            limit: MAX_REGS_PER_THREAD,
        });
    }
    Ok(Reg(index as u16))
}

fn parse_imm(line: usize, text: &str) -> Result<u32, AsmError> {
    let malformed = || AsmError::MalformedOperand {
        line,
        operand: text.to_string(),
    };
    if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        return u32::from_str_radix(hex, 16).map_err(|_| malformed());
    }
    let value: i64 = text.parse().map_err(|_| malformed())?;
    if value < i32::MIN as i64 || value > u32::MAX as i64 {
        return Err(malformed());
    }
    Ok(value as u32)
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Assembles source text into a [`Program`] with resolved labels and inferred metadata.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    struct Pending {
        line: usize,
        label: String,
        index: usize,
    }

    let mut instructions = Vec::new();
    let mut labels = BTreeMap::new();
    let mut pending = Vec::new();
    let mut threads = None;

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let mut text = raw.split("--").next().unwrap_or("").trim();
        if let Some(rest) = text.strip_suffix(';') {
            text = rest.trim_end();
        }
        if text.is_empty() {
            continue;
        }
        if let Some(directive) = text.strip_prefix('.') {
            let mut parts = directive.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("threads"), Some(n), None) => {
                    threads = Some(n.parse().map_err(|_| AsmError::Directive {
                        line,
                        text: text.to_string(),
                    })?);
                }
                _ => {
                    return Err(AsmError::Directive {
                        line,
                        text: text.to_string(),
                    })
                }
            }
            continue;
        }
        if let Some(name) = text.strip_suffix(':') {
            let name = name.trim();
            if !is_label_name(name) {
                return Err(AsmError::MalformedOperand {
                    line,
                    operand: name.to_string(),
                });
            }
            if labels
                .insert(name.to_string(), instructions.len())
                .is_some()
            {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: name.to_string(),
                });
            }
            continue;
        }

        let (mnemonic, rest) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], text[pos..].trim()),
            None => (text, ""),
        };
        let opcode: Opcode = mnemonic.parse().map_err(|_| AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        let operands: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        let expected = match opcode.shape() {
            Shape::DestSrcSrc | Shape::Store => 3,
            Shape::DestSrc | Shape::DestImm | Shape::SrcSrc | Shape::Branch => 2,
            Shape::None => 0,
        };
        if operands.len() != expected {
            return Err(AsmError::OperandCount {
                line,
                mnemonic: opcode.mnemonic().to_string(),
                expected,
                found: operands.len(),
            });
        }
        let reg = |k: usize| parse_reg(line, operands[k]);
        let instr = match opcode.shape() {
            Shape::DestSrcSrc => Instruction::op3(opcode, reg(0)?, reg(1)?, reg(2)?),
            Shape::DestSrc => Instruction::mov(reg(0)?, reg(1)?),
            Shape::DestImm => Instruction::seti(reg(0)?, parse_imm(line, operands[1])?),
            Shape::SrcSrc => Instruction::lod_coeff(reg(0)?, reg(1)?),
            Shape::Store => Instruction::store(opcode, reg(0)?, reg(1)?, reg(2)?),
            Shape::Branch => {
                let label = operands[1];
                if !is_label_name(label) {
                    return Err(AsmError::MalformedOperand {
                        line,
                        operand: label.to_string(),
                    });
                }
                pending.push(Pending {
                    line,
                    label: label.to_string(),
                    index: instructions.len(),
                });
                Instruction::brnz(reg(0)?, 0)
            }
            Shape::None => Instruction::op0(opcode),
        };
        instructions.push(instr);
    }

    for p in pending {
        let target = *labels.get(&p.label).ok_or(AsmError::UnresolvedLabel {
            line: p.line,
            label: p.label.clone(),
        })?;
        instructions[p.index].imm = Some(target as u32);
    }

    let mut program = Program::new(instructions, labels);
    program.meta.threads = threads;
    Ok(program)
}

fn format_imm(value: u32) -> String {
    if value < 0x1_0000 {
        value.to_string()
    } else {
        format!("0x{value:08X}")
    }
}

/// Formats one instruction. Branch targets are rendered through `label_of`.
pub fn format_instruction(instr: &Instruction, label_of: impl Fn(u32) -> String) -> String {
    let op = instr.opcode.mnemonic();
    let r = |slot: Option<Reg>| slot.map(|r| r.to_string()).unwrap_or_default();
    match instr.opcode.shape() {
        Shape::DestSrcSrc => format!(
            "{op} {}, {}, {}",
            r(instr.dest),
            r(instr.src1),
            r(instr.src2)
        ),
        Shape::DestSrc => format!("{op} {}, {}", r(instr.dest), r(instr.src1)),
        Shape::DestImm => format!(
            "{op} {}, {}",
            r(instr.dest),
            format_imm(instr.imm.unwrap_or(0))
        ),
        Shape::SrcSrc => format!("{op} {}, {}", r(instr.src1), r(instr.src2)),
        Shape::Store => format!(
            "{op} {}, {}, {}",
            r(instr.src3),
            r(instr.src1),
            r(instr.src2)
        ),
        Shape::Branch => format!(
            "{op} {}, {}",
            r(instr.src1),
            label_of(instr.imm.unwrap_or(0))
        ),
        Shape::None => op.to_string(),
    }
}

/// Renders a program as assembly text that re-assembles to an identical [`Program`].
pub fn disassemble(program: &Program) -> String {
    let mut by_index: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (name, &idx) in &program.labels {
        by_index.entry(idx).or_default().push(name.clone());
    }
    // Branch targets without a name get a fresh `L<index>` label.
    for instr in &program.instructions {
        if instr.opcode.shape() != Shape::Branch {
            continue;
        }
        let target = instr.imm.unwrap_or(0) as usize;
        by_index.entry(target).or_insert_with(|| {
            let mut name = format!("L{target}");
            while program.labels.contains_key(&name) {
                name.push('_');
            }
            vec![name]
        });
    }
    let label_of = |target: u32| by_index[&(target as usize)][0].clone();

    let mut out = String::new();
    if let Some(threads) = program.meta.threads {
        out.push_str(&format!(".threads {threads}\n"));
    }
    for (i, instr) in program.instructions.iter().enumerate() {
        if let Some(names) = by_index.get(&i) {
            for name in names {
                out.push_str(name);
                out.push_str(":\n");
            }
        }
        out.push_str(&format_instruction(instr, label_of));
        out.push('\n');
    }
    // Labels past the last instruction.
    for (idx, names) in by_index.range(program.instructions.len()..) {
        let _ = idx;
        for name in names {
            out.push_str(name);
            out.push_str(":\n");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    VirtualBankingUnavailable {
        index: usize,
    },
    ComplexUnitUnavailable {
        index: usize,
    },
    RegisterOutOfRange {
        index: usize,
        reg: Reg,
        limit: usize,
    },
    BranchTargetOutOfRange {
        index: usize,
        target: u32,
    },
    ThreadCountMismatch {
        program: usize,
        config: usize,
    },
    InvalidConfig(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VirtualBankingUnavailable { index } => {
                write!(f, "instruction {index}: virtual banking unavailable")
            }
            Violation::ComplexUnitUnavailable { index } => {
                write!(f, "instruction {index}: complex unit unavailable")
            }
            Violation::RegisterOutOfRange { index, reg, limit } => {
                write!(
                    f,
                    "instruction {index}: {reg} exceeds {limit} registers per thread"
                )
            }
            Violation::BranchTargetOutOfRange { index, target } => {
                write!(
                    f,
                    "instruction {index}: branch target {target} out of range"
                )
            }
            Violation::ThreadCountMismatch { program, config } => {
                write!(f, "program expects {program} threads, config has {config}")
            }
            Violation::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

/// Static checks of `program` against `config`. An empty list means the program is runnable.
pub fn validate(program: &Program, config: &MachineConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = config.check() {
        out.push(Violation::InvalidConfig(e.to_string()));
    }
    if let Some(threads) = program.meta.threads {
        if threads != config.threads {
            out.push(Violation::ThreadCountMismatch {
                program: threads,
                config: config.threads,
            });
        }
    }
    for (index, instr) in program.instructions.iter().enumerate() {
        if instr.opcode.needs_vm() && config.memory != MemoryMode::Vm {
            out.push(Violation::VirtualBankingUnavailable { index });
        }
        if instr.opcode.needs_complex() && !config.complex_enabled {
            out.push(Violation::ComplexUnitUnavailable { index });
        }
        for reg in instr.registers() {
            if reg.index() >= config.regs_per_thread {
                out.push(Violation::RegisterOutOfRange {
                    index,
                    reg,
                    limit: config.regs_per_thread,
                });
            }
        }
        if instr.opcode == Opcode::Brnz {
            let target = instr.imm.unwrap_or(u32::MAX);
            if target as usize >= program.instructions.len() {
                out.push(Violation::BranchTargetOutOfRange { index, target });
            }
        }
    }
    out
}
