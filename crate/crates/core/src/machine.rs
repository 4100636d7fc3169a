//! Lockstep SIMT execution over all threads, shared memory with virtual banking, the
//! per-thread coefficient cache and pipeline hazard detection.

use std::fmt;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{instruction_cost, CycleCategory};
use crate::isa::{validate, Instruction, Opcode, Program, Violation};

/// Number of shared-memory banks; also the write width of a banked store.
pub const NUM_BANKS: usize = 4;
/// Total register file across all threads.
pub const REGISTER_FILE_WORDS: usize = 32 * 1024;
/// Upper bound on issued instructions per run, guarding against runaway loops.
pub const MAX_ISSUES: usize = 10_000_000;

/// Shared-memory write architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryMode {
    /// 4R-1W mirrored memory.
    Dp,
    /// 4R-2W mirrored memory at reduced clock.
    Qp,
    /// 4R-1W mirrored memory plus 4-wide banked writes.
    Vm,
}

impl MemoryMode {
    /// Words written per cycle by a standard SAVE.
    pub fn store_width(self) -> usize {
        match self {
            MemoryMode::Qp => 2,
            MemoryMode::Dp | MemoryMode::Vm => 1,
        }
    }
}

/// The six benchmarked machine variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Dp,
    Qp,
    DpVm,
    DpComplex,
    DpVmComplex,
    QpComplex,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Dp,
        Variant::Qp,
        Variant::DpVm,
        Variant::DpComplex,
        Variant::DpVmComplex,
        Variant::QpComplex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dp => "dp",
            Variant::Qp => "qp",
            Variant::DpVm => "dp-vm",
            Variant::DpComplex => "dp-complex",
            Variant::DpVmComplex => "dp-vm-complex",
            Variant::QpComplex => "qp-complex",
        }
    }

    pub fn memory(self) -> MemoryMode {
        match self {
            Variant::Dp | Variant::DpComplex => MemoryMode::Dp,
            Variant::Qp | Variant::QpComplex => MemoryMode::Qp,
            Variant::DpVm | Variant::DpVmComplex => MemoryMode::Vm,
        }
    }

    pub fn complex(self) -> bool {
        matches!(
            self,
            Variant::DpComplex | Variant::DpVmComplex | Variant::QpComplex
        )
    }

    /// The same memory architecture with the complex unit removed.
    pub fn without_complex(self) -> Variant {
        match self {
            Variant::DpComplex => Variant::Dp,
            Variant::DpVmComplex => Variant::DpVm,
            Variant::QpComplex => Variant::Qp,
            v => v,
        }
    }

    pub fn clock_hz(self) -> f64 {
        match self.memory() {
            MemoryMode::Qp => 600e6,
            MemoryMode::Dp | MemoryMode::Vm => 771e6,
        }
    }

    fn from_parts(memory: MemoryMode, complex: bool) -> Variant {
        match (memory, complex) {
            (MemoryMode::Dp, false) => Variant::Dp,
            (MemoryMode::Dp, true) => Variant::DpComplex,
            (MemoryMode::Qp, false) => Variant::Qp,
            (MemoryMode::Qp, true) => Variant::QpComplex,
            (MemoryMode::Vm, false) => Variant::DpVm,
            (MemoryMode::Vm, true) => Variant::DpVmComplex,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variant `{0}` (expected dp, qp, dp-vm, dp-complex, dp-vm-complex or qp-complex)")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub num_sps: usize,
    pub threads: usize,
    pub regs_per_thread: usize,
    pub shared_mem_bytes: usize,
    pub memory: MemoryMode,
    pub complex_enabled: bool,
    pub clock_hz: f64,
    pub pipeline_depth: usize,
    pub strict_banking: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("thread count {threads} is not a positive multiple of {num_sps} SPs")]
    Threads { threads: usize, num_sps: usize },
    #[error(
        "{threads} threads x {regs} registers exceeds the {REGISTER_FILE_WORDS}-word register file"
    )]
    RegisterFile { threads: usize, regs: usize },
    #[error("SP count {0} must be a positive multiple of {NUM_BANKS}")]
    Sps(usize),
    #[error("shared memory size {0} bytes is not a positive multiple of 4")]
    SharedMemory(usize),
    #[error("registers per thread must be in 1..={max}, got {got}")]
    Regs { got: usize, max: usize },
}

impl MachineConfig {
    pub fn for_variant(variant: Variant, threads: usize, regs_per_thread: usize) -> Self {
        MachineConfig {
            num_sps: 16,
            threads,
            regs_per_thread,
            shared_mem_bytes: 64 * 1024,
            memory: variant.memory(),
            complex_enabled: variant.complex(),
            clock_hz: variant.clock_hz(),
            pipeline_depth: 8,
            strict_banking: true,
        }
    }

    pub fn variant(&self) -> Variant {
        Variant::from_parts(self.memory, self.complex_enabled)
    }

    pub fn wavefront_depth(&self) -> usize {
        self.threads / self.num_sps
    }

    pub fn shared_words(&self) -> usize {
        self.shared_mem_bytes / 4
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.num_sps == 0 || !self.num_sps.is_multiple_of(NUM_BANKS) {
            return Err(ConfigError::Sps(self.num_sps));
        }
        if self.threads == 0 || !self.threads.is_multiple_of(self.num_sps) {
            return Err(ConfigError::Threads {
                threads: self.threads,
                num_sps: self.num_sps,
            });
        }
        if self.regs_per_thread == 0 || self.regs_per_thread > crate::isa::MAX_REGS_PER_THREAD {
            return Err(ConfigError::Regs {
                got: self.regs_per_thread,
                max: crate::isa::MAX_REGS_PER_THREAD,
            });
        }
        if self.threads * self.regs_per_thread > REGISTER_FILE_WORDS {
            return Err(ConfigError::RegisterFile {
                threads: self.threads,
                regs: self.regs_per_thread,
            });
        }
        if self.shared_mem_bytes == 0 || !self.shared_mem_bytes.is_multiple_of(4) {
            return Err(ConfigError::SharedMemory(self.shared_mem_bytes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StoreMode {
    Standard,
    Banked,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("address {addr} outside shared memory of {words} words")]
    OutOfRange { addr: u32, words: usize },
    #[error("SP {sp} read address {addr} from bank {bank}, which holds stale data")]
    InvalidBank { sp: usize, bank: usize, addr: u32 },
    #[error("banked store requested on a memory without virtual banking")]
    BankingUnavailable,
    #[error("memory image I/O: {0}")]
    Io(String),
}

/// Four word banks, each spanning the full address range, with per-word validity.
///
/// A standard store keeps all banks identical and valid at the written address. A banked
/// store from SP `s` writes only bank `s % 4` and leaves the other three banks flagged
/// invalid at that address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedMemoryImage {
    banks: [Vec<u32>; NUM_BANKS],
    valid: [Vec<bool>; NUM_BANKS],
}

impl SharedMemoryImage {
    /// Zero-filled memory with every bank valid.
    pub fn new(words: usize) -> Self {
        SharedMemoryImage {
            banks: std::array::from_fn(|_| vec![0; words]),
            valid: std::array::from_fn(|_| vec![true; words]),
        }
    }

    pub fn words(&self) -> usize {
        self.banks[0].len()
    }

    fn check_addr(&self, addr: u32) -> Result<usize, MemoryError> {
        let a = addr as usize;
        if a < self.words() {
            Ok(a)
        } else {
            Err(MemoryError::OutOfRange {
                addr,
                words: self.words(),
            })
        }
    }

    pub fn bank_word(&self, bank: usize, addr: usize) -> u32 {
        self.banks[bank][addr]
    }

    pub fn is_valid(&self, bank: usize, addr: usize) -> bool {
        self.valid[bank][addr]
    }

    /// Word at `addr` as seen through bank 0.
    pub fn word(&self, addr: usize) -> u32 {
        self.banks[0][addr]
    }

    /// Writes `value` to every bank, as a host preload or a standard SAVE does.
    pub fn write(&mut self, addr: u32, value: u32) -> Result<(), MemoryError> {
        let a = self.check_addr(addr)?;
        for b in 0..NUM_BANKS {
            self.banks[b][a] = value;
            self.valid[b][a] = true;
        }
        Ok(())
    }

    pub fn write_f32(&mut self, addr: u32, value: f32) -> Result<(), MemoryError> {
        self.write(addr, value.to_bits())
    }

    pub fn read_f32(&self, addr: usize) -> f32 {
        f32::from_bits(self.word(addr))
    }

    /// Writes bank `sp % 4` only and invalidates the other banks at `addr`.
    pub fn write_banked(&mut self, sp: usize, addr: u32, value: u32) -> Result<(), MemoryError> {
        let a = self.check_addr(addr)?;
        let bank = sp % NUM_BANKS;
        self.banks[bank][a] = value;
        for b in 0..NUM_BANKS {
            self.valid[b][a] = b == bank;
        }
        Ok(())
    }

    /// Read by SP `sp`, which is wired to bank `sp % 4`.
    pub fn read(&self, sp: usize, addr: u32, strict: bool) -> Result<u32, MemoryError> {
        let a = self.check_addr(addr)?;
        let bank = sp % NUM_BANKS;
        if strict && !self.valid[bank][a] {
            return Err(MemoryError::InvalidBank { sp, bank, addr });
        }
        Ok(self.banks[bank][a])
    }

    /// True when all banks hold identical words everywhere.
    pub fn banks_mirrored(&self) -> bool {
        self.banks[1..].iter().all(|b| *b == self.banks[0])
    }

    /// Little-endian words of the bank-0 view.
    pub fn write_words<W: Write>(&self, mut out: W) -> io::Result<()> {
        for w in &self.banks[0] {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    /// Validity bitmap, bank-major, one bit per word, LSB first.
    pub fn write_validity<W: Write>(&self, mut out: W) -> io::Result<()> {
        let bits = self.valid.iter().flatten();
        let mut bytes = vec![0u8; (NUM_BANKS * self.words()).div_ceil(8)];
        for (i, &v) in bits.enumerate() {
            if v {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        out.write_all(&bytes)
    }

    /// Loads little-endian words into all banks, optionally restoring a validity bitmap.
    pub fn read_words<R: Read>(mut input: R, validity: Option<&[u8]>) -> Result<Self, MemoryError> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| MemoryError::Io(e.to_string()))?;
        if bytes.len() % 4 != 0 {
            return Err(MemoryError::Io(format!(
                "image length {} is not a multiple of 4 bytes",
                bytes.len()
            )));
        }
        let words: Vec<u32> = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let n = words.len();
        let mut image = SharedMemoryImage {
            banks: std::array::from_fn(|_| words.clone()),
            valid: std::array::from_fn(|_| vec![true; n]),
        };
        if let Some(bits) = validity {
            if bits.len() != (NUM_BANKS * n).div_ceil(8) {
                return Err(MemoryError::Io(format!(
                    "validity bitmap has {} bytes, expected {}",
                    bits.len(),
                    (NUM_BANKS * n).div_ceil(8)
                )));
            }
            for b in 0..NUM_BANKS {
                for a in 0..n {
                    let i = b * n + a;
                    image.valid[b][a] = bits[i / 8] & (1 << (i % 8)) != 0;
                }
            }
        }
        Ok(image)
    }

    /// Writes the bank-0 words to `path` and a sidecar `<path>.valid` holding the validity
    /// bitmap followed by the words of banks 1 to 3.
    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let io = |e: io::Error| MemoryError::Io(format!("{}: {e}", path.display()));
        let mut data = Vec::with_capacity(self.words() * 4);
        self.write_words(&mut data).map_err(io)?;
        std::fs::write(path, data).map_err(io)?;
        let mut side = Vec::new();
        self.write_validity(&mut side).map_err(io)?;
        for bank in &self.banks[1..] {
            for w in bank {
                side.extend_from_slice(&w.to_le_bytes());
            }
        }
        std::fs::write(validity_path(path), side).map_err(io)
    }

    /// Reads `path`. A sidecar written by [`save`](Self::save) restores validity and the
    /// other banks; a sidecar holding only the bitmap restores validity alone.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let io = |e: io::Error| MemoryError::Io(format!("{}: {e}", path.display()));
        let data = std::fs::read(path).map_err(io)?;
        let side_path = validity_path(path);
        if !side_path.exists() {
            return Self::read_words(&data[..], None);
        }
        let side = std::fs::read(&side_path).map_err(io)?;
        let n = data.len() / 4;
        let bitmap = (NUM_BANKS * n).div_ceil(8);
        let (bits, rest) = side.split_at(bitmap.min(side.len()));
        let mut image = Self::read_words(&data[..], Some(bits))?;
        if rest.is_empty() {
            return Ok(image);
        }
        if rest.len() != (NUM_BANKS - 1) * n * 4 {
            return Err(MemoryError::Io(format!(
                "{}: sidecar has {} bank bytes, expected {}",
                side_path.display(),
                rest.len(),
                (NUM_BANKS - 1) * n * 4
            )));
        }
        for (bank, chunk) in image.banks[1..].iter_mut().zip(rest.chunks_exact(n * 4)) {
            for (w, c) in bank.iter_mut().zip(chunk.chunks_exact(4)) {
                *w = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            }
        }
        Ok(image)
    }
}

fn validity_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".valid");
    s.into()
}

/// One store cycle from the 16 SPs of a wavefront slice.
///
/// Standard stores are applied SP by SP, so a later SP wins an address collision. Banked
/// stores are applied in groups `{g, g+4, g+8, g+12}` for `g = 0..4` in that order.
pub fn mem_store(
    sp_values: &[u32; 16],
    addrs: &[u32; 16],
    mode: StoreMode,
    config: &MachineConfig,
    image: &mut SharedMemoryImage,
) -> Result<(), MemoryError> {
    match mode {
        StoreMode::Standard => {
            for sp in 0..16 {
                image.write(addrs[sp], sp_values[sp])?;
            }
        }
        StoreMode::Banked => {
            if config.memory != MemoryMode::Vm {
                return Err(MemoryError::BankingUnavailable);
            }
            for g in 0..NUM_BANKS {
                for sp in (g..16).step_by(NUM_BANKS) {
                    image.write_banked(sp, addrs[sp], sp_values[sp])?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("coefficient cache read by thread {0} before any LOD_COEFF")]
    Uninitialized(usize),
    #[error("coefficient cache is disabled")]
    Disabled,
}

/// Per-thread single complex twiddle slot feeding the complex unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCache {
    slots: Vec<Option<(f32, f32)>>,
    pub enabled: bool,
}

impl CoefficientCache {
    pub fn new(threads: usize) -> Self {
        CoefficientCache {
            slots: vec![None; threads],
            enabled: true,
        }
    }

    pub fn load(&mut self, thread: usize, re: f32, im: f32) -> Result<(), CacheError> {
        if !self.enabled {
            return Err(CacheError::Disabled);
        }
        self.slots[thread] = Some((re, im));
        Ok(())
    }

    /// Returns the thread's slot. Permissive reads of an empty slot yield zero.
    pub fn get(&self, thread: usize, strict: bool) -> Result<(f32, f32), CacheError> {
        if !self.enabled {
            return Err(CacheError::Disabled);
        }
        match self.slots[thread] {
            Some(tw) => Ok(tw),
            None if strict => Err(CacheError::Uninitialized(thread)),
            None => Ok((0.0, 0.0)),
        }
    }
}

/// The sum-of-two-multipliers unit. Each product is rounded to f32 before the add.
pub fn exec_complex(op: Opcode, a: f32, b: f32, cache: (f32, f32)) -> f32 {
    let (tw_re, tw_im) = cache;
    match op {
        Opcode::MulReal => {
            let p = a * tw_re;
            let q = b * tw_im;
            p - q
        }
        Opcode::MulImag => {
            let p = a * tw_im;
            let q = b * tw_re;
            p + q
        }
        other => panic!("exec_complex called with {other}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub pc: usize,
    pub opcode: Opcode,
    pub category: CycleCategory,
    pub cycles: u64,
    /// Cycle at which the instruction's first wavefront issues.
    pub start_cycle: u64,
}

#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
    pub total_cycles: u64,
    pub config: MachineConfig,
    /// Thread-major register snapshot: `registers[t * regs_per_thread + r]`.
    pub registers: Vec<u32>,
    pub memory: SharedMemoryImage,
}

impl ExecutionTrace {
    pub fn register(&self, thread: usize, reg: usize) -> u32 {
        self.registers[thread * self.config.regs_per_thread + reg]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("program rejected: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("shared memory is {got} words, config expects {expected}")]
    MemorySize { got: usize, expected: usize },
    #[error("instruction {pc}: {source}")]
    Memory {
        pc: usize,
        #[source]
        source: MemoryError,
    },
    #[error("instruction {pc}: {source}")]
    Cache {
        pc: usize,
        #[source]
        source: CacheError,
    },
    #[error("instruction {pc}: divergent branch condition across threads (unsupported)")]
    Divergence { pc: usize },
    #[error("exceeded {MAX_ISSUES} issued instructions")]
    IssueLimit,
}

/// Executes `program` for every thread in lockstep.
///
/// R0 of each thread starts as its thread index and every other register as zero. The
/// SP running thread `t` is `t % num_sps`.
pub fn run(
    program: &Program,
    config: &MachineConfig,
    initial_memory: SharedMemoryImage,
) -> Result<ExecutionTrace, RunError> {
    let violations = validate(program, config);
    if !violations.is_empty() {
        return Err(RunError::Invalid(violations));
    }
    if initial_memory.words() != config.shared_words() {
        return Err(RunError::MemorySize {
            got: initial_memory.words(),
            expected: config.shared_words(),
        });
    }

    let threads = config.threads;
    let nregs = config.regs_per_thread;
    let strict = config.strict_banking;
    let mut regs = vec![0u32; threads * nregs];
    for t in 0..threads {
        regs[t * nregs] = t as u32;
    }
    let mut mem = initial_memory;
    let mut cache = CoefficientCache::new(threads);
    let mut entries = Vec::new();
    let mut cycle = 0u64;
    let mut pc = 0usize;

    let f = |bits: u32| f32::from_bits(bits);
    let reg = |i: Option<crate::isa::Reg>| i.map_or(0, |r| r.index());

    while pc < program.instructions.len() {
        if entries.len() >= MAX_ISSUES {
            return Err(RunError::IssueLimit);
        }
        let instr: &Instruction = &program.instructions[pc];
        let cost = instruction_cost(instr, config);
        entries.push(TraceEntry {
            pc,
            opcode: instr.opcode,
            category: CycleCategory::of(instr.opcode),
            cycles: cost,
            start_cycle: cycle,
        });
        cycle += cost;

        let (d, a, b, v) = (
            reg(instr.dest),
            reg(instr.src1),
            reg(instr.src2),
            reg(instr.src3),
        );
        let mut next = pc + 1;
        let mem_err = |source| RunError::Memory { pc, source };
        let cache_err = |source| RunError::Cache { pc, source };

        macro_rules! lanes {
            (|$x:ident, $y:ident| $e:expr) => {
                for t in 0..threads {
                    let base = t * nregs;
                    let $x = regs[base + a];
                    let $y = regs[base + b];
                    regs[base + d] = $e;
                }
            };
        }

        match instr.opcode {
            Opcode::Iadd => lanes!(|x, y| x.wrapping_add(y)),
            Opcode::Isub => lanes!(|x, y| x.wrapping_sub(y)),
            Opcode::Ixor => lanes!(|x, y| x ^ y),
            Opcode::Ishl => lanes!(|x, y| x.wrapping_shl(y & 31)),
            Opcode::Ishr => lanes!(|x, y| x.wrapping_shr(y & 31)),
            Opcode::Iand => lanes!(|x, y| x & y),
            Opcode::Ior => lanes!(|x, y| x | y),
            Opcode::Fadd => lanes!(|x, y| (f(x) + f(y)).to_bits()),
            Opcode::Fsub => lanes!(|x, y| (f(x) - f(y)).to_bits()),
            Opcode::Fmul => lanes!(|x, y| (f(x) * f(y)).to_bits()),
            Opcode::Mov => {
                for t in 0..threads {
                    regs[t * nregs + d] = regs[t * nregs + a];
                }
            }
            Opcode::Seti => {
                let imm = instr.imm.unwrap_or(0);
                for t in 0..threads {
                    regs[t * nregs + d] = imm;
                }
            }
            Opcode::LodCoeff => {
                for t in 0..threads {
                    let base = t * nregs;
                    cache
                        .load(t, f(regs[base + a]), f(regs[base + b]))
                        .map_err(cache_err)?;
                }
            }
            Opcode::MulReal | Opcode::MulImag => {
                for t in 0..threads {
                    let base = t * nregs;
                    let tw = cache.get(t, strict).map_err(cache_err)?;
                    regs[base + d] =
                        exec_complex(instr.opcode, f(regs[base + a]), f(regs[base + b]), tw)
                            .to_bits();
                }
            }
            Opcode::CoeffEn => cache.enabled = true,
            Opcode::CoeffDis => cache.enabled = false,
            Opcode::Lod => {
                for t in 0..threads {
                    let base = t * nregs;
                    let addr = regs[base + a].wrapping_add(regs[base + b]);
                    regs[base + d] = mem
                        .read(t % config.num_sps, addr, strict)
                        .map_err(mem_err)?;
                }
            }
            Opcode::Save => {
                for t in 0..threads {
                    let base = t * nregs;
                    let addr = regs[base + a].wrapping_add(regs[base + b]);
                    mem.write(addr, regs[base + v]).map_err(mem_err)?;
                }
            }
            Opcode::SaveBank => {
                let sps = config.num_sps;
                for chunk in 0..threads / sps {
                    for g in 0..NUM_BANKS {
                        for sp in (g..sps).step_by(NUM_BANKS) {
                            let base = (chunk * sps + sp) * nregs;
                            let addr = regs[base + a].wrapping_add(regs[base + b]);
                            mem.write_banked(sp, addr, regs[base + v])
                                .map_err(mem_err)?;
                        }
                    }
                }
            }
            Opcode::Brnz => {
                let first = regs[a] != 0;
                if (1..threads).any(|t| (regs[t * nregs + a] != 0) != first) {
                    return Err(RunError::Divergence { pc });
                }
                if first {
                    next = instr.imm.unwrap_or(0) as usize;
                }
            }
            Opcode::Nop => {}
            Opcode::Halt => break,
        }
        pc = next;
    }

    Ok(ExecutionTrace {
        entries,
        total_cycles: cycle,
        config: config.clone(),
        registers: regs,
        memory: mem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hazard {
    /// Consumer instruction index.
    pub index: usize,
    /// Cycles short of the pipeline depth.
    pub missing: u64,
}

/// Read-after-write pairs closer than the pipeline depth, in program order.
///
/// The gap between producer `p` and consumer `c` is the sum of issue cycles of
/// instructions `p..c`. The coefficient cache counts as a register written by LOD_COEFF
/// and read by MUL_REAL/MUL_IMAG. Only fall-through order is analysed, so a dependency
/// carried around a loop back-edge is not reported.
pub fn check_hazards(program: &Program, config: &MachineConfig) -> Vec<Hazard> {
    let depth = config.pipeline_depth as u64;
    let cache_slot = usize::MAX;
    let mut last_write: std::collections::HashMap<usize, usize> = Default::default();
    let mut prefix = Vec::with_capacity(program.len() + 1);
    let mut acc = 0u64;
    for instr in &program.instructions {
        prefix.push(acc);
        acc += instruction_cost(instr, config);
    }

    let mut out = Vec::new();
    for (c, instr) in program.instructions.iter().enumerate() {
        let mut sources: Vec<usize> = instr.reads().map(|r| r.index()).collect();
        if matches!(instr.opcode, Opcode::MulReal | Opcode::MulImag) {
            sources.push(cache_slot);
        }
        let worst = sources
            .iter()
            .filter_map(|s| last_write.get(s))
            .map(|&p| prefix[c] - prefix[p])
            .filter(|&gap| gap < depth)
            .map(|gap| depth - gap)
            .max();
        if let Some(missing) = worst {
            out.push(Hazard { index: c, missing });
        }
        if let Some(d) = instr.writes() {
            last_write.insert(d.index(), c);
        }
        if instr.opcode == Opcode::LodCoeff {
            last_write.insert(cache_slot, c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assemble, Reg};

    fn cfg(variant: Variant, threads: usize) -> MachineConfig {
        MachineConfig::for_variant(variant, threads, 32)
    }

    #[test]
    fn thread_index_preload() {
        let p = assemble("SETI R1, 5\nIADD R2, R1, R0\nHALT").unwrap();
        let c = cfg(Variant::Dp, 32);
        let tr = run(&p, &c, SharedMemoryImage::new(c.shared_words())).unwrap();
        for t in 0..32 {
            assert_eq!(tr.register(t, 2), 5 + t as u32);
        }
    }

    #[test]
    fn complex_listing_multiplies_by_j() {
        let src = "LOD_COEFF R30, R31\nMUL_REAL R6, R8, R9\nMUL_IMAG R7, R8, R9\nHALT";
        let p = assemble(src).unwrap();
        let c = cfg(Variant::DpComplex, 16);
        let mut mem = SharedMemoryImage::new(c.shared_words());
        mem.write_f32(0, 1.0).unwrap();
        mem.write_f32(1, 1.0).unwrap();
        // R8 = 1.0, R9 = 0.0, tw = (0, 1)
        let setup = assemble("SETI R2, 0\nSETI R3, 1\nLOD R8, R2, R2\nLOD R31, R3, R2\n").unwrap();
        let mut prog = setup.instructions.clone();
        prog.extend(p.instructions.iter().copied());
        let p = Program::new(prog, Default::default());
        let tr = run(&p, &c, mem).unwrap();
        assert_eq!(f32::from_bits(tr.register(3, 6)), 0.0);
        assert_eq!(f32::from_bits(tr.register(3, 7)), 1.0);
    }

    #[test]
    fn exec_complex_examples() {
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let tw = (h, -h);
        assert_eq!(exec_complex(Opcode::MulReal, 1.0, 0.0, tw), h);
        assert_eq!(exec_complex(Opcode::MulReal, 3.0, 4.0, (1.0, 0.0)), 3.0);
        assert_eq!(exec_complex(Opcode::MulImag, 3.0, 4.0, (1.0, 0.0)), 4.0);
    }

    #[test]
    fn uninitialized_cache_is_an_error() {
        let p = assemble("MUL_REAL R1, R2, R3\nHALT").unwrap();
        let c = cfg(Variant::DpComplex, 16);
        let err = run(&p, &c, SharedMemoryImage::new(c.shared_words())).unwrap_err();
        assert!(matches!(
            err,
            RunError::Cache {
                pc: 0,
                source: CacheError::Uninitialized(0)
            }
        ));
    }

    #[test]
    fn banked_store_maps_sp_to_bank() {
        let c = cfg(Variant::DpVm, 16);
        let mut mem = SharedMemoryImage::new(c.shared_words());
        let vals: [u32; 16] = std::array::from_fn(|i| 100 + i as u32);
        let addrs: [u32; 16] = std::array::from_fn(|i| i as u32);
        mem_store(&vals, &addrs, StoreMode::Banked, &c, &mut mem).unwrap();
        for sp in [0usize, 4, 8, 12] {
            assert_eq!(mem.bank_word(0, sp), 100 + sp as u32);
            assert!(mem.is_valid(0, sp));
            assert!(!mem.is_valid(1, sp));
        }
        // SP 1 reading what SP 2 wrote.
        assert_eq!(
            mem.read(1, 2, true),
            Err(MemoryError::InvalidBank {
                sp: 1,
                bank: 1,
                addr: 2
            })
        );
        assert!(mem.read(1, 2, false).is_ok());
        assert_eq!(mem.read(6, 2, true), Ok(102));
    }

    #[test]
    fn banked_store_needs_vm() {
        let c = cfg(Variant::Dp, 16);
        let mut mem = SharedMemoryImage::new(c.shared_words());
        let r = mem_store(&[0; 16], &[0; 16], StoreMode::Banked, &c, &mut mem);
        assert_eq!(r, Err(MemoryError::BankingUnavailable));
    }

    #[test]
    fn standard_store_mirrors() {
        let c = cfg(Variant::Dp, 16);
        let mut mem = SharedMemoryImage::new(c.shared_words());
        let vals: [u32; 16] = std::array::from_fn(|i| 7 * i as u32);
        let addrs: [u32; 16] = std::array::from_fn(|i| 3 * i as u32);
        mem_store(&vals, &addrs, StoreMode::Standard, &c, &mut mem).unwrap();
        assert!(mem.banks_mirrored());
        for sp in 0..16 {
            for reader in 0..4 {
                assert_eq!(mem.read(reader, addrs[sp], true), Ok(vals[sp]));
            }
        }
    }

    #[test]
    fn out_of_range_address() {
        let p = assemble("SETI R1, 16384\nLOD R2, R1, R0\nHALT").unwrap();
        let c = cfg(Variant::Dp, 16);
        let err = run(&p, &c, SharedMemoryImage::new(c.shared_words())).unwrap_err();
        assert!(matches!(
            err,
            RunError::Memory {
                pc: 1,
                source: MemoryError::OutOfRange { .. }
            }
        ));
    }

    #[test]
    fn uniform_loop_and_divergence() {
        let c = cfg(Variant::Dp, 32);
        let ok = assemble("SETI R1, 3\nSETI R2, 1\nloop:\nISUB R1, R1, R2\nBRNZ R1, loop\nHALT")
            .unwrap();
        let tr = run(&ok, &c, SharedMemoryImage::new(c.shared_words())).unwrap();
        assert_eq!(tr.register(0, 1), 0);
        assert_eq!(
            tr.entries
                .iter()
                .filter(|e| e.opcode == Opcode::Brnz)
                .count(),
            3
        );
        let bad = assemble("loop:\nBRNZ R0, loop\nHALT").unwrap();
        let err = run(&bad, &c, SharedMemoryImage::new(c.shared_words())).unwrap_err();
        assert_eq!(err, RunError::Divergence { pc: 0 });
    }

    #[test]
    fn trace_total_is_sum_of_entries() {
        let p =
            assemble("SETI R1, 2\nFADD R2, R1, R1\nSAVE R2, R1, R0\nLOD R3, R1, R0\nHALT").unwrap();
        let c = cfg(Variant::Qp, 64);
        let tr = run(&p, &c, SharedMemoryImage::new(c.shared_words())).unwrap();
        let sum: u64 = tr.entries.iter().map(|e| e.cycles).sum();
        assert_eq!(sum, tr.total_cycles);
        assert_eq!(tr.total_cycles, 1 + 4 + 32 + 16);
    }

    #[test]
    fn hazard_gap_arithmetic() {
        let p = assemble("FADD R1, R2, R3\nFADD R4, R1, R1\nHALT").unwrap();
        let deep = cfg(Variant::Dp, 1024);
        assert!(check_hazards(&p, &deep).is_empty());
        let shallow = cfg(Variant::Dp, 64);
        assert_eq!(
            check_hazards(&p, &shallow),
            vec![Hazard {
                index: 1,
                missing: 4
            }]
        );
        let indep = assemble("FADD R1, R2, R3\nFADD R4, R5, R6\nHALT").unwrap();
        assert!(check_hazards(&indep, &shallow).is_empty());
    }

    #[test]
    fn coefficient_cache_hazard() {
        let p = Program::new(
            vec![
                Instruction::lod_coeff(Reg(1), Reg(2)),
                Instruction::op3(Opcode::MulReal, Reg(3), Reg(4), Reg(5)),
            ],
            Default::default(),
        );
        let c = cfg(Variant::DpComplex, 64);
        assert_eq!(
            check_hazards(&p, &c),
            vec![Hazard {
                index: 1,
                missing: 4
            }]
        );
    }

    #[test]
    fn image_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.bin");
        let c = cfg(Variant::DpVm, 16);
        let mut mem = SharedMemoryImage::new(c.shared_words());
        mem.write(5, 0xDEAD_BEEF).unwrap();
        mem.write_banked(2, 9, 42).unwrap();
        mem.save(&path).unwrap();
        let back = SharedMemoryImage::load(&path).unwrap();
        assert_eq!(back.word(5), 0xDEAD_BEEF);
        assert!(back.is_valid(2, 9));
        assert!(!back.is_valid(0, 9));
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 65536);
    }

    #[test]
    fn config_invariants() {
        assert!(cfg(Variant::Dp, 1024).check().is_ok());
        assert!(matches!(
            MachineConfig::for_variant(Variant::Dp, 1024, 64).check(),
            Err(ConfigError::RegisterFile { .. })
        ));
        assert!(matches!(
            cfg(Variant::Dp, 40).check(),
            Err(ConfigError::Threads { .. })
        ));
        assert_eq!(cfg(Variant::Qp, 1024).clock_hz, 600e6);
        assert_eq!(
            cfg(Variant::DpVmComplex, 1024).variant(),
            Variant::DpVmComplex
        );
        assert_eq!("dp-vm-complex".parse::<Variant>(), Ok(Variant::DpVmComplex));
        assert!("dp-fast".parse::<Variant>().is_err());
    }
}
