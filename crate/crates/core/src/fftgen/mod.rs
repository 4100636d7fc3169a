//! FFT program generator: pass planning, memory layout, code emission and scheduling.
//!
//! Every pass runs `threads = points / radix` threads. Pass `p` has radix `R_p` and stride
//! `s_p = points / (R_0·…·R_p)`; kernel `b` of a pass reads elements
//! `blk·R_p·s_p + j + k·s_p` for `k < R_p` with `j = b mod s_p`, `blk = b / s_p`, runs a
//! decimation-in-frequency butterfly and, in every pass but the last, multiplies output
//! `m` by `W_{R_p·s_p}^{j·m}` before storing it back in place. The last pass has stride 1
//! and writes its results straight to natural frequency order.

mod emit;
mod emitter;
mod kernel;
mod schedule;
pub mod twiddle;

use serde::Serialize;
use thiserror::Error;

use crate::cycles::{predict, CycleBreakdown};
use crate::isa::Program;
use crate::machine::{
    run, ExecutionTrace, MachineConfig, RunError, SharedMemoryImage, Variant, REGISTER_FILE_WORDS,
};
use crate::oracle::Complex;

pub use emit::{emit_program, gen_addressing, gen_kernel, pass_budget, KernelCode, PassBudget};
pub use emitter::Role;
pub use kernel::{ImAddr, KernelStyle, MoveStyle, NegJStyle, TwiddleAddr};
pub use schedule::schedule;

pub const SUPPORTED_RADICES: [usize; 4] = [2, 4, 8, 16];

/// Twiddle table of one non-final pass: factor `m` (1..radix) for offset `j` has its real
/// part at `base + (m-1)·2·stride + j` and its imaginary part `stride` words later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TwiddleTable {
    pub base: usize,
    pub stride: usize,
    pub factors: usize,
}

impl TwiddleTable {
    pub fn re_addr(&self, m: usize, j: usize) -> usize {
        self.base + (m - 1) * 2 * self.stride + j
    }

    pub fn im_addr(&self, m: usize, j: usize) -> usize {
        self.re_addr(m, j) + self.stride
    }

    pub fn words(&self) -> usize {
        2 * self.factors * self.stride
    }
}

/// Shared-memory layout in words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryLayout {
    pub re_base: usize,
    pub im_base: usize,
    /// One table per non-final pass.
    pub twiddles: Vec<TwiddleTable>,
    /// First word past the last table.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FftPlan {
    pub points: usize,
    pub radix: usize,
    /// Radix of each pass; all equal to `radix` except possibly the last.
    pub schedule: Vec<usize>,
    pub strides: Vec<usize>,
    pub threads: usize,
    pub regs_per_thread: usize,
    pub wavefront_depth: usize,
    /// Whether each pass may use banked stores: the thread that writes an element and
    /// the thread that reads it in the next pass sit on the same memory bank.
    pub vm_eligible: Vec<bool>,
    pub layout: MemoryLayout,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("radix {0} is not supported (expected 2, 4, 8 or 16)")]
    UnsupportedRadix(usize),
    #[error("{0} points is not a power of two")]
    NotPowerOfTwo(usize),
    #[error(
        "{points} points at radix {radix} gives {threads} threads; need a positive multiple of 16"
    )]
    Threads {
        points: usize,
        radix: usize,
        threads: usize,
    },
    #[error(
        "{threads} threads x {regs} registers exceeds the {REGISTER_FILE_WORDS}-word register file"
    )]
    Registers { threads: usize, regs: usize },
    #[error("data and twiddle tables need {needed} words but shared memory holds {available}")]
    Memory { needed: usize, available: usize },
    #[error("expected {expected} input samples, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("machine config does not match the plan: {0}")]
    Config(String),
}

const SHARED_WORDS: usize = 64 * 1024 / 4;
const NUM_SPS: usize = 16;

/// Registers per thread reserved by the generator for each radix.
pub fn regs_for_radix(radix: usize) -> usize {
    match radix {
        2 => 16,
        4 => 32,
        _ => 64,
    }
}

/// Plans a `points`-point FFT with first-pass radix `radix`.
pub fn plan(points: usize, radix: usize) -> Result<FftPlan, PlanError> {
    if !SUPPORTED_RADICES.contains(&radix) {
        return Err(PlanError::UnsupportedRadix(radix));
    }
    if !points.is_power_of_two() {
        return Err(PlanError::NotPowerOfTwo(points));
    }
    let threads = points / radix;
    if threads == 0 || !threads.is_multiple_of(NUM_SPS) {
        return Err(PlanError::Threads {
            points,
            radix,
            threads,
        });
    }
    let regs = regs_for_radix(radix);
    if threads * regs > REGISTER_FILE_WORDS {
        return Err(PlanError::Registers { threads, regs });
    }

    let mut schedule = Vec::new();
    let mut rest = points;
    while rest > 1 {
        let r = radix.min(rest);
        schedule.push(r);
        rest /= r;
    }
    let mut strides = Vec::with_capacity(schedule.len());
    let mut s = points;
    for &r in &schedule {
        s /= r;
        strides.push(s);
    }

    let mut twiddles = Vec::new();
    let mut next = 2 * points;
    for p in 0..schedule.len() - 1 {
        let t = TwiddleTable {
            base: next,
            stride: strides[p],
            factors: schedule[p] - 1,
        };
        next += t.words();
        twiddles.push(t);
    }
    if next > SHARED_WORDS {
        return Err(PlanError::Memory {
            needed: next,
            available: SHARED_WORDS,
        });
    }

    let mut plan = FftPlan {
        points,
        radix,
        schedule,
        strides,
        threads,
        regs_per_thread: regs,
        wavefront_depth: threads / NUM_SPS,
        vm_eligible: Vec::new(),
        layout: MemoryLayout {
            re_base: 0,
            im_base: points,
            twiddles,
            end: next,
        },
    };
    plan.vm_eligible = (0..plan.passes())
        .map(|p| vm_eligibility(&plan, p))
        .collect();
    Ok(plan)
}

impl FftPlan {
    pub fn passes(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_last(&self, pass: usize) -> bool {
        pass + 1 == self.passes()
    }

    /// Kernels each thread runs in `pass`.
    pub fn blocks(&self, pass: usize) -> usize {
        self.points / self.schedule[pass] / self.threads
    }

    /// Machine configuration for running this plan on `variant`.
    pub fn config(&self, variant: Variant) -> MachineConfig {
        MachineConfig::for_variant(variant, self.threads, self.regs_per_thread)
    }

    /// Element index of input `k` of kernel `b` in `pass`.
    pub fn element(&self, pass: usize, b: usize, k: usize) -> usize {
        let (r, s) = (self.schedule[pass], self.strides[pass]);
        (b / s) * r * s + b % s + k * s
    }

    /// Kernel of `pass` that reads and writes element `x`.
    pub fn kernel_of(&self, pass: usize, x: usize) -> usize {
        let (r, s) = (self.schedule[pass], self.strides[pass]);
        (x / (r * s)) * s + x % s
    }

    /// Frequency index held by element `x` after the last pass has run its butterflies,
    /// i.e. where the natural-order write-back puts it.
    pub fn frequency_of(&self, x: usize) -> usize {
        let mut f = 0;
        let mut weight = 1;
        for (&r, &s) in self.schedule.iter().zip(&self.strides) {
            f += (x / s) % r * weight;
            weight *= r;
        }
        f
    }
}

/// Whether `pass` may store with banked writes. Brute force over every element: the
/// writer thread in `pass` and the reader thread in `pass + 1` must agree modulo the
/// bank count. The last pass writes the result and is never eligible.
pub fn vm_eligibility(plan: &FftPlan, pass: usize) -> bool {
    if pass + 1 >= plan.passes() {
        return false;
    }
    let banks = crate::machine::NUM_BANKS;
    (0..plan.points).all(|x| {
        let w = plan.kernel_of(pass, x) % plan.threads;
        let r = plan.kernel_of(pass + 1, x) % plan.threads;
        w % banks == r % banks
    })
}

/// Shared-memory image holding `input` in the data planes and every twiddle table.
pub fn init_memory(plan: &FftPlan, input: &[Complex]) -> Result<SharedMemoryImage, PlanError> {
    if input.len() != plan.points {
        return Err(PlanError::InputLength {
            expected: plan.points,
            got: input.len(),
        });
    }
    let mut image = SharedMemoryImage::new(SHARED_WORDS);
    let mut put = |addr: usize, v: f64| {
        image
            .write_f32(addr as u32, v as f32)
            .expect("layout fits shared memory");
    };
    for (i, &(re, im)) in input.iter().enumerate() {
        put(plan.layout.re_base + i, re);
        put(plan.layout.im_base + i, im);
    }
    for (p, t) in plan.layout.twiddles.iter().enumerate() {
        let span = plan.schedule[p] * t.stride;
        for m in 1..=t.factors {
            for j in 0..t.stride {
                let (c, s) = twiddle::twiddle(j * m, span);
                put(t.re_addr(m, j), c);
                put(t.im_addr(m, j), s);
            }
        }
    }
    Ok(image)
}

/// Reads the natural-order result from the data planes.
pub fn read_output(plan: &FftPlan, image: &SharedMemoryImage) -> Vec<Complex> {
    (0..plan.points)
        .map(|i| {
            let re = image.read_f32(plan.layout.re_base + i);
            let im = image.read_f32(plan.layout.im_base + i);
            (re as f64, im as f64)
        })
        .collect()
}

/// A generated program together with its plan and target machine.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub plan: FftPlan,
    pub config: MachineConfig,
    pub program: Program,
    /// Static cycle breakdown of `program`.
    pub predicted: CycleBreakdown,
}

#[derive(Debug, Error)]
pub enum FftError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Plans and generates the program for `points`, `radix` on `variant`.
pub fn compile(points: usize, radix: usize, variant: Variant) -> Result<Compiled, PlanError> {
    let plan = plan(points, radix)?;
    let config = plan.config(variant);
    let program = emit_program(&plan, &config)?;
    let predicted = predict(&program, &config);
    Ok(Compiled {
        plan,
        config,
        program,
        predicted,
    })
}

impl Compiled {
    /// Runs the program on `input` and returns the natural-order output and the trace.
    pub fn execute(&self, input: &[Complex]) -> Result<(Vec<Complex>, ExecutionTrace), FftError> {
        let image = init_memory(&self.plan, input)?;
        let trace = run(&self.program, &self.config, image)?;
        let out = read_output(&self.plan, &trace.memory);
        Ok((out, trace))
    }
}
