//! Cycle-approximate model of the eGPU soft-GPGPU streaming multiprocessor.
//!
//! The crate is organised bottom-up:
//!
//! * [`isa`] defines the instruction set, the text assembler and static validation.
//! * [`machine`] executes a [`isa::Program`] over every thread in lockstep, with the
//!   mirrored (4R-1W / 4R-2W) and virtually banked shared memories and the per-thread
//!   coefficient cache feeding the complex functional unit.
//! * [`cycles`] assigns cycles to instructions, aggregates them into profiling rows and
//!   carries the published reference tables for diffing.
//! * [`fftgen`] compiles `(points, radix, variant)` into an executable FFT program.
//! * [`oracle`] holds the independent O(N²) DFT and comparison helpers.
//! * [`bench`] runs single configurations and the benchmark matrix for the CLI.

pub mod bench;
pub mod cycles;
pub mod fftgen;
pub mod isa;
pub mod machine;
pub mod oracle;

pub use cycles::{CycleBreakdown, CycleCategory, Metrics};
pub use fftgen::FftPlan;
pub use isa::{Instruction, Opcode, Program, Reg};
pub use machine::{MachineConfig, MemoryMode, SharedMemoryImage, Variant};
