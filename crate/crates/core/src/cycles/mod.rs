//! Cycle cost model, profiling rows and derived performance metrics.

mod golden;

pub use golden::{
    annotation, diff_against_golden, golden, golden_tables, DiffReport, DiffRow, GoldenColumn,
    GoldenError, GoldenKey, GpuEfficiency, IpCoreComparison, Row, Tolerance, Verdict,
    GPU_EFFICIENCY, IP_CORE,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Instruction, Opcode, Program};
use crate::machine::{ExecutionTrace, MachineConfig, NUM_BANKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CycleCategory {
    FpOp,
    ComplexOp,
    IntOp,
    Load,
    Store,
    StoreVm,
    Immediate,
    Branch,
    Nop,
}

impl CycleCategory {
    pub const ALL: [CycleCategory; 9] = [
        CycleCategory::FpOp,
        CycleCategory::ComplexOp,
        CycleCategory::IntOp,
        CycleCategory::Load,
        CycleCategory::Store,
        CycleCategory::StoreVm,
        CycleCategory::Immediate,
        CycleCategory::Branch,
        CycleCategory::Nop,
    ];

    /// HALT has no category of its own; it is counted as a zero-cycle branch.
    pub fn of(op: Opcode) -> CycleCategory {
        use Opcode::*;
        match op {
            Fadd | Fsub | Fmul => CycleCategory::FpOp,
            LodCoeff | MulReal | MulImag => CycleCategory::ComplexOp,
            Iadd | Isub | Ixor | Ishl | Ishr | Iand | Ior | Mov => CycleCategory::IntOp,
            Lod => CycleCategory::Load,
            Save => CycleCategory::Store,
            SaveBank => CycleCategory::StoreVm,
            Seti | CoeffEn | CoeffDis => CycleCategory::Immediate,
            Brnz | Halt => CycleCategory::Branch,
            Nop => CycleCategory::Nop,
        }
    }

    /// Column label used in CSV and JSON output.
    pub fn label(self) -> &'static str {
        match self {
            CycleCategory::FpOp => "FP_OP",
            CycleCategory::ComplexOp => "Complex_OP",
            CycleCategory::IntOp => "INT_OP",
            CycleCategory::Load => "Load",
            CycleCategory::Store => "Store",
            CycleCategory::StoreVm => "StoreVM",
            CycleCategory::Immediate => "Immediate",
            CycleCategory::Branch => "Branch",
            CycleCategory::Nop => "NOP",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Issue cycles of one instruction.
///
/// Arithmetic sweeps the wavefront once per SP, loads use the four read ports, standard
/// stores use the write ports of the memory variant and banked stores write four words
/// per cycle. Scalar control instructions take one cycle; HALT takes none.
pub fn instruction_cost(instr: &Instruction, config: &MachineConfig) -> u64 {
    let threads = config.threads as u64;
    match CycleCategory::of(instr.opcode) {
        CycleCategory::FpOp | CycleCategory::ComplexOp | CycleCategory::IntOp => {
            config.wavefront_depth() as u64
        }
        CycleCategory::Load | CycleCategory::StoreVm => threads / NUM_BANKS as u64,
        CycleCategory::Store => threads / config.memory.store_width() as u64,
        _ if instr.opcode == Opcode::Halt => 0,
        CycleCategory::Immediate | CycleCategory::Branch | CycleCategory::Nop => 1,
    }
}

/// Cycles per profiling row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleBreakdown {
    #[serde(rename = "FP_OP")]
    pub fp_op: u64,
    #[serde(rename = "Complex_OP")]
    pub complex_op: u64,
    #[serde(rename = "INT_OP")]
    pub int_op: u64,
    #[serde(rename = "Load")]
    pub load: u64,
    #[serde(rename = "Store")]
    pub store: u64,
    #[serde(rename = "StoreVM")]
    pub store_vm: u64,
    #[serde(rename = "Immediate")]
    pub immediate: u64,
    #[serde(rename = "Branch")]
    pub branch: u64,
    #[serde(rename = "NOP")]
    pub nop: u64,
    #[serde(rename = "Total")]
    pub total: u64,
}

impl CycleBreakdown {
    fn slot_mut(&mut self, cat: CycleCategory) -> &mut u64 {
        match cat {
            CycleCategory::FpOp => &mut self.fp_op,
            CycleCategory::ComplexOp => &mut self.complex_op,
            CycleCategory::IntOp => &mut self.int_op,
            CycleCategory::Load => &mut self.load,
            CycleCategory::Store => &mut self.store,
            CycleCategory::StoreVm => &mut self.store_vm,
            CycleCategory::Immediate => &mut self.immediate,
            CycleCategory::Branch => &mut self.branch,
            CycleCategory::Nop => &mut self.nop,
        }
    }

    pub fn get(&self, cat: CycleCategory) -> u64 {
        [
            self.fp_op,
            self.complex_op,
            self.int_op,
            self.load,
            self.store,
            self.store_vm,
            self.immediate,
            self.branch,
            self.nop,
        ][cat.slot()]
    }

    pub fn add(&mut self, cat: CycleCategory, cycles: u64) {
        *self.slot_mut(cat) += cycles;
        self.total += cycles;
    }

    pub fn memory_cycles(&self) -> u64 {
        self.load + self.store + self.store_vm
    }

    /// FP work expressed in FP-issue cycles: each complex-unit issue replaces two FP issues.
    pub fn fp_equivalent(&self) -> u64 {
        self.fp_op + 2 * self.complex_op
    }
}

/// Sums a trace into profiling rows.
pub fn profile(trace: &ExecutionTrace) -> CycleBreakdown {
    let mut b = CycleBreakdown::default();
    for e in &trace.entries {
        b.add(e.category, e.cycles);
    }
    b
}

/// Breakdown of a straight-line program, counting each instruction once.
pub fn predict(program: &Program, config: &MachineConfig) -> CycleBreakdown {
    let mut b = CycleBreakdown::default();
    for instr in &program.instructions {
        b.add(
            CycleCategory::of(instr.opcode),
            instruction_cost(instr, config),
        );
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "Time_us")]
    pub time_us: f64,
    #[serde(rename = "Efficiency_pct")]
    pub efficiency_pct: f64,
    #[serde(rename = "Memory_pct")]
    pub memory_pct: f64,
    pub baseline_fp_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty breakdown: total cycles is zero")]
    Empty,
    #[error("baseline FP cycles {baseline} exceed total cycles {total}")]
    BaselineExceedsTotal { baseline: u64, total: u64 },
}

pub fn metrics(
    breakdown: &CycleBreakdown,
    baseline_fp: u64,
    config: &MachineConfig,
) -> Result<Metrics, MetricsError> {
    metrics_at(breakdown, baseline_fp, config.clock_hz)
}

pub fn metrics_at(
    breakdown: &CycleBreakdown,
    baseline_fp: u64,
    clock_hz: f64,
) -> Result<Metrics, MetricsError> {
    let total = breakdown.total;
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    if baseline_fp > total {
        return Err(MetricsError::BaselineExceedsTotal {
            baseline: baseline_fp,
            total,
        });
    }
    let t = total as f64;
    Ok(Metrics {
        time_us: t / clock_hz * 1e6,
        efficiency_pct: 100.0 * baseline_fp as f64 / t,
        memory_pct: 100.0 * breakdown.memory_cycles() as f64 / t,
        baseline_fp_cycles: baseline_fp,
    })
}

pub const CSV_COLUMNS: [&str; 13] = [
    "FP_OP",
    "Complex_OP",
    "INT_OP",
    "Load",
    "Store",
    "StoreVM",
    "Immediate",
    "Branch",
    "NOP",
    "Total",
    "Time_us",
    "Efficiency_pct",
    "Memory_pct",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn csv_row(b: &CycleBreakdown, m: &Metrics) -> String {
    let mut s = String::new();
    for cat in CycleCategory::ALL {
        let _ = write!(s, "{},", b.get(cat));
    }
    let _ = write!(
        s,
        "{},{:.2},{:.2},{:.2}",
        b.total, m.time_us, m.efficiency_pct, m.memory_pct
    );
    s
}

/// Breakdown and metrics as one flat JSON object keyed by the CSV column names.
pub fn to_json(b: &CycleBreakdown, m: &Metrics) -> serde_json::Value {
    let mut v = serde_json::to_value(b).expect("breakdown serializes");
    let extra = serde_json::to_value(m).expect("metrics serialize");
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}
