//! Published reference profiles and the per-row diff against simulated breakdowns.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{metrics_at, CycleBreakdown, CycleCategory};
use crate::machine::Variant;

const GOLDEN_TEXT: &str = include_str!("golden.txt");

/// Column order of every block in `golden.txt`.
const COLUMN_ORDER: [Variant; 6] = [
    Variant::Dp,
    Variant::DpVm,
    Variant::DpComplex,
    Variant::DpVmComplex,
    Variant::Qp,
    Variant::QpComplex,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Row {
    FpOp,
    ComplexOp,
    IntOp,
    Load,
    Store,
    StoreVm,
    Immediate,
    Branch,
    Nop,
    Total,
    TimeUs,
    EfficiencyPct,
    MemoryPct,
}

impl Row {
    pub const ALL: [Row; 13] = [
        Row::FpOp,
        Row::ComplexOp,
        Row::IntOp,
        Row::Load,
        Row::Store,
        Row::StoreVm,
        Row::Immediate,
        Row::Branch,
        Row::Nop,
        Row::Total,
        Row::TimeUs,
        Row::EfficiencyPct,
        Row::MemoryPct,
    ];

    pub fn label(self) -> &'static str {
        super::CSV_COLUMNS[self as usize]
    }

    pub fn from_label(s: &str) -> Option<Row> {
        Row::ALL.into_iter().find(|r| r.label() == s)
    }

    pub fn category(self) -> Option<CycleCategory> {
        CycleCategory::ALL.get(self as usize).copied()
    }

    /// Acceptance tolerance of this row.
    pub fn tolerance(self) -> Tolerance {
        match self {
            Row::Load | Row::Store | Row::StoreVm => Tolerance::Exact,
            Row::FpOp | Row::ComplexOp | Row::IntOp => Tolerance::Relative(0.05),
            Row::Immediate | Row::Branch | Row::Nop => Tolerance::Relative(0.50),
            Row::Total | Row::TimeUs | Row::EfficiencyPct | Row::MemoryPct => {
                Tolerance::Informational
            }
        }
    }

    fn is_count(self) -> bool {
        self.category().is_some() || self == Row::Total
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    Exact,
    /// Maximum |simulated - published| / published.
    Relative(f64),
    /// Reported without a verdict.
    Informational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldenKey {
    pub radix: usize,
    pub points: usize,
    pub variant: Variant,
}

impl fmt::Display for GoldenKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{} {} {}", self.radix, self.points, self.variant)
    }
}

/// One published column. Rows absent from the source table, and empty cells, are absent
/// from `cells`; a dash in a count row is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenColumn {
    pub key: GoldenKey,
    pub cells: BTreeMap<Row, f64>,
}

impl GoldenColumn {
    pub fn get(&self, row: Row) -> Option<f64> {
        self.cells.get(&row).copied()
    }

    /// The published count rows as a breakdown; missing rows count as zero.
    pub fn breakdown(&self) -> CycleBreakdown {
        let mut b = CycleBreakdown::default();
        for cat in CycleCategory::ALL {
            let row = Row::ALL[cat as usize];
            *b.slot_mut(cat) = self.get(row).unwrap_or(0.0) as u64;
        }
        b.total = self.get(Row::Total).unwrap_or(0.0) as u64;
        b
    }
}

/// Cells whose published value is internally inconsistent and therefore not gated.
pub fn annotation(key: GoldenKey, row: Row) -> Option<&'static str> {
    use Variant::*;
    match (key.radix, key.points, key.variant, row) {
        (16, 4096, DpVmComplex | QpComplex, Row::FpOp) => {
            Some("published 6192; the same column's efficiency implies 6912 (digit transposition)")
        }
        (16, 4096, DpVm | DpVmComplex, Row::Store | Row::StoreVm) => Some(
            "banked/standard split not derivable: at most one of the two non-final passes can bank",
        ),
        (16, 4096, Qp | QpComplex, Row::Store) => Some(
            "published 16384 breaks the QP = DP/2 store identity that holds for every other column",
        ),
        _ => None,
    }
}

/// A table block being parsed: its (radix, points) key and the raw cells of each row.
type Block<'a> = Option<((usize, usize), Vec<(Row, Vec<&'a str>)>)>;

fn parse_golden(text: &str) -> Vec<GoldenColumn> {
    let mut out = Vec::new();
    let mut block: Block = None;

    fn flush(block: Block, out: &mut Vec<GoldenColumn>) {
        let Some(((radix, points), rows)) = block else {
            return;
        };
        for (col, &variant) in COLUMN_ORDER.iter().enumerate() {
            let present = rows
                .iter()
                .find(|(r, _)| *r == Row::Total)
                .is_some_and(|(_, cells)| cells[col] != "-");
            if !present {
                continue;
            }
            let mut cells = BTreeMap::new();
            for (row, values) in &rows {
                match values[col] {
                    "?" => {}
                    "-" if row.is_count() => {
                        cells.insert(*row, 0.0);
                    }
                    v => {
                        cells.insert(*row, v.parse().expect("numeric golden cell"));
                    }
                }
            }
            out.push(GoldenColumn {
                key: GoldenKey {
                    radix,
                    points,
                    variant,
                },
                cells,
            });
        }
    }

    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            flush(block.take(), &mut out);
            let mut it = head
                .split_whitespace()
                .map(|x| x.parse().expect("block key"));
            block = Some(((it.next().unwrap(), it.next().unwrap()), Vec::new()));
            continue;
        }
        let mut parts = line.split_whitespace();
        let row = Row::from_label(parts.next().unwrap()).expect("known row label");
        let values: Vec<&str> = parts.collect();
        assert_eq!(values.len(), COLUMN_ORDER.len(), "golden row {row} width");
        block
            .as_mut()
            .expect("row inside a block")
            .1
            .push((row, values));
    }
    flush(block, &mut out);
    out.sort_by_key(|c| c.key);
    out
}

/// Every published profiling column.
pub fn golden_tables() -> &'static [GoldenColumn] {
    static TABLES: OnceLock<Vec<GoldenColumn>> = OnceLock::new();
    TABLES.get_or_init(|| parse_golden(GOLDEN_TEXT))
}

pub fn golden(key: GoldenKey) -> Option<&'static GoldenColumn> {
    golden_tables().iter().find(|c| c.key == key)
}

/// FFT IP core comparison row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IpCoreComparison {
    pub points: usize,
    pub ip_time_us: f64,
    pub egpu_time_us: f64,
    pub ratio_performance: f64,
    pub ratio_normalized: f64,
}

pub const IP_CORE: [IpCoreComparison; 3] = [
    IpCoreComparison {
        points: 256,
        ip_time_us: 0.50,
        egpu_time_us: 2.54,
        ratio_performance: 5.1,
        ratio_normalized: 2.6,
    },
    IpCoreComparison {
        points: 1024,
        ip_time_us: 1.84,
        egpu_time_us: 12.65,
        ratio_performance: 6.9,
        ratio_normalized: 3.5,
    },
    IpCoreComparison {
        points: 4096,
        ip_time_us: 6.92,
        egpu_time_us: 46.05,
        ratio_performance: 6.7,
        ratio_normalized: 3.3,
    },
];

/// FFT efficiency in percent at 256, 1024 and 4096 points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpuEfficiency {
    pub device: &'static str,
    pub pct: [(usize, f64); 3],
}

pub const GPU_EFFICIENCY: [GpuEfficiency; 3] = [
    GpuEfficiency {
        device: "eGPU",
        pct: [(256, 25.0), (1024, 27.0), (4096, 36.0)],
    },
    GpuEfficiency {
        device: "V100",
        pct: [(256, 15.0), (1024, 18.0), (4096, 21.0)],
    },
    GpuEfficiency {
        device: "A100",
        pct: [(256, 21.0), (1024, 27.0), (4096, 33.0)],
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    /// Published cell is annotated as inconsistent.
    NotGated,
    /// No published value.
    NotPublished,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRow {
    pub row: Row,
    pub simulated: f64,
    pub golden: Option<f64>,
    pub abs_delta: Option<f64>,
    pub rel_delta: Option<f64>,
    pub tolerance: Tolerance,
    pub verdict: Verdict,
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub key: GoldenKey,
    pub rows: Vec<DiffRow>,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn row(&self, row: Row) -> &DiffRow {
        self.rows
            .iter()
            .find(|r| r.row == row)
            .expect("every row reported")
    }
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.key)?;
        for r in &self.rows {
            let golden = r.golden.map_or("-".to_string(), |g| format!("{g}"));
            let rel = r
                .rel_delta
                .map_or(String::new(), |d| format!("{:+.2}%", d * 100.0));
            write!(
                f,
                "  {:<15}{:>12.2}{:>12}{:>10}  {:?}",
                r.row.label(),
                r.simulated,
                golden,
                rel,
                r.verdict
            )?;
            if let Some(note) = r.note {
                write!(f, "  ({note})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoldenError {
    #[error("no published column for {0}")]
    UnknownKey(GoldenKey),
}

/// Compares a simulated breakdown with the published column for `key`.
///
/// Derived rows are computed with the FP-equivalent baseline at the variant's clock.
pub fn diff_against_golden(
    breakdown: &CycleBreakdown,
    key: GoldenKey,
) -> Result<DiffReport, GoldenError> {
    let column = golden(key).ok_or(GoldenError::UnknownKey(key))?;
    let m = metrics_at(
        breakdown,
        breakdown.fp_equivalent().min(breakdown.total),
        key.variant.clock_hz(),
    )
    .ok();

    let rows = Row::ALL
        .into_iter()
        .map(|row| {
            let simulated = match (row.category(), row) {
                (Some(cat), _) => breakdown.get(cat) as f64,
                (None, Row::Total) => breakdown.total as f64,
                (None, Row::TimeUs) => m.map_or(0.0, |m| m.time_us),
                (None, Row::EfficiencyPct) => m.map_or(0.0, |m| m.efficiency_pct),
                (None, _) => m.map_or(0.0, |m| m.memory_pct),
            };
            let golden = column.get(row);
            let tolerance = row.tolerance();
            let note = annotation(key, row);
            let abs_delta = golden.map(|g| simulated - g);
            let rel_delta = golden.map(|g| {
                if g == 0.0 {
                    if simulated == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (simulated - g) / g
                }
            });
            let verdict = match (golden, tolerance) {
                (None, _) => Verdict::NotPublished,
                _ if note.is_some() => Verdict::NotGated,
                (_, Tolerance::Informational) => Verdict::Info,
                (Some(g), Tolerance::Exact) => {
                    if simulated == g {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    }
                }
                (Some(_), Tolerance::Relative(tol)) => {
                    if rel_delta.unwrap().abs() <= tol + 1e-12 {
                        Verdict::Pass
                    } else {
                        Verdict::Fail
                    }
                }
            };
            DiffRow {
                row,
                simulated,
                golden,
                abs_delta,
                rel_delta,
                tolerance,
                verdict,
                note,
            }
        })
        .collect();
    Ok(DiffReport { key, rows })
}
