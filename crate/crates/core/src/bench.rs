//! Single-configuration runs and the benchmark matrix behind the CLI.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cycles::{
    diff_against_golden, golden, golden_tables, metrics, profile, CycleBreakdown, DiffReport,
    GoldenKey, GpuEfficiency, IpCoreComparison, Metrics, MetricsError, Verdict, GPU_EFFICIENCY,
    IP_CORE,
};
use crate::fftgen::{compile, init_memory, read_output, PlanError};
use crate::machine::{check_hazards, run, RunError, Variant};
use crate::oracle::{compare, dft_reference, Complex, ErrorStats};

/// Largest accepted `max|err| / max|X|` against the double-precision DFT.
pub const VERIFY_TOLERANCE: f64 = 1e-4;

/// A `(radix, points, variant)` combination.
pub type Combination = GoldenKey;

/// Uniform samples in [-1, 1) per component from a ChaCha8 stream seeded with `seed`.
pub fn random_input(points: usize, seed: u64) -> Vec<Complex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..points)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct InputError {
    pub line: usize,
    pub message: String,
}

/// Parses one complex sample per line as `re im` or `re,im`. Blank lines and text after
/// `#` are ignored.
pub fn parse_samples(text: &str) -> Result<Vec<Complex>, InputError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| InputError {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let [re, im] = fields[..] else {
            return Err(err(format!("expected two numbers, found {}", fields.len())));
        };
        let num = |f: &str| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("not a finite number: {f}")))
        };
        out.push((num(re)?, num(im)?));
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub combination: Combination,
    pub breakdown: CycleBreakdown,
    pub metrics: Metrics,
    /// Simulated output against the DFT of the input.
    pub error: ErrorStats,
    pub verified: bool,
    pub instructions: usize,
    pub hazards: usize,
    /// Simulated natural-order output.
    #[serde(skip)]
    pub output: Vec<Complex>,
}

/// Compiles, simulates and verifies one combination on `input`.
pub fn run_combination(
    combination: Combination,
    input: &[Complex],
    strict_banking: bool,
) -> Result<RunReport, BenchError> {
    let reference = dft_reference(input);
    run_with_reference(combination, input, &reference, strict_banking)
}

/// Like [`run_combination`] with a precomputed DFT of `input`.
pub fn run_with_reference(
    combination: Combination,
    input: &[Complex],
    reference: &[Complex],
    strict_banking: bool,
) -> Result<RunReport, BenchError> {
    let Combination {
        radix,
        points,
        variant,
    } = combination;
    let mut compiled = compile(points, radix, variant)?;
    compiled.config.strict_banking = strict_banking;
    let image = init_memory(&compiled.plan, input)?;
    let trace = run(&compiled.program, &compiled.config, image)?;
    let output = read_output(&compiled.plan, &trace.memory);
    let breakdown = profile(&trace);
    let metrics = metrics(&breakdown, breakdown.fp_equivalent(), &compiled.config)?;
    let error = compare(&output, reference).expect("plan output has the input length");
    Ok(RunReport {
        combination,
        breakdown,
        metrics,
        error,
        verified: error.max_rel_err <= VERIFY_TOLERANCE,
        instructions: compiled.program.len(),
        hazards: check_hazards(&compiled.program, &compiled.config).len(),
        output,
    })
}

/// Which combinations to run and how.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchSpec {
    pub combinations: Vec<Combination>,
    pub seed: u64,
    pub strict_banking: bool,
}

impl BenchSpec {
    /// Every published column, optionally restricted to one radix, size or variant.
    pub fn published(
        radix: Option<usize>,
        points: Option<usize>,
        variant: Option<Variant>,
        seed: u64,
        strict_banking: bool,
    ) -> BenchSpec {
        let mut combinations: Vec<Combination> = golden_tables()
            .iter()
            .map(|c| c.key)
            .filter(|k| radix.is_none_or(|r| k.radix == r))
            .filter(|k| points.is_none_or(|p| k.points == p))
            .filter(|k| variant.is_none_or(|v| k.variant == v))
            .collect();
        combinations.sort();
        BenchSpec {
            combinations,
            seed,
            strict_banking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub run: RunReport,
    /// Absent for combinations without a published column.
    pub diff: Option<DiffReport>,
}

/// Cell counts over every diffed row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BenchSummary {
    pub combinations: usize,
    pub exact: usize,
    pub tolerant: usize,
    pub failed: usize,
    pub not_gated: usize,
    pub verification_failures: usize,
}

/// Published comparison data carried alongside simulated results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceData {
    pub source: &'static str,
    pub ip_core: Vec<IpCoreComparison>,
    pub gpu_efficiency: Vec<GpuEfficiency>,
}

pub fn reference_data() -> ReferenceData {
    ReferenceData {
        source: "paper",
        ip_core: IP_CORE.to_vec(),
        gpu_efficiency: GPU_EFFICIENCY.to_vec(),
    }
}

/// Simulated time of the best radix-16 variant against the published IP-core time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IpRatio {
    pub points: usize,
    pub simulated_time_us: f64,
    pub ip_time_us: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub summary: BenchSummary,
    pub ip_ratios: Vec<IpRatio>,
    pub reference: ReferenceData,
}

impl BenchReport {
    pub fn verification_passed(&self) -> bool {
        self.summary.verification_failures == 0
    }

    pub fn golden_passed(&self) -> bool {
        self.summary.failed == 0
    }
}

/// Runs every combination of `spec`; rows come back sorted by key whatever order the
/// worker threads finish in.
pub fn bench(spec: &BenchSpec) -> Result<BenchReport, BenchError> {
    let results: Vec<Result<BenchRow, BenchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .combinations
            .iter()
            .map(|&key| {
                scope.spawn(move || {
                    let input = random_input(key.points, spec.seed);
                    let run = run_combination(key, &input, spec.strict_banking)?;
                    let diff = golden(key)
                        .is_some()
                        .then(|| diff_against_golden(&run.breakdown, key))
                        .transpose()
                        .expect("key has a published column");
                    Ok(BenchRow { run, diff })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench worker panicked"))
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(|r| r.run.combination);

    let mut summary = BenchSummary {
        combinations: rows.len(),
        ..Default::default()
    };
    for row in &rows {
        summary.verification_failures += usize::from(!row.run.verified);
        for cell in row.diff.iter().flat_map(|d| &d.rows) {
            match cell.verdict {
                Verdict::Pass if cell.abs_delta == Some(0.0) => summary.exact += 1,
                Verdict::Pass => summary.tolerant += 1,
                Verdict::Fail => summary.failed += 1,
                Verdict::NotGated => summary.not_gated += 1,
                Verdict::NotPublished | Verdict::Info => {}
            }
        }
    }

    let ip_ratios = IP_CORE
        .iter()
        .filter_map(|ip| {
            let best = rows
                .iter()
                .filter(|r| r.run.combination.radix == 16 && r.run.combination.points == ip.points)
                .map(|r| r.run.metrics.time_us)
                .min_by(f64::total_cmp)?;
            Some(IpRatio {
                points: ip.points,
                simulated_time_us: best,
                ip_time_us: ip.ip_time_us,
                ratio: best / ip.ip_time_us,
            })
        })
        .collect();

    Ok(BenchReport {
        seed: spec.seed,
        rows,
        summary,
        ip_ratios,
        reference: reference_data(),
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for row in &self.rows {
            let r = &row.run;
            writeln!(
                f,
                "{:<22} total {:>7}  time {:>8.2} us  eff {:>6.2}%  mem {:>6.2}%  err {:.2e}  {}",
                r.combination.to_string(),
                r.breakdown.total,
                r.metrics.time_us,
                r.metrics.efficiency_pct,
                r.metrics.memory_pct,
                r.error.max_rel_err,
                if r.verified { "ok" } else { "MISMATCH" }
            )?;
        }
        let s = &self.summary;
        writeln!(
            f,
            "cells: {} exact, {} within tolerance, {} failed, {} not gated; {} verification failures",
            s.exact, s.tolerant, s.failed, s.not_gated, s.verification_failures
        )?;
        for ratio in &self.ip_ratios {
            writeln!(
                f,
                "{} points: best radix-16 {:.2} us vs IP core {:.2} us, ratio {:.1}",
                ratio.points, ratio.simulated_time_us, ratio.ip_time_us, ratio.ratio
            )?;
        }
        writeln!(f, "reference (source: {}):", self.reference.source)?;
        for ip in &self.reference.ip_core {
            writeln!(
                f,
                "  IP core {:>5} points: {:.2} us; eGPU {:.2} us; ratio {:.1} (normalized {:.1})",
                ip.points,
                ip.ip_time_us,
                ip.egpu_time_us,
                ip.ratio_performance,
                ip.ratio_normalized
            )?;
        }
        for g in &self.reference.gpu_efficiency {
            write!(f, "  {:<6} efficiency:", g.device)?;
            for (points, pct) in g.pct {
                write!(f, " {points}: {pct}%")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
