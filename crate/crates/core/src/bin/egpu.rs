//! `egpu` command-line harness.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use egpu::bench::{bench, parse_samples, random_input, run_combination, BenchSpec, Combination};
use egpu::cycles::{csv_header, csv_row, diff_against_golden, golden, to_json, CSV_COLUMNS};
use egpu::isa::{assemble, disassemble, Program};
use egpu::Variant;

const EXIT_NUMERIC: u8 = 1;
const EXIT_GOLDEN: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "egpu",
    version,
    about = "eGPU simulator, assembler and FFT benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
struct Common {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for the uniform [-1, 1) input samples.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail loads that hit a stale bank instead of returning the stale word.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    strict_banking: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile, simulate and verify one FFT configuration.
    Run {
        #[arg(long)]
        radix: usize,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        variant: Variant,
        /// Input samples, one `re im` pair per line; random when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run every published configuration, optionally filtered, and diff against the
    /// published tables.
    Bench {
        #[arg(long)]
        radix: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        variant: Option<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Assemble a text listing into a JSON program file.
    Asm {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the listing of a JSON program file.
    Disasm {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl ToString) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| fail(EXIT_NUMERIC, format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn cmd_run(key: Combination, input: Option<PathBuf>, common: &Common) -> Result<u8, Failure> {
    let samples = match &input {
        Some(path) => parse_samples(&read(path)?)
            .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))?,
        None => random_input(key.points, common.seed),
    };
    if samples.len() != key.points {
        return Err(fail(
            EXIT_USAGE,
            format!(
                "input has {} samples, expected {}",
                samples.len(),
                key.points
            ),
        ));
    }
    let report =
        run_combination(key, &samples, common.strict_banking).map_err(|e| fail(EXIT_NUMERIC, e))?;
    let diff = golden(key).map(|_| diff_against_golden(&report.breakdown, key).expect("published"));

    let text = match common.format {
        Format::Csv => format!(
            "{}\n{}\n",
            csv_header(),
            csv_row(&report.breakdown, &report.metrics)
        ),
        Format::Json => {
            let v = serde_json::json!({
                "radix": key.radix,
                "points": key.points,
                "variant": key.variant.name(),
                "seed": input.is_none().then_some(common.seed),
                "cycles": to_json(&report.breakdown, &report.metrics),
                "error": report.error,
                "verified": report.verified,
                "hazards": report.hazards,
                "instructions": report.instructions,
                "golden_diff": diff,
            });
            format!(
                "{}\n",
                serde_json::to_string_pretty(&v).expect("report serializes")
            )
        }
        Format::Text => {
            let mut s = format!("{key}\n");
            let values: Vec<String> = csv_row(&report.breakdown, &report.metrics)
                .split(',')
                .map(str::to_string)
                .collect();
            for (col, val) in CSV_COLUMNS.iter().zip(values) {
                s += &format!("  {col:<15}{val:>12}\n");
            }
            s += &format!(
                "verification: max rel err {:.3e} ({})\n",
                report.error.max_rel_err,
                if report.verified { "pass" } else { "FAIL" }
            );
            if let Some(d) = &diff {
                s += &format!("published column:\n{d}");
            }
            s
        }
    };
    emit(&common.out, &text)?;
    Ok(if report.verified { 0 } else { EXIT_NUMERIC })
}

fn cmd_bench(spec: BenchSpec, common: &Common) -> Result<u8, Failure> {
    let report = bench(&spec).map_err(|e| fail(EXIT_NUMERIC, e))?;
    let text = match common.format {
        Format::Csv => {
            let mut s = format!("radix,points,variant,{}\n", csv_header());
            for row in &report.rows {
                let k = row.run.combination;
                s += &format!(
                    "{},{},{},{}\n",
                    k.radix,
                    k.points,
                    k.variant,
                    csv_row(&row.run.breakdown, &row.run.metrics)
                );
            }
            s
        }
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
        Format::Text => {
            let mut s = report.to_string();
            for row in &report.rows {
                if let Some(d) = row.diff.as_ref().filter(|d| !d.passed()) {
                    s += &d.to_string();
                }
            }
            s
        }
    };
    emit(&common.out, &text)?;
    Ok(if !report.verification_passed() {
        EXIT_NUMERIC
    } else if !report.golden_passed() {
        EXIT_GOLDEN
    } else {
        0
    })
}

fn cmd_asm(file: &Path, out: &Option<PathBuf>) -> Result<u8, Failure> {
    let program =
        assemble(&read(file)?).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", file.display())))?;
    let json = serde_json::to_string_pretty(&program).expect("program serializes");
    emit(out, &format!("{json}\n"))?;
    Ok(0)
}

fn cmd_disasm(file: &Path, out: &Option<PathBuf>) -> Result<u8, Failure> {
    let program: Program = serde_json::from_str(&read(file)?)
        .map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", file.display())))?;
    emit(out, &disassemble(&program))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            radix,
            points,
            variant,
            input,
            common,
        } => cmd_run(
            Combination {
                radix,
                points,
                variant,
            },
            input,
            &common,
        ),
        Command::Bench {
            radix,
            points,
            variant,
            common,
        } => cmd_bench(
            BenchSpec::published(radix, points, variant, common.seed, common.strict_banking),
            &common,
        ),
        Command::Asm { file, out } => cmd_asm(&file, &out),
        Command::Disasm { file, out } => cmd_disasm(&file, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("egpu: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
