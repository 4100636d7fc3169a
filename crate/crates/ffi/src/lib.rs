//! C ABI over the egpu FFT compiler and simulator.
//!
//! Handles are opaque heap objects owned by the caller and released with the matching
//! `*_free` function. Every fallible call returns an [`EgpuStatus`]; on failure the
//! message is available from [`egpu_last_error`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use egpu::cycles::{metrics, profile};
use egpu::fftgen::{compile, Compiled};
use egpu::machine::check_hazards;
use egpu::oracle::{compare, dft_reference, Complex};
use egpu::{isa, CycleBreakdown, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgpuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Plan = 3,
    Runtime = 4,
    Panic = 5,
}

/// A compiled FFT program for one radix, size and machine variant.
pub struct EgpuFft {
    compiled: Compiled,
}

/// The result of simulating an [`EgpuFft`] on one input vector.
pub struct EgpuRun {
    output: Vec<Complex>,
    cycles: EgpuCycles,
    metrics: EgpuMetrics,
    max_rel_error: f64,
}

/// Cycles per profiling category.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EgpuCycles {
    pub fp_op: u64,
    pub complex_op: u64,
    pub int_op: u64,
    pub load: u64,
    pub store: u64,
    pub store_vm: u64,
    pub immediate: u64,
    pub branch: u64,
    pub nop: u64,
    pub total: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EgpuMetrics {
    pub time_us: f64,
    pub efficiency_pct: f64,
    pub memory_pct: f64,
}

impl From<CycleBreakdown> for EgpuCycles {
    fn from(b: CycleBreakdown) -> Self {
        EgpuCycles {
            fp_op: b.fp_op,
            complex_op: b.complex_op,
            int_op: b.int_op,
            load: b.load,
            store: b.store,
            store_vm: b.store_vm,
            immediate: b.immediate,
            branch: b.branch,
            nop: b.nop,
            total: b.total,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl ToString) {
    let text = message.to_string().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Outcome = Result<(), (EgpuStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> EgpuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EgpuStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EgpuStatus::Panic
        }
    }
}

fn null(what: &str) -> (EgpuStatus, String) {
    (EgpuStatus::NullPointer, format!("{what} is null"))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, (EgpuStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the most recent failure on this thread, or null if none. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn egpu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Compiles a `points`-point FFT with base `radix` for `variant` (one of `dp`, `qp`,
/// `dp-vm`, `dp-complex`, `dp-vm-complex`, `qp-complex`).
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_compile(
    radix: usize,
    points: usize,
    variant: *const c_char,
    out: *mut *mut EgpuFft,
) -> EgpuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if variant.is_null() {
            return Err(null("variant"));
        }
        let name = CStr::from_ptr(variant)
            .to_str()
            .map_err(|e| (EgpuStatus::InvalidArgument, e.to_string()))?;
        let variant: Variant = name.parse().map_err(|e: egpu::machine::UnknownVariant| {
            (EgpuStatus::InvalidArgument, e.to_string())
        })?;
        let compiled =
            compile(points, radix, variant).map_err(|e| (EgpuStatus::Plan, e.to_string()))?;
        *out = Box::into_raw(Box::new(EgpuFft { compiled }));
        Ok(())
    })
}

/// # Safety
/// `fft` must be null or a handle from [`egpu_fft_compile`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_free(fft: *mut EgpuFft) {
    if !fft.is_null() {
        drop(Box::from_raw(fft));
    }
}

/// Number of SIMT threads the program runs with, or 0 for a null handle.
///
/// # Safety
/// `fft` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_threads(fft: *const EgpuFft) -> usize {
    fft.as_ref().map_or(0, |f| f.compiled.plan.threads)
}

/// Number of instructions in the generated program, or 0 for a null handle.
///
/// # Safety
/// `fft` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_instruction_count(fft: *const EgpuFft) -> usize {
    fft.as_ref().map_or(0, |f| f.compiled.program.len())
}

/// Static cycle breakdown of the generated program.
///
/// # Safety
/// `fft` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_predicted_cycles(
    fft: *const EgpuFft,
    out: *mut EgpuCycles,
) -> EgpuStatus {
    guard(|| {
        let fft = reference(fft, "fft")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = fft.compiled.predicted.into();
        Ok(())
    })
}

/// Number of pipeline hazards in the generated program; 0 for any correct schedule.
///
/// # Safety
/// `fft` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_hazards(fft: *const EgpuFft) -> usize {
    fft.as_ref().map_or(0, |f| {
        check_hazards(&f.compiled.program, &f.compiled.config).len()
    })
}

/// Makes loads of stale virtual-bank words fail (the default) or return the stale word.
///
/// # Safety
/// `fft` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_set_strict_banking(
    fft: *mut EgpuFft,
    strict: bool,
) -> EgpuStatus {
    guard(|| {
        let fft = fft.as_mut().ok_or_else(|| null("fft"))?;
        fft.compiled.config.strict_banking = strict;
        Ok(())
    })
}

/// Assembly listing of the generated program as a new string, released with
/// [`egpu_string_free`]. Null for a null handle.
///
/// # Safety
/// `fft` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_disassemble(fft: *const EgpuFft) -> *mut c_char {
    match fft.as_ref() {
        Some(f) => CString::new(isa::disassemble(&f.compiled.program))
            .map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn egpu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates the program on `len` complex samples given as separate real and imaginary
/// arrays. `len` must equal the transform size. The result is verified against a direct
/// DFT; see [`egpu_run_max_rel_error`].
///
/// # Safety
/// `fft` must be a live handle, `re` and `im` must point to `len` readable doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn egpu_fft_execute(
    fft: *const EgpuFft,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut EgpuRun,
) -> EgpuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let fft = reference(fft, "fft")?;
        if re.is_null() || im.is_null() {
            return Err(null("input"));
        }
        let points = fft.compiled.plan.points;
        if len != points {
            return Err((
                EgpuStatus::InvalidArgument,
                format!("input has {len} samples, transform size is {points}"),
            ));
        }
        let input: Vec<Complex> = slice::from_raw_parts(re, len)
            .iter()
            .copied()
            .zip(slice::from_raw_parts(im, len).iter().copied())
            .collect();
        let (output, trace) = fft
            .compiled
            .execute(&input)
            .map_err(|e| (EgpuStatus::Runtime, e.to_string()))?;
        let breakdown = profile(&trace);
        let m = metrics(&breakdown, breakdown.fp_equivalent(), &fft.compiled.config)
            .map_err(|e| (EgpuStatus::Runtime, e.to_string()))?;
        let stats = compare(&output, &dft_reference(&input)).expect("equal lengths");
        *out = Box::into_raw(Box::new(EgpuRun {
            output,
            cycles: breakdown.into(),
            metrics: EgpuMetrics {
                time_us: m.time_us,
                efficiency_pct: m.efficiency_pct,
                memory_pct: m.memory_pct,
            },
            max_rel_error: stats.max_rel_err,
        }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`egpu_fft_execute`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn egpu_run_free(run: *mut EgpuRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Copies the natural-order transform into `re` and `im`, each of `len` doubles.
///
/// # Safety
/// `run` must be a live handle and `re`, `im` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn egpu_run_output(
    run: *const EgpuRun,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> EgpuStatus {
    guard(|| {
        let run = reference(run, "run")?;
        if re.is_null() || im.is_null() {
            return Err(null("output"));
        }
        if len != run.output.len() {
            return Err((
                EgpuStatus::InvalidArgument,
                format!(
                    "buffer holds {len} samples, output has {}",
                    run.output.len()
                ),
            ));
        }
        let (re, im) = (
            slice::from_raw_parts_mut(re, len),
            slice::from_raw_parts_mut(im, len),
        );
        for (i, &(r, j)) in run.output.iter().enumerate() {
            re[i] = r;
            im[i] = j;
        }
        Ok(())
    })
}

/// Measured cycles of the simulated run.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn egpu_run_cycles(run: *const EgpuRun, out: *mut EgpuCycles) -> EgpuStatus {
    guard(|| {
        let run = reference(run, "run")?;
        *out.as_mut().ok_or_else(|| null("out"))? = run.cycles;
        Ok(())
    })
}

/// Time, efficiency and memory fraction of the simulated run.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn egpu_run_metrics(
    run: *const EgpuRun,
    out: *mut EgpuMetrics,
) -> EgpuStatus {
    guard(|| {
        let run = reference(run, "run")?;
        *out.as_mut().ok_or_else(|| null("out"))? = run.metrics;
        Ok(())
    })
}

/// Largest error against the direct DFT relative to the largest reference magnitude, or
/// NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn egpu_run_max_rel_error(run: *const EgpuRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.max_rel_error)
}
