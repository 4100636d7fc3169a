#ifndef EGPU_H
#define EGPU_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  EGPU_STATUS_OK = 0,
  EGPU_STATUS_NULL_POINTER = 1,
  EGPU_STATUS_INVALID_ARGUMENT = 2,
  EGPU_STATUS_PLAN = 3,
  EGPU_STATUS_RUNTIME = 4,
  EGPU_STATUS_PANIC = 5,
} EgpuStatus;

/**
 * A compiled FFT program for one radix, size and machine variant.
 */
typedef struct EgpuFft EgpuFft;

/**
 * The result of simulating an [`EgpuFft`] on one input vector.
 */
typedef struct EgpuRun EgpuRun;

/**
 * Cycles per profiling category.
 */
typedef struct {
  uint64_t fp_op;
  uint64_t complex_op;
  uint64_t int_op;
  uint64_t load;
  uint64_t store;
  uint64_t store_vm;
  uint64_t immediate;
  uint64_t branch;
  uint64_t nop;
  uint64_t total;
} EgpuCycles;

typedef struct {
  double time_us;
  double efficiency_pct;
  double memory_pct;
} EgpuMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null if none. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *egpu_last_error(void);

/**
 * Compiles a `points`-point FFT with base `radix` for `variant` (one of `dp`, `qp`,
 * `dp-vm`, `dp-complex`, `dp-vm-complex`, `qp-complex`).
 *
 * # Safety
 * `variant` must be a NUL-terminated string and `out` a writable pointer.
 */
EgpuStatus egpu_fft_compile(size_t radix, size_t points, const char *variant, EgpuFft **out);

/**
 * # Safety
 * `fft` must be null or a handle from [`egpu_fft_compile`] not yet freed.
 */
void egpu_fft_free(EgpuFft *fft);

/**
 * Number of SIMT threads the program runs with, or 0 for a null handle.
 *
 * # Safety
 * `fft` must be null or a live handle.
 */
size_t egpu_fft_threads(const EgpuFft *fft);

/**
 * Number of instructions in the generated program, or 0 for a null handle.
 *
 * # Safety
 * `fft` must be null or a live handle.
 */
size_t egpu_fft_instruction_count(const EgpuFft *fft);

/**
 * Static cycle breakdown of the generated program.
 *
 * # Safety
 * `fft` must be a live handle and `out` writable.
 */
EgpuStatus egpu_fft_predicted_cycles(const EgpuFft *fft, EgpuCycles *out);

/**
 * Number of pipeline hazards in the generated program; 0 for any correct schedule.
 *
 * # Safety
 * `fft` must be null or a live handle.
 */
size_t egpu_fft_hazards(const EgpuFft *fft);

/**
 * Makes loads of stale virtual-bank words fail (the default) or return the stale word.
 *
 * # Safety
 * `fft` must be a live handle.
 */
EgpuStatus egpu_fft_set_strict_banking(EgpuFft *fft, bool strict);

/**
 * Assembly listing of the generated program as a new string, released with
 * [`egpu_string_free`]. Null for a null handle.
 *
 * # Safety
 * `fft` must be null or a live handle.
 */
char *egpu_fft_disassemble(const EgpuFft *fft);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void egpu_string_free(char *s);

/**
 * Simulates the program on `len` complex samples given as separate real and imaginary
 * arrays. `len` must equal the transform size. The result is verified against a direct
 * DFT; see [`egpu_run_max_rel_error`].
 *
 * # Safety
 * `fft` must be a live handle, `re` and `im` must point to `len` readable doubles and
 * `out` must be writable.
 */
EgpuStatus egpu_fft_execute(const EgpuFft *fft,
                            const double *re,
                            const double *im,
                            size_t len,
                            EgpuRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`egpu_fft_execute`] not yet freed.
 */
void egpu_run_free(EgpuRun *run);

/**
 * Copies the natural-order transform into `re` and `im`, each of `len` doubles.
 *
 * # Safety
 * `run` must be a live handle and `re`, `im` must point to `len` writable doubles.
 */
EgpuStatus egpu_run_output(const EgpuRun *run, double *re, double *im, size_t len);

/**
 * Measured cycles of the simulated run.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
EgpuStatus egpu_run_cycles(const EgpuRun *run, EgpuCycles *out);

/**
 * Time, efficiency and memory fraction of the simulated run.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
EgpuStatus egpu_run_metrics(const EgpuRun *run, EgpuMetrics *out);

/**
 * Largest error against the direct DFT relative to the largest reference magnitude, or
 * NaN for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
double egpu_run_max_rel_error(const EgpuRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EGPU_H */
