use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use egpu_ffi::*;

fn compile(
    radix: usize,
    points: usize,
    variant: &str,
) -> Result<*mut EgpuFft, (EgpuStatus, String)> {
    let name = CString::new(variant).unwrap();
    let mut fft = ptr::null_mut();
    let status = unsafe { egpu_fft_compile(radix, points, name.as_ptr(), &mut fft) };
    if status == EgpuStatus::Ok {
        Ok(fft)
    } else {
        assert!(fft.is_null());
        Err((status, last_error()))
    }
}

fn last_error() -> String {
    let p = egpu_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn impulse(points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; points];
    re[3] = 1.0;
    (re, vec![0.0; points])
}

#[test]
fn compile_execute_and_read_back() {
    let fft = compile(4, 256, "dp-vm").unwrap();
    unsafe {
        assert_eq!(egpu_fft_threads(fft), 64);
        assert!(egpu_fft_instruction_count(fft) > 0);
        assert_eq!(egpu_fft_hazards(fft), 0);

        let (re, im) = impulse(256);
        let mut run = ptr::null_mut();
        assert_eq!(
            egpu_fft_execute(fft, re.as_ptr(), im.as_ptr(), 256, &mut run),
            EgpuStatus::Ok
        );
        assert!(egpu_run_max_rel_error(run) < 1e-5);

        let (mut ore, mut oim) = (vec![0.0; 256], vec![0.0; 256]);
        assert_eq!(
            egpu_run_output(run, ore.as_mut_ptr(), oim.as_mut_ptr(), 256),
            EgpuStatus::Ok
        );
        // A shifted impulse transforms to exp(-2*pi*i*3k/N).
        for k in 0..256 {
            let angle = -2.0 * std::f64::consts::PI * 3.0 * k as f64 / 256.0;
            assert!((ore[k] - angle.cos()).abs() < 1e-5, "re[{k}]");
            assert!((oim[k] - angle.sin()).abs() < 1e-5, "im[{k}]");
        }

        let mut measured = EgpuCycles::default();
        let mut predicted = EgpuCycles::default();
        assert_eq!(egpu_run_cycles(run, &mut measured), EgpuStatus::Ok);
        assert_eq!(
            egpu_fft_predicted_cycles(fft, &mut predicted),
            EgpuStatus::Ok
        );
        assert_eq!(measured, predicted);
        assert_eq!(
            (measured.load, measured.store, measured.store_vm),
            (800, 1024, 256)
        );

        let mut m = EgpuMetrics::default();
        assert_eq!(egpu_run_metrics(run, &mut m), EgpuStatus::Ok);
        let expected = measured.total as f64 / 771.0;
        assert!((m.time_us - expected).abs() < 1e-9);

        egpu_run_free(run);
        egpu_fft_free(fft);
    }
}

#[test]
fn disassembly_round_trips_as_text() {
    let fft = compile(16, 256, "dp-complex").unwrap();
    unsafe {
        let text = egpu_fft_disassemble(fft);
        assert!(!text.is_null());
        let listing = CStr::from_ptr(text).to_str().unwrap().to_owned();
        egpu_string_free(text);
        let program = egpu::isa::assemble(&listing).unwrap();
        assert_eq!(program.len(), egpu_fft_instruction_count(fft));
        assert!(listing.contains("MUL_REAL"));
        egpu_fft_free(fft);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let (status, msg) = compile(4, 256, "dp-turbo").unwrap_err();
    assert_eq!(status, EgpuStatus::InvalidArgument);
    assert!(msg.contains("dp-turbo"), "{msg}");

    let (status, msg) = compile(4, 300, "dp").unwrap_err();
    assert_eq!(status, EgpuStatus::Plan);
    assert!(!msg.is_empty());

    let (status, _) = compile(3, 243, "dp").unwrap_err();
    assert_eq!(status, EgpuStatus::Plan);

    unsafe {
        assert_eq!(
            egpu_fft_compile(4, 256, ptr::null(), &mut ptr::null_mut()),
            EgpuStatus::NullPointer
        );
        let fft = compile(4, 256, "dp").unwrap();
        let (re, im) = impulse(128);
        let mut run = ptr::null_mut();
        assert_eq!(
            egpu_fft_execute(fft, re.as_ptr(), im.as_ptr(), 128, &mut run),
            EgpuStatus::InvalidArgument
        );
        assert!(run.is_null());
        assert!(last_error().contains("128"));
        assert_eq!(
            egpu_fft_execute(fft, ptr::null(), im.as_ptr(), 256, &mut run),
            EgpuStatus::NullPointer
        );
        egpu_fft_free(fft);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        egpu_fft_free(ptr::null_mut());
        egpu_run_free(ptr::null_mut());
        egpu_string_free(ptr::null_mut());
        assert_eq!(egpu_fft_threads(ptr::null()), 0);
        assert!(egpu_fft_disassemble(ptr::null()).is_null());
        assert!(egpu_run_max_rel_error(ptr::null()).is_nan());
        let mut c = EgpuCycles::default();
        assert_eq!(
            egpu_run_cycles(ptr::null(), &mut c),
            EgpuStatus::NullPointer
        );
        assert_eq!(
            egpu_fft_set_strict_banking(ptr::null_mut(), true),
            EgpuStatus::NullPointer
        );
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/egpu.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "egpu_fft_compile",
        "egpu_fft_execute",
        "egpu_run_cycles",
        "egpu_last_error",
        "EGPU_STATUS_PLAN",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    let probe = tempfile_dir().join("probe.c");
    std::fs::write(&probe, "#include \"egpu.h\"\nint main(void) { EgpuCycles c; (void)c; return egpu_last_error() != 0; }\n").unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&probe)
        .output()
    else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("egpu-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
