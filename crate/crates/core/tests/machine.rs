use egpu::cycles::{predict, profile};
use egpu::isa::assemble;
use egpu::machine::{check_hazards, run, MemoryError, RunError, NUM_BANKS};
use egpu::{MachineConfig, SharedMemoryImage, Variant};
use proptest::prelude::*;

const WORDS: u32 = 32;

#[derive(Debug, Clone, Copy)]
enum Access {
    Store { addr: u32, value: u32 },
    Banked { sp: usize, addr: u32, value: u32 },
    Read { sp: usize, addr: u32 },
}

fn access(banked: bool) -> impl Strategy<Value = Access> {
    let addr = 0..WORDS;
    let sp = 0usize..16;
    let standard =
        (addr.clone(), any::<u32>()).prop_map(|(addr, value)| Access::Store { addr, value });
    let read = (sp.clone(), addr.clone()).prop_map(|(sp, addr)| Access::Read { sp, addr });
    if banked {
        let bank = (sp, addr, any::<u32>()).prop_map(|(sp, addr, value)| Access::Banked {
            sp,
            addr,
            value,
        });
        prop_oneof![standard, bank, read].boxed()
    } else {
        prop_oneof![standard, read].boxed()
    }
}

proptest! {
    #[test]
    fn banks_stay_mirrored_without_banked_stores(ops in prop::collection::vec(access(false), 1..200)) {
        let mut mem = SharedMemoryImage::new(WORDS as usize);
        for op in ops {
            match op {
                Access::Store { addr, value } => mem.write(addr, value).unwrap(),
                Access::Read { sp, addr } => {
                    let lenient = mem.read(sp, addr, false).unwrap();
                    prop_assert_eq!(mem.read(sp, addr, true).unwrap(), lenient);
                    prop_assert_eq!(lenient, mem.word(addr as usize));
                }
                Access::Banked { .. } => unreachable!(),
            }
            prop_assert!(mem.banks_mirrored());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// A shadow model records which bank, if any, exclusively holds each address. Every
    /// strict read that the model calls stale must fail, and every other read must return
    /// the last value written.
    #[test]
    fn stale_bank_reads_are_always_detected(ops in prop::collection::vec(access(true), 1..120)) {
        let mut mem = SharedMemoryImage::new(WORDS as usize);
        let mut owner: Vec<Option<usize>> = vec![None; WORDS as usize];
        let mut latest = vec![0u32; WORDS as usize];
        for op in ops {
            match op {
                Access::Store { addr, value } => {
                    mem.write(addr, value).unwrap();
                    owner[addr as usize] = None;
                    latest[addr as usize] = value;
                }
                Access::Banked { sp, addr, value } => {
                    mem.write_banked(sp, addr, value).unwrap();
                    owner[addr as usize] = Some(sp % NUM_BANKS);
                    latest[addr as usize] = value;
                }
                Access::Read { sp, addr } => {
                    let stale = owner[addr as usize].is_some_and(|b| b != sp % NUM_BANKS);
                    match mem.read(sp, addr, true) {
                        Err(MemoryError::InvalidBank { bank, .. }) => {
                            prop_assert!(stale);
                            prop_assert_eq!(bank, sp % NUM_BANKS);
                        }
                        Ok(v) => {
                            prop_assert!(!stale);
                            prop_assert_eq!(v, latest[addr as usize]);
                        }
                        Err(e) => prop_assert!(false, "unexpected {}", e),
                    }
                }
            }
        }
    }

    /// Every thread banks a word at its own index and then loads the word at `t ^ mask`.
    /// The load reads across banks exactly when the mask changes the SP's bank bits.
    #[test]
    fn cross_bank_loads_fail_in_strict_programs(wavefronts in 1usize..5, mask in 0u32..16) {
        let threads = 16 * wavefronts;
        let src = format!(
            "SETI R1, 0\nSETI R2, {mask}\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nSAVE_BANK R0, R0, R1\nIXOR R3, R0, R2\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nLOD R4, R3, R1\nHALT"
        );
        let p = assemble(&src).unwrap();
        let mut config = MachineConfig::for_variant(Variant::DpVm, threads, 8);
        let words = config.shared_words();
        let image = || SharedMemoryImage::new(words);
        let crosses = !(mask as usize).is_multiple_of(NUM_BANKS);

        match run(&p, &config, image()) {
            Err(RunError::Memory { source: MemoryError::InvalidBank { .. }, .. }) => prop_assert!(crosses),
            Ok(trace) => {
                prop_assert!(!crosses);
                for t in 0..threads {
                    prop_assert_eq!(trace.register(t, 4), t as u32 ^ mask);
                }
            }
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }

        config.strict_banking = false;
        prop_assert!(run(&p, &config, image()).is_ok());
    }

    #[test]
    fn trace_cycles_sum_to_the_static_prediction(
        body in prop::collection::vec(prop::sample::select(vec![
            "FADD R3, R1, R2", "IADD R4, R0, R1", "LOD R5, R0, R1", "SAVE R3, R0, R1",
            "SAVE_BANK R4, R0, R1", "SETI R6, 7", "NOP", "MOV R7, R0",
        ]), 0..30),
        wavefronts in 1usize..9,
    ) {
        let src = format!("{}\nHALT", body.join("\n"));
        let p = assemble(&src).unwrap();
        let config = MachineConfig::for_variant(Variant::DpVm, 16 * wavefronts, 8);
        let trace = run(&p, &config, SharedMemoryImage::new(config.shared_words())).unwrap();
        let measured = profile(&trace);
        prop_assert_eq!(measured, predict(&p, &config));
        prop_assert_eq!(measured.total, trace.total_cycles);
        prop_assert_eq!(trace.entries.iter().map(|e| e.cycles).sum::<u64>(), trace.total_cycles);
    }
}

#[test]
fn banked_store_write_order_matches_sp_groups() {
    let p = assemble("SETI R1, 100\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nSAVE_BANK R0, R1, R1\nHALT")
        .unwrap();
    let config = MachineConfig::for_variant(Variant::DpVm, 32, 4);
    let trace = run(&p, &config, SharedMemoryImage::new(config.shared_words())).unwrap();
    // Threads 15 and 31 both write address 200 from SP 15; the second wavefront lands last.
    assert_eq!(trace.memory.bank_word(15 % NUM_BANKS, 200), 31);
    for b in 0..NUM_BANKS {
        assert_eq!(trace.memory.is_valid(b, 200), b == 3);
    }
}

#[test]
fn hazards_follow_the_issue_cycle_rule() {
    let check = |src: &str, threads: usize| {
        let p = assemble(src).unwrap();
        check_hazards(
            &p,
            &MachineConfig::for_variant(Variant::DpComplex, threads, 8),
        )
    };
    // At 128 threads an integer op issues for 8 cycles, so back-to-back is safe.
    assert!(check("IADD R1, R0, R0\nIADD R2, R1, R1\nHALT", 128).is_empty());
    // SETI issues for a single cycle at any thread count.
    let h = check("SETI R1, 1\nIADD R2, R1, R1\nHALT", 128);
    assert_eq!((h.len(), h[0].index, h[0].missing), (1, 1, 7));
    let h = check("FADD R1, R2, R3\nFADD R2, R1, R1\nHALT", 64);
    assert_eq!(h[0].missing, 4);
    // The coefficient cache behaves as a register.
    let h = check("LOD_COEFF R1, R2\nMUL_REAL R3, R4, R5\nHALT", 16);
    assert_eq!(h[0].missing, 7);
    assert!(check(
        "LOD_COEFF R1, R2\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nNOP\nMUL_IMAG R3, R4, R5\nHALT",
        16
    )
    .is_empty());
}

#[test]
fn memory_image_round_trips_through_a_file() {
    let mut mem = SharedMemoryImage::new(64);
    mem.write_f32(3, 1.5).unwrap();
    mem.write_banked(6, 9, 77).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("image.bin");
    mem.save(&path).unwrap();
    assert_eq!(SharedMemoryImage::load(&path).unwrap(), mem);
}
