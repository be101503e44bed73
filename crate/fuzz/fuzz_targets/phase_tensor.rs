#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(subjects) = weaksep::plv::read_phase_tensors(data) {
        for p in &subjects {
            let plv = weaksep::plv::compute_plv(p, p).unwrap();
            assert!(plv.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
});
