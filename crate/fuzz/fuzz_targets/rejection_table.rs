#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = weaksep::simlab::RejectionTable::read_csv(data) {
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
    }
});
