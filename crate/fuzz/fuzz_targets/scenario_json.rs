#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // parsing and validation only; running a study is not bounded in time
    let _ = weaksep::simlab::StudySpec::from_json(text);
    let _ = serde_json::from_str::<weaksep::simlab::SimulationScenario>(text);
});
