#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = weaksep::datagrid::read_csv_long(data, None, None);
});
