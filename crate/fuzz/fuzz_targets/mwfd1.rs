#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = weaksep::datagrid::read_mwfd1(data) {
        // anything accepted must survive a write/read cycle
        let mut out = Vec::new();
        weaksep::datagrid::write_mwfd1(&d, &mut out).unwrap();
        assert_eq!(weaksep::datagrid::read_mwfd1(&out).unwrap(), d);
    }
});
