#![no_main]

use libfuzzer_sys::fuzz_target;
use onebit_core::ldpc::{parse_alist, write_alist};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(h) = parse_alist(text) {
        let again = parse_alist(&write_alist(&h)).expect("written alist parses");
        assert_eq!(again.rows(), h.rows());
    }
});
