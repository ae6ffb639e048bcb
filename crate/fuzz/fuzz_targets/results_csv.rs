#![no_main]

use libfuzzer_sys::fuzz_target;
use onebit_core::harness::read_csv_from;

fuzz_target!(|data: &[u8]| {
    let _ = read_csv_from(data);
});
