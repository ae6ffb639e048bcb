#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use onebit_core::ldpc::{build_code, LdpcCode, SpaDecoder};

fn code() -> &'static (LdpcCode, SpaDecoder) {
    static CODE: OnceLock<(LdpcCode, SpaDecoder)> = OnceLock::new();
    CODE.get_or_init(|| {
        let c = build_code(64, 0.5, 3, 1).unwrap();
        let d = SpaDecoder::new(&c);
        (c, d)
    })
}

// One byte per code bit, mapped to an LLR in [-64, 63.5]; the first byte picks the iteration cap.
fuzz_target!(|data: &[u8]| {
    let (code, decoder) = code();
    let n = code.n();
    if data.len() < n + 1 {
        return;
    }
    let max_iter = 1 + data[0] as usize % 60;
    let llrs: Vec<f64> = data[1..=n]
        .iter()
        .map(|&b| (b as i8) as f64 / 2.0)
        .collect();
    let r = decoder.decode(&llrs, max_iter).unwrap();
    assert_eq!(r.bits.len(), n);
    assert!(r.iterations_used <= max_iter);
    assert_eq!(r.syndrome_ok, code.parity().syndrome_ok(&r.bits));
});
