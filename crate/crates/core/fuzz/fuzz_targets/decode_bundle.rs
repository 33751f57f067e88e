#![no_main]

use libfuzzer_sys::fuzz_target;
use nilm_core::pipeline::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(bundle) = decode(data) {
        // the format has one encoding per bundle
        assert_eq!(encode(&bundle).unwrap(), data);
    }
});
