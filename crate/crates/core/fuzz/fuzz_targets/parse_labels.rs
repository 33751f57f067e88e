#![no_main]

use libfuzzer_sys::fuzz_target;
use nilm_core::ingest::{format_labels, parse_labels};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(metas) = parse_labels(1, text) {
        // canonical text parses back to the same channels
        assert_eq!(parse_labels(1, &format_labels(&metas)).unwrap(), metas);
    }
});
