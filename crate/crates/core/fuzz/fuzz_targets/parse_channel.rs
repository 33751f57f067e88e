#![no_main]

use libfuzzer_sys::fuzz_target;
use nilm_core::ingest::{format_channel, good_sections, parse_channel, resample_mean, DEFAULT_MAX_GAP, DEFAULT_PERIOD};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(readings) = parse_channel(text) else { return };
    assert_eq!(parse_channel(&format_channel(&readings)).unwrap(), readings);
    if let Ok(series) = resample_mean(&readings, DEFAULT_PERIOD) {
        for s in good_sections(&series, DEFAULT_MAX_GAP) {
            assert!(series.fill_section(s).iter().all(|v| v.is_finite()));
        }
    }
});
