#![no_main]

use libfuzzer_sys::fuzz_target;
use nilm_core::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        for name in config.appliances.keys() {
            config.appliance_params(name).unwrap();
        }
    }
});
