#![no_main]

use diffnet::harness::RealConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = RealConfig::from_toml(text);
    }
});
