#![no_main]

use diffnet::harness::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text, None) {
        let back = RunConfig::from_toml(&cfg.to_toml(), None).unwrap();
        assert_eq!(back, cfg);
    }
});
