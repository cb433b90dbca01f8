#![no_main]

use diffnet::harness::parse_plot_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_plot_csv(text);
    }
});
