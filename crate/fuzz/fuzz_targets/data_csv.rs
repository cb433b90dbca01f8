#![no_main]

use diffnet::harness::csvio::{parse_data_csv, write_data_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = parse_data_csv(text) {
        assert!(x.n() >= 2 && x.p() >= 1);
        let mut buf = Vec::new();
        write_data_csv(&x, &mut buf).unwrap();
        let again = parse_data_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again, x);
    }
});
