#![no_main]

use libfuzzer_sys::fuzz_target;
use mvtrack::io::{format_trajectory, parse_trajectory};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_trajectory(text) {
        let again = parse_trajectory(&format_trajectory(&records)).expect("formatted trajectory parses");
        assert_eq!(again, records);
    }
});
