#![no_main]

use libfuzzer_sys::fuzz_target;
use mvtrack::io::{format_rig, parse_rig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rig) = parse_rig(text) {
        let once = format_rig(&rig);
        let again = parse_rig(&once).expect("formatted rig parses");
        assert_eq!(format_rig(&again), once);
    }
});
