#![no_main]

use libfuzzer_sys::fuzz_target;
use mvtrack::io::{format_obj, parse_obj};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_obj(text) {
        let again = parse_obj(&format_obj(&mesh)).expect("formatted mesh parses");
        assert_eq!(again.vertices(), mesh.vertices());
        assert_eq!(again.faces(), mesh.faces());
    }
});
