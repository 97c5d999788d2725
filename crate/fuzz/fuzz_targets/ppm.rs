#![no_main]

use libfuzzer_sys::fuzz_target;
use mvtrack::io::{decode_ppm, encode_ppm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_ppm(data) {
        assert_eq!(decode_ppm(&encode_ppm(&img)).expect("encoded image decodes"), img);
    }
});
