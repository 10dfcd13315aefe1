#![no_main]

use hoopstat::artifact::{decode_points, encode_points};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(lines) = decode_points(data) {
        let again = decode_points(&encode_points(lines.iter().copied())).expect("encoded points decode");
        assert_eq!(again, lines);
    }
});
