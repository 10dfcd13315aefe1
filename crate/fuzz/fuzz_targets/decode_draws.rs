#![no_main]

use hoopstat::artifact::{decode_draws, encode_draws};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(draws) = decode_draws(data) {
        let again = decode_draws(&encode_draws(&draws)).expect("encoded draws decode");
        assert_eq!(again, draws);
    }
});
