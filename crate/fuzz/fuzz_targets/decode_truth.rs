#![no_main]

use hoopstat::artifact::decode_truth;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_truth(data);
});
