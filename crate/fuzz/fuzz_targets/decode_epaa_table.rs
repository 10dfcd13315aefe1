#![no_main]

use hoopstat::artifact::decode_epaa_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_epaa_table(data);
});
