#![no_main]

use hoopstat::ingest::parse_shot_events;
use hoopstat::EntityKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_shot_events(data, EntityKind::Player) {
        for row in ds.rows() {
            assert!(row.makes().iter().zip(row.attempts()).all(|(m, a)| m <= a));
        }
    }
});
