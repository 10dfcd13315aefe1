#![no_main]

use hoopstat::ingest::parse_aggregates;
use hoopstat::EntityKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_aggregates(data, EntityKind::Team) {
        let csv = ds.to_aggregate_csv();
        let again = parse_aggregates(csv.as_slice(), EntityKind::Team).expect("written aggregates parse");
        assert_eq!(again, ds);
    }
});
