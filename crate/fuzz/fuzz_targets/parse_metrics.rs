#![no_main]

use hoopstat::report::parse_metrics;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_metrics(data) {
        assert!(table.metrics.values().flat_map(|m| m.values()).all(|v| v.is_finite()));
    }
});
