#![no_main]

use hoopstat::RegionScheme;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(scheme) = serde_json::from_slice::<RegionScheme>(data) {
        assert!(!scheme.is_empty());
        let text = serde_json::to_vec(&scheme).unwrap();
        assert_eq!(serde_json::from_slice::<RegionScheme>(&text).unwrap(), scheme);
    }
});
