#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = chebmap::decode(data) {
        assert_eq!(chebmap::encode(&map), data);
    }
});
