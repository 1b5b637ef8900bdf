#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(region) = chebmap::parse_region(text, "fuzz") {
        // anything accepted must survive a write and re-read unchanged
        let again = chebmap::parse_region(&chebmap::serialize_region(&region), "fuzz").unwrap();
        assert_eq!(region.boundary(), again.boundary());
        assert_eq!(region.name, again.name);
    }
});
