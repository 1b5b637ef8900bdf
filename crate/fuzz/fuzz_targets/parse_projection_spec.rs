#![no_main]

use chebmap_core::projections::{make_projection, ProjectionKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(kind) = text.parse::<ProjectionKind>() {
        let back: ProjectionKind = kind.to_string().parse().unwrap();
        assert_eq!(back, kind);
        let _ = make_projection(kind);
    }
});
