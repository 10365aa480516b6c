#![no_main]
use bcqtl::io::parse_map_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(markers) = parse_map_csv(text) {
            assert!(markers.windows(2).all(|w| w[0].position_cm < w[1].position_cm));
        }
    }
});
