#![no_main]
use bcqtl::sim::KlCase;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = KlCase::from_toml_str(text);
    }
});
