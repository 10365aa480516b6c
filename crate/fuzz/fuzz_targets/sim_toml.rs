#![no_main]
use bcqtl::sim::SimConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = SimConfig::from_toml_str(text) {
            cfg.to_scenario().expect("validated config yields a scenario");
        }
    }
});
