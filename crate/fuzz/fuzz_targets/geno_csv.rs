#![no_main]
use bcqtl::io::parse_geno_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = parse_geno_csv(text) {
            assert_eq!(table.ids.len(), table.calls.len());
            assert!(table.calls.iter().all(|row| row.len() == table.markers.len()));
        }
    }
});
