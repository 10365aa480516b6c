#![no_main]
use bcqtl::NullDistTable;
use libfuzzer_sys::fuzz_target;

// Input: table CSV, a NUL byte, then the JSON sidecar.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Some((csv, sidecar)) = text.split_once('\0') else { return };
    if let Ok(table) = NullDistTable::parse(csv, sidecar) {
        let p = table.pvalue(1.0);
        assert!(p > 0.0 && p <= 1.0);
        let _ = table.critical_value(0.05);
    }
});
