#![no_main]
use bcqtl::io::{convert_rqtl_csv, parse_geno_csv, parse_map_csv, parse_pheno_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = convert_rqtl_csv(text, "pheno", "1") {
            let _ = parse_map_csv(&t.map);
            let _ = parse_geno_csv(&t.geno);
            let _ = parse_pheno_csv(&t.pheno);
        }
    }
});
