#![no_main]
use bcqtl::io::{groups_to_csv, parse_groups_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(groups) = parse_groups_csv(text) {
            let again = parse_groups_csv(&groups_to_csv(&groups)).expect("written groups parse");
            assert_eq!(again, groups);
        }
    }
});
