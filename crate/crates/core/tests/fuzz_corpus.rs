//! Replays the checked-in fuzz corpus through the parsers with the same
//! assertions as the fuzz targets.

use std::fs;
use std::path::{Path, PathBuf};

use bcqtl::io::{convert_rqtl_csv, groups_to_csv, parse_geno_csv, parse_groups_csv, parse_map_csv, parse_pheno_csv};
use bcqtl::sim::{KlCase, SimConfig};
use bcqtl::NullDistTable;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter_map(|p| fs::read(&p).ok().map(|b| (p, String::from_utf8_lossy(&b).into_owned())))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn groups_seeds() {
    let mut parsed = 0;
    for (_, text) in seeds("groups_csv") {
        if let Ok(g) = parse_groups_csv(&text) {
            assert_eq!(parse_groups_csv(&groups_to_csv(&g)).unwrap(), g);
            parsed += 1;
        }
    }
    assert!(parsed >= 1);
}

#[test]
fn marker_table_seeds() {
    for (_, text) in seeds("map_csv") {
        if let Ok(m) = parse_map_csv(&text) {
            assert!(m.windows(2).all(|w| w[0].position_cm < w[1].position_cm));
        }
    }
    for (_, text) in seeds("geno_csv") {
        if let Ok(t) = parse_geno_csv(&text) {
            assert!(t.calls.iter().all(|row| row.len() == t.markers.len()));
        }
    }
    for (_, text) in seeds("pheno_csv") {
        let _ = parse_pheno_csv(&text);
    }
}

#[test]
fn toml_seeds() {
    for (path, text) in seeds("sim_toml") {
        let cfg = SimConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.to_scenario().unwrap();
    }
    for (path, text) in seeds("kl_toml") {
        KlCase::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn null_table_seeds() {
    for (path, text) in seeds("null_table") {
        let (csv, sidecar) = text.split_once('\0').expect("seed holds a NUL separator");
        match NullDistTable::parse(csv, sidecar) {
            Ok(t) => {
                let p = t.pvalue(1.0);
                assert!(p > 0.0 && p <= 1.0);
            }
            Err(e) => assert!(path.to_string_lossy().contains("negative"), "{}: {e}", path.display()),
        }
    }
}

#[test]
fn rqtl_seeds() {
    for (_, text) in seeds("rqtl_csv") {
        let t = convert_rqtl_csv(&text, "pheno", "1").unwrap();
        parse_map_csv(&t.map).unwrap();
        parse_geno_csv(&t.geno).unwrap();
        parse_pheno_csv(&t.pheno).unwrap();
    }
}
