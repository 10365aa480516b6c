use bcqtl::sim::{run_config, Method, SimConfig};

const POWER: &str = r#"
[scenario]
label = "small"
experiment = "power"
n = 120
d_cm = 10.0
theta = 0.4
n_reps = 60
seed = 9
methods = ["R_n", "R_n_star", "KS", "AD", "AD_asymptotic"]
f1 = { kernel = "normal", mu = 0.0, sigma = 1.0 }
f2 = { kernel = "normal", mu = 0.8, sigma = 1.5 }

[calibration]
null_reps = 1000
table_size = 5000
"#;

#[test]
fn runs_are_reproducible() {
    let cfg = SimConfig::from_toml_str(POWER).unwrap();
    let a = run_config(&cfg).unwrap();
    let b = run_config(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    for row in &a {
        assert_eq!(row.reps, 60);
        assert!((0.0..=1.0).contains(&row.rejection_rate));
    }
    let rn = a.iter().find(|r| r.method == Method::Rn).unwrap();
    assert!(rn.rejection_rate > 0.5, "{}", rn.rejection_rate);
}

#[test]
fn seed_changes_the_replicates() {
    let a = run_config(&SimConfig::from_toml_str(POWER).unwrap()).unwrap();
    let b = run_config(&SimConfig::from_toml_str(&POWER.replace("seed = 9", "seed = 10")).unwrap()).unwrap();
    assert_ne!(a, b);
}

#[test]
fn type1_rows_carry_table_critical_values() {
    let text = POWER
        .replace("\"power\"", "\"type1\"")
        .replace("mu = 0.8, sigma = 1.5", "mu = 0.0, sigma = 1.0")
        .replace(", \"KS\", \"AD\", \"AD_asymptotic\"", "");
    let rows = run_config(&SimConfig::from_toml_str(&text).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row.critical_value.is_some_and(|c| c > 0.0));
        assert!(row.rejection_rate < 0.25);
    }
}
