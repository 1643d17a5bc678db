use phaseconv::config::{MSchedule, Methods, DEFAULT_MC_DRAWS};
use phaseconv::{parse_config, Experiment};
use phaseconv_core::u1::RateSchedule;

const MINIMAL_FOM: &str = r#"{
    "source": {"probs": [0.5, 0.5]},
    "target": {"probs": [0.5, 0.5]},
    "n_grid": [100],
    "m_schedule": {"a": 0.5}
}"#;

#[test]
fn minimal_config_gets_defaults() {
    let c = parse_config(MINIMAL_FOM, Experiment::U1Fom).unwrap();
    assert_eq!(c.seed, 0);
    assert_eq!(c.methods, Methods::default());
    assert_eq!(c.mc_draws, DEFAULT_MC_DRAWS);
    assert_eq!(c.threshold, 0.95);
    assert_eq!(c.trim_threshold, 1e-15);
    assert_eq!(c.caps.fft_len, 1 << 24);
    assert_eq!(c.caps.classes, 1_000_000);
    assert_eq!(c.caps.grid_points, None);
    assert_eq!(c.m_schedule, Some(MSchedule::Rate(RateSchedule::Power(0.5))));
    assert_eq!(c.config_hash.len(), 64);
}

#[test]
fn hash_ignores_formatting_and_key_order() {
    let a = parse_config(MINIMAL_FOM, Experiment::U1Fom).unwrap();
    let b = parse_config(
        r#"{"m_schedule":{"a":0.5},"n_grid":[100],"target":{"probs":[0.5,0.5]},"source":{"probs":[0.5,0.5]}}"#,
        Experiment::U1Fom,
    )
    .unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    let c = parse_config(&MINIMAL_FOM.replace("[100]", "[101]"), Experiment::U1Fom).unwrap();
    assert_ne!(a.config_hash, c.config_hash);
}

#[test]
fn short_probability_list_names_the_field() {
    let text = MINIMAL_FOM.replace(r#""source": {"probs": [0.5, 0.5]}"#, r#""source": {"probs": [0.5, 0.4]}"#);
    let errs = parse_config(&text, Experiment::U1Fom).unwrap_err().0;
    assert_eq!(errs.len(), 1);
    assert!(errs[0].starts_with("source.probs"), "{errs:?}");
    assert!(errs[0].contains("0.9"), "{errs:?}");
}

#[test]
fn every_error_is_reported() {
    let text = r#"{
        "source": {"probs": [0.5, 0.5], "ofset": 1},
        "target": {"probs": [0.7, 0.0, 0.3]},
        "n_grid": [10, 5],
        "m_schedule": {"a": 0.5, "c": 1},
        "methods": ["exact", "fast"],
        "mc_draws": 10,
        "colour": "red"
    }"#;
    let errs = parse_config(text, Experiment::U1Fom).unwrap_err().0;
    for needle in ["source.ofset", "target", "n_grid", "m_schedule", "methods[1]", "mc_draws", "colour"] {
        assert!(errs.iter().any(|e| e.starts_with(needle)), "missing {needle}: {errs:?}");
    }
    assert_eq!(errs.len(), 7, "{errs:?}");
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    let text = r#"{"source": {"probs": [1.0]}, "target": {"components": [{"weight": 1.0, "probs": [1.0], "phase": 0}]},
                   "m_schedule": {"list": [2]}, "caps": {"ram": 1}, "extra": true}"#;
    let errs = parse_config(text, Experiment::MixedOracle).unwrap_err().0;
    assert!(errs.iter().any(|e| e.starts_with("target.components[0].phase")), "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("caps.ram")), "{errs:?}");
    assert!(errs.iter().any(|e| e.starts_with("extra")), "{errs:?}");
}

#[test]
fn missing_required_fields() {
    let errs = parse_config("{}", Experiment::U1Fom).unwrap_err().0;
    for needle in ["source: required", "target: required", "n_grid: required", "m_schedule: required"] {
        assert!(errs.iter().any(|e| e == needle), "missing {needle}: {errs:?}");
    }
    let errs = parse_config("{}", Experiment::Zd).unwrap_err().0;
    assert_eq!(errs, ["source: required", "n_grid: required"]);
}

#[test]
fn malformed_documents() {
    assert!(parse_config("{", Experiment::Zd).unwrap_err().0[0].starts_with("malformed JSON"));
    assert!(parse_config("[1, 2]", Experiment::Zd).is_err());
}

#[test]
fn sqrt_schedule_gives_expected_m() {
    let text = MINIMAL_FOM.replace("[100]", "[400, 1600, 6400]");
    let c = parse_config(&text, Experiment::U1Fom).unwrap();
    let schedule = c.m_schedule.unwrap();
    let ms: Vec<u64> = c.n_grid.iter().enumerate().map(|(i, &n)| schedule.m_at(i, n)).collect();
    assert_eq!(ms, [20, 40, 80]);
}

#[test]
fn explicit_m_list_must_match_grid() {
    let text = MINIMAL_FOM.replace(r#"{"a": 0.5}"#, r#"{"list": [1, 2]}"#);
    let errs = parse_config(&text, Experiment::U1Fom).unwrap_err().0;
    assert!(errs[0].contains("has 2 entries but n_grid has 1"), "{errs:?}");
}

#[test]
fn range_grid_expands() {
    let c = parse_config(
        r#"{"source": {"probs": [0.9, 0.1]}, "n_grid": {"from": 2, "to": 24, "step": 2}}"#,
        Experiment::Zd,
    )
    .unwrap();
    assert_eq!(c.n_grid, (2..=24).step_by(2).collect::<Vec<_>>());
    assert_eq!(c.zd_probs.as_deref(), Some(&[0.9, 0.1][..]));
}

#[test]
fn zd_allows_gaps_but_u1_does_not() {
    let gapped = r#"{"source": {"probs": [0.5, 0.0, 0.5]}, "n_grid": [3]}"#;
    assert!(parse_config(gapped, Experiment::Zd).is_ok());
    let errs = parse_config(gapped, Experiment::U1Posterior).unwrap_err().0;
    assert!(errs[0].starts_with("source"), "{errs:?}");
}

#[test]
fn experiment_field_must_agree() {
    let text = MINIMAL_FOM.replacen('{', r#"{"experiment": "zd","#, 1);
    let errs = parse_config(&text, Experiment::U1Fom).unwrap_err().0;
    assert!(errs[0].starts_with("experiment"), "{errs:?}");
    let text = MINIMAL_FOM.replacen('{', r#"{"experiment": "u1-fom", "schema_version": 1,"#, 1);
    assert!(parse_config(&text, Experiment::U1Fom).is_ok());
}

#[test]
fn mixed_targets_need_the_right_experiment() {
    let text = MINIMAL_FOM.replace(
        r#""target": {"probs": [0.5, 0.5]}"#,
        r#""target": {"components": [{"weight": 0.5, "probs": [1.0]}, {"weight": 0.5, "probs": [0.5, 0.5]}]}"#,
    );
    assert!(parse_config(&text, Experiment::U1Fom).is_err());
    let c = parse_config(&text, Experiment::MixedBound).unwrap();
    assert_eq!(c.target.unwrap().rank(), 2);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let experiment: Experiment = doc["experiment"].as_str().unwrap().parse().unwrap();
        parse_config(&text, experiment).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 6);
}
