use std::path::PathBuf;

use otrate::config::{EpsGridSpec, QuantizerKindSpec};
use otrate::harness::{run_sweep, BRACKET_SLACK};
use otrate::io::{read_measure, read_results, write_measure, write_results};
use otrate::{load_config, parse_config, HarnessError};
use otrate_core::experiment::check_bracket;
use otrate_core::DiscreteMeasure;
use proptest::prelude::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn roundtrip(mu: &DiscreteMeasure) -> DiscreteMeasure {
    let mut buf = Vec::new();
    write_measure(mu, &mut buf).unwrap();
    read_measure(buf.as_slice(), "buf").unwrap()
}

proptest! {
    #[test]
    fn measures_round_trip_exactly(
        d in 1usize..=3,
        raw in prop::collection::vec((0.01f64..1.0, prop::collection::vec(-1e3f64..1e3, 3)), 1..20),
    ) {
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let pts: Vec<Vec<f64>> = raw.iter().map(|r| r.1[..d].to_vec()).collect();
        let w: Vec<f64> = raw.iter().map(|r| r.0 / total).collect();
        let mu = DiscreteMeasure::new(pts, w).unwrap();
        let back = roundtrip(&mu);
        prop_assert_eq!(back.weights(), mu.weights());
        prop_assert_eq!(back.coords(), mu.coords());
    }
}

#[test]
fn measure_header_requires_w() {
    let e = read_measure("x1,x2\n0.5,1\n0.5,2\n".as_bytes(), "m.csv").unwrap_err();
    assert!(matches!(e, HarnessError::Parse { line: 1, .. }), "{e}");
    let e = read_measure("w,x2\n1,0\n".as_bytes(), "m.csv").unwrap_err();
    assert!(matches!(e, HarnessError::Parse { line: 1, .. }), "{e}");
}

#[test]
fn measure_errors_carry_line_numbers() {
    let e = read_measure("w,x1\n0.5,0\n0.5,zero\n".as_bytes(), "m.csv").unwrap_err();
    match e {
        HarnessError::Parse { line, path, .. } => {
            assert_eq!(line, 3);
            assert_eq!(path, "m.csv");
        }
        other => panic!("unexpected {other}"),
    }
    let e = read_measure("w,x1\n0.5,0\n0.5\n".as_bytes(), "m.csv").unwrap_err();
    assert!(matches!(e, HarnessError::Parse { line: 3, .. }), "{e}");
}

#[test]
fn measure_invariants_are_enforced() {
    let e = read_measure("w,x1\n-0.5,0\n1.5,1\n".as_bytes(), "m.csv").unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    let e = read_measure("w,x1\n0.3,0\n0.3,1\n".as_bytes(), "m.csv").unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

#[test]
fn config_defaults_match_golden_file() {
    let loaded = load_config(&data("minimal.json")).unwrap();
    let expanded = serde_json::to_string_pretty(&loaded.config).unwrap();
    if std::env::var_os("OTRATE_BLESS").is_some() {
        std::fs::write(data("minimal.expanded.json"), format!("{expanded}\n")).unwrap();
    }
    let golden = std::fs::read_to_string(data("minimal.expanded.json")).unwrap();
    assert_eq!(expanded.trim_end(), golden.trim_end());
    // the expanded form parses back to the same configuration
    assert_eq!(parse_config(&golden).unwrap(), loaded.config);
    assert_eq!(loaded.config.quantizer.kind, QuantizerKindSpec::Optimal);
    assert_eq!(loaded.config.eps_grid.normalized().unwrap(), vec![0.2, 0.1, 0.05]);
}

#[test]
fn unknown_keys_are_rejected() {
    let base = std::fs::read_to_string(data("minimal.json")).unwrap();
    let cases = [
        base.replacen("\"seed\": 3", "\"seed\": 3, \"sed\": 4", 1),
        base.replacen("\"seed\": 3", "\"seed\": 3, \"solver\": {\"tolerance\": 1e-9}", 1),
        base.replacen("\"kind\": \"entropy\"", "\"kind\": \"entropy\", \"rho\": 2", 1),
        base.replacen("\"low\": 0.0", "\"low\": 0.0, \"lo\": 0.0", 1),
    ];
    for text in cases {
        assert_ne!(text, base);
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, HarnessError::Parse { .. }), "{e}");
    }
}

#[test]
fn config_validation() {
    let base = std::fs::read_to_string(data("minimal.json")).unwrap();
    for (from, to) in [
        ("\"seed\": 3", "\"seed\": 3, \"solver\": {\"tol\": 0.0}"),
        ("[0.05, 0.2, 0.1]", "[0.05, 0.05]"),
        ("[0.05, 0.2, 0.1]", "[0.05, -0.1]"),
        ("[0.05, 0.2, 0.1]", "[]"),
        ("\"seed\": 3", "\"seed\": 3, \"quantizer\": {\"alphas\": [1.0, 1.0]}"),
    ] {
        let text = base.replacen(from, to, 1);
        assert!(parse_config(&text).is_err(), "{to} accepted");
    }
    let no_seed = base.replacen(",\n  \"seed\": 3", "", 1);
    assert_ne!(no_seed, base);
    assert!(parse_config(&no_seed).is_err());
    let spaced = EpsGridSpec::LogSpaced {
        min: 0.01,
        max: 0.1,
        count: 3,
    };
    let g = spaced.normalized().unwrap();
    assert!((g[0] - 0.1).abs() < 1e-15 && (g[2] - 0.01).abs() < 1e-15);
}

#[test]
fn sweeps_are_deterministic_and_sound() {
    let loaded = load_config(&data("minimal.json")).unwrap();
    let grid = loaded.config.eps_grid.normalized().unwrap();
    let mut tables = Vec::new();
    for threads in [1, 3, 1] {
        let rows = run_sweep(&loaded, &grid, threads).unwrap();
        for r in &rows {
            check_bracket(r, BRACKET_SLACK).unwrap();
        }
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        tables.push(buf);
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0], tables[2]);

    let rows = read_results(tables[0].as_slice(), "t").unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].eps > w[1].eps));
    // 17 significant digits survive the round trip
    let again = run_sweep(&loaded, &grid, 1).unwrap();
    for (a, b) in rows.iter().zip(&again) {
        assert_eq!(a.gap, b.gap);
        assert_eq!(a.upper, b.upper);
    }
}

#[test]
fn results_header_is_checked() {
    let e = read_results("eps,gap\n0.1,0.2\n".as_bytes(), "r.csv").unwrap_err();
    assert!(matches!(e, HarnessError::Parse { line: 1, .. }));
}
