//! The fixture files carry the closed forms produced by
//! scripts/expected_values.py; keep the two in step.

use slag_cli::catalog;

#[test]
fn fixture_expectations_match_symbolic_script() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scripts/expected_values.json");
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    for name in catalog::names() {
        let s = catalog::load(name).unwrap();
        let exp = s.expected.unwrap_or_else(|| panic!("{name} has no expected values"));
        let want = &table[name];
        assert_eq!(want["path"], exp.path.as_str(), "{name}");
        for (key, got) in [("rf", exp.rf.unwrap()), ("sf_abs", exp.sf_abs.unwrap())] {
            let w: Vec<f64> = serde_json::from_value(want[key].clone()).unwrap();
            assert_eq!(w.len(), got.len(), "{name} {key}");
            for (a, b) in w.iter().zip(&got) {
                assert!((a - b).abs() < 1e-15, "{name} {key}: script {a}, fixture {b}");
            }
        }
    }
}
