//! Built-in fixture scenarios.

use crate::scenario::{ConfigError, Scenario};

pub const FIXTURES: [(&str, &str); 3] = [
    ("interval_c1", include_str!("../../../fixtures/interval_c1.json")),
    ("cylinder_translation", include_str!("../../../fixtures/cylinder_translation.json")),
    ("two_handle", include_str!("../../../fixtures/two_handle.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Result<&'static str, ConfigError> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| ConfigError::UnknownFixture(name.to_string()))
}

pub fn load(name: &str) -> Result<Scenario, ConfigError> {
    Scenario::from_json(source(name)?, name)
}

/// A path on disk, or the name of a built-in fixture.
pub fn resolve(arg: &str) -> Result<Scenario, ConfigError> {
    let path = std::path::Path::new(arg);
    if path.exists() {
        Scenario::load(path)
    } else if let Some(name) = arg.strip_prefix("fixtures/").and_then(|n| n.strip_suffix(".json")) {
        load(name)
    } else if !arg.ends_with(".json") {
        load(arg)
    } else {
        Scenario::load(path)
    }
}
