//! TOML scenario files. Top-level keys are the [`Scenario`] field names,
//! `[room]` holds the bounds and an optional `[solver]` table overrides
//! [`SolverOptions`]. Angles are degrees, as in [`Scenario`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{validate_scenario, Scenario};
use crate::solvers::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub scenario: Scenario,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
    let solver = match table.remove("solver") {
        Some(v) => v
            .try_into::<SolverOptions>()
            .map_err(|e| Error::ConfigParse(format!("[solver]: {e}")))?,
        None => SolverOptions::default(),
    };
    let scenario: Scenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::ConfigParse(e.to_string()))?;
    validate_scenario(&scenario)?;
    solver.validate()?;
    Ok(ConfigFile { scenario, solver })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Canonical serialisation: fixed key order, every solver option spelled
/// out. Equal configurations give equal bytes.
pub fn to_canonical_toml(cfg: &ConfigFile) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::ConfigParse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reference_scenario;

    #[test]
    fn round_trips_bit_exactly() {
        let cfg = ConfigFile {
            scenario: reference_scenario(),
            solver: SolverOptions::default(),
        };
        let text = to_canonical_toml(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(to_canonical_toml(&back).unwrap(), text);
    }

    #[test]
    fn solver_section_is_optional_and_partial() {
        let mut cfg = ConfigFile {
            scenario: reference_scenario(),
            solver: SolverOptions::default(),
        };
        let base = to_canonical_toml(&cfg).unwrap();
        let cut = base.split("[solver]").next().unwrap().to_string();
        assert_eq!(parse_config(&cut).unwrap().solver, SolverOptions::default());
        let partial = format!("{cut}\n[solver]\ns_max = 7\n");
        cfg.solver.s_max = 7;
        assert_eq!(parse_config(&partial).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let cfg = ConfigFile {
            scenario: reference_scenario(),
            solver: SolverOptions::default(),
        };
        let text = to_canonical_toml(&cfg).unwrap();
        assert!(matches!(parse_config(&format!("bogus = 1\n{text}")), Err(Error::ConfigParse(_))));
        let bad = text.replace("circuit_power = 6.7", "circuit_power = -1.0");
        assert_eq!(parse_config(&bad), Err(Error::NonPositiveConstant("circuit_power")));
        assert!(matches!(parse_config("not = [toml"), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn bundled_reference_config_matches_builtin() {
        let text = include_str!("../../../scenarios/paper_sec5.cfg");
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scenario, reference_scenario());
        assert_eq!(cfg.solver, SolverOptions::default());
    }
}
