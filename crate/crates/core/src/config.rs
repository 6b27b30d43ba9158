//! The run configuration file: TOML with one table per module.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::channel::{DeviceGeometry, RoomLayout};
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::harness::ScenarioConfig;
use crate::lstm::TrainConfig;
use crate::mobility::MobilityConfig;
use crate::optimizer::CcpOptions;
use crate::scene::Scene;
use crate::util::fingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    pub layout: RoomLayout,
    pub device: DeviceGeometry,
    pub mobility: MobilityConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub optimizer: CcpOptions,
    pub scenario: ScenarioConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            layout: RoomLayout::default(),
            device: DeviceGeometry::default(),
            mobility: MobilityConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            optimizer: CcpOptions::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

/// Keys that have no default value and so never show up when the default
/// config is serialized.
const OPTIONAL_KEYS: [(&str, &str); 3] = [("layout", "ap_xy"), ("scenario", "delta"), ("scenario", "model")];

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses and validates a config. Keys left out take their defaults;
    /// unknown keys are rejected with the closest valid spelling.
    pub fn parse(text: &str) -> Result<Config> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        check_keys(&table)?;
        let config: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene().validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        self.optimizer.validate()?;
        self.scenario.validate(self.dataset.l_max, self.layout.num_aps())
    }

    pub fn scene(&self) -> Scene {
        Scene {
            layout: self.layout.clone(),
            device: self.device.clone(),
            mobility: self.mobility.clone(),
        }
    }

    /// Amplitude headroom used by the optimizer.
    pub fn delta(&self) -> f64 {
        self.scenario.delta.unwrap_or(self.layout.dc_bias)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.to_toml())
    }
}

fn known_keys() -> Table {
    let Value::Table(mut t) = Value::try_from(Config::default()).expect("default config serializes") else {
        unreachable!("config serializes to a table")
    };
    for (section, key) in OPTIONAL_KEYS {
        if let Some(Value::Table(s)) = t.get_mut(section) {
            s.insert(key.to_string(), Value::Boolean(false));
        }
    }
    t
}

fn nearest<'a>(name: &str, candidates: impl Iterator<Item = &'a String>) -> Option<&'a String> {
    candidates.min_by_key(|c| strsim::levenshtein(name, c))
}

fn check_keys(table: &Table) -> Result<()> {
    let known = known_keys();
    for (key, value) in table {
        let Some(spec) = known.get(key) else {
            let hint = nearest(key, known.keys()).map(|n| format!("; did you mean `{n}`?")).unwrap_or_default();
            return Err(Error::Config(format!("unknown key `{key}`{hint}")));
        };
        if let (Value::Table(section), Value::Table(valid)) = (value, spec) {
            for inner in section.keys() {
                if !valid.contains_key(inner) {
                    let hint = nearest(inner, valid.keys())
                        .map(|n| format!("; did you mean `{key}.{n}`?"))
                        .unwrap_or_default();
                    return Err(Error::Config(format!("unknown key `{key}.{inner}`{hint}")));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn default_round_trips() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn overrides_apply() {
        let c = Config::parse("seed = 9\n[scenario]\nusers = 6\nmodel = \"m.meta\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.scenario.users, 6);
        assert_eq!(c.scenario.model.as_deref(), Some(Path::new("m.meta")));
        let few_aps = "[layout]\nap_xy = [[1.0, 1.0], [2.0, 2.0]]\n[scenario]\nusers = 2\nk_sweep = [1, 2]\ntiming_k_sweep = [2]\n";
        assert_eq!(Config::parse(few_aps).unwrap().layout.num_aps(), 2);
        assert!(Config::parse(&few_aps.replace("users = 2", "users = 3")).is_err());
    }

    #[test]
    fn unknown_key_names_the_nearest() {
        let err = Config::parse("[scenario]\nuser = 3\n").unwrap_err().to_string();
        assert!(err.contains("`scenario.user`") && err.contains("`scenario.users`"), "{err}");
        let err = Config::parse("[layot]\nlength = 3.0\n").unwrap_err().to_string();
        assert!(err.contains("`layout`"), "{err}");
        let err = Config::parse("sed = 3\n").unwrap_err().to_string();
        assert!(err.contains("`seed`"), "{err}");
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(matches!(Config::parse("[scenario]\nhorizon = 9\n"), Err(Error::Config(_))));
        assert!(Config::parse("[train]\nlearning_rate = -1.0\n").is_err());
        assert!(Config::parse("[optimizer]\nn_starts = \"five\"\n").is_err());
        assert!(Config::parse("seed = \n").is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Config::default();
        let b = Config { seed: 2, ..Config::default() };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), Config::default().fingerprint());
    }
}
