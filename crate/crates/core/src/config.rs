//! Flat `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored. List values are
//! comma separated (`stage_channels = 32,64,128`). Every config type renders
//! itself canonically (fixed key order, one key per line) so a config file is
//! a pure function of its values.

use std::fmt::Display;
use std::str::FromStr;

use crate::data::{GeneratorConfig, RasterConfig};
use crate::error::ConfigError;
use crate::net::NetworkConfig;
use crate::train::TrainConfig;

/// A parsed but not yet interpreted config file.
#[derive(Clone, Debug, Default)]
pub struct FlatConfig {
    entries: Vec<(String, String)>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(ConfigError::invalid(k, "key given more than once"));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(FlatConfig { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Implemented by every config section that can absorb flat keys.
pub trait ConfigSection {
    /// Applies one key. Returns `Ok(false)` if the key does not belong here.
    fn apply(&mut self, key: &str, value: &str) -> Result<bool, ConfigError>;

    /// Canonical `(key, value)` rendering in fixed order.
    fn render(&self) -> Vec<(&'static str, String)>;

    fn validate(&self) -> Result<(), ConfigError>;
}

pub fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError>
where
    V::Err: Display,
{
    value
        .parse()
        .map_err(|e: V::Err| ConfigError::invalid(key, format!("`{value}`: {e}")))
}

pub fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>, ConfigError>
where
    V::Err: Display,
{
    value.split(',').map(|p| parse_value(key, p.trim())).collect()
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::invalid(key, format!("`{value}` is not true/false"))),
    }
}

pub fn render_list<V: Display>(values: &[V]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Renders `(key, value)` pairs as config text.
pub fn render_lines(pairs: &[(&'static str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Everything a CLI run needs: network, training, raster and generator
/// keys in one flat file. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub raster: RasterConfig,
    pub generator: GeneratorConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (k, v) in FlatConfig::parse(text)?.entries() {
            let known = cfg.network.apply(k, v)?
                || cfg.train.apply(k, v)?
                || cfg.raster.apply(k, v)?
                || cfg.generator.apply(k, v)?;
            if !known {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
        }
        cfg.raster.size = cfg.network.raster_size;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate()?;
        self.train.validate()?;
        self.raster.validate()?;
        self.generator.validate()
    }

    /// Canonical text: every key, in fixed order.
    pub fn render(&self) -> String {
        let mut pairs = self.network.render();
        pairs.extend(self.train.render());
        pairs.extend(self.raster.render());
        pairs.extend(self.generator.render());
        render_lines(&pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_rejects_duplicates() {
        let c = FlatConfig::parse("# hi\n\na = 1\nb=2,3\n").unwrap();
        let e: Vec<_> = c.entries().collect();
        assert_eq!(e, vec![("a", "1"), ("b", "2,3")]);
        assert!(FlatConfig::parse("a = 1\na = 2\n").is_err());
        assert!(matches!(FlatConfig::parse("nokey\n"), Err(ConfigError::Syntax { line: 1 })));
    }

    #[test]
    fn list_values() {
        let v: Vec<usize> = parse_list("k", "1, 2,3").unwrap();
        assert_eq!(v, vec![1, 2, 3]);
        let err = parse_list::<usize>("stage_channels", "1,x").unwrap_err();
        assert!(err.to_string().contains("stage_channels"));
    }

    #[test]
    fn run_config_round_trips_and_rejects_unknown_keys() {
        let cfg = RunConfig::parse("raster_size = 32\nepochs = 2\nresolution = 0.25\nmin_agents = 3\n").unwrap();
        assert_eq!(cfg.raster.size, 32);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
        let err = RunConfig::parse("learning_rat = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rat"));
        let err = RunConfig::parse("heads = 3,4,8\n").unwrap_err();
        assert!(err.to_string().contains("heads"));
    }
}
