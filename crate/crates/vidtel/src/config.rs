//! Flat `key=value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use vidtel_core::broker::BrokerConfig;
use vidtel_core::engine::EngineConfig;
use vidtel_core::traffgen::{DatasetConfig, Packetization, StressConfig, TraceConfig};

use crate::error::{Error, Result};

/// Parsed `key=value` lines. `#` starts a comment; blank lines are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::usage(format!("config line {}: expected key=value", i + 1)));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::usage(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::usage(format!("config line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

/// What `generate` should produce.
#[derive(Debug, Clone, PartialEq)]
pub enum GenerateConfig {
    Dataset(DatasetConfig),
    Trace(TraceConfig),
    Stress(StressConfig),
}

const VIDEO_KEYS: [&str; 4] = ["videos_low", "videos_medium", "videos_high", "videos_ultrahigh"];

fn video_counts(cfg: &Config, default: [usize; 4]) -> Result<[usize; 4]> {
    let mut out = default;
    for (slot, key) in out.iter_mut().zip(VIDEO_KEYS) {
        *slot = cfg.get_or(key, *slot)?;
    }
    Ok(out)
}

impl GenerateConfig {
    /// `seed` overrides any `seed` key in the file.
    pub fn from_config(cfg: &Config, seed: Option<u64>) -> Result<GenerateConfig> {
        let seed = match seed {
            Some(s) => s,
            None => cfg.get_or("seed", 1u64)?,
        };
        match cfg.get_str("mode").unwrap_or("dataset") {
            "dataset" => {
                let mut keys = vec!["mode", "seed", "flows", "downloads", "apps"];
                keys.extend(VIDEO_KEYS);
                cfg.check_keys(&keys)?;
                let base = DatasetConfig::balanced(cfg.get_or("flows", 1000usize)?, seed);
                let d = DatasetConfig {
                    videos: video_counts(cfg, base.videos)?,
                    downloads: cfg.get_or("downloads", base.downloads)?,
                    apps: cfg.get_or("apps", base.apps)?,
                    seed,
                };
                if d.flows() == 0 {
                    return Err(Error::usage("dataset config yields no flows"));
                }
                Ok(GenerateConfig::Dataset(d))
            }
            "trace" => {
                let mut keys = vec![
                    "mode",
                    "seed",
                    "downloads",
                    "apps",
                    "mice",
                    "duration",
                    "spacing",
                    "packetization",
                ];
                keys.extend(VIDEO_KEYS);
                cfg.check_keys(&keys)?;
                let base = TraceConfig::default();
                let packetization = match cfg.get_str("packetization").unwrap_or("mtu") {
                    "mtu" => Packetization::Mtu,
                    "per_second" => Packetization::PerSecond,
                    other => return Err(Error::usage(format!("unknown packetization {other:?}"))),
                };
                let t = TraceConfig {
                    videos: video_counts(cfg, base.videos)?,
                    downloads: cfg.get_or("downloads", base.downloads)?,
                    apps: cfg.get_or("apps", base.apps)?,
                    mice: cfg.get_or("mice", base.mice)?,
                    duration: cfg.get_or("duration", base.duration)?,
                    spacing: cfg.get_or("spacing", base.spacing)?,
                    seed,
                    packetization,
                };
                if t.duration == 0 || !(t.spacing >= 0.0) {
                    return Err(Error::usage("duration must be positive and spacing non-negative"));
                }
                Ok(GenerateConfig::Trace(t))
            }
            "stress" => {
                cfg.check_keys(&[
                    "mode",
                    "seed",
                    "pairs",
                    "blocks_per_pair",
                    "ports_per_block",
                    "rate_min_mbps",
                    "rate_max_mbps",
                    "duration",
                ])?;
                let base = StressConfig::default();
                let s = StressConfig {
                    n_pairs: cfg.get_or("pairs", base.n_pairs)?,
                    blocks_per_pair: cfg.get_or("blocks_per_pair", base.blocks_per_pair)?,
                    ports_per_block: cfg.get_or("ports_per_block", base.ports_per_block)?,
                    rate_range: (
                        cfg.get_or("rate_min_mbps", base.rate_range.0 / 1e6)? * 1e6,
                        cfg.get_or("rate_max_mbps", base.rate_range.1 / 1e6)? * 1e6,
                    ),
                    duration: cfg.get_or("duration", base.duration)?,
                    seed,
                };
                Ok(GenerateConfig::Stress(s))
            }
            other => Err(Error::usage(format!("unknown mode {other:?}"))),
        }
    }
}

/// Replay settings read from a config file; missing keys keep the defaults.
pub fn engine_config(cfg: &Config) -> Result<(EngineConfig, Option<String>)> {
    cfg.check_keys(&[
        "table_capacity",
        "idle_timeout",
        "elephant_threshold",
        "tick_period",
        "max_window",
        "debounce",
        "providers",
    ])?;
    let d = EngineConfig::default();
    let b = BrokerConfig::default();
    let out = EngineConfig {
        table_capacity: cfg.get_or("table_capacity", d.table_capacity)?,
        idle_timeout: cfg.get_or("idle_timeout", d.idle_timeout)?,
        elephant_threshold: cfg.get_or("elephant_threshold", d.elephant_threshold)?,
        broker: BrokerConfig {
            tick_period: cfg.get_or("tick_period", b.tick_period)?,
            max_window: cfg.get_or("max_window", b.max_window)?,
            debounce: cfg.get_or("debounce", b.debounce)?,
            ..b
        },
    };
    if !(out.broker.tick_period > 0.0) || !(out.idle_timeout > 0.0) {
        return Err(Error::usage("tick_period and idle_timeout must be positive"));
    }
    Ok((out, cfg.get_str("providers").map(str::to_string)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let c = Config::parse("# header\nmode = trace\nmice=3 # trailing\n\n").unwrap();
        assert_eq!(c.get_str("mode"), Some("trace"));
        assert_eq!(c.get::<usize>("mice").unwrap(), Some(3));
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a=1\na=2\n").is_err());
        assert_eq!(c.get::<usize>("mode").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn dataset_mode() {
        let c = Config::parse("mode=dataset\nflows=20\n").unwrap();
        let GenerateConfig::Dataset(d) = GenerateConfig::from_config(&c, Some(9)).unwrap() else {
            panic!("wrong mode")
        };
        assert_eq!(d.flows(), 20);
        assert_eq!(d.seed, 9);
        let c = Config::parse("mode=dataset\nflow=20\n").unwrap();
        assert!(GenerateConfig::from_config(&c, None).is_err());
    }

    #[test]
    fn stress_defaults() {
        let c = Config::parse("mode=stress\n").unwrap();
        let GenerateConfig::Stress(s) = GenerateConfig::from_config(&c, None).unwrap() else {
            panic!("wrong mode")
        };
        assert_eq!(s.flows(), 31_920);
        assert_eq!(s.rate_range, (0.8e6, 1.2e6));
    }

    #[test]
    fn engine_keys() {
        let c = Config::parse("idle_timeout=30\ndebounce=false\nproviders=p.tsv\n").unwrap();
        let (e, p) = engine_config(&c).unwrap();
        assert_eq!(e.idle_timeout, 30.0);
        assert!(!e.broker.debounce);
        assert_eq!(p.as_deref(), Some("p.tsv"));
        assert!(engine_config(&Config::parse("bogus=1").unwrap()).is_err());
    }
}
