//! Experiment configuration files.
//!
//! A config is TOML. It either spells out a full experiment or names a
//! preset and overrides some of its keys:
//!
//! ```toml
//! preset = "hard-images"
//! scale = "desk"
//! seed = 7
//! [model]
//! kind = "l1"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdlearn::pipeline::{ExperimentConfig, ExperimentId};
use toml::{Table, Value};

/// A resolved configuration plus the output directory it may name.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub out: Option<PathBuf>,
}

pub fn preset(name: &str, desk: bool, seed: u64) -> Result<ExperimentConfig> {
    let id = ExperimentId::parse(name)?;
    Ok(if desk { ExperimentConfig::desk(id, seed) } else { ExperimentConfig::full(id, seed) })
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn parse(text: &str) -> Result<LoadedConfig> {
    let mut table: Table = toml::from_str(text)?;
    let out = match table.remove("out") {
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => bail!("`out` must be a string"),
        None => None,
    };
    let resolved = match table.remove("preset") {
        Some(Value::String(name)) => {
            let desk = match table.remove("scale") {
                None => false,
                Some(Value::String(s)) if s == "full" => false,
                Some(Value::String(s)) if s == "desk" => true,
                Some(other) => bail!("`scale` must be \"full\" or \"desk\", got {other}"),
            };
            let seed = match table.get("seed") {
                Some(Value::Integer(s)) => u64::try_from(*s).context("seed must be nonnegative")?,
                Some(_) => bail!("`seed` must be an integer"),
                None => 0,
            };
            let mut base = Table::try_from(preset(&name, desk, seed)?)?;
            merge(&mut base, table);
            base
        }
        Some(_) => bail!("`preset` must be a string"),
        None => table,
    };
    let experiment: ExperimentConfig = resolved.try_into()?;
    experiment.validate()?;
    Ok(LoadedConfig { experiment, out })
}

/// Overlays `over` onto `base`, recursing into tables.
fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn to_toml(config: &ExperimentConfig) -> Result<String> {
    Ok(toml::to_string(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pdlearn::mlmodel::PenaltyKind;

    #[test]
    fn preset_with_overrides() {
        let c = parse("preset = \"hard-images\"\nscale = \"desk\"\nseed = 9\nthreshold_frac = 0.25\nout = \"runs/x\"\n[model]\nkind = \"l1\"\n")
            .unwrap();
        assert_eq!(c.out, Some(PathBuf::from("runs/x")));
        let e = c.experiment;
        assert_eq!(e.experiment, ExperimentId::HardImages);
        assert_eq!((e.seed, e.train, e.test), (9, 50, 25));
        assert_eq!(e.threshold_frac, 0.25);
        assert_eq!(e.model.kind, PenaltyKind::L1);
        assert_eq!(e.model.folds, 5);
    }

    #[test]
    fn full_config_roundtrips() {
        for id in ExperimentId::ALL {
            let c = ExperimentConfig::full(id, 4);
            let back = parse(&to_toml(&c).unwrap()).unwrap();
            assert_eq!(back.experiment, c);
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(parse("preset = \"nope\"").is_err());
        assert!(parse("preset = \"lattices\"\nthreshold_frac = 2.0").is_err());
        assert!(parse("preset = \"lattices\"\nscale = \"huge\"").is_err());
    }
}
