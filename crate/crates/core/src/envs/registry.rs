use std::collections::BTreeMap;

use super::{Environment, FactoredActionConfig, FactoredMaze, GridNav, GridNavConfig, PointMass, PointMassConfig};
use crate::error::{Error, Result};

/// Builds an environment from its config table (the `[env]` section minus `kind`).
pub type EnvFactory = fn(&toml::Table) -> Result<Box<dyn Environment>>;

/// Environments selectable by name from the experiment config.
pub struct EnvRegistry {
    factories: BTreeMap<&'static str, EnvFactory>,
}

fn parse<T: serde::de::DeserializeOwned>(table: &toml::Table) -> Result<T> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("env", e.message().to_string()))
}

fn gridnav(table: &toml::Table) -> Result<Box<dyn Environment>> {
    Ok(Box::new(GridNav::new(parse::<GridNavConfig>(table)?)?))
}

fn factored_maze(table: &toml::Table) -> Result<Box<dyn Environment>> {
    Ok(Box::new(FactoredMaze::new(parse::<FactoredActionConfig>(table)?)?))
}

fn point_mass(table: &toml::Table) -> Result<Box<dyn Environment>> {
    Ok(Box::new(PointMass::new(parse::<PointMassConfig>(table)?)?))
}

impl EnvRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: EnvFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, table: &toml::Table) -> Result<Box<dyn Environment>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::config("env.kind", format!("unknown environment `{name}` (known: {})", known.join(", ")))
        })?;
        factory(table)
    }
}

impl Default for EnvRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("gridnav", gridnav);
        r.register("factored_maze", factored_maze);
        r.register("point_mass", point_mass);
        r
    }
}
