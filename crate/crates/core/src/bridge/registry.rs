use std::collections::BTreeMap;
use std::sync::{OnceLock, RwLock};

use super::{EnvError, EnvFactory, EnvHandle};

/// Environment ids mapped to factories.
///
/// Ids follow the `Name-vN` convention. [`make`](EnvRegistry::make) also
/// accepts a `module:Name-vN` form and ignores the module prefix.
#[derive(Debug, Default)]
pub struct EnvRegistry {
    factories: BTreeMap<String, EnvFactory>,
}

fn is_valid_env_id(id: &str) -> bool {
    let Some((name, version)) = id.rsplit_once("-v") else {
        return false;
    };
    !name.is_empty()
        && !name.contains(':')
        && !name.chars().any(char::is_whitespace)
        && !version.is_empty()
        && version.chars().all(|c| c.is_ascii_digit())
}

fn strip_module(id: &str) -> &str {
    id.rsplit_once(':').map_or(id, |(_, rest)| rest)
}

impl EnvRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static RwLock<EnvRegistry> {
        static GLOBAL: OnceLock<RwLock<EnvRegistry>> = OnceLock::new();
        GLOBAL.get_or_init(|| RwLock::new(EnvRegistry::new()))
    }

    pub fn register(&mut self, env_id: &str, factory: EnvFactory) -> Result<(), EnvError> {
        if !is_valid_env_id(env_id) {
            return Err(EnvError::InvalidEnvId(env_id.to_owned()));
        }
        if self.factories.contains_key(env_id) {
            return Err(EnvError::DuplicateEnv(env_id.to_owned()));
        }
        self.factories.insert(env_id.to_owned(), factory);
        Ok(())
    }

    /// A fresh, idle handle for `env_id`.
    pub fn make(&self, env_id: &str) -> Result<EnvHandle, EnvError> {
        let id = strip_module(env_id);
        self.factories
            .get(id)
            .map(|factory| factory.create_with_id(id))
            .ok_or_else(|| EnvError::UnknownEnv(env_id.to_owned()))
    }

    pub fn factory(&self, env_id: &str) -> Option<&EnvFactory> {
        self.factories.get(strip_module(env_id))
    }

    pub fn contains(&self, env_id: &str) -> bool {
        self.factories.contains_key(strip_module(env_id))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

/// Registers on the global registry.
pub fn register(env_id: &str, factory: EnvFactory) -> Result<(), EnvError> {
    EnvRegistry::global()
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .register(env_id, factory)
}

/// Makes an environment from the global registry.
pub fn make(env_id: &str) -> Result<EnvHandle, EnvError> {
    EnvRegistry::global()
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .make(env_id)
}
