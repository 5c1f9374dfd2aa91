//! Settings resolved from flags, the environment and an optional TOML file,
//! in that order of precedence.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use corpusforge_api::config::{self as env_config, ServerConfig};

use crate::error::CliError;

pub const DEFAULT_ACTOR: &str = "admin";

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub data_dir: Option<PathBuf>,
    pub actor: Option<String>,
    pub bind: Option<SocketAddr>,
    pub payout_rate_toea: Option<u64>,
    pub lease_seconds: Option<u64>,
}

impl FileSettings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub actor: String,
    pub server: ServerConfig,
}

impl Settings {
    pub fn resolve(
        file: FileSettings,
        env: impl Fn(&str) -> Option<String>,
        data_dir_flag: Option<PathBuf>,
        actor_flag: Option<String>,
    ) -> Result<Self, CliError> {
        let defaults = ServerConfig::default();
        let from_env = ServerConfig::from_lookup(&env).map_err(|e| CliError::Validation(e.to_string()))?;
        let set = |key: &str| env(key).is_some();
        let server = ServerConfig {
            bind: if set(env_config::ENV_BIND) {
                from_env.bind
            } else {
                file.bind.unwrap_or(defaults.bind)
            },
            data_dir: data_dir_flag.unwrap_or(if set(env_config::ENV_DATA_DIR) {
                from_env.data_dir
            } else {
                file.data_dir.unwrap_or(defaults.data_dir)
            }),
            payout_rate_toea: if set(env_config::ENV_PAYOUT_RATE) {
                from_env.payout_rate_toea
            } else {
                file.payout_rate_toea.unwrap_or(defaults.payout_rate_toea)
            },
            lease_seconds: if set(env_config::ENV_LEASE_SECONDS) {
                from_env.lease_seconds
            } else {
                file.lease_seconds.unwrap_or(defaults.lease_seconds)
            },
        };
        if server.lease_seconds == 0 {
            return Err(CliError::Validation("lease_seconds must be at least 1".into()));
        }
        Ok(Settings {
            actor: actor_flag
                .or(file.actor)
                .unwrap_or_else(|| DEFAULT_ACTOR.to_owned()),
            server,
        })
    }
}
