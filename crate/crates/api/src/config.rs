use std::net::SocketAddr;
use std::path::PathBuf;

use thiserror::Error;

use corpusforge_core::ledger::DEFAULT_PAYOUT_RATE_TOEA;
use corpusforge_core::workflow::PlatformConfig;

pub const ENV_BIND: &str = "CORPUSFORGE_BIND";
pub const ENV_DATA_DIR: &str = "CORPUSFORGE_DATA_DIR";
pub const ENV_PAYOUT_RATE: &str = "CORPUSFORGE_PAYOUT_RATE_TOEA";
pub const ENV_LEASE_SECONDS: &str = "CORPUSFORGE_LEASE_SECONDS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub payout_rate_toea: u64,
    pub lease_seconds: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            payout_rate_toea: DEFAULT_PAYOUT_RATE_TOEA,
            lease_seconds: 3600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{var}: cannot parse {value:?}")]
pub struct ConfigError {
    pub var: &'static str,
    pub value: String,
}

impl ServerConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    /// Builds a config from defaults overridden by whatever `lookup` returns.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        fn parse<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError { var, value })
        }
        let mut config = ServerConfig::default();
        if let Some(v) = lookup(ENV_BIND) {
            config.bind = parse(ENV_BIND, v)?;
        }
        if let Some(v) = lookup(ENV_DATA_DIR) {
            config.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup(ENV_PAYOUT_RATE) {
            config.payout_rate_toea = parse(ENV_PAYOUT_RATE, v)?;
        }
        if let Some(v) = lookup(ENV_LEASE_SECONDS) {
            config.lease_seconds = parse(ENV_LEASE_SECONDS, v)?;
            if config.lease_seconds == 0 {
                return Err(ConfigError {
                    var: ENV_LEASE_SECONDS,
                    value: "0".into(),
                });
            }
        }
        Ok(config)
    }

    pub fn platform(&self) -> PlatformConfig {
        PlatformConfig {
            payout_rate_toea: self.payout_rate_toea,
            lease_seconds: self.lease_seconds,
            ..PlatformConfig::default()
        }
    }
}
