//! Server configuration file (TOML) with environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use impactlab::agents::{Roster, RosterEntry};
use impactlab::market::MarketConfig;
use impactlab::risk::LotteryMenu;

use crate::hub::HubConfig;

pub const ENV_PORT: &str = "IMPACTLAB_PORT";
pub const ENV_DATA_DIR: &str = "IMPACTLAB_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Market defaults for sessions created without their own config.
    pub market: MarketConfig,
    /// Default roster; empty seats every trader as a human.
    pub agents: Vec<RosterEntry>,
    pub lottery: Option<LotteryMenu>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            market: MarketConfig::default(),
            agents: Vec::new(),
            lottery: None,
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(menu) = &self.lottery {
            menu.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !self.agents.is_empty() {
            let seats: usize = self.agents.iter().map(|e| e.count).sum();
            if seats != self.market.depth_n {
                return Err(ConfigError::Invalid(format!(
                    "roster seats {seats} traders but depth_n is {}",
                    self.market.depth_n
                )));
            }
        }
        Ok(())
    }

    /// Applies `IMPACTLAB_PORT` and `IMPACTLAB_DATA_DIR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(p) = lookup(ENV_PORT) {
            self.port = p.trim().parse().map_err(|_| ConfigError::Invalid(format!("{ENV_PORT}={p} is not a port")))?;
        }
        if let Some(d) = lookup(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(d);
        }
        Ok(())
    }

    pub fn hub_config(&self) -> HubConfig {
        HubConfig {
            data_dir: Some(self.data_dir.clone()),
            menu: self.lottery.unwrap_or_default(),
            market: self.market.clone(),
            roster: (!self.agents.is_empty()).then(|| Roster { agents: self.agents.clone() }),
        }
    }
}
