//! Layered run configuration: built-in defaults, then a TOML file, then
//! `PDWATCH_*` environment variables, then command-line flags.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use pdwatch_core::sim::FrontEndConfig;
use pdwatch_core::sweep::SweepPlan;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    /// Remote store base URL used by `sync`.
    pub url: String,
    pub token: Option<String>,
    /// Address `serve` listens on.
    pub bind: SocketAddr,
    /// Directory `serve` keeps its objects in.
    pub root: PathBuf,
    pub public_url: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080".into(),
            token: None,
            bind: "127.0.0.1:8080".parse().expect("literal address"),
            root: PathBuf::from("remote"),
            public_url: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub workers: usize,
    pub backoff_base_s: f64,
    pub backoff_cap_s: f64,
    pub jitter: bool,
    pub poll_interval_s: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self { workers: 4, backoff_base_s: 1.0, backoff_cap_s: 60.0, jitter: true, poll_interval_s: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    /// Emitter scene for the simulated front end; none means noise only.
    pub scene: Option<PathBuf>,
    /// Scan control endpoint address; off when unset.
    pub control_bind: Option<SocketAddr>,
    /// Pause acquisition once the data directory holds this many bytes.
    pub max_store_bytes: Option<u64>,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log: String,
    pub plan: SweepPlan,
    pub device: FrontEndConfig,
    pub remote: RemoteConfig,
    pub sync: SyncConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            scene: None,
            control_bind: None,
            max_store_bytes: None,
            log: "info".into(),
            plan: SweepPlan::default(),
            device: FrontEndConfig::default(),
            remote: RemoteConfig::default(),
            sync: SyncConfig::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_env<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| cfg_err(format!("{key}={raw}: {e}")))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(format!("config: {e}")))
    }

    /// Defaults overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text).map_err(|e| cfg_err(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Apply `PDWATCH_*` variables. Unknown `PDWATCH_` names are rejected so
    /// typos do not pass silently.
    pub fn apply_env(&mut self, env: &HashMap<String, String>) -> Result<(), CliError> {
        for (key, raw) in env.iter().filter(|(k, _)| k.starts_with("PDWATCH_")) {
            match key.as_str() {
                "PDWATCH_CONFIG" => {}
                "PDWATCH_DATA_DIR" => self.data_dir = raw.into(),
                "PDWATCH_SCENE" => self.scene = Some(raw.into()),
                "PDWATCH_CONTROL_BIND" => self.control_bind = Some(parse_env(key, raw)?),
                "PDWATCH_MAX_STORE_BYTES" => self.max_store_bytes = Some(parse_env(key, raw)?),
                "PDWATCH_LOG" => self.log = raw.clone(),
                "PDWATCH_THRESHOLD_DBM" => self.plan.threshold_dbm = parse_env(key, raw)?,
                "PDWATCH_DWELL" => self.plan.dwell = parse_env(key, raw)?,
                "PDWATCH_IQ_RATE" => self.device.iq_rate = parse_env(key, raw)?,
                "PDWATCH_REMOTE_URL" => self.remote.url = raw.clone(),
                "PDWATCH_TOKEN" => self.remote.token = Some(raw.clone()),
                "PDWATCH_SERVE_BIND" => self.remote.bind = parse_env(key, raw)?,
                "PDWATCH_SERVE_ROOT" => self.remote.root = raw.into(),
                "PDWATCH_PUBLIC_URL" => self.remote.public_url = Some(raw.clone()),
                "PDWATCH_BACKOFF_BASE_S" => self.sync.backoff_base_s = parse_env(key, raw)?,
                "PDWATCH_BACKOFF_CAP_S" => self.sync.backoff_cap_s = parse_env(key, raw)?,
                other => return Err(cfg_err(format!("unknown environment variable {other}"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.plan.validate().map_err(|e| cfg_err(e.to_string()))?;
        let mut dev = self.device.clone();
        dev.span = self.plan.span;
        dev.validate().map_err(|e| cfg_err(format!("device: {e}")))?;
        if !["error", "warn", "info", "debug", "trace"].contains(&self.log.as_str()) {
            return Err(cfg_err(format!("log level {:?} not recognised", self.log)));
        }
        let s = &self.sync;
        if s.workers == 0 {
            return Err(cfg_err("sync.workers must be at least 1"));
        }
        for (name, v) in [
            ("backoff_base_s", s.backoff_base_s),
            ("backoff_cap_s", s.backoff_cap_s),
            ("poll_interval_s", s.poll_interval_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(cfg_err(format!("sync.{name} must be a non-negative number")));
            }
        }
        Ok(())
    }
}
