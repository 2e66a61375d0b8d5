//! Service configuration file.
//!
//! ```toml
//! [service]
//! slice_ns = 1000000
//!
//! [engine]
//! arena_bytes = 67108864
//!
//! [fabric]
//! seed = 7
//! [fabric.qubit]
//! readout_sigma = 0.0
//! ```
//!
//! Every table is optional. `fabric.seed` defaults to 0 and is overridden by
//! the `--seed` flag.

use qtask_core::engine::EngineConfig;
use qtask_fabric::FabricConfig;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceOptions {
    /// Virtual time the engine advances between two queue checks while a
    /// task runs and no request is pending.
    pub slice_ns: u64,
    /// TASK_TRANSFER chunk size.
    pub transfer_chunk: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            slice_ns: 1_000_000,
            transfer_chunk: qtask_core::ipc::TRANSFER_CHUNK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub service: ServiceOptions,
    pub engine: EngineConfig,
    pub fabric: FabricConfig,
}

impl ServiceConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            service: ServiceOptions::default(),
            engine: EngineConfig::default(),
            fabric: FabricConfig::with_seed(seed),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ServiceError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            service: ServiceOptions,
            #[serde(default)]
            engine: EngineConfig,
            #[serde(default)]
            fabric: Option<toml::Table>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let mut fabric = raw.fabric.unwrap_or_default();
        fabric.entry("seed").or_insert(toml::Value::Integer(0));
        let fabric = FabricConfig::from_toml_str(
            &toml::to_string(&fabric).map_err(|e| ServiceError::Config(e.to_string()))?,
        )
        .map_err(|e| ServiceError::Config(e.to_string()))?;
        let cfg = Self {
            service: raw.service,
            engine: raw.engine,
            fabric,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.engine
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        self.fabric
            .validate()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        if self.service.slice_ns == 0 || self.service.transfer_chunk == 0 {
            return Err(ServiceError::Config(
                "service.slice_ns and service.transfer_chunk must be positive".into(),
            ));
        }
        Ok(())
    }
}
