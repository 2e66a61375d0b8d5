//! Control service: JSON-RPC over length-prefixed TCP in front of one
//! engine.
//!
//! Startup: fabric and engine boot, `INIT_CONNECTION`, `SET_FIRMWARE_HASH`,
//! then the listener opens. Every engine-bound operation of every client
//! goes through one dispatcher, so requests are served strictly one at a
//! time. Method schemas are in `docs/rpc-api.md`.

pub mod client;
pub mod config;
pub mod server;
pub mod service;
pub mod wire;

use thiserror::Error;

pub use client::{
    BoxEntry, ClockReport, EmbeddedClient, RpcError, Session, Status, TcpClient, Transport,
};
pub use config::ServiceConfig;
pub use server::Server;
pub use service::Service;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("engine handshake failed: {0}")]
    Handshake(#[from] qtask_core::ipc::IpcError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boots a service and wraps it in an in-process session.
pub fn embedded(config: ServiceConfig) -> Result<Session<EmbeddedClient>, ServiceError> {
    Ok(Session::new(EmbeddedClient::new(Service::boot(config)?)))
}
