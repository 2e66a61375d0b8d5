//! Framed request/response protocol between the control side and the engine.
//!
//! The engine never sends unsolicited frames. Besides framed messages the
//! channel exposes the two shared-memory windows the control side uses
//! directly: the parameter region (write) and the box arena (read).

mod client;
mod endpoint;
pub mod frame;
pub mod packet;

use thiserror::Error;

pub use client::{IpcClient, IpcError, TRANSFER_CHUNK};
pub use endpoint::{nack_reason, EngineEndpoint};
pub use frame::{Frame, FrameError};
pub use packet::{
    AckBody, BoxInfo, ControlOp, InitInfo, MarkResult, NackReason, Request, Response, StatusInfo,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("channel failure: {0}")]
pub struct ChannelError(pub String);

pub trait Channel {
    /// Sends one encoded request frame and returns the encoded response.
    fn transact(&mut self, request: &[u8]) -> Result<Vec<u8>, ChannelError>;
    fn write_params(&mut self, offset: u64, data: &[u8]) -> Result<(), ChannelError>;
    fn read_arena(&mut self, offset: u64, len: u64) -> Result<Vec<u8>, ChannelError>;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn transact(&mut self, request: &[u8]) -> Result<Vec<u8>, ChannelError> {
        (**self).transact(request)
    }

    fn write_params(&mut self, offset: u64, data: &[u8]) -> Result<(), ChannelError> {
        (**self).write_params(offset, data)
    }

    fn read_arena(&mut self, offset: u64, len: u64) -> Result<Vec<u8>, ChannelError> {
        (**self).read_arena(offset, len)
    }
}
