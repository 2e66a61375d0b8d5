//! Typed client over a [`Channel`].

use thiserror::Error;

use super::frame::{Frame, FrameError};
use super::packet::*;
use super::{Channel, ChannelError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IpcError {
    #[error("{} rejected: {} ({message})", ptype::name(*req), reason.as_str())]
    Nack {
        req: u8,
        reason: NackReason,
        message: String,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Packet(#[from] PacketError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("response sequence {got}, expected {expected}")]
    Sequence { expected: u8, got: u8 },
    #[error("unexpected response: {0}")]
    Unexpected(String),
}

impl IpcError {
    pub fn reason(&self) -> Option<NackReason> {
        match self {
            IpcError::Nack { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct IpcClient<C> {
    channel: C,
    tx_seq: u8,
    rx_seq: u8,
}

/// Default TASK_TRANSFER chunk size.
pub const TRANSFER_CHUNK: usize = 16 * 1024;

impl<C: Channel> IpcClient<C> {
    pub fn new(channel: C) -> Self {
        Self {
            channel,
            tx_seq: 0,
            rx_seq: 0,
        }
    }

    pub fn channel(&self) -> &C {
        &self.channel
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    pub fn into_channel(self) -> C {
        self.channel
    }

    /// One request/response exchange; NACKs become errors.
    pub fn call(&mut self, req: &Request) -> Result<AckBody, IpcError> {
        let bytes = req.to_frame(self.tx_seq).encode()?;
        self.tx_seq = self.tx_seq.wrapping_add(1);
        let reply = Frame::decode(&self.channel.transact(&bytes)?)?;
        if reply.seq != self.rx_seq {
            return Err(IpcError::Sequence {
                expected: self.rx_seq,
                got: reply.seq,
            });
        }
        self.rx_seq = self.rx_seq.wrapping_add(1);
        match Response::from_frame(&reply)? {
            Response::Ack { req: r, body } if r == req.ptype() => Ok(body),
            Response::Ack { req: r, .. } => {
                Err(IpcError::Unexpected(format!("ACK for {}", ptype::name(r))))
            }
            Response::Nack {
                req,
                reason,
                message,
            } => Err(IpcError::Nack {
                req,
                reason,
                message,
            }),
        }
    }

    fn unexpected(body: AckBody) -> IpcError {
        IpcError::Unexpected(format!("{body:?}"))
    }

    pub fn init(&mut self) -> Result<InitInfo, IpcError> {
        match self.call(&Request::Init)? {
            AckBody::Init(i) => Ok(i),
            b => Err(Self::unexpected(b)),
        }
    }

    pub fn close(&mut self) -> Result<(), IpcError> {
        self.call(&Request::Close).map(drop)
    }

    pub fn status(&mut self) -> Result<StatusInfo, IpcError> {
        match self.call(&Request::Status)? {
            AckBody::Status(s) => Ok(s),
            b => Err(Self::unexpected(b)),
        }
    }

    pub fn start(&mut self) -> Result<(), IpcError> {
        self.call(&Request::Control(ControlOp::Start)).map(drop)
    }

    pub fn stop(&mut self) -> Result<(), IpcError> {
        self.call(&Request::Control(ControlOp::Stop)).map(drop)
    }

    pub fn set_firmware_hash(&mut self, hash: [u8; 16]) -> Result<(), IpcError> {
        self.call(&Request::SetFirmwareHash(hash)).map(drop)
    }

    /// Writes the parameter bytes through shared memory, then announces the
    /// new size.
    pub fn set_parameters(&mut self, bytes: &[u8]) -> Result<(), IpcError> {
        let size = u32::try_from(bytes.len())
            .map_err(|_| IpcError::Unexpected("parameter list too large".into()))?;
        self.channel.write_params(0, bytes)?;
        self.call(&Request::ParamSizeUpdate(size)).map(drop)
    }

    pub fn errors(&mut self) -> Result<(Vec<String>, u64), IpcError> {
        match self.call(&Request::GetErrors)? {
            AckBody::Errors { messages, dropped } => Ok((messages, dropped)),
            b => Err(Self::unexpected(b)),
        }
    }

    pub fn finished_boxes(&mut self) -> Result<Vec<BoxInfo>, IpcError> {
        match self.call(&Request::GetFinishedBoxes)? {
            AckBody::Boxes(b) => Ok(b),
            b => Err(Self::unexpected(b)),
        }
    }

    pub fn mark_processed(&mut self, ids: &[u32]) -> Result<Vec<(u32, MarkResult)>, IpcError> {
        match self.call(&Request::MarkProcessed(ids.to_vec()))? {
            AckBody::Marked(m) => Ok(m),
            b => Err(Self::unexpected(b)),
        }
    }

    pub fn read_box(&mut self, b: &BoxInfo) -> Result<Vec<u8>, IpcError> {
        Ok(self.channel.read_arena(b.offset, b.size)?)
    }

    /// Sends a task binary in chunks of at most `chunk` bytes.
    pub fn transfer_task(&mut self, binary: &[u8], chunk: usize) -> Result<(), IpcError> {
        let chunk = chunk.max(1);
        let pieces: Vec<&[u8]> = if binary.is_empty() {
            vec![&[][..]]
        } else {
            binary.chunks(chunk).collect()
        };
        let count = u16::try_from(pieces.len())
            .map_err(|_| IpcError::Unexpected("task binary needs too many chunks".into()))?;
        let total = u32::try_from(binary.len())
            .map_err(|_| IpcError::Unexpected("task binary too large".into()))?;
        for (index, piece) in pieces.into_iter().enumerate() {
            self.call(&Request::TaskTransfer {
                index: index as u16,
                count,
                total,
                chunk: piece.to_vec(),
            })?;
        }
        Ok(())
    }
}
