//! Packet types and payload layouts. All integers are little-endian.

use thiserror::Error;

use super::frame::Frame;

pub mod ptype {
    pub const ACK: u8 = 0x00;
    pub const NACK: u8 = 0x01;
    pub const STATUS_REQUEST: u8 = 0x02;
    pub const CONTROL_OP: u8 = 0x03;
    pub const PARAM_SIZE_UPDATE: u8 = 0x04;
    pub const GET_ERRORS: u8 = 0x05;
    pub const GET_FINISHED_BOXES: u8 = 0x06;
    pub const MARK_BOXES_PROCESSED: u8 = 0x07;
    pub const SET_FIRMWARE_HASH: u8 = 0x08;
    pub const TASK_TRANSFER: u8 = 0x09;
    pub const INIT_CONNECTION: u8 = 0x0A;
    pub const CLOSE_CONNECTION: u8 = 0x0B;

    pub fn name(t: u8) -> &'static str {
        match t {
            ACK => "ACK",
            NACK => "NACK",
            STATUS_REQUEST => "STATUS_REQUEST",
            CONTROL_OP => "CONTROL_OP",
            PARAM_SIZE_UPDATE => "PARAM_SIZE_UPDATE",
            GET_ERRORS => "GET_ERRORS",
            GET_FINISHED_BOXES => "GET_FINISHED_BOXES",
            MARK_BOXES_PROCESSED => "MARK_BOXES_PROCESSED",
            SET_FIRMWARE_HASH => "SET_FIRMWARE_HASH",
            TASK_TRANSFER => "TASK_TRANSFER",
            INIT_CONNECTION => "INIT_CONNECTION",
            CLOSE_CONNECTION => "CLOSE_CONNECTION",
            _ => "UNKNOWN",
        }
    }
}

pub const PROTOCOL_VERSION: u16 = 1;

/// Reason carried by a NACK.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum NackReason {
    NotConnected = 1,
    UnknownType = 2,
    BadPayload = 3,
    TaskRunning = 4,
    NoTaskLoaded = 5,
    HashNotSet = 6,
    HashMismatch = 7,
    TaskTooLarge = 8,
    InvalidBinary = 9,
    TransferOrder = 10,
    ParamTooLarge = 11,
    BadFrame = 12,
}

impl NackReason {
    pub const ALL: [NackReason; 12] = [
        NackReason::NotConnected,
        NackReason::UnknownType,
        NackReason::BadPayload,
        NackReason::TaskRunning,
        NackReason::NoTaskLoaded,
        NackReason::HashNotSet,
        NackReason::HashMismatch,
        NackReason::TaskTooLarge,
        NackReason::InvalidBinary,
        NackReason::TransferOrder,
        NackReason::ParamTooLarge,
        NackReason::BadFrame,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(c: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == c)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NackReason::NotConnected => "NOT_CONNECTED",
            NackReason::UnknownType => "UNKNOWN_TYPE",
            NackReason::BadPayload => "BAD_PAYLOAD",
            NackReason::TaskRunning => "TASK_RUNNING",
            NackReason::NoTaskLoaded => "NO_TASK_LOADED",
            NackReason::HashNotSet => "HASH_NOT_SET",
            NackReason::HashMismatch => "HASH_MISMATCH",
            NackReason::TaskTooLarge => "TASK_TOO_LARGE",
            NackReason::InvalidBinary => "INVALID_BINARY",
            NackReason::TransferOrder => "TRANSFER_ORDER",
            NackReason::ParamTooLarge => "PARAM_TOO_LARGE",
            NackReason::BadFrame => "BAD_FRAME",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlOp {
    Start = 0,
    Stop = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Status,
    Control(ControlOp),
    ParamSizeUpdate(u32),
    GetErrors,
    GetFinishedBoxes,
    MarkProcessed(Vec<u32>),
    SetFirmwareHash([u8; 16]),
    TaskTransfer {
        index: u16,
        count: u16,
        total: u32,
        chunk: Vec<u8>,
    },
    Init,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitInfo {
    pub version: u16,
    pub arena_bytes: u64,
    pub param_bytes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusInfo {
    pub state: u8,
    pub progress: u32,
    pub last_return_code: i32,
    pub task_name: String,
    /// Engine virtual time when the status was taken.
    pub now_ns: u64,
    pub run_start_ns: u64,
    pub run_end_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxInfo {
    pub id: u32,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MarkResult {
    Freed = 0,
    NotFound = 1,
    InvalidState = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AckBody {
    Empty,
    Init(InitInfo),
    Status(StatusInfo),
    Errors { messages: Vec<String>, dropped: u64 },
    Boxes(Vec<BoxInfo>),
    Marked(Vec<(u32, MarkResult)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    /// `req` is the type of the acknowledged request.
    Ack { req: u8, body: AckBody },
    Nack {
        req: u8,
        reason: NackReason,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("unknown packet type {0:#04x}")]
    UnknownType(u8),
    #[error("malformed {kind} payload: {msg}")]
    BadPayload { kind: &'static str, msg: String },
}

struct Reader<'a> {
    buf: &'a [u8],
    kind: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], t: u8) -> Self {
        Self {
            buf,
            kind: ptype::name(t),
        }
    }

    fn err(&self, msg: impl Into<String>) -> PacketError {
        PacketError::BadPayload {
            kind: self.kind,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PacketError> {
        if self.buf.len() < n {
            return Err(self.err(format!("needs {n} more bytes, has {}", self.buf.len())));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, PacketError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PacketError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PacketError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PacketError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, PacketError> {
        let n = self.u16()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn end(&self) -> Result<(), PacketError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.err(format!("{} trailing bytes", self.buf.len())))
        }
    }

    /// Element count that cannot exceed what the buffer could hold.
    fn count(&mut self, elem: usize) -> Result<usize, PacketError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem) > self.buf.len() {
            return Err(self.err(format!("count {n} exceeds payload")));
        }
        Ok(n)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let mut end = s.len().min(u16::MAX as usize);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    let b = &s.as_bytes()[..end];
    out.extend_from_slice(&(b.len() as u16).to_le_bytes());
    out.extend_from_slice(b);
}

impl Request {
    pub fn ptype(&self) -> u8 {
        match self {
            Request::Status => ptype::STATUS_REQUEST,
            Request::Control(_) => ptype::CONTROL_OP,
            Request::ParamSizeUpdate(_) => ptype::PARAM_SIZE_UPDATE,
            Request::GetErrors => ptype::GET_ERRORS,
            Request::GetFinishedBoxes => ptype::GET_FINISHED_BOXES,
            Request::MarkProcessed(_) => ptype::MARK_BOXES_PROCESSED,
            Request::SetFirmwareHash(_) => ptype::SET_FIRMWARE_HASH,
            Request::TaskTransfer { .. } => ptype::TASK_TRANSFER,
            Request::Init => ptype::INIT_CONNECTION,
            Request::Close => ptype::CLOSE_CONNECTION,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Request::Control(op) => out.push(*op as u8),
            Request::ParamSizeUpdate(n) => out.extend_from_slice(&n.to_le_bytes()),
            Request::MarkProcessed(ids) => {
                out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
                for id in ids {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
            Request::SetFirmwareHash(h) => out.extend_from_slice(h),
            Request::TaskTransfer {
                index,
                count,
                total,
                chunk,
            } => {
                out.extend_from_slice(&index.to_le_bytes());
                out.extend_from_slice(&count.to_le_bytes());
                out.extend_from_slice(&total.to_le_bytes());
                out.extend_from_slice(chunk);
            }
            Request::Status
            | Request::GetErrors
            | Request::GetFinishedBoxes
            | Request::Init
            | Request::Close => {}
        }
        out
    }

    pub fn to_frame(&self, seq: u8) -> Frame {
        Frame::new(self.ptype(), seq, self.payload())
    }

    pub fn from_frame(f: &Frame) -> Result<Self, PacketError> {
        let mut r = Reader::new(&f.payload, f.ptype);
        let req = match f.ptype {
            ptype::STATUS_REQUEST => Request::Status,
            ptype::CONTROL_OP => match r.u8()? {
                0 => Request::Control(ControlOp::Start),
                1 => Request::Control(ControlOp::Stop),
                s => return Err(r.err(format!("unknown control subcode {s}"))),
            },
            ptype::PARAM_SIZE_UPDATE => Request::ParamSizeUpdate(r.u32()?),
            ptype::GET_ERRORS => Request::GetErrors,
            ptype::GET_FINISHED_BOXES => Request::GetFinishedBoxes,
            ptype::MARK_BOXES_PROCESSED => {
                let n = r.count(4)?;
                Request::MarkProcessed((0..n).map(|_| r.u32()).collect::<Result<_, _>>()?)
            }
            ptype::SET_FIRMWARE_HASH => Request::SetFirmwareHash(r.take(16)?.try_into().unwrap()),
            ptype::TASK_TRANSFER => {
                let index = r.u16()?;
                let count = r.u16()?;
                let total = r.u32()?;
                Request::TaskTransfer {
                    index,
                    count,
                    total,
                    chunk: r.rest().to_vec(),
                }
            }
            ptype::INIT_CONNECTION => Request::Init,
            ptype::CLOSE_CONNECTION => Request::Close,
            t => return Err(PacketError::UnknownType(t)),
        };
        r.end()?;
        Ok(req)
    }
}

impl Response {
    pub fn nack(req: u8, reason: NackReason, message: impl Into<String>) -> Self {
        Response::Nack {
            req,
            reason,
            message: message.into(),
        }
    }

    pub fn to_frame(&self, seq: u8) -> Frame {
        let mut out = Vec::new();
        match self {
            Response::Nack {
                req,
                reason,
                message,
            } => {
                out.push(*req);
                out.extend_from_slice(&reason.code().to_le_bytes());
                put_str(&mut out, message);
                return Frame::new(ptype::NACK, seq, out);
            }
            Response::Ack { req, body } => {
                out.push(*req);
                match body {
                    AckBody::Empty => {}
                    AckBody::Init(i) => {
                        out.extend_from_slice(&i.version.to_le_bytes());
                        out.extend_from_slice(&i.arena_bytes.to_le_bytes());
                        out.extend_from_slice(&i.param_bytes.to_le_bytes());
                    }
                    AckBody::Status(s) => {
                        out.push(s.state);
                        out.extend_from_slice(&s.progress.to_le_bytes());
                        out.extend_from_slice(&s.last_return_code.to_le_bytes());
                        put_str(&mut out, &s.task_name);
                        out.extend_from_slice(&s.now_ns.to_le_bytes());
                        out.extend_from_slice(&s.run_start_ns.to_le_bytes());
                        out.extend_from_slice(&s.run_end_ns.unwrap_or(u64::MAX).to_le_bytes());
                    }
                    AckBody::Errors { messages, dropped } => {
                        out.extend_from_slice(&dropped.to_le_bytes());
                        out.extend_from_slice(&(messages.len() as u32).to_le_bytes());
                        for m in messages {
                            put_str(&mut out, m);
                        }
                    }
                    AckBody::Boxes(boxes) => {
                        out.extend_from_slice(&(boxes.len() as u32).to_le_bytes());
                        for b in boxes {
                            out.extend_from_slice(&b.id.to_le_bytes());
                            out.extend_from_slice(&b.offset.to_le_bytes());
                            out.extend_from_slice(&b.size.to_le_bytes());
                        }
                    }
                    AckBody::Marked(items) => {
                        out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                        for (id, res) in items {
                            out.extend_from_slice(&id.to_le_bytes());
                            out.push(*res as u8);
                        }
                    }
                }
            }
        }
        Frame::new(ptype::ACK, seq, out)
    }

    pub fn from_frame(f: &Frame) -> Result<Self, PacketError> {
        let mut r = Reader::new(&f.payload, f.ptype);
        let resp = match f.ptype {
            ptype::NACK => {
                let req = r.u8()?;
                let code = r.u16()?;
                let reason = NackReason::from_code(code)
                    .ok_or_else(|| r.err(format!("unknown reason {code}")))?;
                Response::Nack {
                    req,
                    reason,
                    message: r.string()?,
                }
            }
            ptype::ACK => {
                let req = r.u8()?;
                let body = match req {
                    ptype::INIT_CONNECTION => AckBody::Init(InitInfo {
                        version: r.u16()?,
                        arena_bytes: r.u64()?,
                        param_bytes: r.u32()?,
                    }),
                    ptype::STATUS_REQUEST => AckBody::Status(StatusInfo {
                        state: r.u8()?,
                        progress: r.u32()?,
                        last_return_code: r.u32()? as i32,
                        task_name: r.string()?,
                        now_ns: r.u64()?,
                        run_start_ns: r.u64()?,
                        run_end_ns: Some(r.u64()?).filter(|&v| v != u64::MAX),
                    }),
                    ptype::GET_ERRORS => {
                        let dropped = r.u64()?;
                        let n = r.count(2)?;
                        let messages = (0..n).map(|_| r.string()).collect::<Result<_, _>>()?;
                        AckBody::Errors { messages, dropped }
                    }
                    ptype::GET_FINISHED_BOXES => {
                        let n = r.count(20)?;
                        let boxes = (0..n)
                            .map(|_| {
                                Ok(BoxInfo {
                                    id: r.u32()?,
                                    offset: r.u64()?,
                                    size: r.u64()?,
                                })
                            })
                            .collect::<Result<_, PacketError>>()?;
                        AckBody::Boxes(boxes)
                    }
                    ptype::MARK_BOXES_PROCESSED => {
                        let n = r.count(5)?;
                        let items = (0..n)
                            .map(|_| {
                                let id = r.u32()?;
                                let res = match r.u8()? {
                                    0 => MarkResult::Freed,
                                    1 => MarkResult::NotFound,
                                    2 => MarkResult::InvalidState,
                                    x => return Err(r.err(format!("unknown mark result {x}"))),
                                };
                                Ok((id, res))
                            })
                            .collect::<Result<_, PacketError>>()?;
                        AckBody::Marked(items)
                    }
                    _ => AckBody::Empty,
                };
                Response::Ack { req, body }
            }
            t => return Err(PacketError::UnknownType(t)),
        };
        r.end()?;
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requests_roundtrip() {
        let reqs = [
            Request::Status,
            Request::Control(ControlOp::Stop),
            Request::ParamSizeUpdate(8),
            Request::MarkProcessed(vec![1, 2]),
            Request::SetFirmwareHash([7; 16]),
            Request::TaskTransfer {
                index: 1,
                count: 3,
                total: 10,
                chunk: vec![1, 2, 3],
            },
            Request::Init,
        ];
        for r in reqs {
            assert_eq!(Request::from_frame(&r.to_frame(5)).unwrap(), r);
        }
    }

    #[test]
    fn responses_roundtrip() {
        let resps = [
            Response::nack(0x42, NackReason::UnknownType, "unknown packet type"),
            Response::Ack {
                req: ptype::STATUS_REQUEST,
                body: AckBody::Status(StatusInfo {
                    state: 2,
                    progress: 3,
                    last_return_code: -1,
                    task_name: "t".into(),
                    now_ns: 5,
                    run_start_ns: 1,
                    run_end_ns: None,
                }),
            },
            Response::Ack {
                req: ptype::GET_ERRORS,
                body: AckBody::Errors {
                    messages: vec!["a".into(), "bc".into()],
                    dropped: 4,
                },
            },
            Response::Ack {
                req: ptype::GET_FINISHED_BOXES,
                body: AckBody::Boxes(vec![BoxInfo {
                    id: 1,
                    offset: 8,
                    size: 24,
                }]),
            },
            Response::Ack {
                req: ptype::MARK_BOXES_PROCESSED,
                body: AckBody::Marked(vec![(1, MarkResult::NotFound)]),
            },
            Response::Ack {
                req: ptype::CONTROL_OP,
                body: AckBody::Empty,
            },
        ];
        for r in resps {
            assert_eq!(Response::from_frame(&r.to_frame(9)).unwrap(), r);
        }
    }

    #[test]
    fn malformed_payloads() {
        assert_eq!(
            Request::from_frame(&Frame::new(0x42, 0, vec![])),
            Err(PacketError::UnknownType(0x42))
        );
        assert!(Request::from_frame(&Frame::new(ptype::STATUS_REQUEST, 0, vec![1])).is_err());
        assert!(
            Request::from_frame(&Frame::new(ptype::MARK_BOXES_PROCESSED, 0, vec![0xFF; 4]))
                .is_err()
        );
    }
}
