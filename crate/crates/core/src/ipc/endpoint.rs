//! Engine side of the channel: decodes requests, applies them to the
//! [`Engine`] and encodes the reply.

use super::frame::{Frame, MAX_PAYLOAD};
use super::packet::*;
use super::{Channel, ChannelError};
use crate::engine::{CommKind, Engine, EngineError};

#[derive(Debug)]
struct Transfer {
    count: u16,
    total: u32,
    next: u16,
    data: Vec<u8>,
}

#[derive(Debug)]
pub struct EngineEndpoint {
    engine: Engine,
    connected: bool,
    transfer: Option<Transfer>,
    tx_seq: u8,
}

pub fn nack_reason(e: &EngineError) -> NackReason {
    match e {
        EngineError::TaskRunning => NackReason::TaskRunning,
        EngineError::NoTaskLoaded => NackReason::NoTaskLoaded,
        EngineError::HashNotSet => NackReason::HashNotSet,
        EngineError::HashMismatch { .. } => NackReason::HashMismatch,
        EngineError::TaskTooLarge { .. } => NackReason::TaskTooLarge,
        EngineError::InvalidBinary(_) => NackReason::InvalidBinary,
        EngineError::Params(_) => NackReason::ParamTooLarge,
        EngineError::Heap(_) | EngineError::Fabric(_) | EngineError::Config(_) => {
            NackReason::BadPayload
        }
    }
}

fn comm_kind(req: &Request) -> CommKind {
    match req {
        Request::Status => CommKind::Status,
        Request::GetErrors => CommKind::Errors,
        Request::GetFinishedBoxes => CommKind::Boxes,
        _ => CommKind::Other,
    }
}

impl EngineEndpoint {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            connected: false,
            transfer: None,
            tx_seq: 0,
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Answers one frame. Every request gets exactly one response.
    pub fn handle_frame(&mut self, f: &Frame) -> Frame {
        let resp = self.respond(f);
        let out = resp.to_frame(self.tx_seq);
        self.tx_seq = self.tx_seq.wrapping_add(1);
        out
    }

    fn respond(&mut self, f: &Frame) -> Response {
        let req = match Request::from_frame(f) {
            Ok(r) => r,
            Err(PacketError::UnknownType(t)) => {
                return Response::nack(
                    t,
                    NackReason::UnknownType,
                    format!("unknown packet type {t:#04x}"),
                )
            }
            Err(e) if self.connected => {
                return Response::nack(f.ptype, NackReason::BadPayload, e.to_string())
            }
            Err(_) => {
                return Response::nack(
                    f.ptype,
                    NackReason::NotConnected,
                    "connection not initialised",
                )
            }
        };
        self.handle_request(req)
    }

    pub fn handle_request(&mut self, req: Request) -> Response {
        let t = req.ptype();
        if !self.connected && req != Request::Init {
            return Response::nack(t, NackReason::NotConnected, "connection not initialised");
        }
        self.engine.interrupt(comm_kind(&req));
        let ack = |body| Response::Ack { req: t, body };
        let fail = |e: EngineError| Response::nack(t, nack_reason(&e), e.to_string());
        match req {
            Request::Init => {
                self.connected = true;
                self.transfer = None;
                let cfg = self.engine.config();
                ack(AckBody::Init(InitInfo {
                    version: PROTOCOL_VERSION,
                    arena_bytes: self.engine.heap().capacity(),
                    param_bytes: cfg.param_bytes,
                }))
            }
            Request::Close => {
                self.connected = false;
                self.transfer = None;
                ack(AckBody::Empty)
            }
            Request::Status => {
                let s = self.engine.status();
                ack(AckBody::Status(StatusInfo {
                    state: s.state.code(),
                    progress: s.progress,
                    last_return_code: s.last_return_code,
                    task_name: s.task_name,
                    now_ns: self.engine.now(),
                    run_start_ns: self.engine.run_window().0,
                    run_end_ns: self.engine.run_window().1,
                }))
            }
            Request::Control(ControlOp::Start) => match self.engine.start_task() {
                Ok(()) => ack(AckBody::Empty),
                Err(e) => fail(e),
            },
            Request::Control(ControlOp::Stop) => {
                self.engine.stop_task();
                ack(AckBody::Empty)
            }
            Request::ParamSizeUpdate(n) => match self.engine.set_param_size(u64::from(n)) {
                Ok(()) => ack(AckBody::Empty),
                Err(e) => fail(e),
            },
            Request::GetErrors => {
                let messages = self.engine.drain_errors();
                ack(AckBody::Errors {
                    messages,
                    dropped: self.engine.dropped_errors(),
                })
            }
            Request::GetFinishedBoxes => ack(AckBody::Boxes(
                self.engine
                    .finished_boxes()
                    .into_iter()
                    .map(|b| BoxInfo {
                        id: b.id,
                        offset: b.offset,
                        size: b.size,
                    })
                    .collect(),
            )),
            Request::MarkProcessed(ids) => {
                let items = ids
                    .into_iter()
                    .map(|id| {
                        let r = match self.engine.mark_processed(id) {
                            Ok(_) => MarkResult::Freed,
                            Err(EngineError::Heap(crate::engine::heap::HeapError::NotFound(_))) => {
                                MarkResult::NotFound
                            }
                            Err(_) => MarkResult::InvalidState,
                        };
                        (id, r)
                    })
                    .collect();
                ack(AckBody::Marked(items))
            }
            Request::SetFirmwareHash(h) => {
                self.engine.set_firmware_hash(h);
                ack(AckBody::Empty)
            }
            Request::TaskTransfer {
                index,
                count,
                total,
                chunk,
            } => match self.transfer_chunk(index, count, total, chunk) {
                Ok(()) => ack(AckBody::Empty),
                Err((reason, msg)) => {
                    self.transfer = None;
                    Response::nack(t, reason, msg)
                }
            },
        }
    }

    fn transfer_chunk(
        &mut self,
        index: u16,
        count: u16,
        total: u32,
        chunk: Vec<u8>,
    ) -> Result<(), (NackReason, String)> {
        if self.engine.state() == crate::engine::EngineState::Running {
            return Err((NackReason::TaskRunning, "a task is running".into()));
        }
        if count == 0 || index >= count {
            return Err((NackReason::BadPayload, format!("chunk {index} of {count}")));
        }
        if total as usize > MAX_PAYLOAD {
            return Err((
                NackReason::TaskTooLarge,
                format!("transfer of {total} bytes"),
            ));
        }
        if index == 0 {
            self.transfer = Some(Transfer {
                count,
                total,
                next: 0,
                data: Vec::with_capacity(total as usize),
            });
        }
        let Some(tr) = self.transfer.as_mut() else {
            return Err((
                NackReason::TransferOrder,
                format!("chunk {index} without a transfer in progress"),
            ));
        };
        if tr.next != index || tr.count != count || tr.total != total {
            return Err((
                NackReason::TransferOrder,
                format!(
                    "expected chunk {} of {} ({} bytes), got {index} of {count} ({total} bytes)",
                    tr.next, tr.count, tr.total
                ),
            ));
        }
        if tr.data.len() + chunk.len() > total as usize {
            return Err((
                NackReason::TransferOrder,
                "chunks exceed the announced size".into(),
            ));
        }
        tr.data.extend_from_slice(&chunk);
        tr.next += 1;
        if tr.next < tr.count {
            return Ok(());
        }
        let tr = self.transfer.take().expect("checked above");
        if tr.data.len() != total as usize {
            return Err((
                NackReason::TransferOrder,
                format!("received {} of {total} bytes", tr.data.len()),
            ));
        }
        self.engine
            .load_task(&tr.data)
            .map_err(|e| (nack_reason(&e), e.to_string()))
    }
}

impl Channel for EngineEndpoint {
    fn transact(&mut self, request: &[u8]) -> Result<Vec<u8>, ChannelError> {
        let reply = match Frame::decode(request) {
            Ok(f) => self.handle_frame(&f),
            Err(e) => {
                let req = request.first().copied().unwrap_or(0xFF);
                let resp = Response::nack(req, NackReason::BadFrame, e.to_string());
                let f = resp.to_frame(self.tx_seq);
                self.tx_seq = self.tx_seq.wrapping_add(1);
                f
            }
        };
        reply.encode().map_err(|e| ChannelError(e.to_string()))
    }

    fn write_params(&mut self, offset: u64, data: &[u8]) -> Result<(), ChannelError> {
        self.engine
            .write_params(offset, data)
            .map_err(|e| ChannelError(e.to_string()))
    }

    fn read_arena(&mut self, offset: u64, len: u64) -> Result<Vec<u8>, ChannelError> {
        self.engine
            .read_arena(offset, len)
            .map_err(|e| ChannelError(e.to_string()))
    }
}
