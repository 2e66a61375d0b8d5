//! Clients: a TCP client for a running `qtaskd` and an embedded one that
//! drives a [`Service`] in-process, plus [`Session`], a typed wrapper over
//! either.

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::service::Service;
use crate::wire::{self, RpcRequest, RpcResponse};

/// Client poll interval used while waiting for a task.
pub const DEFAULT_POLL: Duration = Duration::from_millis(200);

#[derive(Debug, Error)]
pub enum RpcError {
    #[error("{code}: {message}")]
    Remote {
        code: String,
        message: String,
        data: Option<Value>,
    },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl RpcError {
    pub fn code(&self) -> Option<&str> {
        match self {
            RpcError::Remote { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub trait Transport {
    fn call(&mut self, method: &str, params: Value) -> Result<Value, RpcError>;

    /// Waits before the next poll. `virtual_ns` is how much engine time the
    /// caller wants to elapse; transports that cannot control the engine
    /// clock wait for their wall-clock poll interval instead.
    fn wait(&mut self, virtual_ns: u64);
}

fn unpack(id: u64, body: &[u8]) -> Result<Value, RpcError> {
    let resp: RpcResponse =
        serde_json::from_slice(body).map_err(|e| RpcError::Protocol(e.to_string()))?;
    if resp.id != id {
        return Err(RpcError::Protocol(format!(
            "response id {} for request {id}",
            resp.id
        )));
    }
    match (resp.ok, resp.result, resp.error) {
        (true, Some(v), _) => Ok(v),
        (false, _, Some(e)) => Err(RpcError::Remote {
            code: e.code,
            message: e.message,
            data: e.data,
        }),
        _ => Err(RpcError::Protocol("malformed response".into())),
    }
}

fn request_bytes(id: u64, method: &str, params: Value) -> Vec<u8> {
    serde_json::to_vec(&RpcRequest {
        id,
        method: method.into(),
        params,
    })
    .expect("requests always serialize")
}

pub struct TcpClient {
    stream: TcpStream,
    next_id: u64,
    pub poll: Duration,
}

impl TcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            next_id: 1,
            poll: DEFAULT_POLL,
        })
    }
}

impl Transport for TcpClient {
    fn call(&mut self, method: &str, params: Value) -> Result<Value, RpcError> {
        let id = self.next_id;
        self.next_id += 1;
        wire::write_message(&mut self.stream, &request_bytes(id, method, params))?;
        let body = wire::read_message(&mut self.stream)?
            .ok_or_else(|| RpcError::Io(io::ErrorKind::UnexpectedEof.into()))?;
        unpack(id, &body)
    }

    fn wait(&mut self, _virtual_ns: u64) {
        thread::sleep(self.poll);
    }
}

/// In-process client. Requests take the same encode/dispatch/decode path
/// as over TCP, and waiting advances the engine clock explicitly, so runs
/// are reproducible.
pub struct EmbeddedClient {
    service: Service,
    next_id: u64,
}

impl EmbeddedClient {
    pub fn new(service: Service) -> Self {
        Self {
            service,
            next_id: 1,
        }
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    pub fn service_mut(&mut self) -> &mut Service {
        &mut self.service
    }

    pub fn into_service(self) -> Service {
        self.service
    }
}

impl Transport for EmbeddedClient {
    fn call(&mut self, method: &str, params: Value) -> Result<Value, RpcError> {
        let id = self.next_id;
        self.next_id += 1;
        let out = self
            .service
            .handle_bytes(&request_bytes(id, method, params));
        unpack(id, &out)
    }

    fn wait(&mut self, virtual_ns: u64) {
        self.service.idle(virtual_ns);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Status {
    pub state: String,
    pub progress: u32,
    pub last_return_code: i32,
    pub task_name: String,
    pub now_ns: u64,
    pub run_start_ns: u64,
    pub run_end_ns: Option<u64>,
}

impl Status {
    pub fn is_running(&self) -> bool {
        self.state == "RUNNING"
    }

    /// Virtual duration of the last run, if it ended.
    pub fn run_ns(&self) -> Option<u64> {
        self.run_end_ns.map(|e| e - self.run_start_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct BoxEntry {
    pub id: u32,
    pub size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerEntry {
    pub events: u64,
    pub total_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClockReport {
    pub now_ns: u64,
    pub ledger: std::collections::BTreeMap<String, LedgerEntry>,
    pub trace_digest: String,
}

impl ClockReport {
    pub fn total(&self, kind: &str) -> u64 {
        self.ledger.get(kind).map_or(0, |e| e.total_ns)
    }

    pub fn events(&self, kind: &str) -> u64 {
        self.ledger.get(kind).map_or(0, |e| e.events)
    }
}

fn field<T: for<'de> Deserialize<'de>>(v: Value, name: &str) -> Result<T, RpcError> {
    let inner = v
        .get(name)
        .cloned()
        .ok_or_else(|| RpcError::Protocol(format!("missing `{name}`")))?;
    serde_json::from_value(inner).map_err(|e| RpcError::Protocol(format!("`{name}`: {e}")))
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, RpcError> {
    serde_json::from_value(v).map_err(|e| RpcError::Protocol(e.to_string()))
}

fn decode(s: &str) -> Result<Vec<u8>, RpcError> {
    B64.decode(s.as_bytes())
        .map_err(|e| RpcError::Protocol(e.to_string()))
}

/// Typed method wrappers.
pub struct Session<T> {
    pub transport: T,
}

impl<T: Transport> Session<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }

    pub fn call(&mut self, method: &str, params: Value) -> Result<Value, RpcError> {
        self.transport.call(method, params)
    }

    pub fn wait(&mut self, virtual_ns: u64) {
        self.transport.wait(virtual_ns);
    }

    pub fn load_source(&mut self, name: &str, source: &str) -> Result<(), RpcError> {
        self.call("loadSourceTask", json!({ "name": name, "source": source }))
            .map(drop)
    }

    pub fn compile(&mut self, name: &str, source: &str) -> Result<Vec<u8>, RpcError> {
        let v = self.call("compileTask", json!({ "name": name, "source": source }))?;
        decode(&field::<String>(v, "binary")?)
    }

    pub fn load_binary(&mut self, binary: &[u8]) -> Result<(), RpcError> {
        self.call("loadBinaryTask", json!({ "binary": B64.encode(binary) }))
            .map(drop)
    }

    pub fn set_parameters(&mut self, values: &[u32]) -> Result<(), RpcError> {
        self.call("setParameters", json!({ "values": values }))
            .map(drop)
    }

    pub fn start(&mut self) -> Result<(), RpcError> {
        self.call("startTask", json!({})).map(drop)
    }

    pub fn stop(&mut self) -> Result<(), RpcError> {
        self.call("stopTask", json!({})).map(drop)
    }

    pub fn status(&mut self) -> Result<Status, RpcError> {
        parse(self.call("getStatus", json!({}))?)
    }

    pub fn errors(&mut self) -> Result<Vec<String>, RpcError> {
        field(self.call("getErrors", json!({}))?, "messages")
    }

    pub fn list_boxes(&mut self) -> Result<Vec<BoxEntry>, RpcError> {
        field(self.call("listFinishedBoxes", json!({}))?, "boxes")
    }

    /// Fetches a box; the service frees it afterwards.
    pub fn fetch_box(&mut self, id: u32) -> Result<Vec<u8>, RpcError> {
        decode(&field::<String>(
            self.call("fetchBox", json!({ "id": id }))?,
            "data",
        )?)
    }

    /// Fetches every currently finished box, in finish order.
    pub fn drain_boxes(&mut self) -> Result<Vec<(u32, Vec<u8>)>, RpcError> {
        let mut out = Vec::new();
        for b in self.list_boxes()? {
            out.push((b.id, self.fetch_box(b.id)?));
        }
        Ok(out)
    }

    pub fn firmware_hash(&mut self) -> Result<String, RpcError> {
        field(self.call("getFirmwareHash", json!({}))?, "hash")
    }

    pub fn fabric_config(&mut self) -> Result<qtask_fabric::FabricConfig, RpcError> {
        field(self.call("getFabricConfig", json!({}))?, "fabric")
    }

    pub fn read_register(&mut self, addr: u32) -> Result<u32, RpcError> {
        field(self.call("readRegister", json!({ "addr": addr }))?, "value")
    }

    pub fn write_register(&mut self, addr: u32, value: u32) -> Result<(), RpcError> {
        self.call("writeRegister", json!({ "addr": addr, "value": value }))
            .map(drop)
    }

    pub fn read_register_block(&mut self, addr: u32, count: u32) -> Result<Vec<u32>, RpcError> {
        field(
            self.call("readRegisterBlock", json!({ "addr": addr, "count": count }))?,
            "values",
        )
    }

    pub fn clock(&mut self) -> Result<ClockReport, RpcError> {
        parse(self.call("getVirtualClock", json!({}))?)
    }

    /// Polls until the task is no longer running, handing every finished
    /// box to `on_box` as soon as it is listed.
    pub fn run_until_done(
        &mut self,
        poll_ns: u64,
        mut on_box: impl FnMut(u32, Vec<u8>),
    ) -> Result<Status, RpcError> {
        loop {
            let st = self.status()?;
            for (id, data) in self.drain_boxes()? {
                on_box(id, data);
            }
            if !st.is_running() {
                // Boxes finished between the status and the listing above
                // were already drained; the task cannot add more.
                return Ok(st);
            }
            self.transport.wait(poll_ns);
        }
    }
}
