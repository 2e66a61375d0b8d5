//! Request dispatcher. Owns the engine channel; every engine-bound
//! operation of every client passes through [`Service::handle`].

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use qtask_core::compiler::{self, diag, CompileOptions, Diagnostic};
use qtask_core::engine::{Engine, EngineState};
use qtask_core::ipc::{EngineEndpoint, IpcClient, IpcError, MarkResult};
use qtask_core::tasks;
use qtask_core::vm::hostcalls;
use qtask_fabric::{CostKind, Fabric};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::ServiceConfig;
use crate::wire::{RpcErrorBody, RpcRequest, RpcResponse};
use crate::ServiceError;

pub const METHODS: &[&str] = &[
    "loadSourceTask",
    "loadBinaryTask",
    "compileTask",
    "setParameters",
    "startTask",
    "stopTask",
    "getStatus",
    "getErrors",
    "listFinishedBoxes",
    "fetchBox",
    "markProcessed",
    "getFirmwareHash",
    "getFabricConfig",
    "runBundledExperiment",
    "readRegister",
    "writeRegister",
    "readRegisterBlock",
    "getVirtualClock",
];

/// Default virtual-time budget for `runBundledExperiment`.
const DEFAULT_RUN_LIMIT_NS: u64 = 600_000_000_000;
const MAX_REGISTER_BLOCK: u32 = 1 << 20;

type MethodResult = Result<Value, RpcErrorBody>;

fn err(code: &str, message: impl Into<String>) -> RpcErrorBody {
    RpcErrorBody {
        code: code.into(),
        message: message.into(),
        data: None,
    }
}

fn ipc_err(e: IpcError) -> RpcErrorBody {
    match e.reason() {
        Some(r) => err(r.as_str(), e.to_string()),
        None => err("INTERNAL", e.to_string()),
    }
}

fn compile_err(diags: &[Diagnostic]) -> RpcErrorBody {
    RpcErrorBody {
        code: "COMPILE_ERROR".into(),
        message: diag::render_all("<task>", diags).trim_end().to_owned(),
        data: Some(json!({ "diagnostics": diags })),
    }
}

fn args<T: DeserializeOwned>(params: &Value) -> Result<T, RpcErrorBody> {
    serde_json::from_value(params.clone()).map_err(|e| err("INVALID_PARAMS", e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceArgs {
    name: String,
    source: String,
    #[serde(default = "yes")]
    optimize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryArgs {
    binary: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamArgs {
    values: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdArgs {
    id: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdsArgs {
    ids: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegArgs {
    addr: u32,
    #[serde(default)]
    value: Option<u32>,
    #[serde(default)]
    count: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct BundledArgs {
    name: String,
    #[serde(default)]
    params: Vec<u32>,
    #[serde(default)]
    limit_ns: Option<u64>,
}

fn no_args(params: &Value) -> Result<(), RpcErrorBody> {
    match params {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(err("INVALID_PARAMS", "method takes no parameters")),
    }
}

fn mark_str(m: MarkResult) -> &'static str {
    match m {
        MarkResult::Freed => "FREED",
        MarkResult::NotFound => "NOT_FOUND",
        MarkResult::InvalidState => "INVALID_STATE",
    }
}

pub struct Service {
    ipc: IpcClient<EngineEndpoint>,
    config: ServiceConfig,
    firmware_hash: [u8; 16],
}

impl Service {
    /// Boots fabric and engine, then runs the startup handshake.
    pub fn boot(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let fabric =
            Fabric::new(config.fabric.clone()).map_err(|e| ServiceError::Config(e.to_string()))?;
        let engine = Engine::new(config.engine.clone(), fabric)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Self::attach(engine, config)
    }

    /// Connects to an already running engine, e.g. after a service restart.
    /// The engine keeps its loaded task, boxes and clock.
    pub fn attach(engine: Engine, config: ServiceConfig) -> Result<Self, ServiceError> {
        let mut ipc = IpcClient::new(EngineEndpoint::new(engine));
        let info = ipc.init()?;
        log::info!(
            "engine connected: protocol {}, arena {} bytes",
            info.version,
            info.arena_bytes
        );
        let firmware_hash = hostcalls::firmware_hash();
        ipc.set_firmware_hash(firmware_hash)?;
        Ok(Self {
            ipc,
            config,
            firmware_hash,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        self.ipc.channel().engine()
    }

    fn engine_mut(&mut self) -> &mut Engine {
        self.ipc.channel_mut().engine_mut()
    }

    pub fn into_engine(self) -> Engine {
        self.ipc.into_channel().into_engine()
    }

    pub fn is_running(&self) -> bool {
        self.engine().state() == EngineState::Running
    }

    /// Lets `ns` of virtual time pass on the engine.
    pub fn idle(&mut self, ns: u64) {
        self.engine_mut().run_for(ns);
    }

    pub fn handle(&mut self, req: &RpcRequest) -> RpcResponse {
        log::debug!("rpc {} #{}", req.method, req.id);
        match self.dispatch(&req.method, &req.params) {
            Ok(v) => RpcResponse::success(req.id, v),
            Err(e) => RpcResponse::failure(req.id, e),
        }
    }

    /// Decodes and answers one raw message body.
    pub fn handle_bytes(&mut self, body: &[u8]) -> Vec<u8> {
        let resp = match serde_json::from_slice::<RpcRequest>(body) {
            Ok(req) => self.handle(&req),
            Err(e) => {
                let id = serde_json::from_slice::<Value>(body)
                    .ok()
                    .and_then(|v| v.get("id")?.as_u64())
                    .unwrap_or(0);
                RpcResponse::failure(id, err("PARSE_ERROR", e.to_string()))
            }
        };
        serde_json::to_vec(&resp).expect("responses always serialize")
    }

    fn dispatch(&mut self, method: &str, p: &Value) -> MethodResult {
        match method {
            "loadSourceTask" => {
                let a: SourceArgs = args(p)?;
                let (bin, warnings) = self.compile(&a)?;
                self.transfer(&bin)?;
                Ok(json!({ "name": a.name, "size": bin.len(), "diagnostics": warnings }))
            }
            "compileTask" => {
                let a: SourceArgs = args(p)?;
                let (bin, warnings) = self.compile(&a)?;
                Ok(json!({ "binary": B64.encode(&bin), "diagnostics": warnings }))
            }
            "loadBinaryTask" => {
                let a: BinaryArgs = args(p)?;
                let bin = B64
                    .decode(a.binary.as_bytes())
                    .map_err(|e| err("INVALID_PARAMS", format!("binary: {e}")))?;
                self.transfer(&bin)?;
                Ok(json!({ "size": bin.len() }))
            }
            "setParameters" => {
                let a: ParamArgs = args(p)?;
                let bytes: Vec<u8> = a.values.iter().flat_map(|v| v.to_le_bytes()).collect();
                self.ipc.set_parameters(&bytes).map_err(ipc_err)?;
                Ok(json!({ "size": bytes.len() }))
            }
            "startTask" => {
                no_args(p)?;
                self.ipc.start().map_err(ipc_err)?;
                Ok(json!({}))
            }
            "stopTask" => {
                no_args(p)?;
                self.ipc.stop().map_err(ipc_err)?;
                Ok(json!({}))
            }
            "getStatus" => {
                no_args(p)?;
                self.status()
            }
            "getErrors" => {
                no_args(p)?;
                let (messages, dropped) = self.ipc.errors().map_err(ipc_err)?;
                Ok(json!({ "messages": messages, "dropped": dropped }))
            }
            "listFinishedBoxes" => {
                no_args(p)?;
                let boxes = self.ipc.finished_boxes().map_err(ipc_err)?;
                Ok(
                    json!({ "boxes": boxes.iter().map(|b| json!({ "id": b.id, "size": b.size })).collect::<Vec<_>>() }),
                )
            }
            "fetchBox" => {
                let a: IdArgs = args(p)?;
                let data = self.fetch(a.id)?;
                Ok(json!({ "id": a.id, "size": data.len(), "data": B64.encode(&data) }))
            }
            "markProcessed" => {
                let a: IdsArgs = args(p)?;
                let r = self.ipc.mark_processed(&a.ids).map_err(ipc_err)?;
                Ok(
                    json!({ "results": r.iter().map(|(id, m)| json!({ "id": id, "result": mark_str(*m) })).collect::<Vec<_>>() }),
                )
            }
            "getFirmwareHash" => {
                no_args(p)?;
                Ok(json!({ "hash": hostcalls::hex(&self.firmware_hash) }))
            }
            "getFabricConfig" => {
                no_args(p)?;
                let regs: Vec<Value> = self
                    .engine()
                    .fabric()
                    .register_map()
                    .iter()
                    .map(|r| json!({ "name": r.name, "addr": r.address, "access": r.access.as_str() }))
                    .collect();
                Ok(
                    json!({ "fabric": self.config.fabric, "engine": self.config.engine, "registers": regs }),
                )
            }
            "readRegister" => {
                let a: RegArgs = args(p)?;
                let v = self
                    .engine_mut()
                    .fabric_mut()
                    .bus_read(a.addr)
                    .map_err(|e| err("FABRIC_ERROR", e.to_string()))?;
                Ok(json!({ "value": v }))
            }
            "writeRegister" => {
                let a: RegArgs = args(p)?;
                let value = a
                    .value
                    .ok_or_else(|| err("INVALID_PARAMS", "missing field `value`"))?;
                self.engine_mut()
                    .fabric_mut()
                    .bus_write(a.addr, value)
                    .map_err(|e| err("FABRIC_ERROR", e.to_string()))?;
                Ok(json!({}))
            }
            "readRegisterBlock" => {
                let a: RegArgs = args(p)?;
                let count = a
                    .count
                    .ok_or_else(|| err("INVALID_PARAMS", "missing field `count`"))?;
                if count > MAX_REGISTER_BLOCK {
                    return Err(err(
                        "INVALID_PARAMS",
                        format!("count exceeds {MAX_REGISTER_BLOCK}"),
                    ));
                }
                let fabric = self.engine_mut().fabric_mut();
                let values = (0..count)
                    .map(|_| fabric.bus_read(a.addr))
                    .collect::<Result<Vec<u32>, _>>();
                Ok(json!({ "values": values.map_err(|e| err("FABRIC_ERROR", e.to_string()))? }))
            }
            "getVirtualClock" => {
                no_args(p)?;
                Ok(self.clock())
            }
            "runBundledExperiment" => {
                let a: BundledArgs = args(p)?;
                self.run_bundled(&a)
            }
            other => Err(err("METHOD_NOT_FOUND", format!("unknown method `{other}`"))),
        }
    }

    fn compile(&self, a: &SourceArgs) -> Result<(Vec<u8>, Vec<Diagnostic>), RpcErrorBody> {
        if a.name.is_empty() || a.name.len() > 255 {
            return Err(err("INVALID_PARAMS", "task name must be 1..=255 bytes"));
        }
        compiler::compile_task(
            &a.name,
            &a.source,
            self.firmware_hash,
            CompileOptions {
                optimize: a.optimize,
            },
        )
        .map_err(|d| compile_err(&d))
    }

    fn transfer(&mut self, bin: &[u8]) -> Result<(), RpcErrorBody> {
        self.ipc
            .transfer_task(bin, self.config.service.transfer_chunk)
            .map_err(ipc_err)
    }

    fn status(&mut self) -> MethodResult {
        let s = self.ipc.status().map_err(ipc_err)?;
        let state = EngineState::from_code(s.state)
            .map(|st| st.as_str())
            .unwrap_or("UNKNOWN");
        Ok(json!({
            "state": state,
            "progress": s.progress,
            "lastReturnCode": s.last_return_code,
            "taskName": s.task_name,
            "nowNs": s.now_ns,
            "runStartNs": s.run_start_ns,
            "runEndNs": s.run_end_ns,
        }))
    }

    /// Reads a finished box and frees it.
    fn fetch(&mut self, id: u32) -> Result<Vec<u8>, RpcErrorBody> {
        let boxes = self.ipc.finished_boxes().map_err(ipc_err)?;
        let Some(b) = boxes.into_iter().find(|b| b.id == id) else {
            return Err(err("NOT_FOUND", format!("no finished box {id}")));
        };
        let data = self.ipc.read_box(&b).map_err(ipc_err)?;
        match self.ipc.mark_processed(&[id]).map_err(ipc_err)?.first() {
            Some((_, MarkResult::Freed)) => Ok(data),
            other => Err(err(
                "INTERNAL",
                format!("box {id} could not be freed: {other:?}"),
            )),
        }
    }

    fn clock(&self) -> Value {
        let clock = self.engine().fabric().clock();
        let ledger: serde_json::Map<String, Value> = CostKind::ALL
            .iter()
            .map(|k| {
                let e = clock.ledger().get(k).copied().unwrap_or_default();
                (
                    k.as_str().to_owned(),
                    json!({ "events": e.events, "totalNs": e.total_ns }),
                )
            })
            .collect();
        json!({ "nowNs": clock.now(), "ledger": ledger, "traceDigest": format!("{:016x}", clock.trace_digest()) })
    }

    /// Loads a bundled task, runs it to completion in one go and returns
    /// everything it produced.
    fn run_bundled(&mut self, a: &BundledArgs) -> MethodResult {
        let Some(source) = tasks::source(&a.name) else {
            return Err(err(
                "NOT_FOUND",
                format!(
                    "no bundled task `{}`; known: {}",
                    a.name,
                    tasks::NAMES.join(", ")
                ),
            ));
        };
        let src = SourceArgs {
            name: a.name.clone(),
            source,
            optimize: true,
        };
        let (bin, _) = self.compile(&src)?;
        self.transfer(&bin)?;
        let bytes: Vec<u8> = a.params.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.ipc.set_parameters(&bytes).map_err(ipc_err)?;
        self.ipc.start().map_err(ipc_err)?;
        let state = self
            .engine_mut()
            .run_to_completion(a.limit_ns.unwrap_or(DEFAULT_RUN_LIMIT_NS));
        if state == EngineState::Running {
            self.ipc.stop().map_err(ipc_err)?;
            self.engine_mut().run_for(0);
        }
        let mut boxes = Vec::new();
        for b in self.ipc.finished_boxes().map_err(ipc_err)? {
            let data = self.fetch(b.id)?;
            boxes.push(json!({ "id": b.id, "size": data.len(), "data": B64.encode(&data) }));
        }
        let (errors, _) = self.ipc.errors().map_err(ipc_err)?;
        let mut status = self.status()?;
        status["boxes"] = Value::Array(boxes);
        status["errors"] = json!(errors);
        status["timedOut"] = json!(state == EngineState::Running);
        Ok(status)
    }
}
