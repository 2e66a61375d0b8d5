//! The task engine: lifecycle, the application/communication contexts,
//! critical sections, data boxes, parameters and the error queue.
//!
//! The engine is single-threaded and driven explicitly. The application
//! context runs only inside [`Engine::run_for`] and friends; communication
//! requests are served between application slices through
//! [`Engine::interrupt`], which charges the configured interruption cost
//! while a task is running. Everything is measured on the fabric's virtual
//! clock, so a run is a pure function of configuration, seed and the request
//! schedule.

pub mod errors;
pub mod heap;
mod host;
pub mod params;

use std::sync::Arc;

use qtask_fabric::{CostKind, Fabric, FabricError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::binary::{BinaryError, TaskBinary};
use crate::vm::{Bytecode, CycleCosts, Executor, Exit, Program, Trap, Vm};
use errors::ErrorQueue;
use heap::{BoxHeap, DataBox, HeapError};
use params::{ParamError, ParamRegion};

/// Return code recorded when a task is stopped.
pub const CANCELLED: i32 = i32::MIN;
/// Return code recorded when a task traps.
pub const TRAPPED: i32 = i32::MIN + 1;

pub const MAX_ARENA_BYTES: u64 = 480 * 1024 * 1024;
pub const MAX_PARAM_BYTES: u32 = 15 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EngineState {
    Idle,
    TaskLoaded,
    Running,
    Finished,
    Error,
}

impl EngineState {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        use EngineState::*;
        [Idle, TaskLoaded, Running, Finished, Error]
            .get(c as usize)
            .copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EngineState::Idle => "IDLE",
            EngineState::TaskLoaded => "TASK_LOADED",
            EngineState::Running => "RUNNING",
            EngineState::Finished => "FINISHED",
            EngineState::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStatus {
    pub state: EngineState,
    pub progress: u32,
    pub task_name: String,
    pub last_return_code: i32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("a task is running")]
    TaskRunning,
    #[error("no task loaded")]
    NoTaskLoaded,
    #[error("firmware hash has not been set")]
    HashNotSet,
    #[error("task hash {found} does not match firmware hash {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("task is {size} bytes, budget is {budget}")]
    TaskTooLarge { size: usize, budget: u32 },
    #[error("invalid task binary: {0}")]
    InvalidBinary(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Heap(#[from] HeapError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

/// Virtual cost of serving a request while a task runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterruptionCosts {
    pub status_ns: u64,
    pub errors_ns: u64,
    pub boxes_ns: u64,
    pub other_ns: u64,
}

impl Default for InterruptionCosts {
    fn default() -> Self {
        Self {
            status_ns: 16_200,
            errors_ns: 14_300,
            boxes_ns: 42_700,
            other_ns: 14_300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommKind {
    Status,
    Errors,
    Boxes,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub arena_bytes: u64,
    pub param_bytes: u32,
    pub error_queue_len: usize,
    /// Serialized bytecode budget.
    pub code_budget: u32,
    /// LOCALS memory per run.
    pub locals_budget: u32,
    pub cycles: CycleCosts,
    pub interruption: InterruptionCosts,
    /// Modelled cost of one radix-2 butterfly in `fft_autocorrelate`.
    pub fft_butterfly_ns: f64,
    /// Longest a request waits for a critical section to end.
    pub critical_wait_limit_ns: u64,
    pub console_lines: usize,
    pub ownership_trace_len: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            arena_bytes: 64 * 1024 * 1024,
            param_bytes: 1024 * 1024,
            error_queue_len: 64,
            code_budget: 50 * 1024,
            locals_budget: 50 * 1024,
            cycles: CycleCosts::default(),
            interruption: InterruptionCosts::default(),
            fft_butterfly_ns: 23.526,
            critical_wait_limit_ns: 10_000_000_000,
            console_lines: 1000,
            ownership_trace_len: 100_000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.into()));
        if self.arena_bytes == 0 || self.arena_bytes > MAX_ARENA_BYTES {
            return bad("arena_bytes must be in 1..=480 MiB");
        }
        if self.param_bytes > MAX_PARAM_BYTES {
            return bad("param_bytes must not exceed 15 MiB");
        }
        if self.error_queue_len == 0 {
            return bad("error_queue_len must be positive");
        }
        if self.cycles.cycle_ns == 0 {
            return bad("cycle_ns must be positive");
        }
        if !(self.fft_butterfly_ns.is_finite() && self.fft_butterfly_ns >= 0.0) {
            return bad("fft_butterfly_ns must be a non-negative number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Owner {
    App,
    Comm,
    /// A critical section, nested inside an App interval.
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnershipInterval {
    pub owner: Owner,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, Default)]
struct OwnershipTrace {
    limit: usize,
    intervals: Vec<OwnershipInterval>,
    truncated: bool,
}

impl OwnershipTrace {
    fn record(&mut self, owner: Owner, start_ns: u64, end_ns: u64) {
        if let Some(last) = self.intervals.last_mut() {
            if last.owner == owner && last.end_ns == start_ns && owner != Owner::Critical {
                last.end_ns = end_ns;
                return;
            }
        }
        if self.intervals.len() >= self.limit {
            self.truncated = true;
            return;
        }
        self.intervals.push(OwnershipInterval {
            owner,
            start_ns,
            end_ns,
        });
    }
}

#[derive(Debug, Clone)]
struct LoadedTask {
    name: String,
    program: Arc<Program>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum YieldMode {
    /// Pause at the first scheduling point at or after the deadline.
    Deadline(u64),
    /// Pause as soon as no critical section is open, or at the limit.
    CriticalExit(u64),
}

/// Engine state reachable from host calls.
pub(crate) struct Core {
    cfg: EngineConfig,
    fabric: Fabric,
    state: EngineState,
    task: Option<LoadedTask>,
    heap: BoxHeap,
    params: ParamRegion,
    /// The task's view of the parameter region, refreshed at start.
    param_view: Vec<u8>,
    errors: ErrorQueue,
    progress: u32,
    last_return_code: i32,
    firmware_hash: Option<[u8; 16]>,
    critical_depth: u32,
    critical_since: u64,
    cancel: bool,
    timer_start_ns: u64,
    yield_mode: YieldMode,
    trace: OwnershipTrace,
    console: std::collections::VecDeque<String>,
    fft: Option<crate::g2::G2Fft>,
    run_start_ns: u64,
    run_end_ns: Option<u64>,
}

pub struct Engine {
    core: Core,
    exec: Option<Box<dyn Executor>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("status", &self.status())
            .field("now_ns", &self.now())
            .finish()
    }
}

impl Engine {
    pub fn new(cfg: EngineConfig, fabric: Fabric) -> Result<Self, EngineError> {
        cfg.validate()?;
        let core = Core {
            heap: BoxHeap::new(cfg.arena_bytes),
            params: ParamRegion::new(cfg.param_bytes as usize),
            errors: ErrorQueue::new(cfg.error_queue_len),
            trace: OwnershipTrace {
                limit: cfg.ownership_trace_len,
                ..Default::default()
            },
            cfg,
            fabric,
            state: EngineState::Idle,
            task: None,
            param_view: Vec::new(),
            progress: 0,
            last_return_code: 0,
            firmware_hash: None,
            critical_depth: 0,
            critical_since: 0,
            cancel: false,
            timer_start_ns: 0,
            yield_mode: YieldMode::Deadline(0),
            console: Default::default(),
            fft: None,
            run_start_ns: 0,
            run_end_ns: None,
        };
        Ok(Self { core, exec: None })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.core.cfg
    }

    pub fn fabric(&self) -> &Fabric {
        &self.core.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.core.fabric
    }

    pub fn now(&self) -> u64 {
        self.core.fabric.now()
    }

    pub fn state(&self) -> EngineState {
        self.core.state
    }

    pub fn status(&self) -> EngineStatus {
        EngineStatus {
            state: self.core.state,
            progress: self.core.progress,
            task_name: self
                .core
                .task
                .as_ref()
                .map(|t| t.name.clone())
                .unwrap_or_default(),
            last_return_code: self.core.last_return_code,
        }
    }

    pub fn set_firmware_hash(&mut self, hash: [u8; 16]) {
        self.core.firmware_hash = Some(hash);
    }

    pub fn firmware_hash(&self) -> Option<[u8; 16]> {
        self.core.firmware_hash
    }

    /// Verifies and installs a task binary.
    pub fn load_task(&mut self, bytes: &[u8]) -> Result<(), EngineError> {
        if self.core.state == EngineState::Running {
            return Err(EngineError::TaskRunning);
        }
        let expected = self.core.firmware_hash.ok_or(EngineError::HashNotSet)?;
        let bin =
            crate::compiler::binary::check_compatibility(bytes, &expected).map_err(
                |e| match e {
                    BinaryError::HashMismatch { expected, found } => {
                        EngineError::HashMismatch { expected, found }
                    }
                    e => EngineError::InvalidBinary(e.to_string()),
                },
            )?;
        self.install(bin)
    }

    fn install(&mut self, bin: TaskBinary) -> Result<(), EngineError> {
        if bin.bytecode.len() > self.core.cfg.code_budget as usize {
            return Err(EngineError::TaskTooLarge {
                size: bin.bytecode.len(),
                budget: self.core.cfg.code_budget,
            });
        }
        let module = Bytecode::from_bytes(&bin.bytecode)
            .map_err(|e| EngineError::InvalidBinary(e.to_string()))?;
        let program =
            Program::new(&module).map_err(|e| EngineError::InvalidBinary(e.to_string()))?;
        self.core.heap.clear();
        self.core.task = Some(LoadedTask {
            name: bin.name,
            program: Arc::new(program),
        });
        self.core.state = EngineState::TaskLoaded;
        self.core.progress = 0;
        self.core.last_return_code = 0;
        self.exec = None;
        log::debug!("task loaded at {} ns", self.now());
        Ok(())
    }

    /// Starts the loaded task on the bytecode VM.
    pub fn start_task(&mut self) -> Result<(), EngineError> {
        if self.core.state == EngineState::Running {
            return Err(EngineError::TaskRunning);
        }
        let task = self.core.task.as_ref().ok_or(EngineError::NoTaskLoaded)?;
        let vm = Vm::new(
            task.program.clone(),
            self.core.cfg.cycles,
            self.core.cfg.locals_budget as usize,
        );
        self.begin(Box::new(vm));
        Ok(())
    }

    /// Starts a run driven by an arbitrary executor, such as a reference
    /// interpreter. No task binary is required.
    pub fn start_task_with_executor(&mut self, exec: Box<dyn Executor>) -> Result<(), EngineError> {
        if self.core.state == EngineState::Running {
            return Err(EngineError::TaskRunning);
        }
        self.begin(exec);
        Ok(())
    }

    fn begin(&mut self, exec: Box<dyn Executor>) {
        let c = &mut self.core;
        c.heap.clear();
        c.param_view = c.params.contents().to_vec();
        c.progress = 0;
        c.cancel = false;
        c.critical_depth = 0;
        c.timer_start_ns = c.fabric.now();
        c.run_start_ns = c.fabric.now();
        c.run_end_ns = None;
        c.state = EngineState::Running;
        self.exec = Some(exec);
    }

    /// Requests cooperative cancellation. A no-op unless a task runs.
    pub fn stop_task(&mut self) {
        if self.core.state == EngineState::Running {
            self.core.cancel = true;
        }
    }

    /// Runs the application context until `ns` of virtual time have passed,
    /// then idles for whatever remains.
    pub fn run_for(&mut self, ns: u64) {
        let target = self.now().saturating_add(ns);
        self.drive(YieldMode::Deadline(target));
        self.core
            .fabric
            .clock_mut()
            .advance_to(CostKind::Idle, target);
    }

    /// Runs until the task ends or `limit_ns` of virtual time have passed.
    pub fn run_to_completion(&mut self, limit_ns: u64) -> EngineState {
        let target = self.now().saturating_add(limit_ns);
        self.drive(YieldMode::Deadline(target));
        self.core.state
    }

    fn drive(&mut self, mode: YieldMode) {
        while self.core.state == EngineState::Running {
            let now = self.now();
            match mode {
                YieldMode::Deadline(d) if now >= d && self.core.critical_depth == 0 => break,
                YieldMode::CriticalExit(limit) if self.core.critical_depth == 0 || now >= limit => {
                    break
                }
                _ => {}
            }
            if self.core.cancel && self.core.critical_depth == 0 {
                self.end_run(CANCELLED);
                break;
            }
            self.core.yield_mode = mode;
            let mut exec = self.exec.take().expect("running task has an executor");
            let exit = exec.run(&mut self.core);
            self.exec = Some(exec);
            let end = self.now();
            self.core.trace.record(Owner::App, now, end);
            match exit {
                Exit::Yielded => {
                    if let YieldMode::Deadline(d) = mode {
                        if self.core.critical_depth > 0 && end >= self.critical_deadline(d) {
                            log::warn!("critical section open past the wait limit");
                            break;
                        }
                    }
                }
                Exit::Returned(code) => self.end_run(code),
                Exit::Trapped(Trap::Cancelled) => self.end_run(CANCELLED),
                Exit::Trapped(t) => self.trap(t),
            }
        }
    }

    fn critical_deadline(&self, d: u64) -> u64 {
        d.saturating_add(self.core.cfg.critical_wait_limit_ns)
    }

    fn end_run(&mut self, code: i32) {
        if self.core.critical_depth > 0 && code != CANCELLED {
            self.trap(Trap::UnbalancedCritical);
            return;
        }
        let c = &mut self.core;
        c.close_critical();
        c.state = EngineState::Finished;
        c.last_return_code = code;
        c.run_end_ns = Some(c.fabric.now());
        c.heap.discard_open();
        if code != 0 && code != CANCELLED {
            c.errors.push(format!("task returned {code}"));
        }
        log::debug!("task ended with {code} at {} ns", c.fabric.now());
    }

    fn trap(&mut self, t: Trap) {
        let c = &mut self.core;
        c.close_critical();
        c.state = EngineState::Error;
        c.last_return_code = TRAPPED;
        c.run_end_ns = Some(c.fabric.now());
        c.heap.discard_open();
        c.errors.push(format!("task trapped: {t}"));
        log::debug!("task trapped: {t}");
    }

    /// Serves one communication request. While a task runs, the request
    /// first waits for any open critical section, then pauses the task for
    /// the configured cost.
    pub fn interrupt(&mut self, kind: CommKind) {
        if self.core.state != EngineState::Running {
            return;
        }
        if self.core.critical_depth > 0 {
            let limit = self
                .now()
                .saturating_add(self.core.cfg.critical_wait_limit_ns);
            self.drive(YieldMode::CriticalExit(limit));
            if self.core.state != EngineState::Running {
                return;
            }
        }
        let costs = self.core.cfg.interruption;
        let cost = match kind {
            CommKind::Status => costs.status_ns,
            CommKind::Errors => costs.errors_ns,
            CommKind::Boxes => costs.boxes_ns,
            CommKind::Other => costs.other_ns,
        };
        let start = self.now();
        self.core
            .fabric
            .clock_mut()
            .charge(CostKind::Interruption, cost);
        self.core.trace.record(Owner::Comm, start, self.now());
    }

    pub fn drain_errors(&mut self) -> Vec<String> {
        self.core.errors.drain()
    }

    pub fn dropped_errors(&self) -> u64 {
        self.core.errors.dropped()
    }

    pub fn finished_boxes(&self) -> Vec<DataBox> {
        self.core.heap.finished()
    }

    /// Marks a FINISHED box as delivered and frees it.
    pub fn mark_processed(&mut self, id: u32) -> Result<DataBox, EngineError> {
        Ok(self.core.heap.mark_fetched(id)?)
    }

    pub fn heap(&self) -> &BoxHeap {
        &self.core.heap
    }

    /// Shared-memory read of the box arena.
    pub fn read_arena(&self, offset: u64, len: u64) -> Result<Vec<u8>, EngineError> {
        Ok(self.core.heap.read_arena(offset, len)?.to_vec())
    }

    /// Shared-memory write into the parameter region.
    pub fn write_params(&mut self, offset: u64, data: &[u8]) -> Result<(), EngineError> {
        Ok(self.core.params.write(offset, data)?)
    }

    pub fn set_param_size(&mut self, size: u64) -> Result<(), EngineError> {
        if self.core.state == EngineState::Running {
            return Err(EngineError::TaskRunning);
        }
        Ok(self.core.params.set_valid_size(size)?)
    }

    /// Writes `words` at offset 0 and sets the valid size.
    pub fn set_params(&mut self, words: &[u32]) -> Result<(), EngineError> {
        let bytes = params::encode_words(words);
        self.write_params(0, &bytes)?;
        self.set_param_size(bytes.len() as u64)
    }

    pub fn params(&self) -> &ParamRegion {
        &self.core.params
    }

    /// `rtos_printf` output, one entry per call.
    pub fn console(&self) -> impl Iterator<Item = &str> {
        self.core.console.iter().map(String::as_str)
    }

    pub fn ownership_trace(&self) -> &[OwnershipInterval] {
        &self.core.trace.intervals
    }

    pub fn ownership_trace_truncated(&self) -> bool {
        self.core.trace.truncated
    }

    /// Start and (if ended) end of the latest run, in virtual ns.
    pub fn run_window(&self) -> (u64, Option<u64>) {
        (self.core.run_start_ns, self.core.run_end_ns)
    }

    pub fn critical_depth(&self) -> u32 {
        self.core.critical_depth
    }
}

impl Core {
    fn close_critical(&mut self) {
        if self.critical_depth > 0 {
            let now = self.fabric.now();
            self.trace.record(Owner::Critical, self.critical_since, now);
            self.critical_depth = 0;
        }
    }
}
