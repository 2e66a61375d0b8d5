//! Stack-based bytecode virtual machine.
//!
//! The VM has a 32-bit integer stack and a 64-bit float stack. Pointers are
//! two integer slots, `(handle, offset)`, resolved against the task memory
//! spaces (see [`handle`]). Everything outside the VM (parameters, data
//! boxes, the fabric, timers) is reached through the [`Host`] trait.

pub mod bytecode;
pub mod hostcalls;
mod interp;
pub mod printf;
pub mod validator;

use thiserror::Error;

pub use bytecode::{Bytecode, Function, Instr};
pub use interp::{Program, Vm};
pub use validator::{validate, ValidationReport, Violation};

pub const MAX_INT_STACK: usize = 1024;
pub const MAX_FLOAT_STACK: usize = 256;
pub const MAX_CALL_DEPTH: usize = 256;

/// Memory-space handles. A box handle is `BOX_FLAG | box_id`.
pub mod handle {
    pub const NULL: u32 = 0;
    pub const PARAMS: u32 = 1;
    pub const LOCALS: u32 = 2;
    pub const CONST: u32 = 3;
    pub const BOX_FLAG: u32 = 0x8000_0000;

    pub fn is_box(h: u32) -> bool {
        h & BOX_FLAG != 0
    }

    pub fn box_id(h: u32) -> u32 {
        h & !BOX_FLAG
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Trap {
    #[error("out-of-bounds access: {0}")]
    OutOfBounds(String),
    #[error("bad opcode: {0}")]
    BadOpcode(String),
    #[error("stack overflow")]
    StackOverflow,
    #[error("unbalanced critical section")]
    UnbalancedCritical,
    #[error("integer division by zero")]
    DivideByZero,
    #[error("unknown host call {0}")]
    BadHostCall(u8),
    #[error("host call failed: {0}")]
    HostFault(String),
    #[error("cancelled")]
    Cancelled,
}

/// Value returned by a host call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostValue {
    Unit,
    Int(u32),
    Ptr(u32, u32),
}

/// Memory the executor owns (LOCALS and CONST), lent to host calls that
/// take pointer arguments.
pub trait TaskMemory {
    fn read(&self, handle: u32, offset: u32, buf: &mut [u8]) -> Result<(), Trap>;
    fn write(&mut self, handle: u32, offset: u32, data: &[u8]) -> Result<(), Trap>;
}

/// The engine side of task execution.
pub trait Host {
    fn host_call(
        &mut self,
        id: u8,
        ints: &[u32],
        floats: &[f64],
        mem: &mut dyn TaskMemory,
    ) -> Result<HostValue, Trap>;

    /// Loads from a host-owned space (PARAMS or a box).
    fn load(&mut self, handle: u32, offset: u32, buf: &mut [u8]) -> Result<(), Trap>;

    /// Stores into a host-owned space.
    fn store(&mut self, handle: u32, offset: u32, data: &[u8]) -> Result<(), Trap>;

    /// Accounts executed instruction cycles on the virtual clock.
    fn charge_cycles(&mut self, cycles: u64);

    /// Polled at scheduling points; `true` pauses execution.
    fn should_yield(&mut self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exit {
    Returned(i32),
    Yielded,
    Trapped(Trap),
}

/// Something that can run a task against a [`Host`]. The VM is the
/// production executor; tests plug in others.
pub trait Executor: Send {
    fn run(&mut self, host: &mut dyn Host) -> Exit;
}

/// Per-instruction cycle table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleCosts {
    pub cycle_ns: u64,
    pub op_cycles: u64,
    pub taken_branch_cycles: u64,
}

impl Default for CycleCosts {
    fn default() -> Self {
        Self {
            cycle_ns: 2,
            op_cycles: 1,
            taken_branch_cycles: 2,
        }
    }
}
