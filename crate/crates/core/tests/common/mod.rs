//! Test support: a recording host and a tree-walking reference interpreter.
#![allow(dead_code)]

pub mod refinterp;
pub mod tracehost;

use std::sync::Arc;

use qtask_core::compiler::{compile, parse, sema, CompileOptions};
use qtask_core::vm::{CycleCosts, Executor, Exit, Program, Trap, Vm};

pub use refinterp::RefInterp;
pub use tracehost::{Event, TraceHost};

pub const LOCALS: usize = 1 << 16;

/// Everything a run exposes to the outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit: String,
    pub events: Vec<Event>,
    pub boxes: Vec<(u32, &'static str, Vec<u8>)>,
}

pub fn trap_kind(t: &Trap) -> &'static str {
    match t {
        Trap::OutOfBounds(_) => "out-of-bounds",
        Trap::BadOpcode(_) => "bad-opcode",
        Trap::StackOverflow => "stack-overflow",
        Trap::UnbalancedCritical => "unbalanced-critical",
        Trap::DivideByZero => "divide-by-zero",
        Trap::BadHostCall(_) => "bad-host-call",
        Trap::HostFault(_) => "host-fault",
        Trap::Cancelled => "cancelled",
    }
}

fn finish(exit: Exit, host: TraceHost) -> Outcome {
    let exit = match exit {
        Exit::Returned(c) => format!("returned {c}"),
        Exit::Trapped(t) => format!("trapped {}", trap_kind(&t)),
        Exit::Yielded => "yielded".into(),
    };
    let boxes = host.box_dump();
    Outcome {
        exit,
        events: host.events,
        boxes,
    }
}

pub fn run_vm(src: &str, optimize: bool, params: &[u32]) -> Outcome {
    let c = compile(src, CompileOptions { optimize }).unwrap_or_else(|d| panic!("{d:?}"));
    let p = Arc::new(Program::new(&c.bytecode).expect("valid bytecode"));
    let mut vm = Vm::new(p, CycleCosts::default(), LOCALS);
    let mut host = TraceHost::new(params);
    let exit = vm.run(&mut host);
    finish(exit, host)
}

pub fn run_reference(src: &str, params: &[u32]) -> Outcome {
    let unit = parse(src).unwrap_or_else(|d| panic!("{d:?}"));
    let mut diags = Vec::new();
    let program = sema::analyze(&unit, &mut diags).unwrap_or_else(|| panic!("{diags:?}"));
    let mut interp = RefInterp::new(Arc::new(program), LOCALS);
    let mut host = TraceHost::new(params);
    let exit = interp.run(&mut host);
    finish(exit, host)
}
