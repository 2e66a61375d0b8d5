//! Task engine, bytecode VM, task compiler and IPC protocol.

pub mod compiler;
pub mod engine;
pub mod g2;
pub mod ipc;
pub mod tasks;
pub mod vm;
