use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("unmapped register address {0:#010x}")]
    UnmappedAddress(u32),
    #[error("register {0:#010x} is read-only")]
    ReadOnlyRegister(u32),
    #[error("sequencer is busy")]
    SequencerBusy,
    #[error("program counter {pc} outside program of length {len}")]
    InvalidPc { pc: u32, len: u32 },
    #[error("invalid sequencer program: {0}")]
    InvalidProgram(String),
    #[error("recording channel {0} does not exist")]
    InvalidChannel(u32),
    #[error("configuration error: {0}")]
    Config(String),
}
