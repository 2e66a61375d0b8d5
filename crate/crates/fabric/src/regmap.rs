//! Register map of the simulated fabric (version 1).
//!
//! All registers are 32 bits wide and word aligned. Recording channel `n`
//! occupies the block starting at `REC_BASE + n * REC_STRIDE`.

use std::fmt::Write as _;

pub const REGMAP_VERSION: u32 = 1;
pub const FABRIC_ID_VALUE: u32 = 0x5154_4B31; // "QTK1"

pub const FABRIC_ID: u32 = 0x0000;
pub const REGMAP_VER: u32 = 0x0004;
pub const NOW_LO: u32 = 0x0008;
pub const NOW_HI: u32 = 0x000C;

pub const SEQ_START: u32 = 0x1000;
pub const SEQ_BUSY: u32 = 0x1004;
pub const SEQ_PC: u32 = 0x1008;
pub const SEQ_RELAX_DELAY: u32 = 0x100C;
pub const SEQ_LAST_END_LO: u32 = 0x1010;
pub const SEQ_LAST_END_HI: u32 = 0x1014;
pub const SEQ_RELAXED: u32 = 0x1018;
pub const SEQ_PROG_ADDR: u32 = 0x101C;
pub const SEQ_PROG_DATA: u32 = 0x1020;
pub const SEQ_PROG_LEN: u32 = 0x1024;
pub const SEQ_FAULT: u32 = 0x1028;

pub const PG_MANIP_SCALE: u32 = 0x2000;
pub const PG_MANIP_COUNT: u32 = 0x2004;
pub const PG_READOUT_COUNT: u32 = 0x2008;

pub const REC_BASE: u32 = 0x3000;
pub const REC_STRIDE: u32 = 0x100;
pub const REC_BUSY: u32 = 0x00;
pub const REC_I: u32 = 0x04;
pub const REC_Q: u32 = 0x08;
pub const REC_STATE: u32 = 0x0C;
pub const REC_VALID: u32 = 0x10;
pub const REC_TRACE_INDEX: u32 = 0x14;
pub const REC_TRACE_DATA: u32 = 0x18;
pub const REC_TRACE_LEN: u32 = 0x1C;
pub const REC_DURATION: u32 = 0x20;

/// Sequencer fault bits (`SEQ_FAULT`).
pub const FAULT_BAD_CHANNEL: u32 = 1 << 0;
pub const FAULT_NO_RESULT: u32 = 1 << 1;
pub const FAULT_RUNAWAY: u32 = 1 << 2;
pub const FAULT_FELL_OFF_END: u32 = 1 << 3;

/// Address of a register inside a recording channel block.
pub const fn rec_reg(channel: u32, offset: u32) -> u32 {
    REC_BASE + channel * REC_STRIDE + offset
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    ReadOnly,
    ReadWrite,
}

impl Access {
    pub fn as_str(&self) -> &'static str {
        match self {
            Access::ReadOnly => "RO",
            Access::ReadWrite => "RW",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterInfo {
    pub address: u32,
    pub name: String,
    pub access: Access,
    pub reset: u32,
    pub description: &'static str,
}

/// Decoded register location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Reg {
    FabricId,
    RegmapVersion,
    NowLo,
    NowHi,
    SeqStart,
    SeqBusy,
    SeqPc,
    SeqRelaxDelay,
    SeqLastEndLo,
    SeqLastEndHi,
    SeqRelaxed,
    SeqProgAddr,
    SeqProgData,
    SeqProgLen,
    SeqFault,
    ManipScale,
    ManipCount,
    ReadoutCount,
    Rec(u32, RecReg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RecReg {
    Busy,
    I,
    Q,
    State,
    Valid,
    TraceIndex,
    TraceData,
    TraceLen,
    Duration,
}

pub(crate) fn decode(addr: u32, channels: u32) -> Option<Reg> {
    if !addr.is_multiple_of(4) {
        return None;
    }
    Some(match addr {
        FABRIC_ID => Reg::FabricId,
        REGMAP_VER => Reg::RegmapVersion,
        NOW_LO => Reg::NowLo,
        NOW_HI => Reg::NowHi,
        SEQ_START => Reg::SeqStart,
        SEQ_BUSY => Reg::SeqBusy,
        SEQ_PC => Reg::SeqPc,
        SEQ_RELAX_DELAY => Reg::SeqRelaxDelay,
        SEQ_LAST_END_LO => Reg::SeqLastEndLo,
        SEQ_LAST_END_HI => Reg::SeqLastEndHi,
        SEQ_RELAXED => Reg::SeqRelaxed,
        SEQ_PROG_ADDR => Reg::SeqProgAddr,
        SEQ_PROG_DATA => Reg::SeqProgData,
        SEQ_PROG_LEN => Reg::SeqProgLen,
        SEQ_FAULT => Reg::SeqFault,
        PG_MANIP_SCALE => Reg::ManipScale,
        PG_MANIP_COUNT => Reg::ManipCount,
        PG_READOUT_COUNT => Reg::ReadoutCount,
        a if a >= REC_BASE && a < REC_BASE + channels * REC_STRIDE => {
            let ch = (a - REC_BASE) / REC_STRIDE;
            let reg = match (a - REC_BASE) % REC_STRIDE {
                REC_BUSY => RecReg::Busy,
                REC_I => RecReg::I,
                REC_Q => RecReg::Q,
                REC_STATE => RecReg::State,
                REC_VALID => RecReg::Valid,
                REC_TRACE_INDEX => RecReg::TraceIndex,
                REC_TRACE_DATA => RecReg::TraceData,
                REC_TRACE_LEN => RecReg::TraceLen,
                REC_DURATION => RecReg::Duration,
                _ => return None,
            };
            Reg::Rec(ch, reg)
        }
        _ => return None,
    })
}

impl Reg {
    pub(crate) fn writable(&self) -> bool {
        matches!(
            self,
            Reg::SeqStart
                | Reg::SeqRelaxDelay
                | Reg::SeqProgAddr
                | Reg::SeqProgData
                | Reg::SeqProgLen
                | Reg::ManipScale
                | Reg::Rec(_, RecReg::TraceIndex | RecReg::TraceLen | RecReg::Duration)
        )
    }
}

/// Every register with its reset value, for documentation and tooling.
pub fn describe(
    channels: u32,
    relax_delay_reset: u32,
    rec_duration_reset: u32,
) -> Vec<RegisterInfo> {
    use Access::*;
    let mut regs = vec![
        (
            FABRIC_ID,
            "FABRIC_ID",
            ReadOnly,
            FABRIC_ID_VALUE,
            "constant 0x51544B31 (\"QTK1\")",
        ),
        (
            REGMAP_VER,
            "REGMAP_VERSION",
            ReadOnly,
            REGMAP_VERSION,
            "register map layout version",
        ),
        (NOW_LO, "NOW_LO", ReadOnly, 0, "virtual time, low word (ns)"),
        (
            NOW_HI,
            "NOW_HI",
            ReadOnly,
            0,
            "virtual time, high word (ns)",
        ),
        (
            SEQ_START,
            "SEQ_START",
            ReadWrite,
            0,
            "write pc to start the sequencer there; reads last start pc",
        ),
        (
            SEQ_BUSY,
            "SEQ_BUSY",
            ReadOnly,
            0,
            "1 while the sequencer executes",
        ),
        (
            SEQ_PC,
            "SEQ_PC",
            ReadOnly,
            0,
            "current (or last) program counter",
        ),
        (
            SEQ_RELAX_DELAY,
            "SEQ_RELAX_DELAY",
            ReadWrite,
            relax_delay_reset,
            "qubit relaxation delay (ns)",
        ),
        (
            SEQ_LAST_END_LO,
            "SEQ_LAST_END_LO",
            ReadOnly,
            0,
            "end time of the last sequence, low word",
        ),
        (
            SEQ_LAST_END_HI,
            "SEQ_LAST_END_HI",
            ReadOnly,
            0,
            "end time of the last sequence, high word",
        ),
        (
            SEQ_RELAXED,
            "SEQ_RELAXED",
            ReadOnly,
            1,
            "1 once last end + delay has passed",
        ),
        (
            SEQ_PROG_ADDR,
            "SEQ_PROG_ADDR",
            ReadWrite,
            0,
            "program memory write pointer",
        ),
        (
            SEQ_PROG_DATA,
            "SEQ_PROG_DATA",
            ReadWrite,
            0,
            "program word at SEQ_PROG_ADDR; writes auto-increment",
        ),
        (
            SEQ_PROG_LEN,
            "SEQ_PROG_LEN",
            ReadWrite,
            0,
            "number of valid program words",
        ),
        (
            SEQ_FAULT,
            "SEQ_FAULT",
            ReadOnly,
            0,
            "fault bits of the last sequence; cleared on start",
        ),
        (
            PG_MANIP_SCALE,
            "PG_MANIP_SCALE",
            ReadWrite,
            1000,
            "manipulation amplitude scale, signed permille",
        ),
        (
            PG_MANIP_COUNT,
            "PG_MANIP_COUNT",
            ReadOnly,
            0,
            "manipulation pulses issued",
        ),
        (
            PG_READOUT_COUNT,
            "PG_READOUT_COUNT",
            ReadOnly,
            0,
            "readout pulses issued",
        ),
    ];
    let mut out: Vec<RegisterInfo> = regs
        .drain(..)
        .map(|(address, name, access, reset, description)| RegisterInfo {
            address,
            name: name.to_owned(),
            access,
            reset,
            description,
        })
        .collect();
    for ch in 0..channels {
        let block = [
            (
                REC_BUSY,
                "BUSY",
                ReadOnly,
                0,
                "1 while a recording is in flight",
            ),
            (
                REC_I,
                "I",
                ReadOnly,
                0,
                "in-phase result (two's complement)",
            ),
            (
                REC_Q,
                "Q",
                ReadOnly,
                0,
                "quadrature result (two's complement)",
            ),
            (
                REC_STATE,
                "STATE",
                ReadOnly,
                0,
                "nearest-cluster state assignment",
            ),
            (
                REC_VALID,
                "VALID",
                ReadOnly,
                0,
                "1 once the result is complete; cleared on sequencer start",
            ),
            (
                REC_TRACE_INDEX,
                "TRACE_INDEX",
                ReadWrite,
                0,
                "trace read pointer",
            ),
            (
                REC_TRACE_DATA,
                "TRACE_DATA",
                ReadOnly,
                0,
                "packed sample (I: bits 15..0, Q: bits 31..16); auto-increments",
            ),
            (
                REC_TRACE_LEN,
                "TRACE_LEN",
                ReadWrite,
                0,
                "samples captured per readout; 0 disables trace capture",
            ),
            (
                REC_DURATION,
                "DURATION",
                ReadWrite,
                rec_duration_reset,
                "trigger-to-result latency (ns)",
            ),
        ];
        out.extend(
            block
                .into_iter()
                .map(|(off, name, access, reset, description)| RegisterInfo {
                    address: rec_reg(ch, off),
                    name: format!("REC{ch}_{name}"),
                    access,
                    reset,
                    description,
                }),
        );
    }
    out
}

/// Text table of the register map.
pub fn render_table(regs: &[RegisterInfo]) -> String {
    let mut s = format!("# qtask fabric register map v{REGMAP_VERSION}\n");
    let _ = writeln!(
        s,
        "{:<10} {:<22} {:<6} {:<10} description",
        "address", "name", "access", "reset"
    );
    for r in regs {
        let _ = writeln!(
            s,
            "{:#010x} {:<22} {:<6} {:#010x} {}",
            r.address,
            r.name,
            r.access.as_str(),
            r.reset,
            r.description
        );
    }
    s
}
