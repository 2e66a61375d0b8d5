//! Sequencer instruction set and program representation.
//!
//! Instructions are stored as 32-bit words in sequencer memory:
//!
//! | bits 31..28 | meaning         | operand bits                                  |
//! |-------------|-----------------|-----------------------------------------------|
//! | `0`         | END             | -                                             |
//! | `1`         | WAIT            | 27..0: duration in 4 ns quanta                |
//! | `2`         | PULSE_MANIP     | 27..0: signed rotation in milliradians        |
//! | `3`         | PULSE_READOUT   | 3..0: channel                                 |
//! | `4`         | BRANCH_IF_STATE | 27..24 channel, 23..20 state, 15..0 target pc |
//! | `5`         | JUMP            | 15..0: target pc                              |
//!
//! Only WAIT consumes sequencer time; every other instruction issues at the
//! instant it is reached. BRANCH_IF_STATE stalls until the referenced
//! channel holds a completed result.

use std::fmt;
use std::str::FromStr;

use crate::error::FabricError;

/// Sequencer time granularity.
pub const TICK_NS: u32 = 4;

const OPERAND_MASK: u32 = 0x0FFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqInstr {
    Wait { duration_ns: u32 },
    PulseManip { theta_mrad: i32 },
    PulseReadout { channel: u8 },
    BranchIfState { channel: u8, state: u8, target: u16 },
    Jump { target: u16 },
    End,
}

impl SeqInstr {
    pub fn encode(&self) -> u32 {
        match *self {
            SeqInstr::End => 0,
            SeqInstr::Wait { duration_ns } => (1 << 28) | ((duration_ns / TICK_NS) & OPERAND_MASK),
            SeqInstr::PulseManip { theta_mrad } => (2 << 28) | (theta_mrad as u32 & OPERAND_MASK),
            SeqInstr::PulseReadout { channel } => (3 << 28) | u32::from(channel & 0xF),
            SeqInstr::BranchIfState {
                channel,
                state,
                target,
            } => {
                (4 << 28)
                    | (u32::from(channel & 0xF) << 24)
                    | (u32::from(state & 0xF) << 20)
                    | u32::from(target)
            }
            SeqInstr::Jump { target } => (5 << 28) | u32::from(target),
        }
    }

    pub fn decode(word: u32) -> Result<Self, FabricError> {
        let operand = word & OPERAND_MASK;
        Ok(match word >> 28 {
            0 => SeqInstr::End,
            1 => SeqInstr::Wait {
                duration_ns: operand * TICK_NS,
            },
            2 => {
                // sign-extend the 28-bit field
                let theta = ((operand << 4) as i32) >> 4;
                SeqInstr::PulseManip { theta_mrad: theta }
            }
            3 => SeqInstr::PulseReadout {
                channel: (operand & 0xF) as u8,
            },
            4 => SeqInstr::BranchIfState {
                channel: ((operand >> 24) & 0xF) as u8,
                state: ((operand >> 20) & 0xF) as u8,
                target: (operand & 0xFFFF) as u16,
            },
            5 => SeqInstr::Jump {
                target: (operand & 0xFFFF) as u16,
            },
            op => {
                return Err(FabricError::InvalidProgram(format!(
                    "unknown sequencer opcode {op} in word {word:#010x}"
                )))
            }
        })
    }
}

impl fmt::Display for SeqInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SeqInstr::Wait { duration_ns } => write!(f, "WAIT {duration_ns}"),
            SeqInstr::PulseManip { theta_mrad } => write!(f, "PULSE_MANIP {theta_mrad}"),
            SeqInstr::PulseReadout { channel } => write!(f, "PULSE_READOUT {channel}"),
            SeqInstr::BranchIfState {
                channel,
                state,
                target,
            } => write!(f, "BRANCH_IF_STATE {channel} {state} {target}"),
            SeqInstr::Jump { target } => write!(f, "JUMP {target}"),
            SeqInstr::End => f.write_str("END"),
        }
    }
}

impl FromStr for SeqInstr {
    type Err = FabricError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let code = line.split(';').next().unwrap_or("").trim();
        let mut parts = code.split_whitespace();
        let mnemonic = parts
            .next()
            .ok_or_else(|| FabricError::InvalidProgram("empty instruction".into()))?;
        let args: Vec<&str> = parts.collect();
        let bad = || FabricError::InvalidProgram(format!("malformed instruction `{code}`"));
        let num = |s: &str| -> Result<i64, FabricError> { s.parse::<i64>().map_err(|_| bad()) };
        let expect = |n: usize| if args.len() == n { Ok(()) } else { Err(bad()) };

        let instr = match mnemonic.to_ascii_uppercase().as_str() {
            "END" => {
                expect(0)?;
                SeqInstr::End
            }
            "WAIT" => {
                expect(1)?;
                let d = num(args[0])?;
                if d < 0 || d % i64::from(TICK_NS) != 0 || d / 4 > i64::from(OPERAND_MASK) {
                    return Err(FabricError::InvalidProgram(format!(
                        "WAIT duration {d} ns is not a representable multiple of {TICK_NS} ns"
                    )));
                }
                SeqInstr::Wait {
                    duration_ns: d as u32,
                }
            }
            "PULSE_MANIP" => {
                expect(1)?;
                let t = num(args[0])?;
                if !(-(1 << 27)..(1 << 27)).contains(&t) {
                    return Err(bad());
                }
                SeqInstr::PulseManip {
                    theta_mrad: t as i32,
                }
            }
            "PULSE_READOUT" => {
                expect(1)?;
                let ch = num(args[0])?;
                if !(0..16).contains(&ch) {
                    return Err(bad());
                }
                SeqInstr::PulseReadout { channel: ch as u8 }
            }
            "BRANCH_IF_STATE" => {
                expect(3)?;
                let (ch, st, tg) = (num(args[0])?, num(args[1])?, num(args[2])?);
                if !(0..16).contains(&ch) || !(0..4).contains(&st) || !(0..=0xFFFF).contains(&tg) {
                    return Err(bad());
                }
                SeqInstr::BranchIfState {
                    channel: ch as u8,
                    state: st as u8,
                    target: tg as u16,
                }
            }
            "JUMP" => {
                expect(1)?;
                let tg = num(args[0])?;
                if !(0..=0xFFFF).contains(&tg) {
                    return Err(bad());
                }
                SeqInstr::Jump { target: tg as u16 }
            }
            _ => return Err(bad()),
        };
        Ok(instr)
    }
}

/// A list of sequencer instructions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequencerProgram {
    instrs: Vec<SeqInstr>,
}

impl SequencerProgram {
    pub fn new(instrs: Vec<SeqInstr>) -> Self {
        Self { instrs }
    }

    /// Parses one instruction per line; blank lines and `;` comments are
    /// skipped.
    pub fn parse_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self, FabricError> {
        let instrs = lines
            .iter()
            .map(|l| l.as_ref().split(';').next().unwrap_or("").trim().to_owned())
            .filter(|l| !l.is_empty())
            .map(|l| l.parse())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { instrs })
    }

    pub fn from_words(words: &[u32]) -> Result<Self, FabricError> {
        let instrs = words
            .iter()
            .map(|&w| SeqInstr::decode(w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { instrs })
    }

    pub fn to_words(&self) -> Vec<u32> {
        self.instrs.iter().map(SeqInstr::encode).collect()
    }

    pub fn instructions(&self) -> &[SeqInstr] {
        &self.instrs
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn get(&self, pc: u32) -> Option<SeqInstr> {
        self.instrs.get(pc as usize).copied()
    }

    /// Checks durations and branch targets.
    pub fn validate(&self) -> Result<(), FabricError> {
        let len = self.instrs.len();
        for (pc, instr) in self.instrs.iter().enumerate() {
            match *instr {
                SeqInstr::Wait { duration_ns } if duration_ns % TICK_NS != 0 => {
                    return Err(FabricError::InvalidProgram(format!(
                        "pc {pc}: WAIT {duration_ns} is not a multiple of {TICK_NS} ns"
                    )));
                }
                SeqInstr::BranchIfState { target, .. } | SeqInstr::Jump { target }
                    if usize::from(target) >= len =>
                {
                    return Err(FabricError::InvalidProgram(format!(
                        "pc {pc}: target {target} outside program of length {len}"
                    )));
                }
                SeqInstr::BranchIfState { state, .. } if state > 3 => {
                    return Err(FabricError::InvalidProgram(format!(
                        "pc {pc}: state {state} out of range"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
