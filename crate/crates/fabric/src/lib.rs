//! Deterministic discrete-event model of a qubit-control FPGA fabric.
//!
//! The [`Fabric`] owns the shared [`VirtualClock`], a register bus with
//! per-access costs, the sequencer, the pulse generators, the recording
//! module and a stochastic four-level qubit. Nothing moves unless the clock
//! is advanced; sequencer events are processed lazily, in timestamp order,
//! whenever the fabric is observed.

pub mod clock;
pub mod config;
mod error;
pub mod qubit;
mod recording;
pub mod regmap;
pub mod sequencer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use clock::{CostKind, LedgerEntry, TraceEvent, VirtualClock};
pub use config::FabricConfig;
pub use error::FabricError;
pub use qubit::{Measurement, QubitModel};
pub use recording::{pack_sample, unpack_sample, RecordingResult};
pub use sequencer::{SeqInstr, SequencerProgram, TICK_NS};

use recording::{Channel, Pending, SignalSource};
use regmap::{RecReg, Reg};

/// Consecutive zero-time sequencer instructions tolerated before the
/// sequencer is stopped with [`regmap::FAULT_RUNAWAY`].
const RUNAWAY_LIMIT: u32 = 1 << 16;

#[derive(Debug, Clone, Copy)]
struct SeqRun {
    pc: u32,
    next_ns: u64,
    zero_time_steps: u32,
}

#[derive(Debug, Clone)]
struct SequencerState {
    memory: Vec<u32>,
    len: u32,
    prog_addr: u32,
    run: Option<SeqRun>,
    last_pc: u32,
    last_start_pc: u32,
    last_end_ns: Option<u64>,
    relax_delay_ns: u32,
    fault: u32,
}

/// The simulated fabric.
#[derive(Debug, Clone)]
pub struct Fabric {
    config: FabricConfig,
    clock: VirtualClock,
    qubit: QubitModel,
    signal: SignalSource,
    seq: SequencerState,
    manip_scale: i32,
    manip_count: u32,
    readout_count: u32,
    channels: Vec<Channel>,
}

impl Fabric {
    pub fn new(config: FabricConfig) -> Result<Self, FabricError> {
        config.validate()?;
        let program = config.boot_program()?;
        let mut memory = vec![0u32; config.sequencer.max_program_len as usize];
        for (slot, word) in memory.iter_mut().zip(program.to_words()) {
            *slot = word;
        }

        let qubit_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut signal_rng = ChaCha8Rng::seed_from_u64(config.seed);
        signal_rng.set_stream(1);

        let duration = u32::try_from(config.recording.duration_ns).unwrap_or(u32::MAX);
        Ok(Self {
            qubit: QubitModel::new(config.qubit.clone(), qubit_rng),
            signal: SignalSource::new(
                config.signal.clone(),
                config.recording.trace_sample_period_ns,
                signal_rng,
            ),
            seq: SequencerState {
                memory,
                len: program.len() as u32,
                prog_addr: 0,
                run: None,
                last_pc: 0,
                last_start_pc: 0,
                last_end_ns: None,
                relax_delay_ns: config.sequencer.relaxation_delay_ns,
                fault: 0,
            },
            manip_scale: 1000,
            manip_count: 0,
            readout_count: 0,
            channels: (0..config.recording.channels)
                .map(|_| Channel::new(duration))
                .collect(),
            clock: VirtualClock::new(),
            config,
        })
    }

    pub fn config(&self) -> &FabricConfig {
        &self.config
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut VirtualClock {
        &mut self.clock
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn qubit(&self) -> &QubitModel {
        &self.qubit
    }

    pub fn qubit_mut(&mut self) -> &mut QubitModel {
        &mut self.qubit
    }

    pub fn register_map(&self) -> Vec<regmap::RegisterInfo> {
        regmap::describe(
            self.config.recording.channels,
            self.config.sequencer.relaxation_delay_ns,
            self.channels.first().map_or(0, |c| c.duration_ns),
        )
    }

    // ------------------------------------------------------------------
    // Bus
    // ------------------------------------------------------------------

    /// Register read through the bus; costs `read_cost_ns`.
    pub fn bus_read(&mut self, addr: u32) -> Result<u32, FabricError> {
        let reg = self.decode(addr)?;
        self.clock
            .charge(CostKind::BusRead, self.config.bus.read_cost_ns);
        self.sync();
        Ok(self.read_reg(reg))
    }

    /// Register write through the bus; costs `write_cost_ns`. Side-effect
    /// errors (e.g. starting a busy sequencer) are reported after the access
    /// has been charged.
    pub fn bus_write(&mut self, addr: u32, value: u32) -> Result<(), FabricError> {
        let reg = self.decode(addr)?;
        if !reg.writable() {
            return Err(FabricError::ReadOnlyRegister(addr));
        }
        self.clock
            .charge(CostKind::BusWrite, self.config.bus.write_cost_ns);
        self.sync();
        self.write_reg(reg, value)
    }

    /// Uncharged register read, as seen by a bus master that does not share
    /// the engine's time budget.
    pub fn peek(&mut self, addr: u32) -> Result<u32, FabricError> {
        let reg = self.decode(addr)?;
        self.sync();
        Ok(self.read_reg(reg))
    }

    /// Uncharged register write.
    pub fn poke(&mut self, addr: u32, value: u32) -> Result<(), FabricError> {
        let reg = self.decode(addr)?;
        if !reg.writable() {
            return Err(FabricError::ReadOnlyRegister(addr));
        }
        self.sync();
        self.write_reg(reg, value)
    }

    fn decode(&self, addr: u32) -> Result<Reg, FabricError> {
        regmap::decode(addr, self.channels.len() as u32).ok_or(FabricError::UnmappedAddress(addr))
    }

    fn read_reg(&mut self, reg: Reg) -> u32 {
        let now = self.clock.now();
        match reg {
            Reg::FabricId => regmap::FABRIC_ID_VALUE,
            Reg::RegmapVersion => regmap::REGMAP_VERSION,
            Reg::NowLo => now as u32,
            Reg::NowHi => (now >> 32) as u32,
            Reg::SeqStart => self.seq.last_start_pc,
            Reg::SeqBusy => u32::from(self.seq.run.is_some()),
            Reg::SeqPc => self.seq.run.map_or(self.seq.last_pc, |r| r.pc),
            Reg::SeqRelaxDelay => self.seq.relax_delay_ns,
            Reg::SeqLastEndLo => self.seq.last_end_ns.unwrap_or(0) as u32,
            Reg::SeqLastEndHi => (self.seq.last_end_ns.unwrap_or(0) >> 32) as u32,
            Reg::SeqRelaxed => u32::from(now >= self.relaxation_deadline()),
            Reg::SeqProgAddr => self.seq.prog_addr,
            Reg::SeqProgData => self
                .seq
                .memory
                .get(self.seq.prog_addr as usize)
                .copied()
                .unwrap_or(0),
            Reg::SeqProgLen => self.seq.len,
            Reg::SeqFault => self.seq.fault,
            Reg::ManipScale => self.manip_scale as u32,
            Reg::ManipCount => self.manip_count,
            Reg::ReadoutCount => self.readout_count,
            Reg::Rec(ch, r) => {
                let channel = &mut self.channels[ch as usize];
                match r {
                    RecReg::Busy => u32::from(channel.busy(now)),
                    RecReg::I => channel.completed(now).map_or(0, |p| p.measurement.i as u32),
                    RecReg::Q => channel.completed(now).map_or(0, |p| p.measurement.q as u32),
                    RecReg::State => channel
                        .completed(now)
                        .map_or(0, |p| u32::from(p.measurement.detected_state)),
                    RecReg::Valid => u32::from(channel.completed(now).is_some()),
                    RecReg::TraceIndex => channel.trace_index,
                    RecReg::TraceLen => channel.trace_len,
                    RecReg::Duration => channel.duration_ns,
                    RecReg::TraceData => {
                        let idx = channel.trace_index as usize;
                        let word = channel
                            .completed(now)
                            .and_then(|p| p.trace.get(idx).copied())
                            .unwrap_or(0);
                        channel.trace_index = channel.trace_index.wrapping_add(1);
                        word
                    }
                }
            }
        }
    }

    fn write_reg(&mut self, reg: Reg, value: u32) -> Result<(), FabricError> {
        match reg {
            Reg::SeqStart => self.sequencer_run(value),
            Reg::SeqRelaxDelay => {
                self.seq.relax_delay_ns = value;
                Ok(())
            }
            Reg::SeqProgAddr => {
                self.seq.prog_addr = value;
                Ok(())
            }
            Reg::SeqProgData => {
                if self.seq.run.is_some() {
                    return Err(FabricError::SequencerBusy);
                }
                let addr = self.seq.prog_addr as usize;
                let slot = self
                    .seq
                    .memory
                    .get_mut(addr)
                    .ok_or(FabricError::InvalidPc {
                        pc: addr as u32,
                        len: self.config.sequencer.max_program_len,
                    })?;
                *slot = value;
                self.seq.prog_addr += 1;
                self.seq.len = self.seq.len.max(self.seq.prog_addr);
                Ok(())
            }
            Reg::SeqProgLen => {
                if self.seq.run.is_some() {
                    return Err(FabricError::SequencerBusy);
                }
                if value > self.config.sequencer.max_program_len {
                    return Err(FabricError::InvalidProgram(format!(
                        "length {value} exceeds program memory"
                    )));
                }
                self.seq.len = value;
                Ok(())
            }
            Reg::ManipScale => {
                self.manip_scale = value as i32;
                Ok(())
            }
            Reg::Rec(ch, r) => {
                let max_trace = self.config.recording.max_trace_len;
                let channel = &mut self.channels[ch as usize];
                match r {
                    RecReg::TraceIndex => channel.trace_index = value,
                    RecReg::TraceLen => channel.trace_len = value.min(max_trace),
                    RecReg::Duration => channel.duration_ns = value,
                    _ => unreachable!("read-only registers are rejected before dispatch"),
                }
                Ok(())
            }
            _ => unreachable!("read-only registers are rejected before dispatch"),
        }
    }

    // ------------------------------------------------------------------
    // Sequencer
    // ------------------------------------------------------------------

    /// Replaces sequencer memory with `program`.
    pub fn load_program(&mut self, program: &SequencerProgram) -> Result<(), FabricError> {
        self.sync();
        if self.seq.run.is_some() {
            return Err(FabricError::SequencerBusy);
        }
        program.validate()?;
        let words = program.to_words();
        if words.len() > self.seq.memory.len() {
            return Err(FabricError::InvalidProgram(
                "program exceeds sequencer memory".into(),
            ));
        }
        self.seq.memory[..words.len()].copy_from_slice(&words);
        self.seq.len = words.len() as u32;
        Ok(())
    }

    /// The program currently held in sequencer memory.
    pub fn program(&self) -> Result<SequencerProgram, FabricError> {
        SequencerProgram::from_words(&self.seq.memory[..self.seq.len as usize])
    }

    /// Starts the sequencer at `start_pc` at the current virtual time.
    pub fn sequencer_run(&mut self, start_pc: u32) -> Result<(), FabricError> {
        self.sync();
        if self.seq.run.is_some() {
            return Err(FabricError::SequencerBusy);
        }
        if start_pc >= self.seq.len {
            return Err(FabricError::InvalidPc {
                pc: start_pc,
                len: self.seq.len,
            });
        }
        self.program()?.validate()?;

        for channel in &mut self.channels {
            channel.result = None;
        }
        self.seq.fault = 0;
        self.seq.last_start_pc = start_pc;
        self.seq.run = Some(SeqRun {
            pc: start_pc,
            next_ns: self.clock.now(),
            zero_time_steps: 0,
        });
        self.sync();
        Ok(())
    }

    pub fn sequencer_busy(&mut self) -> bool {
        self.sync();
        self.seq.run.is_some()
    }

    pub fn last_sequence_end(&self) -> Option<u64> {
        self.seq.last_end_ns
    }

    pub fn relaxation_delay(&self) -> u32 {
        self.seq.relax_delay_ns
    }

    fn relaxation_deadline(&self) -> u64 {
        self.seq
            .last_end_ns
            .map_or(0, |end| end + u64::from(self.seq.relax_delay_ns))
    }

    /// Waits until `last sequence end + relaxation delay`, then applies
    /// relaxation for the elapsed interval. Costs no bus time.
    pub fn wait_until_relaxed(&mut self) {
        self.sync();
        let deadline = self.relaxation_deadline();
        self.clock.advance_to(CostKind::Relaxation, deadline);
        self.sync();
        self.qubit.relax_until(self.clock.now());
    }

    /// Advances the clock until the sequencer and every recording channel
    /// are idle.
    pub fn run_until_idle(&mut self) {
        loop {
            self.sync();
            let now = self.clock.now();
            let next = self
                .seq
                .run
                .map(|r| r.next_ns)
                .into_iter()
                .chain(
                    self.channels
                        .iter()
                        .filter_map(|c| c.result.as_ref().map(|p| p.complete_ns)),
                )
                .filter(|&t| t > now)
                .min();
            match next {
                Some(t) => {
                    self.clock.advance_to(CostKind::Idle, t);
                }
                None if self.seq.run.is_some() => unreachable!("sync leaves no due events"),
                None => return,
            }
        }
    }

    pub fn recording_result(&mut self, channel: u32) -> Result<RecordingResult, FabricError> {
        self.sync();
        let now = self.clock.now();
        self.channels
            .get(channel as usize)
            .map(|c| c.snapshot(channel, now))
            .ok_or(FabricError::InvalidChannel(channel))
    }

    pub fn recording_busy(&mut self, channel: u32) -> Result<bool, FabricError> {
        self.sync();
        let now = self.clock.now();
        self.channels
            .get(channel as usize)
            .map(|c| c.busy(now))
            .ok_or(FabricError::InvalidChannel(channel))
    }

    /// Processes every sequencer event due at or before the current time.
    pub fn sync(&mut self) {
        let now = self.clock.now();
        while let Some(mut run) = self.seq.run {
            if run.next_ns > now {
                break;
            }
            let at = run.next_ns;
            let instr = if run.pc < self.seq.len {
                SeqInstr::decode(self.seq.memory[run.pc as usize]).ok()
            } else {
                None
            };
            let Some(instr) = instr else {
                self.seq.fault |= regmap::FAULT_FELL_OFF_END;
                self.finish_sequence(run.pc, at);
                break;
            };

            let before = run.next_ns;
            match instr {
                SeqInstr::Wait { duration_ns } => {
                    run.next_ns += u64::from(duration_ns);
                    run.pc += 1;
                }
                SeqInstr::PulseManip { theta_mrad } => {
                    let theta =
                        f64::from(theta_mrad) * f64::from(self.manip_scale) / 1000.0 / 1000.0;
                    self.qubit.pulse(theta, at);
                    self.manip_count = self.manip_count.wrapping_add(1);
                    run.pc += 1;
                }
                SeqInstr::PulseReadout { channel } => {
                    if usize::from(channel) >= self.channels.len() {
                        self.seq.fault |= regmap::FAULT_BAD_CHANNEL;
                        self.finish_sequence(run.pc, at);
                        break;
                    }
                    self.trigger_recording(u32::from(channel), at);
                    run.pc += 1;
                }
                SeqInstr::BranchIfState {
                    channel,
                    state,
                    target,
                } => {
                    let Some(result) = self
                        .channels
                        .get(usize::from(channel))
                        .and_then(|c| c.result.as_ref())
                    else {
                        self.seq.fault |= regmap::FAULT_NO_RESULT;
                        self.finish_sequence(run.pc, at);
                        break;
                    };
                    if result.complete_ns > at {
                        // stall until the result is available
                        run.next_ns = result.complete_ns;
                    } else if result.measurement.detected_state == state {
                        run.pc = u32::from(target);
                    } else {
                        run.pc += 1;
                    }
                }
                SeqInstr::Jump { target } => run.pc = u32::from(target),
                SeqInstr::End => {
                    self.finish_sequence(run.pc, at);
                    break;
                }
            }

            if run.next_ns == before {
                run.zero_time_steps += 1;
                if run.zero_time_steps >= RUNAWAY_LIMIT {
                    self.seq.fault |= regmap::FAULT_RUNAWAY;
                    self.finish_sequence(run.pc, at);
                    break;
                }
            } else {
                run.zero_time_steps = 0;
            }
            self.seq.run = Some(run);
        }
    }

    fn finish_sequence(&mut self, pc: u32, at: u64) {
        self.seq.run = None;
        self.seq.last_pc = pc;
        self.seq.last_end_ns = Some(at);
    }

    fn trigger_recording(&mut self, channel: u32, at: u64) {
        self.readout_count = self.readout_count.wrapping_add(1);
        let measurement = self.qubit.measure(at);
        let period = self.config.recording.trace_sample_period_ns;
        let ch = &self.channels[channel as usize];
        let trace_len = ch.trace_len as usize;
        let capture_ns = trace_len as u64 * period;
        let complete_ns = at + u64::from(ch.duration_ns).max(capture_ns);
        let trace = if trace_len > 0 {
            self.signal.capture(at, trace_len)
        } else {
            Vec::new()
        };
        let ch = &mut self.channels[channel as usize];
        ch.trace_index = 0;
        ch.result = Some(Pending {
            measurement,
            complete_ns,
            trace,
        });
    }
}
