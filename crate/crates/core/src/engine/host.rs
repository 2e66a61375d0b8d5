//! Host calls and host-owned memory as seen by a running task.

use num_complex::Complex64;
use qtask_fabric::{regmap, unpack_sample, CostKind, FabricError};

use super::heap::BoxState;
use super::{Core, EngineState, Owner, YieldMode};
use crate::g2::{butterflies, G2Fft};
use crate::vm::hostcalls::id;
use crate::vm::printf::{self, Args, FormatError};
use crate::vm::{handle, Host, HostValue, TaskMemory, Trap};

/// Longest string a host call reads from task memory.
const MAX_STRING: usize = 4096;
/// Largest record accepted by `fft_autocorrelate`.
const MAX_FFT_SAMPLES: u32 = 1 << 16;

fn fault(e: FabricError) -> Trap {
    Trap::HostFault(e.to_string())
}

fn span(len: usize, offset: u32, n: usize, what: &str) -> Result<std::ops::Range<usize>, Trap> {
    let start = offset as usize;
    match start.checked_add(n) {
        Some(end) if end <= len => Ok(start..end),
        _ => Err(Trap::OutOfBounds(format!(
            "{what} offset {offset} + {n} exceeds {len} bytes"
        ))),
    }
}

struct PrintArgs<'a> {
    core: &'a Core,
    mem: &'a dyn TaskMemory,
    ints: &'a [u32],
    floats: &'a [f64],
}

impl Args for PrintArgs<'_> {
    fn next_int(&mut self) -> Option<u32> {
        let (v, rest) = self.ints.split_first()?;
        self.ints = rest;
        Some(*v)
    }

    fn next_float(&mut self) -> Option<f64> {
        let (v, rest) = self.floats.split_first()?;
        self.floats = rest;
        Some(*v)
    }

    fn string(&mut self, h: u32, o: u32) -> Result<String, FormatError> {
        self.core
            .read_str(self.mem, h, o)
            .map_err(|t| FormatError::BadString(t.to_string()))
    }
}

impl Core {
    fn host_read(&self, h: u32, offset: u32, buf: &mut [u8]) -> Result<(), Trap> {
        if h == handle::PARAMS {
            let r = span(self.param_view.len(), offset, buf.len(), "PARAMS")?;
            buf.copy_from_slice(&self.param_view[r]);
            return Ok(());
        }
        if handle::is_box(h) {
            let id = handle::box_id(h);
            let bytes = self.task_box(id)?;
            let r = span(bytes.len(), offset, buf.len(), "box")?;
            buf.copy_from_slice(&bytes[r]);
            return Ok(());
        }
        Err(Trap::OutOfBounds(format!("handle {h:#x} is not readable")))
    }

    fn task_box(&self, id: u32) -> Result<&[u8], Trap> {
        match self.heap.get(id) {
            Some(b) if matches!(b.state, BoxState::Open | BoxState::Finished) => {
                Ok(self.heap.bytes(id).expect("live box"))
            }
            _ => Err(Trap::OutOfBounds(format!("box {id} is not live"))),
        }
    }

    /// Reads through any pointer, task-local or host-owned.
    fn read_any(&self, mem: &dyn TaskMemory, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        if h == handle::LOCALS || h == handle::CONST {
            mem.read(h, o, buf)
        } else {
            self.host_read(h, o, buf)
        }
    }

    fn write_any(
        &mut self,
        mem: &mut dyn TaskMemory,
        h: u32,
        o: u32,
        data: &[u8],
    ) -> Result<(), Trap> {
        if h == handle::LOCALS || h == handle::CONST {
            mem.write(h, o, data)
        } else {
            self.store(h, o, data)
        }
    }

    fn read_str(&self, mem: &dyn TaskMemory, h: u32, o: u32) -> Result<String, Trap> {
        let mut s = Vec::new();
        let mut b = [0u8];
        while s.len() < MAX_STRING {
            self.read_any(mem, h, o.wrapping_add(s.len() as u32), &mut b)?;
            if b[0] == 0 {
                return Ok(String::from_utf8_lossy(&s).into_owned());
            }
            s.push(b[0]);
        }
        Err(Trap::OutOfBounds(format!(
            "string longer than {MAX_STRING} bytes"
        )))
    }

    fn format(&self, mem: &dyn TaskMemory, ints: &[u32], floats: &[f64]) -> Result<String, Trap> {
        let fmt = self.read_str(mem, ints[0], ints[1])?;
        let mut args = PrintArgs {
            core: self,
            mem,
            ints: &ints[2..],
            floats,
        };
        Ok(
            printf::format(&fmt, &mut args)
                .unwrap_or_else(|e| format!("{fmt} [format error: {e}]")),
        )
    }

    fn console_line(&mut self, line: String) {
        log::debug!("task: {}", line.trim_end());
        if self.console.len() >= self.cfg.console_lines {
            self.console.pop_front();
        }
        self.console.push_back(line);
    }

    fn poll_until_clear(&mut self, addr: u32) -> Result<(), Trap> {
        while self.fabric.bus_read(addr).map_err(fault)? != 0 {}
        Ok(())
    }

    fn box_arg(&self, h: u32) -> Result<u32, Trap> {
        if !handle::is_box(h) {
            return Err(Trap::HostFault(format!(
                "pointer with handle {h:#x} is not a data box"
            )));
        }
        Ok(handle::box_id(h))
    }

    fn fft_autocorrelate(&mut self, mem: &mut dyn TaskMemory, ints: &[u32]) -> Result<(), Trap> {
        let (ih, io, oh, oo, n) = (ints[0], ints[1], ints[2], ints[3], ints[4]);
        if n == 0 || n > MAX_FFT_SAMPLES {
            return Err(Trap::HostFault(format!(
                "fft_autocorrelate: bad length {n}"
            )));
        }
        let n = n as usize;
        let mut raw = vec![0u8; 8 * n];
        self.read_any(mem, ih, io, &mut raw)?;
        let word = |i: usize| u32::from_le_bytes(raw[4 * i..4 * i + 4].try_into().unwrap());
        let sample = |w: u32| {
            let (i, q) = unpack_sample(w);
            Complex64::new(f64::from(i), f64::from(q))
        };
        let a: Vec<Complex64> = (0..n)
            .map(|k| sample(word(k)).conj() * sample(word(n + k)))
            .collect();

        let fft = match &mut self.fft {
            Some(f) if f.len() == n => f,
            slot => slot.insert(G2Fft::new(n)),
        };
        let mut c = vec![Complex64::default(); n];
        fft.autocorrelate_into(&a, &mut c);

        let mut acc = vec![0u8; 16 * n];
        self.read_any(mem, oh, oo, &mut acc)?;
        for (k, v) in c.iter().enumerate() {
            for (j, part) in [v.re, v.im].into_iter().enumerate() {
                let at = 16 * k + 8 * j;
                let old = f64::from_le_bytes(acc[at..at + 8].try_into().unwrap());
                acc[at..at + 8].copy_from_slice(&(old + part).to_le_bytes());
            }
        }
        self.write_any(mem, oh, oo, &acc)?;

        let cost = (butterflies(n) as f64 * self.cfg.fft_butterfly_ns).round() as u64;
        self.fabric.clock_mut().charge(CostKind::Compute, cost);
        Ok(())
    }
}

impl Host for Core {
    fn host_call(
        &mut self,
        call: u8,
        ints: &[u32],
        floats: &[f64],
        mem: &mut dyn TaskMemory,
    ) -> Result<HostValue, Trap> {
        if self.cancel && self.critical_depth == 0 {
            return Err(Trap::Cancelled);
        }
        let unit = Ok(HostValue::Unit);
        match call {
            id::PRINTF => {
                let line = self.format(mem, ints, floats)?;
                self.console_line(line);
                unit
            }
            id::ENTER_CRITICAL => {
                if self.critical_depth == 0 {
                    self.critical_since = self.fabric.now();
                }
                self.critical_depth += 1;
                unit
            }
            id::EXIT_CRITICAL => {
                if self.critical_depth == 0 {
                    return Err(Trap::UnbalancedCritical);
                }
                self.critical_depth -= 1;
                if self.critical_depth == 0 {
                    let now = self.fabric.now();
                    self.trace.record(Owner::Critical, self.critical_since, now);
                    if self.cancel {
                        return Err(Trap::Cancelled);
                    }
                }
                unit
            }
            id::RESTART_TIMER => {
                self.timer_start_ns = self.fabric.now();
                unit
            }
            id::GET_CYCLE_COUNT_TIMER => {
                let ns = self.fabric.now() - self.timer_start_ns;
                Ok(HostValue::Int((ns / self.cfg.cycles.cycle_ns) as u32))
            }
            id::GET_NS_TIMER => Ok(HostValue::Int(
                (self.fabric.now() - self.timer_start_ns) as u32,
            )),
            id::REPORT_ERROR => {
                let msg = self.read_str(mem, ints[0], ints[1])?;
                self.errors.push(msg);
                unit
            }
            id::PRINTF_ERROR => {
                let msg = self.format(mem, ints, floats)?;
                self.errors.push(msg);
                unit
            }
            id::GET_PARAMETERS => Ok(HostValue::Ptr(handle::PARAMS, 0)),
            id::GET_PARAMETERS_SIZE => Ok(HostValue::Int(self.param_view.len() as u32)),
            id::SET_PROGRESS => {
                self.progress = ints[0];
                unit
            }
            id::GET_DATA_BOX => match self.heap.alloc(u64::from(ints[0])) {
                Ok(b) => Ok(HostValue::Ptr(handle::BOX_FLAG | b.id, 0)),
                Err(e) => {
                    log::debug!("box allocation failed: {e}");
                    Ok(HostValue::Ptr(handle::NULL, 0))
                }
            },
            id::FINISH_DATA_BOX => {
                let b = self.box_arg(ints[0])?;
                self.heap
                    .finish(b)
                    .map_err(|e| Trap::HostFault(e.to_string()))?;
                unit
            }
            id::DISCARD_DATA_BOX => {
                let b = self.box_arg(ints[0])?;
                self.heap
                    .discard(b)
                    .map_err(|e| Trap::HostFault(e.to_string()))?;
                unit
            }
            id::SEQ_WAIT_WHILE_BUSY => {
                self.poll_until_clear(regmap::SEQ_BUSY)?;
                unit
            }
            id::SEQ_START_AT => {
                self.fabric
                    .bus_write(regmap::SEQ_START, ints[0])
                    .map_err(fault)?;
                unit
            }
            id::SEQ_WAIT_UNTIL_RELAXED => {
                self.fabric.wait_until_relaxed();
                unit
            }
            id::REC_WAIT_WHILE_BUSY => {
                self.poll_until_clear(regmap::rec_reg(ints[0], regmap::REC_BUSY))?;
                unit
            }
            id::REC_GET_IQ_PAIR => {
                let ch = ints[0];
                let i = self
                    .fabric
                    .bus_read(regmap::rec_reg(ch, regmap::REC_I))
                    .map_err(fault)?;
                let q = self
                    .fabric
                    .bus_read(regmap::rec_reg(ch, regmap::REC_Q))
                    .map_err(fault)?;
                let mut pair = [0u8; 8];
                pair[..4].copy_from_slice(&i.to_le_bytes());
                pair[4..].copy_from_slice(&q.to_le_bytes());
                self.write_any(mem, ints[1], ints[2], &pair)?;
                unit
            }
            id::REG_READ => Ok(HostValue::Int(
                self.fabric.bus_read(ints[0]).map_err(fault)?,
            )),
            id::REG_WRITE => {
                self.fabric.bus_write(ints[0], ints[1]).map_err(fault)?;
                unit
            }
            id::FFT_AUTOCORRELATE => {
                self.fft_autocorrelate(mem, ints)?;
                unit
            }
            other => Err(Trap::BadHostCall(other)),
        }
    }

    fn load(&mut self, h: u32, offset: u32, buf: &mut [u8]) -> Result<(), Trap> {
        self.host_read(h, offset, buf)
    }

    fn store(&mut self, h: u32, offset: u32, data: &[u8]) -> Result<(), Trap> {
        if h == handle::PARAMS {
            return Err(Trap::OutOfBounds("PARAMS is read-only".into()));
        }
        if !handle::is_box(h) {
            return Err(Trap::OutOfBounds(format!("handle {h:#x} is not writable")));
        }
        let id = handle::box_id(h);
        self.task_box(id)?;
        let bytes = self.heap.bytes_mut(id).expect("live box");
        let r = span(bytes.len(), offset, data.len(), "box")?;
        bytes[r].copy_from_slice(data);
        Ok(())
    }

    fn charge_cycles(&mut self, cycles: u64) {
        self.fabric
            .clock_mut()
            .charge(CostKind::Cycles, cycles * self.cfg.cycles.cycle_ns);
    }

    fn should_yield(&mut self) -> bool {
        debug_assert_eq!(self.state, EngineState::Running);
        let now = self.fabric.now();
        match self.yield_mode {
            YieldMode::Deadline(d) if self.critical_depth > 0 => {
                now >= d.saturating_add(self.cfg.critical_wait_limit_ns)
            }
            YieldMode::Deadline(d) => now >= d || self.cancel,
            YieldMode::CriticalExit(limit) => self.critical_depth == 0 || now >= limit,
        }
    }
}
