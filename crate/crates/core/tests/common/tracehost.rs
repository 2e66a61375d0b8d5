//! Deterministic host that records every observable effect.
//!
//! Timers count host calls instead of cycles so that runs of differently
//! optimised code produce the same trace.

use std::collections::{BTreeMap, HashMap};

use qtask_core::vm::handle::{self, BOX_FLAG};
use qtask_core::vm::printf::{self, Args, FormatError};
use qtask_core::vm::{Host, HostValue, TaskMemory, Trap};

const BOX_CAPACITY: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Console(String),
    Error(String),
    Progress(u32),
    Critical(bool),
    RestartTimer,
    RegRead(u32, u32),
    RegWrite(u32, u32),
    Fabric(u8, Vec<u32>),
    BoxAlloc(u32, u32),
    BoxFinish(u32),
    BoxDiscard(u32),
    Fft(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoxState {
    Open,
    Finished,
    Discarded,
}

pub struct TraceHost {
    pub events: Vec<Event>,
    pub cycles: u64,
    params: Vec<u8>,
    boxes: BTreeMap<u32, (BoxState, Vec<u8>)>,
    used: usize,
    regs: HashMap<u32, u32>,
    calls: u32,
    timer_base: u32,
    depth: u32,
}

struct A<'a, 'm> {
    ints: &'a [u32],
    floats: &'a [f64],
    host: &'a TraceHost,
    mem: &'a dyn TaskMemory,
    _m: std::marker::PhantomData<&'m ()>,
}

impl Args for A<'_, '_> {
    fn next_int(&mut self) -> Option<u32> {
        let (f, r) = self.ints.split_first()?;
        self.ints = r;
        Some(*f)
    }

    fn next_float(&mut self) -> Option<f64> {
        let (f, r) = self.floats.split_first()?;
        self.floats = r;
        Some(*f)
    }

    fn string(&mut self, h: u32, o: u32) -> Result<String, FormatError> {
        self.host
            .read_str(self.mem, h, o)
            .map_err(|t| FormatError::BadString(t.to_string()))
    }
}

impl TraceHost {
    pub fn new(params: &[u32]) -> Self {
        Self {
            events: Vec::new(),
            cycles: 0,
            params: params.iter().flat_map(|w| w.to_le_bytes()).collect(),
            boxes: BTreeMap::new(),
            used: 0,
            regs: HashMap::new(),
            calls: 0,
            timer_base: 0,
            depth: 0,
        }
    }

    pub fn box_dump(&self) -> Vec<(u32, &'static str, Vec<u8>)> {
        self.boxes
            .iter()
            .map(|(id, (st, b))| {
                let s = match st {
                    BoxState::Open => "open",
                    BoxState::Finished => "finished",
                    BoxState::Discarded => "discarded",
                };
                (
                    *id,
                    s,
                    if *st == BoxState::Discarded {
                        Vec::new()
                    } else {
                        b.clone()
                    },
                )
            })
            .collect()
    }

    fn read_any(&self, mem: &dyn TaskMemory, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        match h {
            handle::LOCALS | handle::CONST => mem.read(h, o, buf),
            _ => self.load_host(h, o, buf),
        }
    }

    fn read_str(&self, mem: &dyn TaskMemory, h: u32, o: u32) -> Result<String, Trap> {
        let mut s = Vec::new();
        loop {
            let mut b = [0u8];
            self.read_any(mem, h, o.wrapping_add(s.len() as u32), &mut b)?;
            if b[0] == 0 {
                return Ok(String::from_utf8_lossy(&s).into_owned());
            }
            s.push(b[0]);
            if s.len() > 4096 {
                return Err(Trap::HostFault("unterminated string".into()));
            }
        }
    }

    fn write_any(
        &mut self,
        mem: &mut dyn TaskMemory,
        h: u32,
        o: u32,
        data: &[u8],
    ) -> Result<(), Trap> {
        match h {
            handle::LOCALS => mem.write(h, o, data),
            _ => self.store(h, o, data),
        }
    }

    fn format(&self, ints: &[u32], floats: &[f64], mem: &dyn TaskMemory) -> Result<String, Trap> {
        let fmt = self.read_str(mem, ints[0], ints[1])?;
        let mut args = A {
            ints: &ints[2..],
            floats,
            host: self,
            mem,
            _m: std::marker::PhantomData,
        };
        Ok(match printf::format(&fmt, &mut args) {
            Ok(s) => s,
            Err(e) => format!("{fmt} <{e}>"),
        })
    }

    fn live_box(&mut self, h: u32, o: u32) -> Result<u32, Trap> {
        let id = handle::box_id(h);
        match self.boxes.get(&id) {
            Some((BoxState::Open, _)) if handle::is_box(h) && o == 0 => Ok(id),
            _ => Err(Trap::HostFault(format!("not an open box: {h:#x}+{o}"))),
        }
    }

    fn load_host(&self, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        let src = match h {
            handle::PARAMS => &self.params[..],
            _ if handle::is_box(h) => match self.boxes.get(&handle::box_id(h)) {
                Some((BoxState::Open, b)) => &b[..],
                _ => return Err(Trap::OutOfBounds(format!("box {h:#x} is not live"))),
            },
            _ => return Err(Trap::OutOfBounds(format!("bad handle {h:#x}"))),
        };
        let end = (o as usize)
            .checked_add(buf.len())
            .filter(|&e| e <= src.len());
        let Some(end) = end else {
            return Err(Trap::OutOfBounds(format!(
                "{o} + {} exceeds {}",
                buf.len(),
                src.len()
            )));
        };
        buf.copy_from_slice(&src[o as usize..end]);
        Ok(())
    }
}

impl Host for TraceHost {
    fn host_call(
        &mut self,
        id: u8,
        ints: &[u32],
        floats: &[f64],
        mem: &mut dyn TaskMemory,
    ) -> Result<HostValue, Trap> {
        self.calls += 1;
        let unit = Ok(HostValue::Unit);
        match id {
            0 => {
                let s = self.format(ints, floats, mem)?;
                self.events.push(Event::Console(s));
                unit
            }
            1 => {
                self.depth += 1;
                self.events.push(Event::Critical(true));
                unit
            }
            2 => {
                if self.depth == 0 {
                    return Err(Trap::UnbalancedCritical);
                }
                self.depth -= 1;
                self.events.push(Event::Critical(false));
                unit
            }
            3 => {
                self.timer_base = self.calls;
                self.events.push(Event::RestartTimer);
                unit
            }
            4 | 5 => Ok(HostValue::Int(
                (self.calls - self.timer_base) * if id == 4 { 50 } else { 100 },
            )),
            6 => {
                let s = self.read_str(mem, ints[0], ints[1])?;
                self.events.push(Event::Error(s));
                unit
            }
            7 => {
                let s = self.format(ints, floats, mem)?;
                self.events.push(Event::Error(s));
                unit
            }
            8 => Ok(HostValue::Ptr(handle::PARAMS, 0)),
            9 => Ok(HostValue::Int(self.params.len() as u32)),
            10 => {
                self.events.push(Event::Progress(ints[0]));
                unit
            }
            11 => {
                let size = ints[0] as usize;
                if size == 0 || self.used + size > BOX_CAPACITY {
                    return Ok(HostValue::Ptr(0, 0));
                }
                self.used += size;
                let id = self.boxes.len() as u32 + 1;
                self.boxes.insert(id, (BoxState::Open, vec![0; size]));
                self.events.push(Event::BoxAlloc(id, ints[0]));
                Ok(HostValue::Ptr(BOX_FLAG | id, 0))
            }
            12 | 13 => {
                let b = self.live_box(ints[0], ints[1])?;
                let entry = self.boxes.get_mut(&b).expect("live");
                if id == 12 {
                    entry.0 = BoxState::Finished;
                    self.events.push(Event::BoxFinish(b));
                } else {
                    entry.0 = BoxState::Discarded;
                    self.events.push(Event::BoxDiscard(b));
                }
                unit
            }
            14..=17 => {
                self.events.push(Event::Fabric(id, ints.to_vec()));
                unit
            }
            18 => {
                let i = (self.calls as i32).wrapping_mul(1000);
                let q = -(self.calls as i32);
                let mut b = [0u8; 8];
                b[..4].copy_from_slice(&i.to_le_bytes());
                b[4..].copy_from_slice(&q.to_le_bytes());
                self.write_any(mem, ints[1], ints[2], &b)?;
                self.events.push(Event::Fabric(id, vec![ints[0]]));
                unit
            }
            19 => {
                let v = self
                    .regs
                    .get(&ints[0])
                    .copied()
                    .unwrap_or(ints[0].wrapping_mul(2_654_435_761) ^ self.calls);
                self.events.push(Event::RegRead(ints[0], v));
                Ok(HostValue::Int(v))
            }
            20 => {
                self.regs.insert(ints[0], ints[1]);
                self.events.push(Event::RegWrite(ints[0], ints[1]));
                unit
            }
            21 => {
                let n = ints[4];
                for k in 0..n {
                    let mut b = [0u8; 8];
                    let o = ints[3].wrapping_add(16 * k);
                    self.read_any(mem, ints[2], o, &mut b)?;
                    let v = f64::from_le_bytes(b) + f64::from(k);
                    self.write_any(mem, ints[2], o, &v.to_le_bytes())?;
                }
                self.events.push(Event::Fft(n));
                unit
            }
            _ => Err(Trap::BadHostCall(id)),
        }
    }

    fn load(&mut self, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        self.load_host(h, o, buf)
    }

    fn store(&mut self, h: u32, o: u32, data: &[u8]) -> Result<(), Trap> {
        if !handle::is_box(h) {
            return Err(Trap::OutOfBounds(format!("handle {h:#x} is read-only")));
        }
        match self.boxes.get_mut(&handle::box_id(h)) {
            Some((BoxState::Open, b)) => {
                let end = (o as usize)
                    .checked_add(data.len())
                    .filter(|&e| e <= b.len());
                let Some(end) = end else {
                    return Err(Trap::OutOfBounds(format!(
                        "{o} + {} exceeds {}",
                        data.len(),
                        b.len()
                    )));
                };
                b[o as usize..end].copy_from_slice(data);
                Ok(())
            }
            _ => Err(Trap::OutOfBounds(format!("box {h:#x} is not live"))),
        }
    }

    fn charge_cycles(&mut self, cycles: u64) {
        self.cycles += cycles;
    }

    fn should_yield(&mut self) -> bool {
        false
    }
}
