//! The interpreter. Bytecode is verified and pre-decoded once into a
//! [`Program`]; a [`Vm`] holds the resumable execution state of one run.

use std::collections::HashMap;
use std::sync::Arc;

use super::bytecode::{Bytecode, Instr};
use super::validator::stack_heights;
use super::{
    handle, CycleCosts, Executor, Exit, Host, HostValue, TaskMemory, Trap, MAX_CALL_DEPTH,
    MAX_FLOAT_STACK, MAX_INT_STACK,
};

/// Cycles between yield checks in host-call-free loops.
const YIELD_QUANTUM: u64 = 4096;

#[derive(Debug, Clone, Copy)]
enum Op {
    Plain(Instr),
    /// Jumps with targets rewritten to instruction indices.
    Jmp(u32),
    Jz(u32),
    Jnz(u32),
}

#[derive(Debug, Clone)]
struct FuncInfo {
    entry: u32,
    int_params: usize,
    float_params: usize,
    int_slots: usize,
    float_slots: usize,
    frame_bytes: u32,
    max_ints: usize,
    max_floats: usize,
}

/// Verified, pre-decoded bytecode.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    funcs: Vec<FuncInfo>,
    words: Vec<u32>,
    floats: Vec<f64>,
    data: Vec<u8>,
}

impl Program {
    pub fn new(module: &Bytecode) -> Result<Self, Trap> {
        let heights = stack_heights(module).map_err(|r| Trap::BadOpcode(r.to_string()))?;
        let mut index_of = HashMap::new();
        let mut raw = Vec::new();
        let mut pc = 0;
        while pc < module.code.len() {
            let i = Instr::decode(&module.code, pc).map_err(|e| Trap::BadOpcode(e.to_string()))?;
            index_of.insert(pc as u32, raw.len() as u32);
            raw.push(i);
            pc += i.size();
        }
        let target = |t: u32| {
            index_of
                .get(&t)
                .copied()
                .ok_or_else(|| Trap::BadOpcode(format!("jump target {t}")))
        };
        let ops = raw
            .iter()
            .map(|i| {
                Ok(match *i {
                    Instr::Jmp(t) => Op::Jmp(target(t)?),
                    Instr::Jz(t) => Op::Jz(target(t)?),
                    Instr::Jnz(t) => Op::Jnz(target(t)?),
                    other => Op::Plain(other),
                })
            })
            .collect::<Result<Vec<_>, Trap>>()?;
        let funcs = module
            .functions
            .iter()
            .zip(heights)
            .map(|(f, (hi, hf))| {
                Ok(FuncInfo {
                    entry: target(f.code_offset)?,
                    int_params: usize::from(f.int_params),
                    float_params: usize::from(f.float_params),
                    int_slots: usize::from(f.int_slots),
                    float_slots: usize::from(f.float_slots),
                    frame_bytes: f.frame_bytes.next_multiple_of(8),
                    max_ints: hi as usize,
                    max_floats: hf as usize,
                })
            })
            .collect::<Result<Vec<_>, Trap>>()?;
        Ok(Self {
            ops,
            funcs,
            words: module.words.clone(),
            floats: module.floats.clone(),
            data: module.data.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    func: u16,
    ret_pc: u32,
    islot_base: usize,
    fslot_base: usize,
    istack_base: usize,
    fstack_base: usize,
    mem_base: u32,
}

/// Execution state of one task run. Resumable after [`Exit::Yielded`].
#[derive(Debug, Clone)]
pub struct Vm {
    program: Arc<Program>,
    costs: CycleCosts,
    istack: Vec<u32>,
    fstack: Vec<f64>,
    islots: Vec<u32>,
    fslots: Vec<f64>,
    frames: Vec<Frame>,
    locals: Vec<u8>,
    mem_top: u32,
    pc: u32,
    pending_cycles: u64,
    executed: u64,
    done: Option<Exit>,
}

struct LocalView<'a> {
    locals: &'a mut [u8],
    data: &'a [u8],
}

fn range(len: usize, offset: u32, n: usize, space: &str) -> Result<std::ops::Range<usize>, Trap> {
    let start = offset as usize;
    match start.checked_add(n) {
        Some(end) if end <= len => Ok(start..end),
        _ => Err(Trap::OutOfBounds(format!(
            "{space} offset {offset} + {n} exceeds {len} bytes"
        ))),
    }
}

impl TaskMemory for LocalView<'_> {
    fn read(&self, h: u32, offset: u32, buf: &mut [u8]) -> Result<(), Trap> {
        let src = match h {
            handle::LOCALS => &*self.locals,
            handle::CONST => self.data,
            _ => {
                return Err(Trap::OutOfBounds(format!(
                    "handle {h:#x} is not task-local"
                )))
            }
        };
        let r = range(
            src.len(),
            offset,
            buf.len(),
            if h == handle::LOCALS {
                "LOCALS"
            } else {
                "CONST"
            },
        )?;
        buf.copy_from_slice(&src[r]);
        Ok(())
    }

    fn write(&mut self, h: u32, offset: u32, data: &[u8]) -> Result<(), Trap> {
        if h != handle::LOCALS {
            return Err(Trap::OutOfBounds(format!(
                "handle {h:#x} is not writable task memory"
            )));
        }
        let r = range(self.locals.len(), offset, data.len(), "LOCALS")?;
        self.locals[r].copy_from_slice(data);
        Ok(())
    }
}

impl Vm {
    /// Prepares a run of function 0 with `locals_bytes` of LOCALS memory.
    pub fn new(program: Arc<Program>, costs: CycleCosts, locals_bytes: usize) -> Self {
        let mut vm = Self {
            program,
            costs,
            istack: Vec::with_capacity(64),
            fstack: Vec::with_capacity(16),
            islots: Vec::new(),
            fslots: Vec::new(),
            frames: Vec::new(),
            locals: vec![0; locals_bytes],
            mem_top: 0,
            pc: 0,
            pending_cycles: 0,
            executed: 0,
            done: None,
        };
        if let Err(t) = vm.enter(0, 0) {
            vm.done = Some(Exit::Trapped(t));
        }
        vm
    }

    /// Instructions executed so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn call_depth(&self) -> usize {
        self.frames.len()
    }

    /// Index of the executing function.
    pub fn current_function(&self) -> Option<u16> {
        self.frames.last().map(|f| f.func)
    }

    fn enter(&mut self, func: u16, ret_pc: u32) -> Result<(), Trap> {
        let f = &self.program.funcs[usize::from(func)];
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Err(Trap::StackOverflow);
        }
        let istack_base = self.istack.len() - f.int_params;
        let fstack_base = self.fstack.len() - f.float_params;
        if istack_base + f.max_ints > MAX_INT_STACK || fstack_base + f.max_floats > MAX_FLOAT_STACK
        {
            return Err(Trap::StackOverflow);
        }
        let mem_base = self.mem_top;
        let mem_top = mem_base as usize + f.frame_bytes as usize;
        if mem_top > self.locals.len() {
            return Err(Trap::StackOverflow);
        }
        self.locals[mem_base as usize..mem_top].fill(0);
        self.mem_top = mem_top as u32;

        let islot_base = self.islots.len();
        self.islots.resize(islot_base + f.int_slots, 0);
        self.islots[islot_base..islot_base + f.int_params]
            .copy_from_slice(&self.istack[istack_base..]);
        self.istack.truncate(istack_base);
        let fslot_base = self.fslots.len();
        self.fslots.resize(fslot_base + f.float_slots, 0.0);
        self.fslots[fslot_base..fslot_base + f.float_params]
            .copy_from_slice(&self.fstack[fstack_base..]);
        self.fstack.truncate(fstack_base);

        self.frames.push(Frame {
            func,
            ret_pc,
            islot_base,
            fslot_base,
            istack_base,
            fstack_base,
            mem_base,
        });
        self.pc = f.entry;
        Ok(())
    }

    fn load_bytes(
        &mut self,
        host: &mut dyn Host,
        h: u32,
        off: u32,
        buf: &mut [u8],
    ) -> Result<(), Trap> {
        match h {
            handle::LOCALS => {
                let r = range(self.mem_top as usize, off, buf.len(), "LOCALS")?;
                buf.copy_from_slice(&self.locals[r]);
                Ok(())
            }
            handle::CONST => {
                let r = range(self.program.data.len(), off, buf.len(), "CONST")?;
                buf.copy_from_slice(&self.program.data[r]);
                Ok(())
            }
            handle::NULL => Err(Trap::OutOfBounds("null pointer dereference".into())),
            _ => host.load(h, off, buf),
        }
    }

    fn store_bytes(
        &mut self,
        host: &mut dyn Host,
        h: u32,
        off: u32,
        data: &[u8],
    ) -> Result<(), Trap> {
        match h {
            handle::LOCALS => {
                let r = range(self.mem_top as usize, off, data.len(), "LOCALS")?;
                self.locals[r].copy_from_slice(data);
                Ok(())
            }
            handle::CONST => Err(Trap::OutOfBounds("store to read-only data".into())),
            handle::NULL => Err(Trap::OutOfBounds("null pointer dereference".into())),
            _ => host.store(h, off, data),
        }
    }

    #[allow(unused_assignments)]
    fn step_loop(&mut self, host: &mut dyn Host) -> Result<Option<Exit>, Trap> {
        let program = Arc::clone(&self.program);
        let ops = &program.ops[..];
        let op_cycles = self.costs.op_cycles;
        let branch_extra = self.costs.taken_branch_cycles.saturating_sub(op_cycles);
        let mut cycles = self.pending_cycles;
        let mut pc = self.pc as usize;
        let mut executed = 0u64;

        macro_rules! pop {
            () => {
                match self.istack.pop() {
                    Some(v) => v,
                    None => return Err(Trap::BadOpcode("integer stack underflow".into())),
                }
            };
        }
        macro_rules! fpop {
            () => {
                match self.fstack.pop() {
                    Some(v) => v,
                    None => return Err(Trap::BadOpcode("float stack underflow".into())),
                }
            };
        }
        macro_rules! bin {
            (|$a:ident, $b:ident| $e:expr) => {{
                let $b = pop!();
                let $a = pop!();
                self.istack.push($e);
            }};
        }
        macro_rules! fbin {
            (|$a:ident, $b:ident| $e:expr) => {{
                let $b = fpop!();
                let $a = fpop!();
                self.fstack.push($e);
            }};
        }
        macro_rules! fcmp {
            (|$a:ident, $b:ident| $e:expr) => {{
                let $b = fpop!();
                let $a = fpop!();
                self.istack.push(u32::from($e));
            }};
        }
        macro_rules! save {
            () => {
                self.pc = pc as u32;
                self.pending_cycles = cycles;
                self.executed += executed;
                executed = 0;
            };
        }
        // Saves state and charges the accumulated cycles to the clock.
        macro_rules! checkpoint {
            () => {
                save!();
                if self.pending_cycles > 0 {
                    host.charge_cycles(self.pending_cycles);
                    self.pending_cycles = 0;
                }
                cycles = 0;
            };
        }

        loop {
            let Some(&op) = ops.get(pc) else {
                save!();
                return Err(Trap::BadOpcode(format!("pc {pc} outside code")));
            };
            pc += 1;
            cycles += op_cycles;
            executed += 1;
            let instr = match op {
                Op::Plain(i) => i,
                Op::Jmp(t) => {
                    cycles += branch_extra;
                    let backward = (t as usize) < pc;
                    pc = t as usize;
                    if backward && cycles >= YIELD_QUANTUM {
                        checkpoint!();
                        if host.should_yield() {
                            return Ok(Some(Exit::Yielded));
                        }
                    }
                    continue;
                }
                Op::Jz(t) | Op::Jnz(t) => {
                    let v = pop!();
                    let take = matches!(op, Op::Jz(_)) == (v == 0);
                    if take {
                        cycles += branch_extra;
                        let backward = (t as usize) < pc;
                        pc = t as usize;
                        if backward && cycles >= YIELD_QUANTUM {
                            checkpoint!();
                            if host.should_yield() {
                                return Ok(Some(Exit::Yielded));
                            }
                        }
                    }
                    continue;
                }
            };
            use Instr::*;
            match instr {
                IConst(i) => self.istack.push(program.words[usize::from(i)]),
                FConst(i) => self.fstack.push(program.floats[usize::from(i)]),
                Dup => {
                    let v = pop!();
                    self.istack.push(v);
                    self.istack.push(v);
                }
                Drop => {
                    pop!();
                }
                Swap => {
                    let b = pop!();
                    let a = pop!();
                    self.istack.push(b);
                    self.istack.push(a);
                }
                FDup => {
                    let v = fpop!();
                    self.fstack.push(v);
                    self.fstack.push(v);
                }
                FDrop => {
                    fpop!();
                }
                LoadL(i) => {
                    let base = self.frames.last().map_or(0, |f| f.islot_base);
                    self.istack.push(self.islots[base + usize::from(i)]);
                }
                StoreL(i) => {
                    let v = pop!();
                    let base = self.frames.last().map_or(0, |f| f.islot_base);
                    self.islots[base + usize::from(i)] = v;
                }
                FLoadL(i) => {
                    let base = self.frames.last().map_or(0, |f| f.fslot_base);
                    self.fstack.push(self.fslots[base + usize::from(i)]);
                }
                FStoreL(i) => {
                    let v = fpop!();
                    let base = self.frames.last().map_or(0, |f| f.fslot_base);
                    self.fslots[base + usize::from(i)] = v;
                }
                Add => bin!(|a, b| a.wrapping_add(b)),
                Sub => bin!(|a, b| a.wrapping_sub(b)),
                Mul => bin!(|a, b| a.wrapping_mul(b)),
                DivS | DivU | RemS | RemU => {
                    let b = pop!();
                    let a = pop!();
                    if b == 0 {
                        save!();
                        return Err(Trap::DivideByZero);
                    }
                    self.istack.push(match instr {
                        DivS => (a as i32).wrapping_div(b as i32) as u32,
                        DivU => a / b,
                        RemS => (a as i32).wrapping_rem(b as i32) as u32,
                        _ => a % b,
                    });
                }
                And => bin!(|a, b| a & b),
                Or => bin!(|a, b| a | b),
                Xor => bin!(|a, b| a ^ b),
                Shl => bin!(|a, b| a << (b & 31)),
                ShrS => bin!(|a, b| ((a as i32) >> (b & 31)) as u32),
                ShrU => bin!(|a, b| a >> (b & 31)),
                Neg => {
                    let a = pop!();
                    self.istack.push(a.wrapping_neg());
                }
                Not => {
                    let a = pop!();
                    self.istack.push(!a);
                }
                LNot => {
                    let a = pop!();
                    self.istack.push(u32::from(a == 0));
                }
                Eq => bin!(|a, b| u32::from(a == b)),
                Ne => bin!(|a, b| u32::from(a != b)),
                LtS => bin!(|a, b| u32::from((a as i32) < (b as i32))),
                LtU => bin!(|a, b| u32::from(a < b)),
                LeS => bin!(|a, b| u32::from((a as i32) <= (b as i32))),
                LeU => bin!(|a, b| u32::from(a <= b)),
                GtS => bin!(|a, b| u32::from((a as i32) > (b as i32))),
                GtU => bin!(|a, b| u32::from(a > b)),
                GeS => bin!(|a, b| u32::from((a as i32) >= (b as i32))),
                GeU => bin!(|a, b| u32::from(a >= b)),
                FAdd => fbin!(|a, b| a + b),
                FSub => fbin!(|a, b| a - b),
                FMul => fbin!(|a, b| a * b),
                FDiv => fbin!(|a, b| a / b),
                FNeg => {
                    let a = fpop!();
                    self.fstack.push(-a);
                }
                FEq => fcmp!(|a, b| a == b),
                FNe => fcmp!(|a, b| a != b),
                FLt => fcmp!(|a, b| a < b),
                FLe => fcmp!(|a, b| a <= b),
                FGt => fcmp!(|a, b| a > b),
                FGe => fcmp!(|a, b| a >= b),
                I2F => {
                    let a = pop!();
                    self.fstack.push(f64::from(a as i32));
                }
                U2F => {
                    let a = pop!();
                    self.fstack.push(f64::from(a));
                }
                F2I => {
                    let a = fpop!();
                    self.istack.push((a as i32) as u32);
                }
                F2U => {
                    let a = fpop!();
                    self.istack.push(a as u32);
                }
                Call(c) => {
                    save!();
                    self.enter(c, pc as u32)?;
                    pc = self.pc as usize;
                }
                Ret { ints, floats } => {
                    let frame = match self.frames.pop() {
                        Some(f) => f,
                        None => return Err(Trap::BadOpcode("return without frame".into())),
                    };
                    let (ni, nf) = (usize::from(ints), usize::from(floats));
                    if self.istack.len() < frame.istack_base + ni
                        || self.fstack.len() < frame.fstack_base + nf
                    {
                        return Err(Trap::BadOpcode("return values missing".into()));
                    }
                    let ilen = self.istack.len();
                    self.istack.copy_within(ilen - ni.., frame.istack_base);
                    self.istack.truncate(frame.istack_base + ni);
                    let flen = self.fstack.len();
                    self.fstack.copy_within(flen - nf.., frame.fstack_base);
                    self.fstack.truncate(frame.fstack_base + nf);
                    self.islots.truncate(frame.islot_base);
                    self.fslots.truncate(frame.fslot_base);
                    self.mem_top = frame.mem_base;
                    if self.frames.is_empty() {
                        save!();
                        let code = if ni > 0 {
                            self.istack[frame.istack_base] as i32
                        } else {
                            0
                        };
                        return Ok(Some(Exit::Returned(code)));
                    }
                    pc = frame.ret_pc as usize;
                }
                HostCall { id, ints, floats } => {
                    checkpoint!();
                    let (ni, nf) = (usize::from(ints), usize::from(floats));
                    let ibase = self.istack.len() - ni;
                    let fbase = self.fstack.len() - nf;
                    let result = {
                        let mut view = LocalView {
                            locals: &mut self.locals[..self.mem_top as usize],
                            data: &program.data,
                        };
                        host.host_call(id, &self.istack[ibase..], &self.fstack[fbase..], &mut view)
                    };
                    self.istack.truncate(ibase);
                    self.fstack.truncate(fbase);
                    match result? {
                        HostValue::Unit => {}
                        HostValue::Int(v) => self.istack.push(v),
                        HostValue::Ptr(h, o) => {
                            self.istack.push(h);
                            self.istack.push(o);
                        }
                    }
                    if host.should_yield() {
                        return Ok(Some(Exit::Yielded));
                    }
                }
                Halt => {
                    let code = pop!() as i32;
                    save!();
                    return Ok(Some(Exit::Returned(code)));
                }
                Ld32 => {
                    let off = pop!();
                    let h = pop!();
                    let mut b = [0u8; 4];
                    if let Err(t) = self.load_bytes(host, h, off, &mut b) {
                        save!();
                        return Err(t);
                    }
                    self.istack.push(u32::from_le_bytes(b));
                }
                LdF64 => {
                    let off = pop!();
                    let h = pop!();
                    let mut b = [0u8; 8];
                    if let Err(t) = self.load_bytes(host, h, off, &mut b) {
                        save!();
                        return Err(t);
                    }
                    self.fstack.push(f64::from_le_bytes(b));
                }
                St32 => {
                    let v = pop!();
                    let off = pop!();
                    let h = pop!();
                    if let Err(t) = self.store_bytes(host, h, off, &v.to_le_bytes()) {
                        save!();
                        return Err(t);
                    }
                }
                StF64 => {
                    let v = fpop!();
                    let off = pop!();
                    let h = pop!();
                    if let Err(t) = self.store_bytes(host, h, off, &v.to_le_bytes()) {
                        save!();
                        return Err(t);
                    }
                }
                FrameAddr(o) => {
                    let base = self.frames.last().map_or(0, |f| f.mem_base);
                    self.istack.push(handle::LOCALS);
                    self.istack.push(base.wrapping_add(o));
                }
                Jmp(_) | Jz(_) | Jnz(_) => unreachable!("rewritten at load"),
            }
        }
    }
}

impl Executor for Vm {
    fn run(&mut self, host: &mut dyn Host) -> Exit {
        if let Some(done) = &self.done {
            return done.clone();
        }
        let result = self.step_loop(host);
        if self.pending_cycles > 0 {
            host.charge_cycles(self.pending_cycles);
            self.pending_cycles = 0;
        }
        let exit = match result {
            Ok(Some(exit)) => exit,
            Ok(None) => Exit::Yielded,
            Err(trap) => Exit::Trapped(trap),
        };
        if !matches!(exit, Exit::Yielded) {
            self.done = Some(exit.clone());
        }
        exit
    }
}
