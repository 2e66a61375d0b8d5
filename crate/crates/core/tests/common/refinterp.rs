//! Reference semantics: walks the typed tree produced by semantic analysis,
//! sharing no code with the optimiser, code generator or VM.

use std::sync::Arc;

use qtask_core::compiler::ir::*;
use qtask_core::vm::handle;
use qtask_core::vm::{Executor, Exit, Host, HostValue, TaskMemory, Trap, MAX_CALL_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq)]
enum V {
    Void,
    I(u32),
    F(f64),
    P(u32, u32),
}

impl V {
    fn i(self) -> u32 {
        match self {
            V::I(v) => v,
            other => panic!("expected an integer, got {other:?}"),
        }
    }

    fn f(self) -> f64 {
        match self {
            V::F(v) => v,
            other => panic!("expected a double, got {other:?}"),
        }
    }

    fn p(self) -> (u32, u32) {
        match self {
            V::P(h, o) => (h, o),
            other => panic!("expected a pointer, got {other:?}"),
        }
    }

    fn truthy(self) -> bool {
        match self {
            V::I(v) => v != 0,
            V::F(v) => v != 0.0,
            V::P(h, _) => h != 0,
            V::Void => panic!("void condition"),
        }
    }
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(V),
}

struct Frame {
    ints: Vec<u32>,
    floats: Vec<f64>,
    mem_base: u32,
}

pub struct RefInterp {
    program: Arc<TProgram>,
    locals: Vec<u8>,
    mem_top: u32,
    depth: usize,
    olds: Vec<V>,
    done: Option<Exit>,
}

struct View<'a> {
    locals: &'a mut [u8],
    data: &'a [u8],
}

fn span(len: usize, o: u32, n: usize) -> Result<std::ops::Range<usize>, Trap> {
    let s = o as usize;
    match s.checked_add(n) {
        Some(e) if e <= len => Ok(s..e),
        _ => Err(Trap::OutOfBounds(format!("{o}+{n} > {len}"))),
    }
}

impl TaskMemory for View<'_> {
    fn read(&self, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        let src: &[u8] = match h {
            handle::LOCALS => self.locals,
            handle::CONST => self.data,
            _ => return Err(Trap::OutOfBounds("not task memory".into())),
        };
        buf.copy_from_slice(&src[span(src.len(), o, buf.len())?]);
        Ok(())
    }

    fn write(&mut self, h: u32, o: u32, data: &[u8]) -> Result<(), Trap> {
        if h != handle::LOCALS {
            return Err(Trap::OutOfBounds("read-only".into()));
        }
        let r = span(self.locals.len(), o, data.len())?;
        self.locals[r].copy_from_slice(data);
        Ok(())
    }
}

fn contains_old(e: &TExpr) -> bool {
    use TKind::*;
    match &e.kind {
        Old => true,
        IntConst(_) | FloatConst(_) | NullPtr | DataPtr(_) | FrameAddr(_) | Assign { .. } => false,
        Read(Place::Mem(a, _)) => contains_old(a),
        Read(_) => false,
        IntUn(_, a) | FNeg(a) | Conv(_, a) | PtrNonNull(a) | Discard(a) => contains_old(a),
        IntBin { a, b, .. } | PtrDiff { a, b, .. } => contains_old(a) || contains_old(b),
        FloatBin(_, a, b)
        | FloatCmp(_, a, b)
        | PtrOffset(a, b)
        | PtrCmp(_, a, b)
        | LogAnd(a, b)
        | LogOr(a, b)
        | Comma(a, b) => contains_old(a) || contains_old(b),
        Cond(c, a, b) => contains_old(c) || contains_old(a) || contains_old(b),
        Call(_, args) | Host(_, args) => args.iter().any(contains_old),
    }
}

fn zero(ty: &Ty) -> V {
    match ty.kind() {
        ValKind::Void => V::Void,
        ValKind::Int => V::I(0),
        ValKind::Float => V::F(0.0),
        ValKind::Ptr => V::P(0, 0),
    }
}

fn cmp<T: PartialOrd>(op: CmpOp, a: T, b: T) -> u32 {
    u32::from(match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    })
}

fn int_op(op: IntOp, signed: bool, a: u32, b: u32) -> Result<u32, Trap> {
    let (sa, sb) = (a as i32, b as i32);
    let c = |op| {
        if signed {
            cmp(op, sa, sb)
        } else {
            cmp(op, a, b)
        }
    };
    Ok(match op {
        IntOp::Add => a.wrapping_add(b),
        IntOp::Sub => a.wrapping_sub(b),
        IntOp::Mul => a.wrapping_mul(b),
        IntOp::Div | IntOp::Rem if b == 0 => return Err(Trap::DivideByZero),
        IntOp::Div if signed => sa.wrapping_div(sb) as u32,
        IntOp::Div => a / b,
        IntOp::Rem if signed => sa.wrapping_rem(sb) as u32,
        IntOp::Rem => a % b,
        IntOp::And => a & b,
        IntOp::Or => a | b,
        IntOp::Xor => a ^ b,
        IntOp::Shl => a.wrapping_shl(b),
        IntOp::Shr if signed => sa.wrapping_shr(b) as u32,
        IntOp::Shr => a.wrapping_shr(b),
        IntOp::Eq => c(CmpOp::Eq),
        IntOp::Ne => c(CmpOp::Ne),
        IntOp::Lt => c(CmpOp::Lt),
        IntOp::Le => c(CmpOp::Le),
        IntOp::Gt => c(CmpOp::Gt),
        IntOp::Ge => c(CmpOp::Ge),
    })
}

impl RefInterp {
    pub fn new(program: Arc<TProgram>, locals_bytes: usize) -> Self {
        Self {
            program,
            locals: vec![0; locals_bytes],
            mem_top: 0,
            depth: 0,
            olds: Vec::new(),
            done: None,
        }
    }

    fn load(&self, host: &mut dyn Host, h: u32, o: u32, buf: &mut [u8]) -> Result<(), Trap> {
        match h {
            handle::LOCALS => {
                buf.copy_from_slice(&self.locals[span(self.mem_top as usize, o, buf.len())?]);
                Ok(())
            }
            handle::CONST => {
                buf.copy_from_slice(
                    &self.program.data[span(self.program.data.len(), o, buf.len())?],
                );
                Ok(())
            }
            handle::NULL => Err(Trap::OutOfBounds("null".into())),
            _ => host.load(h, o, buf),
        }
    }

    fn store(&mut self, host: &mut dyn Host, h: u32, o: u32, data: &[u8]) -> Result<(), Trap> {
        match h {
            handle::LOCALS => {
                let r = span(self.mem_top as usize, o, data.len())?;
                self.locals[r].copy_from_slice(data);
                Ok(())
            }
            handle::CONST | handle::NULL => Err(Trap::OutOfBounds("not writable".into())),
            _ => host.store(h, o, data),
        }
    }

    fn load_mem(&self, host: &mut dyn Host, (h, o): (u32, u32), ty: &Ty) -> Result<V, Trap> {
        if *ty == Ty::F64 {
            let mut b = [0u8; 8];
            self.load(host, h, o, &mut b)?;
            Ok(V::F(f64::from_le_bytes(b)))
        } else {
            let mut b = [0u8; 4];
            self.load(host, h, o, &mut b)?;
            Ok(V::I(u32::from_le_bytes(b)))
        }
    }

    fn call(&mut self, host: &mut dyn Host, f: u16, args: Vec<V>) -> Result<V, Trap> {
        let program = Arc::clone(&self.program);
        let func = &program.functions[usize::from(f)];
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Trap::StackOverflow);
        }
        let mem_base = self.mem_top;
        let top = mem_base as usize + func.frame_bytes as usize;
        if top > self.locals.len() {
            return Err(Trap::StackOverflow);
        }
        self.locals[mem_base as usize..top].fill(0);
        self.mem_top = top as u32;
        let mut fr = Frame {
            ints: vec![0; usize::from(func.int_slots)],
            floats: vec![0.0; usize::from(func.float_slots)],
            mem_base,
        };
        let (mut ni, mut nf) = (0, 0);
        for a in args {
            match a {
                V::I(v) => {
                    fr.ints[ni] = v;
                    ni += 1;
                }
                V::P(h, o) => {
                    fr.ints[ni] = h;
                    fr.ints[ni + 1] = o;
                    ni += 2;
                }
                V::F(v) => {
                    fr.floats[nf] = v;
                    nf += 1;
                }
                V::Void => {}
            }
        }
        assert_eq!(
            (ni, nf),
            (usize::from(func.int_params), usize::from(func.float_params))
        );
        self.depth += 1;
        let flow = self.block(host, &mut fr, &func.body);
        self.depth -= 1;
        self.mem_top = mem_base;
        match flow? {
            Flow::Return(v) => Ok(v),
            _ => Ok(zero(&func.ret)),
        }
    }

    fn block(&mut self, host: &mut dyn Host, fr: &mut Frame, body: &[TStmt]) -> Result<Flow, Trap> {
        for s in body {
            match self.stmt(host, fr, s)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, host: &mut dyn Host, fr: &mut Frame, s: &TStmt) -> Result<Flow, Trap> {
        match s {
            TStmt::Expr(e) => {
                self.eval(host, fr, e)?;
                Ok(Flow::Normal)
            }
            TStmt::If(c, t, e) => {
                if self.eval(host, fr, c)?.truthy() {
                    self.block(host, fr, t)
                } else {
                    self.block(host, fr, e)
                }
            }
            TStmt::Loop {
                cond,
                body,
                step,
                post_test,
            } => {
                let mut first = true;
                loop {
                    if !(*post_test && first) {
                        if let Some(c) = cond {
                            if !self.eval(host, fr, c)?.truthy() {
                                break;
                            }
                        }
                    }
                    first = false;
                    match self.block(host, fr, body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        Flow::Normal | Flow::Continue => {}
                    }
                    if let Some(s) = step {
                        self.eval(host, fr, s)?;
                    }
                }
                Ok(Flow::Normal)
            }
            TStmt::Break => Ok(Flow::Break),
            TStmt::Continue => Ok(Flow::Continue),
            TStmt::Return(e) => Ok(Flow::Return(match e {
                Some(e) => self.eval(host, fr, e)?,
                None => V::Void,
            })),
            TStmt::Block(b) => self.block(host, fr, b),
        }
    }

    fn read(&mut self, host: &mut dyn Host, fr: &mut Frame, p: &Place) -> Result<V, Trap> {
        Ok(match p {
            Place::Int(s) => V::I(fr.ints[usize::from(*s)]),
            Place::Float(s) => V::F(fr.floats[usize::from(*s)]),
            Place::Ptr(s) => V::P(fr.ints[usize::from(*s)], fr.ints[usize::from(*s) + 1]),
            Place::Mem(a, ty) => {
                let addr = self.eval(host, fr, a)?.p();
                self.load_mem(host, addr, ty)?
            }
        })
    }

    fn assign(
        &mut self,
        host: &mut dyn Host,
        fr: &mut Frame,
        place: &Place,
        value: &TExpr,
        result: AssignResult,
    ) -> Result<V, Trap> {
        let (old, new) = match place {
            Place::Mem(a, ty) => {
                let addr = self.eval(host, fr, a)?.p();
                let old = if contains_old(value) || result == AssignResult::Old {
                    self.load_mem(host, addr, ty)?
                } else {
                    V::Void
                };
                self.olds.push(old);
                let v = self.eval(host, fr, value);
                self.olds.pop();
                let v = v?;
                match v {
                    V::F(x) => self.store(host, addr.0, addr.1, &x.to_le_bytes())?,
                    V::I(x) => self.store(host, addr.0, addr.1, &x.to_le_bytes())?,
                    other => panic!("memory store of {other:?}"),
                }
                (old, v)
            }
            _ => {
                let old = self.read(host, fr, place)?;
                self.olds.push(old);
                let v = self.eval(host, fr, value);
                self.olds.pop();
                let v = v?;
                match (place, v) {
                    (Place::Int(s), V::I(x)) => fr.ints[usize::from(*s)] = x,
                    (Place::Float(s), V::F(x)) => fr.floats[usize::from(*s)] = x,
                    (Place::Ptr(s), V::P(h, o)) => {
                        fr.ints[usize::from(*s)] = h;
                        fr.ints[usize::from(*s) + 1] = o;
                    }
                    other => panic!("ill-typed assignment {other:?}"),
                }
                (old, v)
            }
        };
        Ok(match result {
            AssignResult::None => V::Void,
            AssignResult::New => new,
            AssignResult::Old => old,
        })
    }

    fn eval(&mut self, host: &mut dyn Host, fr: &mut Frame, e: &TExpr) -> Result<V, Trap> {
        use TKind::*;
        Ok(match &e.kind {
            IntConst(v) => V::I(*v),
            FloatConst(v) => V::F(*v),
            NullPtr => V::P(handle::NULL, 0),
            DataPtr(o) => V::P(handle::CONST, *o),
            FrameAddr(o) => V::P(handle::LOCALS, fr.mem_base.wrapping_add(*o)),
            Read(p) => self.read(host, fr, p)?,
            IntUn(op, a) => {
                let a = self.eval(host, fr, a)?.i();
                V::I(match op {
                    IntUnOp::Neg => a.wrapping_neg(),
                    IntUnOp::Not => !a,
                    IntUnOp::LNot => u32::from(a == 0),
                })
            }
            FNeg(a) => V::F(-self.eval(host, fr, a)?.f()),
            IntBin { op, signed, a, b } => {
                let a = self.eval(host, fr, a)?.i();
                let b = self.eval(host, fr, b)?.i();
                V::I(int_op(*op, *signed, a, b)?)
            }
            FloatBin(op, a, b) => {
                let a = self.eval(host, fr, a)?.f();
                let b = self.eval(host, fr, b)?.f();
                V::F(match op {
                    FloatOp::Add => a + b,
                    FloatOp::Sub => a - b,
                    FloatOp::Mul => a * b,
                    FloatOp::Div => a / b,
                })
            }
            FloatCmp(op, a, b) => {
                let a = self.eval(host, fr, a)?.f();
                let b = self.eval(host, fr, b)?.f();
                V::I(cmp(*op, a, b))
            }
            Conv(c, a) => {
                let a = self.eval(host, fr, a)?;
                match c {
                    qtask_core::compiler::ir::Conv::I2F => V::F(f64::from(a.i() as i32)),
                    qtask_core::compiler::ir::Conv::U2F => V::F(f64::from(a.i())),
                    qtask_core::compiler::ir::Conv::F2I => V::I(a.f() as i32 as u32),
                    qtask_core::compiler::ir::Conv::F2U => V::I(a.f() as u32),
                }
            }
            PtrNonNull(a) => V::I(u32::from(self.eval(host, fr, a)?.p().0 != 0)),
            PtrOffset(p, off) => {
                let (h, o) = self.eval(host, fr, p)?.p();
                let d = self.eval(host, fr, off)?.i();
                V::P(h, o.wrapping_add(d))
            }
            PtrCmp(op, a, b) => {
                let a = self.eval(host, fr, a)?.p();
                let b = self.eval(host, fr, b)?.p();
                V::I(match op {
                    CmpOp::Eq => u32::from(a == b),
                    CmpOp::Ne => u32::from(a != b),
                    _ => cmp(*op, a.1, b.1),
                })
            }
            PtrDiff { a, b, elem } => {
                let a = self.eval(host, fr, a)?.p().1;
                let b = self.eval(host, fr, b)?.p().1;
                let d = a.wrapping_sub(b);
                V::I(if *elem == 1 {
                    d
                } else {
                    (d as i32).wrapping_div(*elem as i32) as u32
                })
            }
            LogAnd(a, b) => V::I(u32::from(
                self.eval(host, fr, a)?.truthy() && self.eval(host, fr, b)?.truthy(),
            )),
            LogOr(a, b) => V::I(u32::from(
                self.eval(host, fr, a)?.truthy() || self.eval(host, fr, b)?.truthy(),
            )),
            Cond(c, a, b) => {
                if self.eval(host, fr, c)?.truthy() {
                    self.eval(host, fr, a)?
                } else {
                    self.eval(host, fr, b)?
                }
            }
            Call(f, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(host, fr, a)?);
                }
                self.call(host, *f, vals)?
            }
            Host(id, args) => {
                let (mut ints, mut floats) = (Vec::new(), Vec::new());
                for a in args {
                    match self.eval(host, fr, a)? {
                        V::I(v) => ints.push(v),
                        V::P(h, o) => ints.extend([h, o]),
                        V::F(v) => floats.push(v),
                        V::Void => {}
                    }
                }
                let program = Arc::clone(&self.program);
                let mut view = View {
                    locals: &mut self.locals[..self.mem_top as usize],
                    data: &program.data,
                };
                match host.host_call(*id, &ints, &floats, &mut view)? {
                    HostValue::Unit => V::Void,
                    HostValue::Int(v) => V::I(v),
                    HostValue::Ptr(h, o) => V::P(h, o),
                }
            }
            Assign {
                place,
                value,
                result,
            } => self.assign(host, fr, place, value, *result)?,
            Old => *self.olds.last().expect("Old outside an assignment"),
            Comma(a, b) => {
                self.eval(host, fr, a)?;
                self.eval(host, fr, b)?
            }
            Discard(a) => {
                self.eval(host, fr, a)?;
                V::Void
            }
        })
    }
}

impl Executor for RefInterp {
    fn run(&mut self, host: &mut dyn Host) -> Exit {
        if let Some(d) = &self.done {
            return d.clone();
        }
        let exit = match self.call(host, 0, Vec::new()) {
            Ok(V::I(c)) => Exit::Returned(c as i32),
            Ok(_) => Exit::Returned(0),
            Err(t) => Exit::Trapped(t),
        };
        self.done = Some(exit.clone());
        exit
    }
}
