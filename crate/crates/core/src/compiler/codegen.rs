//! Bytecode generation from the typed IR.

use std::collections::{HashMap, HashSet};

use super::ir::*;
use crate::vm::bytecode::{Bytecode, Function, Instr};
use crate::vm::handle;

type Label = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Item {
    Ins(Instr),
    Jmp(Label),
    Jz(Label),
    Jnz(Label),
    Label(Label),
}

impl Item {
    fn is_terminator(&self) -> bool {
        match self {
            Item::Jmp(_) => true,
            Item::Ins(i) => i.is_terminator(),
            _ => false,
        }
    }
}

#[derive(Default)]
struct Pools {
    words: Vec<u32>,
    word_idx: HashMap<u32, u16>,
    floats: Vec<f64>,
    float_idx: HashMap<u64, u16>,
}

impl Pools {
    fn word(&mut self, v: u32) -> u16 {
        *self.word_idx.entry(v).or_insert_with(|| {
            self.words.push(v);
            (self.words.len() - 1) as u16
        })
    }

    fn float(&mut self, v: f64) -> u16 {
        *self.float_idx.entry(v.to_bits()).or_insert_with(|| {
            self.floats.push(v);
            (self.floats.len() - 1) as u16
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum OldSrc {
    Int(u16),
    Float(u16),
    Ptr(u16),
}

pub fn generate(p: &TProgram, optimize: bool) -> Bytecode {
    let mut pools = Pools::default();
    let mut code = Vec::new();
    let mut functions = Vec::with_capacity(p.functions.len());
    for f in &p.functions {
        let mut g = FnGen {
            items: Vec::new(),
            next_label: 0,
            pools: &mut pools,
            int_base: f.int_slots,
            float_base: f.float_slots,
            int_tmp: 0,
            float_tmp: 0,
            int_max: f.int_slots,
            float_max: f.float_slots,
            loops: Vec::new(),
            old: Vec::new(),
        };
        for s in &f.body {
            g.stmt(s);
        }
        g.default_return(&f.ret);
        let mut items = std::mem::take(&mut g.items);
        if optimize {
            peephole(&mut items);
        }
        let offset = code.len() as u32;
        assemble(&items, offset, &mut code);
        let (ret_ints, ret_floats) = ret_shape(&f.ret);
        functions.push(Function {
            name: f.name.clone(),
            code_offset: offset,
            code_len: code.len() as u32 - offset,
            int_params: f.int_params,
            float_params: f.float_params,
            int_slots: g.int_max,
            float_slots: g.float_max,
            frame_bytes: f.frame_bytes,
            ret_ints,
            ret_floats,
        });
    }
    Bytecode {
        words: pools.words,
        floats: pools.floats,
        data: p.data.clone(),
        code,
        functions,
    }
}

fn ret_shape(t: &Ty) -> (u8, u8) {
    match t.kind() {
        ValKind::Void => (0, 0),
        ValKind::Int => (1, 0),
        ValKind::Float => (0, 1),
        ValKind::Ptr => (2, 0),
    }
}

fn assemble(items: &[Item], base: u32, out: &mut Vec<u8>) {
    let mut labels = HashMap::new();
    let mut pc = base;
    for it in items {
        match it {
            Item::Label(l) => {
                labels.insert(*l, pc);
            }
            Item::Ins(i) => pc += i.size() as u32,
            _ => pc += 5,
        }
    }
    for it in items {
        let ins = match *it {
            Item::Label(_) => continue,
            Item::Ins(i) => i,
            Item::Jmp(l) => Instr::Jmp(labels[&l]),
            Item::Jz(l) => Instr::Jz(labels[&l]),
            Item::Jnz(l) => Instr::Jnz(labels[&l]),
        };
        ins.encode(out);
    }
}

/// Removes jumps to the next instruction and code that cannot be reached.
fn peephole(items: &mut Vec<Item>) {
    loop {
        let before = items.len();
        let targets: HashSet<Label> = items
            .iter()
            .filter_map(|i| match i {
                Item::Jmp(l) | Item::Jz(l) | Item::Jnz(l) => Some(*l),
                _ => None,
            })
            .collect();
        let mut out = Vec::with_capacity(items.len());
        let mut dead = false;
        for (n, it) in items.iter().enumerate() {
            match it {
                Item::Label(l) => {
                    if targets.contains(l) {
                        dead = false;
                        out.push(*it);
                    }
                }
                _ if dead => {}
                Item::Jmp(l) => {
                    let falls_into = items[n + 1..]
                        .iter()
                        .take_while(|i| matches!(i, Item::Label(_)))
                        .any(|i| *i == Item::Label(*l));
                    if !falls_into {
                        out.push(*it);
                        dead = true;
                    }
                }
                _ => {
                    dead = it.is_terminator();
                    out.push(*it);
                }
            }
        }
        *items = out;
        if items.len() == before {
            break;
        }
    }
}

struct FnGen<'p> {
    items: Vec<Item>,
    next_label: Label,
    pools: &'p mut Pools,
    int_base: u16,
    float_base: u16,
    int_tmp: u16,
    float_tmp: u16,
    int_max: u16,
    float_max: u16,
    /// (break, continue) targets.
    loops: Vec<(Label, Label)>,
    old: Vec<OldSrc>,
}

fn contains_old(e: &TExpr) -> bool {
    use TKind::*;
    match &e.kind {
        Old => true,
        IntConst(_) | FloatConst(_) | NullPtr | DataPtr(_) | FrameAddr(_) | Assign { .. } => false,
        Read(Place::Mem(a, _)) => contains_old(a),
        Read(_) => false,
        IntUn(_, a) | FNeg(a) | Conv(_, a) | PtrNonNull(a) | Discard(a) => contains_old(a),
        IntBin { a, b, .. }
        | FloatBin(_, a, b)
        | FloatCmp(_, a, b)
        | PtrOffset(a, b)
        | PtrCmp(_, a, b)
        | PtrDiff { a, b, .. }
        | LogAnd(a, b)
        | LogOr(a, b)
        | Comma(a, b) => contains_old(a) || contains_old(b),
        Cond(c, a, b) => contains_old(c) || contains_old(a) || contains_old(b),
        Call(_, args) | Host(_, args) => args.iter().any(contains_old),
    }
}

impl FnGen<'_> {
    fn emit(&mut self, i: Instr) {
        self.items.push(Item::Ins(i));
    }

    fn label(&mut self) -> Label {
        self.next_label += 1;
        self.next_label - 1
    }

    fn place_label(&mut self, l: Label) {
        self.items.push(Item::Label(l));
    }

    fn tmp_int(&mut self) -> u16 {
        let s = self.int_base + self.int_tmp;
        self.int_tmp += 1;
        self.int_max = self.int_max.max(s + 1);
        s
    }

    fn tmp_float(&mut self) -> u16 {
        let s = self.float_base + self.float_tmp;
        self.float_tmp += 1;
        self.float_max = self.float_max.max(s + 1);
        s
    }

    fn free_int(&mut self, n: u16) {
        self.int_tmp -= n;
    }

    fn free_float(&mut self) {
        self.float_tmp -= 1;
    }

    fn iconst(&mut self, v: u32) {
        let i = self.pools.word(v);
        self.emit(Instr::IConst(i));
    }

    fn fconst(&mut self, v: f64) {
        let i = self.pools.float(v);
        self.emit(Instr::FConst(i));
    }

    fn default_return(&mut self, ret: &Ty) {
        match ret.kind() {
            ValKind::Void => {}
            ValKind::Int => self.iconst(0),
            ValKind::Float => self.fconst(0.0),
            ValKind::Ptr => {
                self.iconst(0);
                self.iconst(0);
            }
        }
        let (ints, floats) = ret_shape(ret);
        self.emit(Instr::Ret { ints, floats });
    }

    fn stmt(&mut self, s: &TStmt) {
        match s {
            TStmt::Expr(e) => self.discard(e),
            TStmt::Block(b) => b.iter().for_each(|s| self.stmt(s)),
            TStmt::If(c, a, b) => {
                let (els, end) = (self.label(), self.label());
                self.expr(c);
                self.items.push(Item::Jz(els));
                a.iter().for_each(|s| self.stmt(s));
                if !b.is_empty() {
                    self.items.push(Item::Jmp(end));
                }
                self.place_label(els);
                b.iter().for_each(|s| self.stmt(s));
                self.place_label(end);
            }
            TStmt::Loop {
                cond,
                body,
                step,
                post_test,
            } => {
                let (top, cont, test, brk) =
                    (self.label(), self.label(), self.label(), self.label());
                if cond.is_some() && !post_test {
                    self.items.push(Item::Jmp(test));
                }
                self.place_label(top);
                self.loops.push((brk, cont));
                body.iter().for_each(|s| self.stmt(s));
                self.loops.pop();
                self.place_label(cont);
                if let Some(step) = step {
                    self.discard(step);
                }
                self.place_label(test);
                match cond {
                    Some(c) => {
                        self.expr(c);
                        self.items.push(Item::Jnz(top));
                    }
                    None => self.items.push(Item::Jmp(top)),
                }
                self.place_label(brk);
            }
            TStmt::Break => {
                let (brk, _) = *self.loops.last().expect("break inside loop");
                self.items.push(Item::Jmp(brk));
            }
            TStmt::Continue => {
                let (_, cont) = *self.loops.last().expect("continue inside loop");
                self.items.push(Item::Jmp(cont));
            }
            TStmt::Return(v) => {
                let (ints, floats) = match v {
                    Some(v) => {
                        self.expr(v);
                        ret_shape(&v.ty)
                    }
                    None => (0, 0),
                };
                self.emit(Instr::Ret { ints, floats });
            }
        }
    }

    fn drop_value(&mut self, k: ValKind) {
        match k {
            ValKind::Void => {}
            ValKind::Int => self.emit(Instr::Drop),
            ValKind::Float => self.emit(Instr::FDrop),
            ValKind::Ptr => {
                self.emit(Instr::Drop);
                self.emit(Instr::Drop);
            }
        }
    }

    /// Evaluates for side effects only.
    fn discard(&mut self, e: &TExpr) {
        match &e.kind {
            TKind::Assign { place, value, .. } => self.assign(place, value, AssignResult::None),
            TKind::Comma(a, b) => {
                self.discard(a);
                self.discard(b);
            }
            TKind::Discard(a) => self.discard(a),
            _ => {
                self.expr(e);
                self.drop_value(e.ty.kind());
            }
        }
    }

    fn read(&mut self, p: &Place) {
        match p {
            Place::Int(s) => self.emit(Instr::LoadL(*s)),
            Place::Float(s) => self.emit(Instr::FLoadL(*s)),
            Place::Ptr(s) => {
                self.emit(Instr::LoadL(*s));
                self.emit(Instr::LoadL(*s + 1));
            }
            Place::Mem(addr, t) => {
                self.expr(addr);
                self.emit(if *t == Ty::F64 {
                    Instr::LdF64
                } else {
                    Instr::Ld32
                });
            }
        }
    }

    fn assign(&mut self, place: &Place, value: &TExpr, result: AssignResult) {
        let (slot_src, store): (Option<OldSrc>, fn(&mut Self, u16)) = match place {
            Place::Int(s) => (Some(OldSrc::Int(*s)), |g, s| g.emit(Instr::StoreL(s))),
            Place::Float(s) => (Some(OldSrc::Float(*s)), |g, s| g.emit(Instr::FStoreL(s))),
            Place::Ptr(s) => (Some(OldSrc::Ptr(*s)), |g, s| {
                g.emit(Instr::StoreL(s + 1));
                g.emit(Instr::StoreL(s));
            }),
            Place::Mem(..) => (None, |_, _| {}),
        };
        if let Some(src) = slot_src {
            let slot = match src {
                OldSrc::Int(s) | OldSrc::Float(s) | OldSrc::Ptr(s) => s,
            };
            if result == AssignResult::Old {
                self.read(place);
            }
            self.old.push(src);
            self.expr(value);
            self.old.pop();
            store(self, slot);
            if result == AssignResult::New {
                self.read(place);
            }
            return;
        }

        let Place::Mem(addr, ty) = place else {
            unreachable!()
        };
        let float = *ty == Ty::F64;
        let st = if float { Instr::StF64 } else { Instr::St32 };
        let needs_old = contains_old(value) || result == AssignResult::Old;
        if !needs_old {
            self.expr(addr);
            self.expr(value);
            match result {
                AssignResult::None => self.emit(st),
                _ => {
                    let t = if float {
                        self.tmp_float()
                    } else {
                        self.tmp_int()
                    };
                    self.emit(if float {
                        Instr::FStoreL(t)
                    } else {
                        Instr::StoreL(t)
                    });
                    self.emit(if float {
                        Instr::FLoadL(t)
                    } else {
                        Instr::LoadL(t)
                    });
                    self.emit(st);
                    self.emit(if float {
                        Instr::FLoadL(t)
                    } else {
                        Instr::LoadL(t)
                    });
                    if float {
                        self.free_float()
                    } else {
                        self.free_int(1)
                    }
                }
            }
            return;
        }

        // Address into temps, old value into a temp, then store.
        let th = self.tmp_int();
        let to = self.tmp_int();
        self.expr(addr);
        self.emit(Instr::StoreL(to));
        self.emit(Instr::StoreL(th));
        self.emit(Instr::LoadL(th));
        self.emit(Instr::LoadL(to));
        let old = if float {
            let t = self.tmp_float();
            self.emit(Instr::LdF64);
            self.emit(Instr::FStoreL(t));
            OldSrc::Float(t)
        } else {
            let t = self.tmp_int();
            self.emit(Instr::Ld32);
            self.emit(Instr::StoreL(t));
            OldSrc::Int(t)
        };
        self.emit(Instr::LoadL(th));
        self.emit(Instr::LoadL(to));
        self.old.push(old);
        self.expr(value);
        self.old.pop();
        match result {
            AssignResult::None => self.emit(st),
            AssignResult::Old => {
                self.emit(st);
                self.load_old(old);
            }
            AssignResult::New => {
                // Reuse the old-value temp for the new value.
                match old {
                    OldSrc::Float(t) => {
                        self.emit(Instr::FStoreL(t));
                        self.emit(Instr::FLoadL(t));
                    }
                    OldSrc::Int(t) => {
                        self.emit(Instr::StoreL(t));
                        self.emit(Instr::LoadL(t));
                    }
                    OldSrc::Ptr(_) => unreachable!(),
                }
                self.emit(st);
                self.load_old(old);
            }
        }
        if float {
            self.free_float();
            self.free_int(2);
        } else {
            self.free_int(3);
        }
    }

    fn load_old(&mut self, src: OldSrc) {
        match src {
            OldSrc::Int(s) => self.emit(Instr::LoadL(s)),
            OldSrc::Float(s) => self.emit(Instr::FLoadL(s)),
            OldSrc::Ptr(s) => {
                self.emit(Instr::LoadL(s));
                self.emit(Instr::LoadL(s + 1));
            }
        }
    }

    fn expr(&mut self, e: &TExpr) {
        use TKind::*;
        match &e.kind {
            IntConst(v) => self.iconst(*v),
            FloatConst(v) => self.fconst(*v),
            NullPtr => {
                self.iconst(handle::NULL);
                self.iconst(0);
            }
            DataPtr(o) => {
                self.iconst(handle::CONST);
                self.iconst(*o);
            }
            FrameAddr(o) => self.emit(Instr::FrameAddr(*o)),
            Read(p) => self.read(p),
            Old => {
                let src = *self.old.last().expect("old value outside assignment");
                self.load_old(src);
            }
            IntUn(op, a) => {
                self.expr(a);
                self.emit(match op {
                    IntUnOp::Neg => Instr::Neg,
                    IntUnOp::Not => Instr::Not,
                    IntUnOp::LNot => Instr::LNot,
                });
            }
            FNeg(a) => {
                self.expr(a);
                self.emit(Instr::FNeg);
            }
            IntBin { op, signed, a, b } => {
                self.expr(a);
                self.expr(b);
                self.emit(int_instr(*op, *signed));
            }
            FloatBin(op, a, b) => {
                self.expr(a);
                self.expr(b);
                self.emit(match op {
                    FloatOp::Add => Instr::FAdd,
                    FloatOp::Sub => Instr::FSub,
                    FloatOp::Mul => Instr::FMul,
                    FloatOp::Div => Instr::FDiv,
                });
            }
            FloatCmp(op, a, b) => {
                self.expr(a);
                self.expr(b);
                self.emit(match op {
                    CmpOp::Eq => Instr::FEq,
                    CmpOp::Ne => Instr::FNe,
                    CmpOp::Lt => Instr::FLt,
                    CmpOp::Le => Instr::FLe,
                    CmpOp::Gt => Instr::FGt,
                    CmpOp::Ge => Instr::FGe,
                });
            }
            Conv(c, a) => {
                self.expr(a);
                self.emit(match c {
                    super::ir::Conv::I2F => Instr::I2F,
                    super::ir::Conv::U2F => Instr::U2F,
                    super::ir::Conv::F2I => Instr::F2I,
                    super::ir::Conv::F2U => Instr::F2U,
                });
            }
            PtrNonNull(a) => {
                self.expr(a);
                self.emit(Instr::Drop);
                self.iconst(0);
                self.emit(Instr::Ne);
            }
            PtrOffset(p, off) => {
                self.expr(p);
                self.expr(off);
                self.emit(Instr::Add);
            }
            PtrCmp(op, a, b) => {
                self.expr(a);
                self.expr(b);
                match op {
                    CmpOp::Eq | CmpOp::Ne => {
                        let (th, to) = (self.tmp_int(), self.tmp_int());
                        self.emit(Instr::StoreL(to));
                        self.emit(Instr::StoreL(th));
                        self.emit(Instr::LoadL(to));
                        self.emit(Instr::Eq);
                        self.emit(Instr::Swap);
                        self.emit(Instr::LoadL(th));
                        self.emit(Instr::Eq);
                        self.emit(Instr::And);
                        if *op == CmpOp::Ne {
                            self.emit(Instr::LNot);
                        }
                        self.free_int(2);
                    }
                    _ => {
                        self.offsets_only();
                        self.emit(match op {
                            CmpOp::Lt => Instr::LtU,
                            CmpOp::Le => Instr::LeU,
                            CmpOp::Gt => Instr::GtU,
                            _ => Instr::GeU,
                        });
                    }
                }
            }
            PtrDiff { a, b, elem } => {
                self.expr(a);
                self.expr(b);
                self.offsets_only();
                self.emit(Instr::Sub);
                if *elem != 1 {
                    self.iconst(*elem);
                    self.emit(Instr::DivS);
                }
            }
            LogAnd(a, b) | LogOr(a, b) => {
                let and = matches!(e.kind, LogAnd(..));
                let (short, end) = (self.label(), self.label());
                let jump = |l| if and { Item::Jz(l) } else { Item::Jnz(l) };
                self.expr(a);
                self.items.push(jump(short));
                self.expr(b);
                self.items.push(jump(short));
                self.iconst(u32::from(and));
                self.items.push(Item::Jmp(end));
                self.place_label(short);
                self.iconst(u32::from(!and));
                self.place_label(end);
            }
            Cond(c, a, b) => {
                let (els, end) = (self.label(), self.label());
                self.expr(c);
                self.items.push(Item::Jz(els));
                self.expr(a);
                self.items.push(Item::Jmp(end));
                self.place_label(els);
                self.expr(b);
                self.place_label(end);
            }
            Call(f, args) => {
                args.iter().for_each(|a| self.expr(a));
                self.emit(Instr::Call(*f));
            }
            Host(id, args) => {
                let (mut ints, mut floats) = (0u8, 0u8);
                for a in args {
                    self.expr(a);
                    match a.ty.kind() {
                        ValKind::Int => ints += 1,
                        ValKind::Ptr => ints += 2,
                        ValKind::Float => floats += 1,
                        ValKind::Void => {}
                    }
                }
                self.emit(Instr::HostCall {
                    id: *id,
                    ints,
                    floats,
                });
            }
            Assign {
                place,
                value,
                result,
            } => self.assign(place, value, *result),
            Comma(a, b) => {
                self.discard(a);
                self.expr(b);
            }
            Discard(a) => self.discard(a),
        }
    }

    /// `[h1, o1, h2, o2]` to `[o1, o2]`.
    fn offsets_only(&mut self) {
        let t = self.tmp_int();
        self.emit(Instr::StoreL(t));
        self.emit(Instr::Drop);
        self.emit(Instr::Swap);
        self.emit(Instr::Drop);
        self.emit(Instr::LoadL(t));
        self.free_int(1);
    }
}

fn int_instr(op: IntOp, signed: bool) -> Instr {
    use Instr as I;
    match (op, signed) {
        (IntOp::Add, _) => I::Add,
        (IntOp::Sub, _) => I::Sub,
        (IntOp::Mul, _) => I::Mul,
        (IntOp::Div, true) => I::DivS,
        (IntOp::Div, false) => I::DivU,
        (IntOp::Rem, true) => I::RemS,
        (IntOp::Rem, false) => I::RemU,
        (IntOp::And, _) => I::And,
        (IntOp::Or, _) => I::Or,
        (IntOp::Xor, _) => I::Xor,
        (IntOp::Shl, _) => I::Shl,
        (IntOp::Shr, true) => I::ShrS,
        (IntOp::Shr, false) => I::ShrU,
        (IntOp::Eq, _) => I::Eq,
        (IntOp::Ne, _) => I::Ne,
        (IntOp::Lt, true) => I::LtS,
        (IntOp::Lt, false) => I::LtU,
        (IntOp::Le, true) => I::LeS,
        (IntOp::Le, false) => I::LeU,
        (IntOp::Gt, true) => I::GtS,
        (IntOp::Gt, false) => I::GtU,
        (IntOp::Ge, true) => I::GeS,
        (IntOp::Ge, false) => I::GeU,
    }
}
