//! Name resolution, type checking and lowering to the typed IR.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::diag::{Diagnostic, Span};
use super::ir::*;
use super::optimize::fold_expr;
use crate::vm::hostcalls::{self, Kind};
use crate::vm::printf;

pub const ENTRY_NAME: &str = "task_entry";
const MAX_ARRAY_LEN: u32 = 1 << 20;

type SResult<T> = Result<T, ()>;

#[derive(Debug, Clone)]
struct Sig {
    index: u16,
    ret: Ty,
    params: Vec<Ty>,
    defined: bool,
}

#[derive(Debug, Clone)]
enum Var {
    Int(u16, Ty),
    Float(u16),
    Ptr(u16, Ty),
    Frame(u32, Ty),
    Const(TExpr),
}

enum Lv {
    Place(Place, Ty),
    /// Aggregate (struct or array) in memory at the given address.
    Obj(TExpr, Ty),
}

pub fn analyze(unit: &Unit, diags: &mut Vec<Diagnostic>) -> Option<TProgram> {
    let mut s = Sema {
        sigs: HashMap::new(),
        consts: HashMap::new(),
        data: Vec::new(),
        strings: HashMap::new(),
        diags,
        f: FnCtx::default(),
    };
    s.collect_signatures(unit);
    let mut functions: Vec<Option<TFunction>> =
        vec![None; s.sigs.values().filter(|g| g.defined).count()];
    for item in &unit.items {
        if let Item::Const {
            name,
            ty,
            value,
            span,
        } = item
        {
            s.global_const(name, ty, value, *span);
        }
    }
    for item in &unit.items {
        match item {
            Item::Const { .. } => {}
            Item::Function(def) => {
                let Some(index) = s.sigs.get(&def.name).map(|g| g.index) else {
                    continue;
                };
                if functions[usize::from(index)].is_none() {
                    functions[usize::from(index)] = s.function(def);
                }
            }
            Item::Prototype(_) => {}
        }
    }
    if s.diags
        .iter()
        .any(|d| d.severity == super::diag::Severity::Error)
    {
        return None;
    }
    let functions = functions.into_iter().collect::<Option<Vec<_>>>()?;
    Some(TProgram {
        functions,
        data: s.data,
    })
}

#[derive(Default)]
struct FnCtx {
    scopes: Vec<HashMap<String, Var>>,
    next_int: u16,
    next_float: u16,
    frame: u32,
    ret: Option<Ty>,
    addr_taken: HashSet<String>,
    loops: u32,
}

struct Sema<'d> {
    sigs: HashMap<String, Sig>,
    consts: HashMap<String, TExpr>,
    data: Vec<u8>,
    strings: HashMap<Vec<u8>, u32>,
    diags: &'d mut Vec<Diagnostic>,
    f: FnCtx,
}

fn lower_type(t: &TypeName) -> Ty {
    match t {
        TypeName::Void => Ty::Void,
        TypeName::I32 => Ty::I32,
        TypeName::U32 => Ty::U32,
        TypeName::F64 => Ty::F64,
        TypeName::IqPair => Ty::IqPair,
        TypeName::Ptr(t) => Ty::Ptr(Box::new(lower_type(t))),
    }
}

fn collect_addr_taken(stmts: &[Stmt], out: &mut HashSet<String>) {
    fn expr(e: &Expr, out: &mut HashSet<String>) {
        use ExprKind::*;
        match &e.kind {
            Unary(UnOp::AddrOf, inner) => {
                if let Ident(n) = &inner.kind {
                    out.insert(n.clone());
                }
                expr(inner, out);
            }
            Unary(_, a) | Cast(_, a) | SizeofExpr(a) | IncDec { target: a, .. } => expr(a, out),
            Binary(_, a, b) | Assign(_, a, b) | Index(a, b) | Comma(a, b) => {
                expr(a, out);
                expr(b, out);
            }
            Cond(a, b, c) => {
                expr(a, out);
                expr(b, out);
                expr(c, out);
            }
            Call(_, args) => args.iter().for_each(|a| expr(a, out)),
            Member { base, .. } => expr(base, out),
            Int { .. } | Float(_) | Str(_) | Ident(_) | SizeofType(_) => {}
        }
    }
    fn stmt(s: &Stmt, out: &mut HashSet<String>) {
        match &s.kind {
            StmtKind::Decl(ds) => {
                for d in ds {
                    match &d.init {
                        Some(Init::Expr(e)) => expr(e, out),
                        Some(Init::List(l, _)) => l.iter().for_each(|e| expr(e, out)),
                        None => {}
                    }
                }
            }
            StmtKind::Expr(e) => expr(e, out),
            StmtKind::If(c, a, b) => {
                expr(c, out);
                stmt(a, out);
                if let Some(b) = b {
                    stmt(b, out);
                }
            }
            StmtKind::While(c, b) | StmtKind::DoWhile(b, c) => {
                expr(c, out);
                stmt(b, out);
            }
            StmtKind::For(i, c, st, b) => {
                if let Some(i) = i {
                    stmt(i, out);
                }
                if let Some(c) = c {
                    expr(c, out);
                }
                if let Some(st) = st {
                    expr(st, out);
                }
                stmt(b, out);
            }
            StmtKind::Return(Some(e)) => expr(e, out),
            StmtKind::Block(b) => b.iter().for_each(|s| stmt(s, out)),
            _ => {}
        }
    }
    stmts.iter().for_each(|s| stmt(s, out));
}

fn int_op(op: BinOp) -> IntOp {
    match op {
        BinOp::Add => IntOp::Add,
        BinOp::Sub => IntOp::Sub,
        BinOp::Mul => IntOp::Mul,
        BinOp::Div => IntOp::Div,
        BinOp::Rem => IntOp::Rem,
        BinOp::Shl => IntOp::Shl,
        BinOp::Shr => IntOp::Shr,
        BinOp::BitAnd => IntOp::And,
        BinOp::BitOr => IntOp::Or,
        BinOp::BitXor => IntOp::Xor,
        BinOp::Eq => IntOp::Eq,
        BinOp::Ne => IntOp::Ne,
        BinOp::Lt => IntOp::Lt,
        BinOp::Le => IntOp::Le,
        BinOp::Gt => IntOp::Gt,
        BinOp::Ge => IntOp::Ge,
        BinOp::And | BinOp::Or => unreachable!("logical operators are lowered separately"),
    }
}

fn cmp_op(op: BinOp) -> CmpOp {
    match op {
        BinOp::Eq => CmpOp::Eq,
        BinOp::Ne => CmpOp::Ne,
        BinOp::Lt => CmpOp::Lt,
        BinOp::Le => CmpOp::Le,
        BinOp::Gt => CmpOp::Gt,
        _ => CmpOp::Ge,
    }
}

fn op_str(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        BinOp::Rem => "%",
        BinOp::Shl => "<<",
        BinOp::Shr => ">>",
        BinOp::BitAnd => "&",
        BinOp::BitOr => "|",
        BinOp::BitXor => "^",
        BinOp::Eq => "==",
        BinOp::Ne => "!=",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
        BinOp::And => "&&",
        BinOp::Or => "||",
    }
}

fn is_null_const(e: &TExpr) -> bool {
    e.ty.is_int() && e.as_int_const() == Some(0)
}

/// Converts between arithmetic types.
pub fn convert(e: TExpr, to: &Ty) -> TExpr {
    let conv = match (&e.ty, to) {
        (a, b) if a == b => return e,
        (Ty::I32 | Ty::U32, Ty::I32 | Ty::U32) => {
            return TExpr {
                ty: to.clone(),
                ..e
            }
        }
        (Ty::I32, Ty::F64) => Conv::I2F,
        (Ty::U32, Ty::F64) => Conv::U2F,
        (Ty::F64, Ty::I32) => Conv::F2I,
        (Ty::F64, Ty::U32) => Conv::F2U,
        (a, b) => unreachable!("no conversion from {a} to {b}"),
    };
    TExpr::new(TKind::Conv(conv, Box::new(e)), to.clone())
}

/// Integer truth value (0 or nonzero) of a scalar.
pub fn truth(e: TExpr) -> TExpr {
    match e.ty {
        Ty::F64 => TExpr::new(
            TKind::FloatCmp(
                CmpOp::Ne,
                Box::new(e),
                Box::new(TExpr::new(TKind::FloatConst(0.0), Ty::F64)),
            ),
            Ty::I32,
        ),
        Ty::Ptr(_) => TExpr::new(TKind::PtrNonNull(Box::new(e)), Ty::I32),
        _ => e,
    }
}

fn usual(a: &Ty, b: &Ty) -> Ty {
    if *a == Ty::F64 || *b == Ty::F64 {
        Ty::F64
    } else if *a == Ty::U32 || *b == Ty::U32 {
        Ty::U32
    } else {
        Ty::I32
    }
}

impl<'d> Sema<'d> {
    fn err(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, msg));
    }

    fn warn(&mut self, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(span, msg));
    }

    fn collect_signatures(&mut self, unit: &Unit) {
        let entry_def = unit.items.iter().find_map(|i| match i {
            Item::Function(f) if f.name == ENTRY_NAME => Some(f),
            _ => None,
        });
        match entry_def {
            None => self.err(
                Span { line: 1, col: 1 },
                format!("missing `int {ENTRY_NAME}()`"),
            ),
            Some(f) => {
                if !f.params.is_empty() || !matches!(f.ret, TypeName::I32 | TypeName::U32) {
                    self.err(
                        f.span,
                        format!("`{ENTRY_NAME}` must have the signature `int {ENTRY_NAME}()`"),
                    );
                }
                self.sigs.insert(
                    f.name.clone(),
                    Sig {
                        index: 0,
                        ret: Ty::I32,
                        params: Vec::new(),
                        defined: true,
                    },
                );
            }
        }
        let mut next = 1u16;
        let mut entry_defs = 0;
        for item in &unit.items {
            let (def, defined) = match item {
                Item::Function(f) => (f, true),
                Item::Prototype(f) => (f, false),
                Item::Const { .. } => continue,
            };
            if hostcalls::by_name(&def.name).is_some() {
                self.err(
                    def.span,
                    format!("`{}` is a host function and cannot be redefined", def.name),
                );
                continue;
            }
            let ret = lower_type(&def.ret);
            let params: Vec<Ty> = def.params.iter().map(|p| lower_type(&p.ty)).collect();
            if matches!(ret, Ty::IqPair) {
                self.err(def.span, "functions cannot return structs");
            }
            for (p, t) in def.params.iter().zip(&params) {
                if !(t.is_arith() || t.is_ptr()) {
                    self.err(
                        p.span,
                        format!("parameter `{}` has unsupported type {t}", p.name),
                    );
                }
            }
            if def.name == ENTRY_NAME {
                if defined {
                    entry_defs += 1;
                    if entry_defs > 1 {
                        self.err(def.span, format!("redefinition of `{ENTRY_NAME}`"));
                    }
                }
                continue;
            }
            let mut errors = Vec::new();
            match self.sigs.get_mut(&def.name) {
                Some(existing) => {
                    if existing.ret != ret || existing.params != params {
                        errors.push(format!("conflicting declaration of `{}`", def.name));
                    }
                    if defined && existing.defined {
                        errors.push(format!("redefinition of `{}`", def.name));
                    }
                    if defined && !existing.defined {
                        existing.defined = true;
                        existing.index = next;
                        next += 1;
                    }
                }
                None => {
                    let index = if defined {
                        next += 1;
                        next - 1
                    } else {
                        u16::MAX
                    };
                    self.sigs.insert(
                        def.name.clone(),
                        Sig {
                            index,
                            ret,
                            params,
                            defined,
                        },
                    );
                }
            }
            for e in errors {
                self.err(def.span, e);
            }
        }
    }

    fn global_const(&mut self, name: &str, ty: &TypeName, value: &Expr, span: Span) {
        let ty = lower_type(ty);
        if !ty.is_arith() {
            return self.err(span, "constants must have an arithmetic type");
        }
        self.f = FnCtx::default();
        let Ok(v) = self.expr(value) else { return };
        if !v.ty.is_arith() {
            return self.err(value.span, "constant initializer must be arithmetic");
        }
        let v = fold_expr(convert(v, &ty));
        if !matches!(v.kind, TKind::IntConst(_) | TKind::FloatConst(_)) {
            return self.err(value.span, "initializer is not a constant expression");
        }
        if self.consts.insert(name.to_owned(), v).is_some() {
            self.err(span, format!("redefinition of constant `{name}`"));
        }
    }

    fn function(&mut self, def: &FunctionDef) -> Option<TFunction> {
        let sig = self.sigs[&def.name].clone();
        let mut f = FnCtx {
            scopes: vec![HashMap::new()],
            ret: Some(sig.ret.clone()),
            ..FnCtx::default()
        };
        collect_addr_taken(&def.body, &mut f.addr_taken);
        self.f = f;

        let mut prologue = Vec::new();
        let (mut ip, mut fp) = (0u32, 0u32);
        let mut seen = HashSet::new();
        for (p, ty) in def.params.iter().zip(&sig.params) {
            if !seen.insert(p.name.clone()) {
                self.err(p.span, format!("duplicate parameter `{}`", p.name));
            }
            let var = match ty {
                Ty::F64 => {
                    fp += 1;
                    Var::Float(self.alloc_float())
                }
                Ty::Ptr(_) => {
                    ip += 2;
                    Var::Ptr(self.alloc_ptr(), ty.clone())
                }
                _ => {
                    ip += 1;
                    Var::Int(self.alloc_int(), ty.clone())
                }
            };
            if self.f.addr_taken.contains(&p.name) {
                if ty.is_ptr() {
                    self.err(p.span, "cannot take the address of a pointer parameter");
                    continue;
                }
                let off = self.alloc_frame(ty);
                let src = match var {
                    Var::Float(s) => TExpr::new(TKind::Read(Place::Float(s)), Ty::F64),
                    Var::Int(s, ref t) => TExpr::new(TKind::Read(Place::Int(s)), t.clone()),
                    _ => unreachable!(),
                };
                prologue.push(TStmt::Expr(self.store_mem(off, ty, src)));
                self.bind(p.span, &p.name, Var::Frame(off, ty.clone()));
            } else {
                self.bind(p.span, &p.name, var);
            }
        }
        if ip > 255 || fp > 255 {
            self.err(def.span, "too many parameters");
        }

        let mut body = prologue;
        for s in &def.body {
            if let Ok(s) = self.stmt(s) {
                body.push(s);
            }
        }
        Some(TFunction {
            name: def.name.clone(),
            ret: sig.ret,
            int_params: ip as u8,
            float_params: fp as u8,
            int_slots: self.f.next_int,
            float_slots: self.f.next_float,
            frame_bytes: self.f.frame,
            body,
        })
    }

    fn alloc_int(&mut self) -> u16 {
        self.f.next_int += 1;
        self.f.next_int - 1
    }

    fn alloc_ptr(&mut self) -> u16 {
        self.f.next_int += 2;
        self.f.next_int - 2
    }

    fn alloc_float(&mut self) -> u16 {
        self.f.next_float += 1;
        self.f.next_float - 1
    }

    fn alloc_frame(&mut self, ty: &Ty) -> u32 {
        let a = ty.align();
        let off = self.f.frame.div_ceil(a) * a;
        self.f.frame = off + ty.size();
        off
    }

    fn bind(&mut self, span: Span, name: &str, var: Var) {
        let scope = self.f.scopes.last_mut().expect("scope");
        if scope.insert(name.to_owned(), var).is_some() {
            self.err(span, format!("redeclaration of `{name}`"));
        }
    }

    fn lookup(&self, name: &str) -> Option<Var> {
        for s in self.f.scopes.iter().rev() {
            if let Some(v) = s.get(name) {
                return Some(v.clone());
            }
        }
        self.consts.get(name).map(|c| Var::Const(c.clone()))
    }

    fn frame_ptr(off: u32, ty: &Ty) -> TExpr {
        TExpr::new(TKind::FrameAddr(off), Ty::Ptr(Box::new(ty.clone())))
    }

    fn store_mem(&self, off: u32, ty: &Ty, value: TExpr) -> TExpr {
        TExpr::new(
            TKind::Assign {
                place: Place::Mem(Box::new(Self::frame_ptr(off, ty)), ty.clone()),
                value: Box::new(value),
                result: AssignResult::None,
            },
            Ty::Void,
        )
    }

    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        self.f.scopes.push(HashMap::new());
        let r = f(self);
        self.f.scopes.pop();
        r
    }

    fn block(&mut self, stmts: &[Stmt]) -> Vec<TStmt> {
        self.scoped(|s| stmts.iter().filter_map(|st| s.stmt(st).ok()).collect())
    }

    fn sub_stmt(&mut self, st: &Stmt) -> Vec<TStmt> {
        match &st.kind {
            StmtKind::Block(b) => self.block(b),
            _ => self.scoped(|s| s.stmt(st).into_iter().collect()),
        }
    }

    fn cond(&mut self, e: &Expr) -> SResult<TExpr> {
        let c = self.expr(e)?;
        if !(c.ty.is_arith() || c.ty.is_ptr()) {
            self.err(
                e.span,
                format!("condition has type {}, expected a scalar", c.ty),
            );
            return Err(());
        }
        Ok(truth(c))
    }

    fn stmt(&mut self, st: &Stmt) -> SResult<TStmt> {
        Ok(match &st.kind {
            StmtKind::Empty => TStmt::Block(Vec::new()),
            StmtKind::Block(b) => TStmt::Block(self.block(b)),
            StmtKind::Expr(e) => TStmt::Expr(self.expr(e)?),
            StmtKind::Decl(ds) => {
                let mut out = Vec::new();
                for d in ds {
                    self.decl(d, &mut out)?;
                }
                TStmt::Block(out)
            }
            StmtKind::If(c, a, b) => {
                let c = self.cond(c);
                let a = self.sub_stmt(a);
                let b = b.as_ref().map(|b| self.sub_stmt(b)).unwrap_or_default();
                TStmt::If(c?, a, b)
            }
            StmtKind::While(c, body) => {
                let c = self.cond(c);
                self.f.loops += 1;
                let body = self.sub_stmt(body);
                self.f.loops -= 1;
                TStmt::Loop {
                    cond: Some(c?),
                    body,
                    step: None,
                    post_test: false,
                }
            }
            StmtKind::DoWhile(body, c) => {
                self.f.loops += 1;
                let body = self.sub_stmt(body);
                self.f.loops -= 1;
                let c = self.cond(c)?;
                TStmt::Loop {
                    cond: Some(c),
                    body,
                    step: None,
                    post_test: true,
                }
            }
            StmtKind::For(init, c, step, body) => self.scoped(|s| {
                let init = init.as_ref().map(|i| s.stmt(i)).transpose();
                let c = c.as_ref().map(|c| s.cond(c)).transpose();
                let step = step.as_ref().map(|e| s.expr(e)).transpose();
                s.f.loops += 1;
                let body = s.sub_stmt(body);
                s.f.loops -= 1;
                let mut out: Vec<TStmt> = init?.into_iter().collect();
                out.push(TStmt::Loop {
                    cond: c?,
                    body,
                    step: step?,
                    post_test: false,
                });
                Ok(TStmt::Block(out))
            })?,
            StmtKind::Break | StmtKind::Continue => {
                if self.f.loops == 0 {
                    let what = if st.kind == StmtKind::Break {
                        "break"
                    } else {
                        "continue"
                    };
                    self.err(st.span, format!("`{what}` outside of a loop"));
                    return Err(());
                }
                if st.kind == StmtKind::Break {
                    TStmt::Break
                } else {
                    TStmt::Continue
                }
            }
            StmtKind::Return(v) => {
                let ret = self.f.ret.clone().expect("in function");
                match (v, &ret) {
                    (None, Ty::Void) => TStmt::Return(None),
                    (None, _) => {
                        self.err(
                            st.span,
                            format!("non-void function must return a value of type {ret}"),
                        );
                        return Err(());
                    }
                    (Some(e), Ty::Void) => {
                        self.err(e.span, "void function cannot return a value");
                        return Err(());
                    }
                    (Some(e), _) => {
                        let v = self.expr(e)?;
                        TStmt::Return(Some(self.coerce(v, &ret, e.span, "return value")?))
                    }
                }
            }
        })
    }

    fn decl(&mut self, d: &VarDecl, out: &mut Vec<TStmt>) -> SResult<()> {
        let base = lower_type(&d.ty);
        let ty = match &d.array_len {
            Some(len) => {
                let n = self.const_u32(len)?;
                if n == 0 || n > MAX_ARRAY_LEN {
                    self.err(
                        len.span,
                        format!("array length {n} out of range 1..={MAX_ARRAY_LEN}"),
                    );
                    return Err(());
                }
                if !matches!(base, Ty::I32 | Ty::U32 | Ty::F64 | Ty::IqPair) {
                    self.err(d.span, format!("arrays of {base} are not supported"));
                    return Err(());
                }
                Ty::Array(Box::new(base), n)
            }
            None => base,
        };
        if ty == Ty::Void {
            self.err(d.span, format!("variable `{}` declared void", d.name));
            return Err(());
        }
        let in_memory =
            matches!(ty, Ty::Array(..) | Ty::IqPair) || self.f.addr_taken.contains(&d.name);
        if in_memory && ty.is_ptr() {
            self.err(d.span, "cannot take the address of a pointer variable");
            return Err(());
        }
        let var = if in_memory {
            Var::Frame(self.alloc_frame(&ty), ty.clone())
        } else {
            match &ty {
                Ty::F64 => Var::Float(self.alloc_float()),
                Ty::Ptr(_) => Var::Ptr(self.alloc_ptr(), ty.clone()),
                _ => Var::Int(self.alloc_int(), ty.clone()),
            }
        };
        // The initializer sees the enclosing scope; the name is bound after.
        let result = match (&d.init, &var) {
            (Some(Init::List(list, lspan)), Var::Frame(off, ty)) => {
                self.init_list(*off, ty, list, *lspan, out)
            }
            (Some(Init::List(_, lspan)), _) => {
                self.err(*lspan, "initializer list for a scalar");
                Err(())
            }
            (Some(Init::Expr(e)), _) if matches!(ty, Ty::Array(..) | Ty::IqPair) => {
                self.err(
                    e.span,
                    format!("cannot initialize {ty} from an expression; use a braced list"),
                );
                Err(())
            }
            (init, _) => {
                let value = match init {
                    Some(Init::Expr(e)) => {
                        let v = self.expr(e)?;
                        self.coerce(v, &ty, e.span, "initializer")?
                    }
                    _ if matches!(ty, Ty::Array(..) | Ty::IqPair) => {
                        self.bind(d.span, &d.name, var);
                        return Ok(());
                    }
                    _ => zero_of(&ty),
                };
                let place = match &var {
                    Var::Int(s, _) => Place::Int(*s),
                    Var::Float(s) => Place::Float(*s),
                    Var::Ptr(s, _) => Place::Ptr(*s),
                    Var::Frame(off, t) => Place::Mem(Box::new(Self::frame_ptr(*off, t)), t.clone()),
                    Var::Const(_) => unreachable!(),
                };
                out.push(TStmt::Expr(TExpr::new(
                    TKind::Assign {
                        place,
                        value: Box::new(value),
                        result: AssignResult::None,
                    },
                    Ty::Void,
                )));
                Ok(())
            }
        };
        self.bind(d.span, &d.name, var);
        result
    }

    fn init_list(
        &mut self,
        off: u32,
        ty: &Ty,
        list: &[Expr],
        span: Span,
        out: &mut Vec<TStmt>,
    ) -> SResult<()> {
        let (elem, n) = match ty {
            Ty::Array(e, n) => ((**e).clone(), *n),
            Ty::IqPair => (Ty::I32, 2),
            _ => unreachable!(),
        };
        if elem == Ty::IqPair {
            self.err(
                span,
                "initializer lists for arrays of iq_pair are not supported",
            );
            return Err(());
        }
        if list.len() > n as usize {
            self.err(
                span,
                format!("too many initializers ({} for {n} elements)", list.len()),
            );
            return Err(());
        }
        let size = elem.size();
        for (i, e) in list.iter().enumerate() {
            let v = self.expr(e)?;
            let v = self.coerce(v, &elem, e.span, "initializer")?;
            out.push(TStmt::Expr(self.store_mem(off + i as u32 * size, &elem, v)));
        }
        for i in list.len() as u32..n {
            out.push(TStmt::Expr(self.store_mem(
                off + i * size,
                &elem,
                zero_of(&elem),
            )));
        }
        Ok(())
    }

    fn const_u32(&mut self, e: &Expr) -> SResult<u32> {
        let v = self.expr(e)?;
        let v = fold_expr(v);
        match (v.as_int_const(), &v.ty) {
            (Some(c), Ty::I32) if (c as i32) < 0 => {
                self.err(e.span, "array length is negative");
                Err(())
            }
            (Some(c), _) => Ok(c),
            _ => {
                self.err(e.span, "expected an integer constant expression");
                Err(())
            }
        }
    }

    /// Assignment conversion.
    fn coerce(&mut self, e: TExpr, to: &Ty, span: Span, what: &str) -> SResult<TExpr> {
        if e.ty == *to {
            return Ok(e);
        }
        if e.ty.is_arith() && to.is_arith() {
            return Ok(convert(e, to));
        }
        if let Ty::Ptr(target) = to {
            if is_null_const(&e) {
                return Ok(TExpr::new(TKind::NullPtr, to.clone()));
            }
            if let Ty::Ptr(src) = &e.ty {
                if **src != Ty::Void && **target != Ty::Void && src != target {
                    self.warn(
                        span,
                        format!("{what}: implicit conversion from {} to {to}", e.ty),
                    );
                }
                return Ok(TExpr {
                    ty: to.clone(),
                    ..e
                });
            }
        }
        self.err(span, format!("{what}: cannot convert {} to {to}", e.ty));
        Err(())
    }

    fn lvalue(&mut self, e: &Expr) -> SResult<Lv> {
        match &e.kind {
            ExprKind::Ident(name) => match self.lookup(name) {
                Some(Var::Int(s, t)) => Ok(Lv::Place(Place::Int(s), t)),
                Some(Var::Float(s)) => Ok(Lv::Place(Place::Float(s), Ty::F64)),
                Some(Var::Ptr(s, t)) => Ok(Lv::Place(Place::Ptr(s), t)),
                Some(Var::Frame(off, t)) => Ok(self.mem_lv(Self::frame_ptr(off, &t), t, e.span)?),
                Some(Var::Const(_)) => {
                    self.err(e.span, format!("`{name}` is a constant"));
                    Err(())
                }
                None => {
                    self.err(e.span, format!("use of undeclared identifier `{name}`"));
                    Err(())
                }
            },
            ExprKind::Unary(UnOp::Deref, p) => {
                let p = self.expr(p)?;
                let Ty::Ptr(t) = p.ty.clone() else {
                    self.err(
                        e.span,
                        format!("cannot dereference a value of type {}", p.ty),
                    );
                    return Err(());
                };
                self.mem_lv(p, *t, e.span)
            }
            ExprKind::Index(a, i) => {
                let (a, i) = (self.expr(a)?, self.expr(i)?);
                let (p, i) = if a.ty.is_ptr() { (a, i) } else { (i, a) };
                let Ty::Ptr(t) = p.ty.clone() else {
                    self.err(e.span, "subscripted value is not an array or pointer");
                    return Err(());
                };
                if !i.ty.is_int() {
                    self.err(e.span, format!("array subscript has type {}", i.ty));
                    return Err(());
                }
                if *t == Ty::Void {
                    self.err(e.span, "subscript of a void pointer");
                    return Err(());
                }
                let addr = ptr_offset(p, scaled(i, t.size()));
                self.mem_lv(addr, *t, e.span)
            }
            ExprKind::Member { base, field, arrow } => {
                let addr = if *arrow {
                    let b = self.expr(base)?;
                    if b.ty != Ty::Ptr(Box::new(Ty::IqPair)) {
                        self.err(
                            e.span,
                            format!("`->` applied to {}, expected iq_pair*", b.ty),
                        );
                        return Err(());
                    }
                    b
                } else {
                    match self.lvalue(base)? {
                        Lv::Obj(addr, Ty::IqPair) => addr,
                        _ => {
                            self.err(e.span, "member access on a non-struct value");
                            return Err(());
                        }
                    }
                };
                let off = match field.as_str() {
                    "i" => 0,
                    "q" => 4,
                    _ => {
                        self.err(e.span, format!("iq_pair has no member `{field}`"));
                        return Err(());
                    }
                };
                let addr = ptr_offset(
                    TExpr {
                        ty: Ty::Ptr(Box::new(Ty::I32)),
                        ..addr
                    },
                    TExpr::int(off),
                );
                self.mem_lv(addr, Ty::I32, e.span)
            }
            _ => {
                self.err(e.span, "expression is not assignable");
                Err(())
            }
        }
    }

    fn mem_lv(&mut self, addr: TExpr, t: Ty, span: Span) -> SResult<Lv> {
        match t {
            Ty::I32 | Ty::U32 | Ty::F64 => Ok(Lv::Place(Place::Mem(Box::new(addr), t.clone()), t)),
            Ty::IqPair | Ty::Array(..) => Ok(Lv::Obj(addr, t)),
            Ty::Ptr(_) => {
                self.err(span, "pointers cannot be stored in memory");
                Err(())
            }
            Ty::Void => {
                self.err(span, "dereferencing a void pointer");
                Err(())
            }
        }
    }

    fn rvalue(&mut self, lv: Lv, span: Span) -> SResult<TExpr> {
        match lv {
            Lv::Place(p, t) => Ok(TExpr::new(TKind::Read(p), t)),
            Lv::Obj(addr, Ty::Array(elem, _)) => Ok(TExpr {
                ty: Ty::Ptr(elem),
                ..addr
            }),
            Lv::Obj(..) => {
                self.err(
                    span,
                    "struct value cannot be used here; access `.i` or `.q`",
                );
                Err(())
            }
        }
    }

    fn type_of_for_sizeof(&mut self, e: &Expr) -> SResult<Ty> {
        if let ExprKind::Ident(n) = &e.kind {
            if let Some(Var::Frame(_, t)) = self.lookup(n) {
                return Ok(t);
            }
        }
        if let ExprKind::Unary(UnOp::Deref, _) | ExprKind::Index(..) = &e.kind {
            if let Ok(Lv::Obj(_, t)) = self.lvalue(e) {
                return Ok(t);
            }
        }
        Ok(self.expr(e)?.ty)
    }

    pub fn expr(&mut self, e: &Expr) -> SResult<TExpr> {
        let span = e.span;
        match &e.kind {
            ExprKind::Int { value, unsigned } => {
                let ty = if !unsigned && *value <= i32::MAX as u64 {
                    Ty::I32
                } else if *value <= u64::from(u32::MAX) {
                    Ty::U32
                } else {
                    self.err(span, "integer literal out of range");
                    return Err(());
                };
                Ok(TExpr::new(TKind::IntConst(*value as u32), ty))
            }
            ExprKind::Float(v) => Ok(TExpr::new(TKind::FloatConst(*v), Ty::F64)),
            ExprKind::Str(s) => {
                let off = self.intern(s);
                Ok(TExpr::new(TKind::DataPtr(off), Ty::Ptr(Box::new(Ty::I32))))
            }
            ExprKind::Ident(name) => {
                if let Some(Var::Const(c)) = self.lookup(name) {
                    return Ok(c);
                }
                let lv = self.lvalue(e)?;
                self.rvalue(lv, span)
            }
            ExprKind::Index(..) | ExprKind::Member { .. } | ExprKind::Unary(UnOp::Deref, _) => {
                let lv = self.lvalue(e)?;
                self.rvalue(lv, span)
            }
            ExprKind::Unary(UnOp::AddrOf, inner) => match self.lvalue(inner)? {
                Lv::Place(Place::Mem(addr, t), _) => Ok(TExpr {
                    ty: Ty::Ptr(Box::new(t)),
                    ..*addr
                }),
                Lv::Obj(addr, Ty::Array(elem, _)) => Ok(TExpr {
                    ty: Ty::Ptr(elem),
                    ..addr
                }),
                Lv::Obj(addr, t) => Ok(TExpr {
                    ty: Ty::Ptr(Box::new(t)),
                    ..addr
                }),
                Lv::Place(..) => {
                    self.err(span, "cannot take the address of this expression");
                    Err(())
                }
            },
            ExprKind::Unary(op, inner) => {
                let v = self.expr(inner)?;
                match op {
                    UnOp::Plus if v.ty.is_arith() => Ok(v),
                    UnOp::Neg if v.ty == Ty::F64 => {
                        Ok(TExpr::new(TKind::FNeg(Box::new(v)), Ty::F64))
                    }
                    UnOp::Neg if v.ty.is_int() => {
                        let t = v.ty.clone();
                        Ok(TExpr::new(TKind::IntUn(IntUnOp::Neg, Box::new(v)), t))
                    }
                    UnOp::BitNot if v.ty.is_int() => {
                        let t = v.ty.clone();
                        Ok(TExpr::new(TKind::IntUn(IntUnOp::Not, Box::new(v)), t))
                    }
                    UnOp::Not if v.ty.is_arith() || v.ty.is_ptr() => Ok(TExpr::new(
                        TKind::IntUn(IntUnOp::LNot, Box::new(truth(v))),
                        Ty::I32,
                    )),
                    _ => {
                        self.err(
                            span,
                            format!("invalid operand of type {} to unary operator", v.ty),
                        );
                        Err(())
                    }
                }
            }
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (self.expr(a), self.expr(b));
                self.binary(*op, a?, b?, span)
            }
            ExprKind::Assign(op, target, value) => {
                let lv = self.lvalue(target)?;
                let Lv::Place(place, ty) = lv else {
                    self.err(span, "cannot assign to a struct or array as a whole");
                    return Err(());
                };
                let rhs = self.expr(value)?;
                let value = match op {
                    None => self.coerce(rhs, &ty, span, "assignment")?,
                    Some(op) => {
                        let old = TExpr::new(TKind::Old, ty.clone());
                        let v = self.binary(*op, old, rhs, span)?;
                        self.coerce(v, &ty, span, "compound assignment")?
                    }
                };
                Ok(TExpr::new(
                    TKind::Assign {
                        place,
                        value: Box::new(value),
                        result: AssignResult::New,
                    },
                    ty,
                ))
            }
            ExprKind::IncDec { pre, inc, target } => {
                let lv = self.lvalue(target)?;
                let Lv::Place(place, ty) = lv else {
                    self.err(span, "operand of ++/-- must be a scalar");
                    return Err(());
                };
                let op = if *inc { BinOp::Add } else { BinOp::Sub };
                let old = TExpr::new(TKind::Old, ty.clone());
                let v = self.binary(op, old, TExpr::int(1), span)?;
                let v = self.coerce(v, &ty, span, "increment")?;
                let result = if *pre {
                    AssignResult::New
                } else {
                    AssignResult::Old
                };
                Ok(TExpr::new(
                    TKind::Assign {
                        place,
                        value: Box::new(v),
                        result,
                    },
                    ty,
                ))
            }
            ExprKind::Cond(c, a, b) => {
                let c = self.cond(c);
                let (a, b) = (self.expr(a), self.expr(b));
                let (c, a, b) = (c?, a?, b?);
                let ty = if a.ty.is_arith() && b.ty.is_arith() {
                    usual(&a.ty, &b.ty)
                } else if a.ty == b.ty {
                    a.ty.clone()
                } else if a.ty.is_ptr() && (b.ty.is_ptr() || is_null_const(&b)) {
                    a.ty.clone()
                } else if b.ty.is_ptr() && is_null_const(&a) {
                    b.ty.clone()
                } else {
                    self.err(
                        span,
                        format!("mismatched operand types {} and {} in `?:`", a.ty, b.ty),
                    );
                    return Err(());
                };
                let (a, b) = if ty == Ty::Void {
                    (a, b)
                } else {
                    (
                        self.coerce(a, &ty, span, "conditional")?,
                        self.coerce(b, &ty, span, "conditional")?,
                    )
                };
                Ok(TExpr::new(
                    TKind::Cond(Box::new(c), Box::new(a), Box::new(b)),
                    ty,
                ))
            }
            ExprKind::Cast(t, inner) => {
                let to = lower_type(t);
                let v = self.expr(inner)?;
                match (&v.ty, &to) {
                    (_, Ty::Void) => Ok(TExpr::new(TKind::Discard(Box::new(v)), Ty::Void)),
                    (a, b) if a.is_arith() && b.is_arith() => Ok(convert(v, &to)),
                    (Ty::Ptr(_), Ty::Ptr(_)) => Ok(TExpr { ty: to, ..v }),
                    (_, Ty::Ptr(_)) if is_null_const(&v) => Ok(TExpr::new(TKind::NullPtr, to)),
                    _ => {
                        self.err(span, format!("invalid cast from {} to {to}", v.ty));
                        Err(())
                    }
                }
            }
            ExprKind::SizeofType(t) => {
                let t = lower_type(t);
                if t == Ty::Void {
                    self.err(span, "sizeof(void)");
                    return Err(());
                }
                Ok(TExpr::new(TKind::IntConst(t.size()), Ty::U32))
            }
            ExprKind::SizeofExpr(inner) => {
                // Operand is not evaluated; discard any diagnostics-free lowering.
                let t = self.type_of_for_sizeof(inner)?;
                Ok(TExpr::new(TKind::IntConst(t.size()), Ty::U32))
            }
            ExprKind::Call(name, args) => self.call(name, args, span),
            ExprKind::Comma(a, b) => {
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                let t = b.ty.clone();
                Ok(TExpr::new(TKind::Comma(Box::new(a), Box::new(b)), t))
            }
        }
    }

    fn intern(&mut self, s: &[u8]) -> u32 {
        if let Some(&off) = self.strings.get(s) {
            return off;
        }
        let off = self.data.len() as u32;
        self.data.extend_from_slice(s);
        self.data.push(0);
        self.strings.insert(s.to_vec(), off);
        off
    }

    fn binary(&mut self, op: BinOp, a: TExpr, b: TExpr, span: Span) -> SResult<TExpr> {
        let scalar = |t: &Ty| t.is_arith() || t.is_ptr();
        if matches!(op, BinOp::And | BinOp::Or) {
            if !scalar(&a.ty) || !scalar(&b.ty) {
                self.err(span, format!("invalid operands to `{}`", op_str(op)));
                return Err(());
            }
            let (a, b) = (Box::new(truth(a)), Box::new(truth(b)));
            let kind = if op == BinOp::And {
                TKind::LogAnd(a, b)
            } else {
                TKind::LogOr(a, b)
            };
            return Ok(TExpr::new(kind, Ty::I32));
        }
        if a.ty.is_ptr() || b.ty.is_ptr() {
            return self.pointer_binary(op, a, b, span);
        }
        if !a.ty.is_arith() || !b.ty.is_arith() {
            self.err(
                span,
                format!(
                    "invalid operands to `{}` ({} and {})",
                    op_str(op),
                    a.ty,
                    b.ty
                ),
            );
            return Err(());
        }
        if matches!(op, BinOp::Shl | BinOp::Shr) {
            if !a.ty.is_int() || !b.ty.is_int() {
                self.err(
                    span,
                    format!("shift operands must be integers ({} and {})", a.ty, b.ty),
                );
                return Err(());
            }
            let t = a.ty.clone();
            let signed = t == Ty::I32;
            return Ok(TExpr::new(
                TKind::IntBin {
                    op: int_op(op),
                    signed,
                    a: Box::new(a),
                    b: Box::new(b),
                },
                t,
            ));
        }
        let t = usual(&a.ty, &b.ty);
        let (a, b) = (convert(a, &t), convert(b, &t));
        if t == Ty::F64 {
            if op.is_comparison() {
                return Ok(TExpr::new(
                    TKind::FloatCmp(cmp_op(op), Box::new(a), Box::new(b)),
                    Ty::I32,
                ));
            }
            let fop = match op {
                BinOp::Add => FloatOp::Add,
                BinOp::Sub => FloatOp::Sub,
                BinOp::Mul => FloatOp::Mul,
                BinOp::Div => FloatOp::Div,
                _ => {
                    self.err(
                        span,
                        format!("operator `{}` requires integer operands", op_str(op)),
                    );
                    return Err(());
                }
            };
            return Ok(TExpr::new(
                TKind::FloatBin(fop, Box::new(a), Box::new(b)),
                Ty::F64,
            ));
        }
        let rt = if op.is_comparison() {
            Ty::I32
        } else {
            t.clone()
        };
        Ok(TExpr::new(
            TKind::IntBin {
                op: int_op(op),
                signed: t == Ty::I32,
                a: Box::new(a),
                b: Box::new(b),
            },
            rt,
        ))
    }

    fn pointer_binary(&mut self, op: BinOp, a: TExpr, b: TExpr, span: Span) -> SResult<TExpr> {
        if op.is_comparison() {
            let (a, b) = match (a.ty.is_ptr(), b.ty.is_ptr()) {
                (true, true) => (a, b),
                (true, false) if is_null_const(&b) => {
                    let t = a.ty.clone();
                    (a, TExpr::new(TKind::NullPtr, t))
                }
                (false, true) if is_null_const(&a) => {
                    let t = b.ty.clone();
                    (TExpr::new(TKind::NullPtr, t), b)
                }
                _ => {
                    self.err(span, format!("comparison between {} and {}", a.ty, b.ty));
                    return Err(());
                }
            };
            return Ok(TExpr::new(
                TKind::PtrCmp(cmp_op(op), Box::new(a), Box::new(b)),
                Ty::I32,
            ));
        }
        match op {
            BinOp::Add | BinOp::Sub if a.ty.is_ptr() && b.ty.is_int() => {
                let size = self.elem_size(&a.ty, span)?;
                let mut off = scaled(b, size);
                if op == BinOp::Sub {
                    off = TExpr::new(TKind::IntUn(IntUnOp::Neg, Box::new(off)), Ty::I32);
                }
                Ok(ptr_offset(a, off))
            }
            BinOp::Add if b.ty.is_ptr() && a.ty.is_int() => {
                let size = self.elem_size(&b.ty, span)?;
                Ok(ptr_offset(b, scaled(a, size)))
            }
            BinOp::Sub if a.ty.is_ptr() && b.ty.is_ptr() => {
                if a.ty != b.ty {
                    self.err(
                        span,
                        format!("subtraction of incompatible pointers {} and {}", a.ty, b.ty),
                    );
                    return Err(());
                }
                let elem = self.elem_size(&a.ty, span)?;
                Ok(TExpr::new(
                    TKind::PtrDiff {
                        a: Box::new(a),
                        b: Box::new(b),
                        elem,
                    },
                    Ty::I32,
                ))
            }
            _ => {
                self.err(
                    span,
                    format!(
                        "invalid operands to `{}` ({} and {})",
                        op_str(op),
                        a.ty,
                        b.ty
                    ),
                );
                Err(())
            }
        }
    }

    fn elem_size(&mut self, ptr: &Ty, span: Span) -> SResult<u32> {
        match ptr.pointee() {
            Some(Ty::Void) | None => {
                self.err(span, "arithmetic on a void pointer");
                Err(())
            }
            Some(t) => Ok(t.size()),
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) -> SResult<TExpr> {
        if let Some(hc) = hostcalls::by_name(name) {
            return self.host_call(hc, args, span);
        }
        let Some(sig) = self.sigs.get(name).cloned() else {
            self.err(span, format!("call to undeclared function `{name}`"));
            return Err(());
        };
        if !sig.defined {
            self.err(
                span,
                format!("function `{name}` is declared but never defined"),
            );
            return Err(());
        }
        if name == ENTRY_NAME {
            self.err(span, format!("`{ENTRY_NAME}` cannot be called"));
            return Err(());
        }
        if args.len() != sig.params.len() {
            self.err(
                span,
                format!(
                    "`{name}` expects {} arguments, got {}",
                    sig.params.len(),
                    args.len()
                ),
            );
            return Err(());
        }
        let mut out = Vec::with_capacity(args.len());
        for (i, (a, t)) in args.iter().zip(&sig.params).enumerate() {
            let v = self.expr(a)?;
            out.push(self.coerce(v, t, a.span, &format!("argument {} of `{name}`", i + 1))?);
        }
        Ok(TExpr::new(TKind::Call(sig.index, out), sig.ret))
    }

    fn host_call(&mut self, hc: &hostcalls::HostCall, args: &[Expr], span: Span) -> SResult<TExpr> {
        let fixed = hc.params.len();
        if args.len() < fixed || (!hc.variadic && args.len() != fixed) {
            self.err(
                span,
                format!(
                    "`{}` expects {} arguments, got {}",
                    hc.name,
                    fixed,
                    args.len()
                ),
            );
            return Err(());
        }
        let mut out = Vec::with_capacity(args.len());
        for (i, (a, k)) in args.iter().zip(hc.params).enumerate() {
            let v = self.expr(a)?;
            let what = format!("argument {} of `{}`", i + 1, hc.name);
            out.push(match k {
                Kind::U32 => self.coerce(v, &Ty::U32, a.span, &what)?,
                Kind::Ptr => {
                    if !v.ty.is_ptr() && !is_null_const(&v) {
                        self.err(a.span, format!("{what}: expected a pointer, got {}", v.ty));
                        return Err(());
                    }
                    self.coerce(v, &Ty::Ptr(Box::new(Ty::Void)), a.span, &what)?
                }
                Kind::Void => unreachable!(),
            });
        }
        if hc.variadic {
            let ExprKind::Str(fmt) = &args[0].kind else {
                self.err(
                    args[0].span,
                    format!("format argument of `{}` must be a string literal", hc.name),
                );
                return Err(());
            };
            let fmt = String::from_utf8_lossy(fmt).into_owned();
            let convs = match printf::conversions(&fmt) {
                Ok(c) => c,
                Err(e) => {
                    self.err(args[0].span, format!("invalid format string: {e}"));
                    return Err(());
                }
            };
            let extra = &args[fixed..];
            if convs.len() != extra.len() {
                self.err(
                    span,
                    format!(
                        "format string expects {} arguments, got {}",
                        convs.len(),
                        extra.len()
                    ),
                );
                return Err(());
            }
            for (i, (a, c)) in extra.iter().zip(convs).enumerate() {
                let v = self.expr(a)?;
                let ok = match c {
                    printf::Conv::Signed | printf::Conv::Unsigned | printf::Conv::Hex => {
                        v.ty.is_int()
                    }
                    printf::Conv::Float => v.ty == Ty::F64,
                    printf::Conv::Str => v.ty.is_ptr(),
                };
                if !ok {
                    let want = match c {
                        printf::Conv::Float => "double",
                        printf::Conv::Str => "a pointer",
                        _ => "an integer",
                    };
                    self.err(
                        a.span,
                        format!(
                            "format argument {} has type {}, expected {want}",
                            i + 1,
                            v.ty
                        ),
                    );
                    return Err(());
                }
                out.push(v);
            }
        }
        let ret = match hc.ret {
            Kind::Void => Ty::Void,
            Kind::U32 => Ty::U32,
            Kind::Ptr => Ty::Ptr(Box::new(Ty::Void)),
        };
        Ok(TExpr::new(TKind::Host(hc.id, out), ret))
    }
}

fn zero_of(ty: &Ty) -> TExpr {
    match ty {
        Ty::F64 => TExpr::new(TKind::FloatConst(0.0), Ty::F64),
        Ty::Ptr(_) => TExpr::new(TKind::NullPtr, ty.clone()),
        _ => TExpr::new(TKind::IntConst(0), ty.clone()),
    }
}

fn scaled(i: TExpr, size: u32) -> TExpr {
    let i = convert(i, &Ty::I32);
    if size == 1 {
        return i;
    }
    TExpr::new(
        TKind::IntBin {
            op: IntOp::Mul,
            signed: true,
            a: Box::new(i),
            b: Box::new(TExpr::int(size as i32)),
        },
        Ty::I32,
    )
}

fn ptr_offset(p: TExpr, off: TExpr) -> TExpr {
    let t = p.ty.clone();
    TExpr::new(TKind::PtrOffset(Box::new(p), Box::new(off)), t)
}
