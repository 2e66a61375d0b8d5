//! Typed intermediate form between semantic analysis and code generation.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Ty {
    Void,
    I32,
    U32,
    F64,
    IqPair,
    Ptr(Box<Ty>),
    Array(Box<Ty>, u32),
}

impl Ty {
    pub fn size(&self) -> u32 {
        match self {
            Ty::Void => 1,
            Ty::I32 | Ty::U32 => 4,
            Ty::F64 | Ty::IqPair | Ty::Ptr(_) => 8,
            Ty::Array(e, n) => e.size() * n,
        }
    }

    pub fn align(&self) -> u32 {
        match self {
            Ty::F64 => 8,
            Ty::Array(e, _) => e.align(),
            _ => 4,
        }
    }

    pub fn is_int(&self) -> bool {
        matches!(self, Ty::I32 | Ty::U32)
    }

    pub fn is_arith(&self) -> bool {
        matches!(self, Ty::I32 | Ty::U32 | Ty::F64)
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, Ty::Ptr(_))
    }

    pub fn pointee(&self) -> Option<&Ty> {
        match self {
            Ty::Ptr(t) => Some(t),
            _ => None,
        }
    }

    pub fn kind(&self) -> ValKind {
        match self {
            Ty::Void => ValKind::Void,
            Ty::F64 => ValKind::Float,
            Ty::Ptr(_) => ValKind::Ptr,
            _ => ValKind::Int,
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Void => f.write_str("void"),
            Ty::I32 => f.write_str("int"),
            Ty::U32 => f.write_str("unsigned"),
            Ty::F64 => f.write_str("double"),
            Ty::IqPair => f.write_str("iq_pair"),
            Ty::Ptr(t) => write!(f, "{t}*"),
            Ty::Array(t, n) => write!(f, "{t}[{n}]"),
        }
    }
}

/// Shape of a value on the VM stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValKind {
    Void,
    Int,
    Float,
    /// Two integer slots: handle, offset.
    Ptr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Place {
    Int(u16),
    Float(u16),
    /// Handle in `slot`, offset in `slot + 1`.
    Ptr(u16),
    /// Scalar (`I32`, `U32` or `F64`) in memory.
    Mem(Box<TExpr>, Ty),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl IntOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            IntOp::Eq | IntOp::Ne | IntOp::Lt | IntOp::Le | IntOp::Gt | IntOp::Ge
        )
    }

    pub fn can_trap(self) -> bool {
        matches!(self, IntOp::Div | IntOp::Rem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntUnOp {
    Neg,
    Not,
    LNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conv {
    I2F,
    U2F,
    F2I,
    F2U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignResult {
    None,
    New,
    Old,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TExpr {
    pub kind: TKind,
    pub ty: Ty,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TKind {
    IntConst(u32),
    FloatConst(f64),
    NullPtr,
    /// Pointer into the read-only data section.
    DataPtr(u32),
    /// Pointer to the current frame's memory.
    FrameAddr(u32),
    Read(Place),
    IntUn(IntUnOp, Box<TExpr>),
    FNeg(Box<TExpr>),
    IntBin {
        op: IntOp,
        signed: bool,
        a: Box<TExpr>,
        b: Box<TExpr>,
    },
    FloatBin(FloatOp, Box<TExpr>, Box<TExpr>),
    FloatCmp(CmpOp, Box<TExpr>, Box<TExpr>),
    Conv(Conv, Box<TExpr>),
    /// 1 when the pointer is not null.
    PtrNonNull(Box<TExpr>),
    /// Pointer plus a byte offset.
    PtrOffset(Box<TExpr>, Box<TExpr>),
    /// Equality compares handle and offset; ordering compares offsets.
    PtrCmp(CmpOp, Box<TExpr>, Box<TExpr>),
    PtrDiff {
        a: Box<TExpr>,
        b: Box<TExpr>,
        elem: u32,
    },
    LogAnd(Box<TExpr>, Box<TExpr>),
    LogOr(Box<TExpr>, Box<TExpr>),
    Cond(Box<TExpr>, Box<TExpr>, Box<TExpr>),
    Call(u16, Vec<TExpr>),
    Host(u8, Vec<TExpr>),
    /// Stores `value` into `place`. `value` may reference the previous
    /// contents through [`TKind::Old`].
    Assign {
        place: Place,
        value: Box<TExpr>,
        result: AssignResult,
    },
    /// The value of the enclosing assignment's place before the store.
    Old,
    Comma(Box<TExpr>, Box<TExpr>),
    Discard(Box<TExpr>),
}

impl TExpr {
    pub fn new(kind: TKind, ty: Ty) -> Self {
        Self { kind, ty }
    }

    pub fn int(v: i32) -> Self {
        Self::new(TKind::IntConst(v as u32), Ty::I32)
    }

    pub fn as_int_const(&self) -> Option<u32> {
        match self.kind {
            TKind::IntConst(v) => Some(v),
            _ => None,
        }
    }

    /// Has no effect besides producing a value and cannot trap.
    pub fn is_pure(&self) -> bool {
        use TKind::*;
        match &self.kind {
            IntConst(_) | FloatConst(_) | NullPtr | DataPtr(_) | FrameAddr(_) | Old => true,
            Read(p) => !matches!(p, Place::Mem(..)),
            IntUn(_, e) | FNeg(e) | Conv(_, e) | PtrNonNull(e) | Discard(e) => e.is_pure(),
            IntBin { op, a, b, .. } => !op.can_trap() && a.is_pure() && b.is_pure(),
            FloatBin(_, a, b)
            | FloatCmp(_, a, b)
            | PtrOffset(a, b)
            | PtrCmp(_, a, b)
            | LogAnd(a, b)
            | LogOr(a, b)
            | Comma(a, b) => a.is_pure() && b.is_pure(),
            PtrDiff { .. } => false,
            Cond(c, a, b) => c.is_pure() && a.is_pure() && b.is_pure(),
            Call(..) | Host(..) | Assign { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TStmt {
    Expr(TExpr),
    If(TExpr, Vec<TStmt>, Vec<TStmt>),
    /// `cond` is tested before each iteration, or after when `post_test`.
    /// `continue` jumps to `step`.
    Loop {
        cond: Option<TExpr>,
        body: Vec<TStmt>,
        step: Option<TExpr>,
        post_test: bool,
    },
    Break,
    Continue,
    Return(Option<TExpr>),
    Block(Vec<TStmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TFunction {
    pub name: String,
    pub ret: Ty,
    pub int_params: u8,
    pub float_params: u8,
    pub int_slots: u16,
    pub float_slots: u16,
    pub frame_bytes: u32,
    pub body: Vec<TStmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TProgram {
    pub functions: Vec<TFunction>,
    /// String literals, NUL-terminated.
    pub data: Vec<u8>,
}
