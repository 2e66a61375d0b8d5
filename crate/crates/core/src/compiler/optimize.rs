//! Constant folding and dead-code elimination on the typed IR.
//!
//! Folding mirrors the VM's arithmetic exactly (wrapping integers, masked
//! shift counts, saturating float-to-int). Operations that would trap at run
//! time, such as division by zero, are left in place.

use super::ir::*;

pub fn optimize(p: &mut TProgram) {
    for f in &mut p.functions {
        let body = std::mem::take(&mut f.body);
        f.body = stmts(body);
    }
}

fn stmts(list: Vec<TStmt>) -> Vec<TStmt> {
    let mut out = Vec::with_capacity(list.len());
    for s in list {
        let terminal = matches!(s, TStmt::Return(_) | TStmt::Break | TStmt::Continue);
        match stmt(s) {
            // scopes are already resolved, so nested blocks flatten
            Some(TStmt::Block(inner)) => out.extend(inner),
            Some(s) => out.push(s),
            None => {}
        }
        if terminal || out.last().is_some_and(always_exits) {
            break;
        }
    }
    out
}

/// The statement never completes normally.
fn always_exits(s: &TStmt) -> bool {
    match s {
        TStmt::Return(_) | TStmt::Break | TStmt::Continue => true,
        TStmt::Block(b) => b.last().is_some_and(always_exits),
        TStmt::If(_, a, b) => {
            a.last().is_some_and(always_exits) && b.last().is_some_and(always_exits)
        }
        _ => false,
    }
}

fn stmt(s: TStmt) -> Option<TStmt> {
    match s {
        TStmt::Expr(e) => {
            let e = fold_expr(e);
            if e.is_pure() {
                None
            } else {
                Some(TStmt::Expr(e))
            }
        }
        TStmt::If(c, a, b) => {
            let c = fold_expr(c);
            match c.as_int_const() {
                Some(0) => Some(TStmt::Block(stmts(b))),
                Some(_) => Some(TStmt::Block(stmts(a))),
                None => Some(TStmt::If(c, stmts(a), stmts(b))),
            }
        }
        TStmt::Loop {
            cond,
            body,
            step,
            post_test,
        } => {
            let cond = cond.map(fold_expr);
            let body = stmts(body);
            let step = step.map(fold_expr).filter(|e| !e.is_pure());
            match cond.as_ref().and_then(TExpr::as_int_const) {
                Some(0) if !post_test => None,
                // do { ... } while (0) runs once; keep it so break/continue still work.
                Some(0) => Some(TStmt::Loop {
                    cond,
                    body,
                    step,
                    post_test,
                }),
                Some(_) => Some(TStmt::Loop {
                    cond: None,
                    body,
                    step,
                    post_test: false,
                }),
                None => Some(TStmt::Loop {
                    cond,
                    body,
                    step,
                    post_test,
                }),
            }
        }
        TStmt::Return(v) => Some(TStmt::Return(v.map(fold_expr))),
        TStmt::Block(b) => Some(TStmt::Block(stmts(b))),
        s @ (TStmt::Break | TStmt::Continue) => Some(s),
    }
}

fn fold_box(e: Box<TExpr>) -> Box<TExpr> {
    Box::new(fold_expr(*e))
}

fn fold_place(p: Place) -> Place {
    match p {
        Place::Mem(a, t) => Place::Mem(fold_box(a), t),
        p => p,
    }
}

pub fn int_binop(op: IntOp, signed: bool, a: u32, b: u32) -> Option<u32> {
    let (sa, sb) = (a as i32, b as i32);
    Some(match op {
        IntOp::Add => a.wrapping_add(b),
        IntOp::Sub => a.wrapping_sub(b),
        IntOp::Mul => a.wrapping_mul(b),
        IntOp::Div if b == 0 => return None,
        IntOp::Rem if b == 0 => return None,
        IntOp::Div if signed => sa.wrapping_div(sb) as u32,
        IntOp::Div => a / b,
        IntOp::Rem if signed => sa.wrapping_rem(sb) as u32,
        IntOp::Rem => a % b,
        IntOp::And => a & b,
        IntOp::Or => a | b,
        IntOp::Xor => a ^ b,
        IntOp::Shl => a << (b & 31),
        IntOp::Shr if signed => (sa >> (b & 31)) as u32,
        IntOp::Shr => a >> (b & 31),
        IntOp::Eq => u32::from(a == b),
        IntOp::Ne => u32::from(a != b),
        IntOp::Lt if signed => u32::from(sa < sb),
        IntOp::Lt => u32::from(a < b),
        IntOp::Le if signed => u32::from(sa <= sb),
        IntOp::Le => u32::from(a <= b),
        IntOp::Gt if signed => u32::from(sa > sb),
        IntOp::Gt => u32::from(a > b),
        IntOp::Ge if signed => u32::from(sa >= sb),
        IntOp::Ge => u32::from(a >= b),
    })
}

pub fn float_cmp(op: CmpOp, a: f64, b: f64) -> u32 {
    u32::from(match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    })
}

pub fn float_binop(op: FloatOp, a: f64, b: f64) -> f64 {
    match op {
        FloatOp::Add => a + b,
        FloatOp::Sub => a - b,
        FloatOp::Mul => a * b,
        FloatOp::Div => a / b,
    }
}

pub fn fold_expr(e: TExpr) -> TExpr {
    use TKind::*;
    let ty = e.ty;
    let int = |v: u32, ty: Ty| TExpr::new(IntConst(v), ty);
    let kind = match e.kind {
        IntUn(op, a) => {
            let a = fold_expr(*a);
            if let Some(v) = a.as_int_const() {
                let r = match op {
                    IntUnOp::Neg => v.wrapping_neg(),
                    IntUnOp::Not => !v,
                    IntUnOp::LNot => u32::from(v == 0),
                };
                return int(r, ty);
            }
            IntUn(op, Box::new(a))
        }
        FNeg(a) => {
            let a = fold_expr(*a);
            if let FloatConst(v) = a.kind {
                return TExpr::new(FloatConst(-v), ty);
            }
            FNeg(Box::new(a))
        }
        IntBin { op, signed, a, b } => {
            let (a, b) = (fold_expr(*a), fold_expr(*b));
            if let (Some(x), Some(y)) = (a.as_int_const(), b.as_int_const()) {
                if let Some(r) = int_binop(op, signed, x, y) {
                    return int(r, ty);
                }
            }
            IntBin {
                op,
                signed,
                a: Box::new(a),
                b: Box::new(b),
            }
        }
        FloatBin(op, a, b) => {
            let (a, b) = (fold_expr(*a), fold_expr(*b));
            if let (FloatConst(x), FloatConst(y)) = (&a.kind, &b.kind) {
                return TExpr::new(FloatConst(float_binop(op, *x, *y)), ty);
            }
            FloatBin(op, Box::new(a), Box::new(b))
        }
        FloatCmp(op, a, b) => {
            let (a, b) = (fold_expr(*a), fold_expr(*b));
            if let (FloatConst(x), FloatConst(y)) = (&a.kind, &b.kind) {
                return int(float_cmp(op, *x, *y), ty);
            }
            FloatCmp(op, Box::new(a), Box::new(b))
        }
        Conv(c, a) => {
            let a = fold_expr(*a);
            match (&a.kind, c) {
                (IntConst(v), super::ir::Conv::I2F) => {
                    return TExpr::new(FloatConst(f64::from(*v as i32)), ty)
                }
                (IntConst(v), super::ir::Conv::U2F) => {
                    return TExpr::new(FloatConst(f64::from(*v)), ty)
                }
                (FloatConst(v), super::ir::Conv::F2I) => return int((*v as i32) as u32, ty),
                (FloatConst(v), super::ir::Conv::F2U) => return int(*v as u32, ty),
                _ => Conv(c, Box::new(a)),
            }
        }
        PtrNonNull(a) => {
            let a = fold_expr(*a);
            match a.kind {
                NullPtr => return int(0, ty),
                DataPtr(_) | FrameAddr(_) => return int(1, ty),
                _ => PtrNonNull(Box::new(a)),
            }
        }
        PtrOffset(p, off) => {
            let (p, off) = (fold_expr(*p), fold_expr(*off));
            match (&p.kind, off.as_int_const()) {
                (_, Some(0)) => return TExpr { ty, ..p },
                (DataPtr(base), Some(o)) => return TExpr::new(DataPtr(base.wrapping_add(o)), ty),
                _ => PtrOffset(Box::new(p), Box::new(off)),
            }
        }
        PtrCmp(op, a, b) => PtrCmp(op, fold_box(a), fold_box(b)),
        PtrDiff { a, b, elem } => PtrDiff {
            a: fold_box(a),
            b: fold_box(b),
            elem,
        },
        LogAnd(a, b) => {
            let (a, b) = (fold_expr(*a), fold_expr(*b));
            match a.as_int_const() {
                Some(0) => return int(0, ty),
                Some(_) => return fold_expr(normalize(b)),
                None => LogAnd(Box::new(a), Box::new(b)),
            }
        }
        LogOr(a, b) => {
            let (a, b) = (fold_expr(*a), fold_expr(*b));
            match a.as_int_const() {
                Some(0) => return fold_expr(normalize(b)),
                Some(_) => return int(1, ty),
                None => LogOr(Box::new(a), Box::new(b)),
            }
        }
        Cond(c, a, b) => {
            let c = fold_expr(*c);
            match c.as_int_const() {
                Some(0) => return fold_expr(*b),
                Some(_) => return fold_expr(*a),
                None => Cond(Box::new(c), fold_box(a), fold_box(b)),
            }
        }
        Call(f, args) => Call(f, args.into_iter().map(fold_expr).collect()),
        Host(id, args) => Host(id, args.into_iter().map(fold_expr).collect()),
        Assign {
            place,
            value,
            result,
        } => Assign {
            place: fold_place(place),
            value: fold_box(value),
            result,
        },
        Read(p) => Read(fold_place(p)),
        Comma(a, b) => {
            let a = fold_expr(*a);
            let b = fold_expr(*b);
            if a.is_pure() {
                return b;
            }
            Comma(Box::new(a), Box::new(b))
        }
        Discard(a) => Discard(fold_box(a)),
        k @ (IntConst(_) | FloatConst(_) | NullPtr | DataPtr(_) | FrameAddr(_) | Old) => k,
    };
    TExpr { kind, ty }
}

/// `x != 0` as 0 or 1.
fn normalize(e: TExpr) -> TExpr {
    TExpr::new(
        TKind::IntUn(
            IntUnOp::LNot,
            Box::new(TExpr::new(
                TKind::IntUn(IntUnOp::LNot, Box::new(e)),
                Ty::I32,
            )),
        ),
        Ty::I32,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(op: IntOp, a: i32, b: i32) -> TExpr {
        TExpr::new(
            TKind::IntBin {
                op,
                signed: true,
                a: Box::new(TExpr::int(a)),
                b: Box::new(TExpr::int(b)),
            },
            Ty::I32,
        )
    }

    #[test]
    fn folds_arithmetic_but_not_division_by_zero() {
        assert_eq!(fold_expr(bin(IntOp::Mul, 6, 7)).as_int_const(), Some(42));
        assert_eq!(
            fold_expr(bin(IntOp::Shr, -8, 1)).as_int_const(),
            Some((-4i32) as u32)
        );
        assert!(fold_expr(bin(IntOp::Div, 1, 0)).as_int_const().is_none());
    }

    #[test]
    fn dead_branches_and_unreachable_statements_are_removed() {
        let body = vec![
            TStmt::If(
                TExpr::int(0),
                vec![TStmt::Return(Some(TExpr::int(1)))],
                vec![],
            ),
            TStmt::Loop {
                cond: Some(TExpr::int(0)),
                body: vec![TStmt::Break],
                step: None,
                post_test: false,
            },
            TStmt::Return(Some(TExpr::int(2))),
            TStmt::Return(Some(TExpr::int(3))),
        ];
        assert_eq!(stmts(body), vec![TStmt::Return(Some(TExpr::int(2)))]);
    }
}
