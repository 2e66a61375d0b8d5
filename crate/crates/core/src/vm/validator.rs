//! Load-time bytecode verification.
//!
//! Checks decoding, jump targets, slot and constant indices, host-call ids
//! and arities, and runs an abstract interpretation of both operand stacks
//! over every function so that heights agree at control-flow joins and
//! never underflow.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use super::bytecode::{Bytecode, Instr};
use super::hostcalls;
use super::{MAX_FLOAT_STACK, MAX_INT_STACK};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub function: Option<usize>,
    pub offset: Option<u32>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.function, self.offset) {
            (Some(func), Some(off)) => write!(f, "fn {func} @{off}: {}", self.message),
            (Some(func), None) => write!(f, "fn {func}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Stack effect: (int pops, float pops, int pushes, float pushes).
type Effect = (u32, u32, u32, u32);

pub fn validate(module: &Bytecode) -> ValidationReport {
    let mut report = ValidationReport::default();
    let global = |message: String| Violation {
        function: None,
        offset: None,
        message,
    };

    match module.functions.first() {
        None => report
            .violations
            .push(global("no functions; entry missing".into())),
        Some(entry) => {
            if entry.int_params != 0 || entry.float_params != 0 {
                report
                    .violations
                    .push(global("entry function takes parameters".into()));
            }
            if entry.ret_ints != 1 || entry.ret_floats != 0 {
                report
                    .violations
                    .push(global("entry function must return one integer".into()));
            }
        }
    }
    if module.functions.len() > usize::from(u16::MAX) {
        report.violations.push(global("too many functions".into()));
    }

    for (idx, _) in module.functions.iter().enumerate() {
        check_function(module, idx, &mut report.violations);
    }
    report
}

/// Maximum (int, float) operand-stack heights per function, or the
/// violations if the module does not verify.
pub(crate) fn stack_heights(module: &Bytecode) -> Result<Vec<(u32, u32)>, ValidationReport> {
    let report = validate(module);
    if !report.is_ok() {
        return Err(report);
    }
    let mut scratch = Vec::new();
    Ok((0..module.functions.len())
        .map(|idx| check_function(module, idx, &mut scratch).unwrap_or((0, 0)))
        .collect())
}

fn check_function(module: &Bytecode, fidx: usize, out: &mut Vec<Violation>) -> Option<(u32, u32)> {
    let f = &module.functions[fidx];
    let push = |out: &mut Vec<Violation>, offset: Option<u32>, message: String| {
        out.push(Violation {
            function: Some(fidx),
            offset,
            message,
        })
    };
    let start = f.code_offset as usize;
    let end = start.saturating_add(f.code_len as usize);
    if end > module.code.len() || f.code_len == 0 {
        push(
            out,
            None,
            format!("code range {start}..{end} outside code section"),
        );
        return None;
    }
    if u16::from(f.int_params) > f.int_slots || u16::from(f.float_params) > f.float_slots {
        push(out, None, "fewer slots than parameters".into());
    }

    // Decode linearly; instruction boundaries are the decode points.
    let mut instrs: BTreeMap<u32, Instr> = BTreeMap::new();
    let mut pc = start;
    while pc < end {
        match Instr::decode(&module.code[..end], pc) {
            Ok(i) => {
                instrs.insert(pc as u32, i);
                pc += i.size();
            }
            Err(e) => {
                push(out, Some(pc as u32), e.to_string());
                return None;
            }
        }
    }
    if let Some((_, last)) = instrs.iter().next_back() {
        if !last.is_terminator() {
            push(
                out,
                None,
                "control can fall off the end of the function".into(),
            );
        }
    }

    let before = out.len();
    for (&off, instr) in &instrs {
        let here = Some(off);
        if let Some(t) = instr.jump_target() {
            if !instrs.contains_key(&t) {
                push(
                    out,
                    here,
                    format!("jump target {t} is not an instruction boundary of this function"),
                );
            }
        }
        match *instr {
            Instr::IConst(i) if usize::from(i) >= module.words.len() => {
                push(out, here, format!("word constant {i} out of range"))
            }
            Instr::FConst(i) if usize::from(i) >= module.floats.len() => {
                push(out, here, format!("float constant {i} out of range"))
            }
            Instr::LoadL(i) | Instr::StoreL(i) if i >= f.int_slots => {
                push(out, here, format!("int slot {i} out of range"))
            }
            Instr::FLoadL(i) | Instr::FStoreL(i) if i >= f.float_slots => {
                push(out, here, format!("float slot {i} out of range"))
            }
            Instr::FrameAddr(o) if o >= f.frame_bytes => push(
                out,
                here,
                format!("frame offset {o} outside frame of {} bytes", f.frame_bytes),
            ),
            Instr::Call(c) if usize::from(c) >= module.functions.len() => {
                push(out, here, format!("call to unknown function {c}"))
            }
            Instr::Call(0) => push(out, here, "the entry function cannot be called".into()),
            Instr::Ret { ints, floats } if ints != f.ret_ints || floats != f.ret_floats => push(
                out,
                here,
                format!(
                    "returns {ints}i/{floats}f but function declares {}i/{}f",
                    f.ret_ints, f.ret_floats
                ),
            ),
            Instr::HostCall { id, ints, floats } => match hostcalls::lookup(id) {
                None => push(out, here, format!("unknown host call id {id}")),
                Some(h) => {
                    let fixed = h.fixed_int_slots();
                    let ok = if h.variadic {
                        ints >= fixed
                    } else {
                        ints == fixed && floats == 0
                    };
                    if !ok {
                        push(
                            out,
                            here,
                            format!(
                            "host call {} expects {fixed} integer slots{}, got {ints}i/{floats}f",
                            h.name,
                            if h.variadic { " plus varargs" } else { "" }
                        ),
                        );
                    }
                }
            },
            _ => {}
        }
    }
    if out.len() > before {
        return None;
    }

    // Abstract interpretation of stack heights.
    let mut heights: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    let mut max = (0u32, 0u32);
    let mut work = VecDeque::from([(start as u32, (0u32, 0u32))]);
    while let Some((off, h)) = work.pop_front() {
        match heights.get(&off) {
            Some(&seen) if seen == h => continue,
            Some(&seen) => {
                push(
                    out,
                    Some(off),
                    format!(
                        "stack heights disagree at join: {}i/{}f vs {}i/{}f",
                        seen.0, seen.1, h.0, h.1
                    ),
                );
                return None;
            }
            None => {
                heights.insert(off, h);
            }
        }
        let instr = instrs[&off];
        let (pi, pf, qi, qf) = effect(module, &instr);
        if h.0 < pi || h.1 < pf {
            push(out, Some(off), format!("stack underflow executing {instr}"));
            return None;
        }
        let next = (h.0 - pi + qi, h.1 - pf + qf);
        max = (max.0.max(next.0), max.1.max(next.1));
        if next.0 as usize > MAX_INT_STACK || next.1 as usize > MAX_FLOAT_STACK {
            push(out, Some(off), "operand stack exceeds its limit".into());
            return None;
        }
        if let Some(t) = instr.jump_target() {
            work.push_back((t, next));
        }
        if !instr.is_terminator() {
            let fall = off + instr.size() as u32;
            if instrs.contains_key(&fall) {
                work.push_back((fall, next));
            }
        }
    }
    Some(max)
}

fn effect(module: &Bytecode, instr: &Instr) -> Effect {
    use Instr::*;
    match *instr {
        IConst(_) | LoadL(_) => (0, 0, 1, 0),
        FConst(_) | FLoadL(_) => (0, 0, 0, 1),
        Dup => (1, 0, 2, 0),
        Drop | StoreL(_) | Jz(_) | Jnz(_) => (1, 0, 0, 0),
        Swap => (2, 0, 2, 0),
        FDup => (0, 1, 0, 2),
        FDrop | FStoreL(_) => (0, 1, 0, 0),
        Add | Sub | Mul | DivS | DivU | RemS | RemU | And | Or | Xor | Shl | ShrS | ShrU | Eq
        | Ne | LtS | LtU | LeS | LeU | GtS | GtU | GeS | GeU => (2, 0, 1, 0),
        Neg | Not | LNot => (1, 0, 1, 0),
        FAdd | FSub | FMul | FDiv => (0, 2, 0, 1),
        FNeg => (0, 1, 0, 1),
        FEq | FNe | FLt | FLe | FGt | FGe => (0, 2, 1, 0),
        I2F | U2F => (1, 0, 0, 1),
        F2I | F2U => (0, 1, 1, 0),
        Jmp(_) => (0, 0, 0, 0),
        Call(c) => {
            let f = &module.functions[c as usize];
            (
                u32::from(f.int_params),
                u32::from(f.float_params),
                u32::from(f.ret_ints),
                u32::from(f.ret_floats),
            )
        }
        Ret { ints, floats } => (u32::from(ints), u32::from(floats), 0, 0),
        HostCall { id, ints, floats } => {
            let ret = hostcalls::lookup(id).map_or(0, |h| h.ret.int_slots());
            (u32::from(ints), u32::from(floats), u32::from(ret), 0)
        }
        Halt => (1, 0, 0, 0),
        Ld32 => (2, 0, 1, 0),
        LdF64 => (2, 0, 0, 1),
        St32 => (3, 0, 0, 0),
        StF64 => (2, 1, 0, 0),
        FrameAddr(_) => (0, 0, 2, 0),
    }
}
