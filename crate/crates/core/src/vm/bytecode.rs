//! Instruction set and the `QTBC` container format.
//!
//! Every instruction is one opcode byte followed by fixed-size
//! little-endian operands. Jump targets are absolute byte offsets into the
//! code section and must land on an instruction boundary of the same
//! function.

use std::fmt;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"QTBC";
pub const FORMAT_VERSION: u16 = 1;

const SECTION_CONSTANTS: u16 = 1;
const SECTION_CODE: u16 = 2;
const SECTION_FUNCTIONS: u16 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("unknown opcode {opcode:#04x} at offset {offset}")]
    BadOpcode { offset: usize, opcode: u8 },
    #[error("malformed container: {0}")]
    Malformed(String),
}

macro_rules! opcodes {
    ($($name:ident = $code:literal),* $(,)?) => {
        /// Raw opcode bytes.
        pub mod op {
            $(pub const $name: u8 = $code;)*
        }
    };
}

opcodes! {
    ICONST = 0x01, FCONST = 0x02, DUP = 0x03, DROP = 0x04, SWAP = 0x05,
    FDUP = 0x06, FDROP = 0x07, LOADL = 0x08, STOREL = 0x09, FLOADL = 0x0A,
    FSTOREL = 0x0B,
    ADD = 0x10, SUB = 0x11, MUL = 0x12, DIVS = 0x13, DIVU = 0x14, REMS = 0x15,
    REMU = 0x16, AND = 0x17, OR = 0x18, XOR = 0x19, SHL = 0x1A, SHRS = 0x1B,
    SHRU = 0x1C, NEG = 0x1D, NOT = 0x1E, LNOT = 0x1F,
    EQ = 0x20, NE = 0x21, LTS = 0x22, LTU = 0x23, LES = 0x24, LEU = 0x25,
    GTS = 0x26, GTU = 0x27, GES = 0x28, GEU = 0x29,
    FADD = 0x30, FSUB = 0x31, FMUL = 0x32, FDIV = 0x33, FNEG = 0x34,
    FEQ = 0x35, FNE = 0x36, FLT = 0x37, FLE = 0x38, FGT = 0x39, FGE = 0x3A,
    I2F = 0x40, U2F = 0x41, F2I = 0x42, F2U = 0x43,
    JMP = 0x50, JZ = 0x51, JNZ = 0x52, CALL = 0x53, RET = 0x54,
    HOSTCALL = 0x55, HALT = 0x56,
    LD32 = 0x60, LDF64 = 0x61, ST32 = 0x62, STF64 = 0x63, FRAMEADDR = 0x64,
}

/// A decoded instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instr {
    IConst(u16),
    FConst(u16),
    Dup,
    Drop,
    Swap,
    FDup,
    FDrop,
    LoadL(u16),
    StoreL(u16),
    FLoadL(u16),
    FStoreL(u16),
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
    Neg,
    Not,
    LNot,
    Eq,
    Ne,
    LtS,
    LtU,
    LeS,
    LeU,
    GtS,
    GtU,
    GeS,
    GeU,
    FAdd,
    FSub,
    FMul,
    FDiv,
    FNeg,
    FEq,
    FNe,
    FLt,
    FLe,
    FGt,
    FGe,
    I2F,
    U2F,
    F2I,
    F2U,
    Jmp(u32),
    Jz(u32),
    Jnz(u32),
    Call(u16),
    Ret { ints: u8, floats: u8 },
    HostCall { id: u8, ints: u8, floats: u8 },
    Halt,
    Ld32,
    LdF64,
    St32,
    StF64,
    FrameAddr(u32),
}

impl Instr {
    /// Encoded size in bytes.
    pub fn size(&self) -> usize {
        use Instr::*;
        match self {
            IConst(_)
            | FConst(_)
            | LoadL(_)
            | StoreL(_)
            | FLoadL(_)
            | FStoreL(_)
            | Call(_)
            | Ret { .. } => 3,
            HostCall { .. } => 4,
            Jmp(_) | Jz(_) | Jnz(_) | FrameAddr(_) => 5,
            _ => 1,
        }
    }

    pub fn jump_target(&self) -> Option<u32> {
        match *self {
            Instr::Jmp(t) | Instr::Jz(t) | Instr::Jnz(t) => Some(t),
            _ => None,
        }
    }

    /// Control never falls through to the next instruction.
    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Jmp(_) | Instr::Ret { .. } | Instr::Halt)
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        use Instr::*;
        let simple = |out: &mut Vec<u8>, code| out.push(code);
        let with_u16 = |out: &mut Vec<u8>, code, v: u16| {
            out.push(code);
            out.extend_from_slice(&v.to_le_bytes());
        };
        let with_u32 = |out: &mut Vec<u8>, code, v: u32| {
            out.push(code);
            out.extend_from_slice(&v.to_le_bytes());
        };
        match *self {
            IConst(i) => with_u16(out, op::ICONST, i),
            FConst(i) => with_u16(out, op::FCONST, i),
            LoadL(i) => with_u16(out, op::LOADL, i),
            StoreL(i) => with_u16(out, op::STOREL, i),
            FLoadL(i) => with_u16(out, op::FLOADL, i),
            FStoreL(i) => with_u16(out, op::FSTOREL, i),
            Call(i) => with_u16(out, op::CALL, i),
            Ret { ints, floats } => out.extend_from_slice(&[op::RET, ints, floats]),
            HostCall { id, ints, floats } => {
                out.extend_from_slice(&[op::HOSTCALL, id, ints, floats])
            }
            Jmp(t) => with_u32(out, op::JMP, t),
            Jz(t) => with_u32(out, op::JZ, t),
            Jnz(t) => with_u32(out, op::JNZ, t),
            FrameAddr(o) => with_u32(out, op::FRAMEADDR, o),
            other => simple(out, other.simple_opcode()),
        }
    }

    fn simple_opcode(&self) -> u8 {
        use Instr::*;
        match self {
            Dup => op::DUP,
            Drop => op::DROP,
            Swap => op::SWAP,
            FDup => op::FDUP,
            FDrop => op::FDROP,
            Add => op::ADD,
            Sub => op::SUB,
            Mul => op::MUL,
            DivS => op::DIVS,
            DivU => op::DIVU,
            RemS => op::REMS,
            RemU => op::REMU,
            And => op::AND,
            Or => op::OR,
            Xor => op::XOR,
            Shl => op::SHL,
            ShrS => op::SHRS,
            ShrU => op::SHRU,
            Neg => op::NEG,
            Not => op::NOT,
            LNot => op::LNOT,
            Eq => op::EQ,
            Ne => op::NE,
            LtS => op::LTS,
            LtU => op::LTU,
            LeS => op::LES,
            LeU => op::LEU,
            GtS => op::GTS,
            GtU => op::GTU,
            GeS => op::GES,
            GeU => op::GEU,
            FAdd => op::FADD,
            FSub => op::FSUB,
            FMul => op::FMUL,
            FDiv => op::FDIV,
            FNeg => op::FNEG,
            FEq => op::FEQ,
            FNe => op::FNE,
            FLt => op::FLT,
            FLe => op::FLE,
            FGt => op::FGT,
            FGe => op::FGE,
            I2F => op::I2F,
            U2F => op::U2F,
            F2I => op::F2I,
            F2U => op::F2U,
            Halt => op::HALT,
            Ld32 => op::LD32,
            LdF64 => op::LDF64,
            St32 => op::ST32,
            StF64 => op::STF64,
            _ => unreachable!("instruction with operands"),
        }
    }

    /// Decodes the instruction at `offset`.
    pub fn decode(code: &[u8], offset: usize) -> Result<Instr, DecodeError> {
        use Instr::*;
        let opcode = *code
            .get(offset)
            .ok_or(DecodeError::Truncated("instruction"))?;
        let operand = |n: usize| -> Result<&[u8], DecodeError> {
            code.get(offset + 1..offset + 1 + n)
                .ok_or(DecodeError::Truncated("operand"))
        };
        let u16_at = || operand(2).map(|b| u16::from_le_bytes([b[0], b[1]]));
        let u32_at = || operand(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        Ok(match opcode {
            op::ICONST => IConst(u16_at()?),
            op::FCONST => FConst(u16_at()?),
            op::LOADL => LoadL(u16_at()?),
            op::STOREL => StoreL(u16_at()?),
            op::FLOADL => FLoadL(u16_at()?),
            op::FSTOREL => FStoreL(u16_at()?),
            op::CALL => Call(u16_at()?),
            op::RET => {
                let b = operand(2)?;
                Ret {
                    ints: b[0],
                    floats: b[1],
                }
            }
            op::HOSTCALL => {
                let b = operand(3)?;
                HostCall {
                    id: b[0],
                    ints: b[1],
                    floats: b[2],
                }
            }
            op::JMP => Jmp(u32_at()?),
            op::JZ => Jz(u32_at()?),
            op::JNZ => Jnz(u32_at()?),
            op::FRAMEADDR => FrameAddr(u32_at()?),
            op::DUP => Dup,
            op::DROP => Drop,
            op::SWAP => Swap,
            op::FDUP => FDup,
            op::FDROP => FDrop,
            op::ADD => Add,
            op::SUB => Sub,
            op::MUL => Mul,
            op::DIVS => DivS,
            op::DIVU => DivU,
            op::REMS => RemS,
            op::REMU => RemU,
            op::AND => And,
            op::OR => Or,
            op::XOR => Xor,
            op::SHL => Shl,
            op::SHRS => ShrS,
            op::SHRU => ShrU,
            op::NEG => Neg,
            op::NOT => Not,
            op::LNOT => LNot,
            op::EQ => Eq,
            op::NE => Ne,
            op::LTS => LtS,
            op::LTU => LtU,
            op::LES => LeS,
            op::LEU => LeU,
            op::GTS => GtS,
            op::GTU => GtU,
            op::GES => GeS,
            op::GEU => GeU,
            op::FADD => FAdd,
            op::FSUB => FSub,
            op::FMUL => FMul,
            op::FDIV => FDiv,
            op::FNEG => FNeg,
            op::FEQ => FEq,
            op::FNE => FNe,
            op::FLT => FLt,
            op::FLE => FLe,
            op::FGT => FGt,
            op::FGE => FGe,
            op::I2F => I2F,
            op::U2F => U2F,
            op::F2I => F2I,
            op::F2U => F2U,
            op::HALT => Halt,
            op::LD32 => Ld32,
            op::LDF64 => LdF64,
            op::ST32 => St32,
            op::STF64 => StF64,
            opcode => return Err(DecodeError::BadOpcode { offset, opcode }),
        })
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instr::*;
        match *self {
            IConst(i) => write!(f, "ICONST #{i}"),
            FConst(i) => write!(f, "FCONST #{i}"),
            LoadL(i) => write!(f, "LOADL {i}"),
            StoreL(i) => write!(f, "STOREL {i}"),
            FLoadL(i) => write!(f, "FLOADL {i}"),
            FStoreL(i) => write!(f, "FSTOREL {i}"),
            Call(i) => write!(f, "CALL {i}"),
            Ret { ints, floats } => write!(f, "RET {ints} {floats}"),
            HostCall { id, ints, floats } => write!(f, "HOSTCALL {id} {ints} {floats}"),
            Jmp(t) => write!(f, "JMP @{t}"),
            Jz(t) => write!(f, "JZ @{t}"),
            Jnz(t) => write!(f, "JNZ @{t}"),
            FrameAddr(o) => write!(f, "FRAMEADDR {o}"),
            other => write!(f, "{}", format!("{other:?}").to_ascii_uppercase()),
        }
    }
}

/// Function table entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub code_offset: u32,
    pub code_len: u32,
    pub int_params: u8,
    pub float_params: u8,
    /// Integer slots, parameters first.
    pub int_slots: u16,
    pub float_slots: u16,
    /// Bytes of LOCALS memory reserved per activation.
    pub frame_bytes: u32,
    pub ret_ints: u8,
    pub ret_floats: u8,
}

/// A complete bytecode module. Function 0 is the task entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bytecode {
    pub words: Vec<u32>,
    pub floats: Vec<f64>,
    /// Read-only data (string literals) addressed through the CONST handle.
    pub data: Vec<u8>,
    pub code: Vec<u8>,
    pub functions: Vec<Function>,
}

impl Bytecode {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut constants = Vec::new();
        put_u32(&mut constants, self.words.len() as u32);
        for w in &self.words {
            put_u32(&mut constants, *w);
        }
        put_u32(&mut constants, self.floats.len() as u32);
        for f in &self.floats {
            constants.extend_from_slice(&f.to_bits().to_le_bytes());
        }
        put_u32(&mut constants, self.data.len() as u32);
        constants.extend_from_slice(&self.data);

        let mut functions = Vec::new();
        functions.extend_from_slice(&(self.functions.len() as u16).to_le_bytes());
        for f in &self.functions {
            put_u32(&mut functions, f.code_offset);
            put_u32(&mut functions, f.code_len);
            functions.push(f.int_params);
            functions.push(f.float_params);
            functions.extend_from_slice(&f.int_slots.to_le_bytes());
            functions.extend_from_slice(&f.float_slots.to_le_bytes());
            put_u32(&mut functions, f.frame_bytes);
            functions.push(f.ret_ints);
            functions.push(f.ret_floats);
            let name = f.name.as_bytes();
            let len = name.len().min(255);
            functions.push(len as u8);
            functions.extend_from_slice(&name[..len]);
        }

        let mut out = Vec::with_capacity(16 + constants.len() + self.code.len() + functions.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&3u16.to_le_bytes());
        for (kind, body) in [
            (SECTION_CONSTANTS, &constants),
            (SECTION_CODE, &self.code),
            (SECTION_FUNCTIONS, &functions),
        ] {
            out.extend_from_slice(&kind.to_le_bytes());
            put_u32(&mut out, body.len() as u32);
            out.extend_from_slice(body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(DecodeError::Version(version));
        }
        let sections = r.u16("section count")?;
        let mut module = Bytecode::default();
        let mut seen = [false; 4];
        for _ in 0..sections {
            let kind = r.u16("section kind")?;
            let len = r.u32("section length")? as usize;
            let body = r.take(len, "section body")?;
            let slot = seen
                .get_mut(kind as usize)
                .filter(|_| kind != 0)
                .ok_or_else(|| DecodeError::Malformed(format!("unknown section {kind}")))?;
            if std::mem::replace(slot, true) {
                return Err(DecodeError::Malformed(format!("duplicate section {kind}")));
            }
            let mut s = Reader::new(body);
            match kind {
                SECTION_CONSTANTS => {
                    let n = s.u32("word count")? as usize;
                    module.words = (0..n).map(|_| s.u32("word")).collect::<Result<_, _>>()?;
                    let n = s.u32("float count")? as usize;
                    module.floats = (0..n)
                        .map(|_| s.u64("float").map(f64::from_bits))
                        .collect::<Result<_, _>>()?;
                    let n = s.u32("data length")? as usize;
                    module.data = s.take(n, "data")?.to_vec();
                }
                SECTION_CODE => module.code = s.take(body.len(), "code")?.to_vec(),
                _ => {
                    let n = s.u16("function count")?;
                    for _ in 0..n {
                        let code_offset = s.u32("function")?;
                        let code_len = s.u32("function")?;
                        let int_params = s.u8("function")?;
                        let float_params = s.u8("function")?;
                        let int_slots = s.u16("function")?;
                        let float_slots = s.u16("function")?;
                        let frame_bytes = s.u32("function")?;
                        let ret_ints = s.u8("function")?;
                        let ret_floats = s.u8("function")?;
                        let name_len = s.u8("function name")? as usize;
                        let name = String::from_utf8(s.take(name_len, "function name")?.to_vec())
                            .map_err(|_| {
                            DecodeError::Malformed("function name is not UTF-8".into())
                        })?;
                        module.functions.push(Function {
                            name,
                            code_offset,
                            code_len,
                            int_params,
                            float_params,
                            int_slots,
                            float_slots,
                            frame_bytes,
                            ret_ints,
                            ret_floats,
                        });
                    }
                }
            }
            if !s.is_empty() {
                return Err(DecodeError::Malformed(format!(
                    "trailing bytes in section {kind}"
                )));
            }
        }
        if !r.is_empty() {
            return Err(DecodeError::Malformed(
                "trailing bytes after sections".into(),
            ));
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(DecodeError::Malformed("missing section".into()));
        }
        Ok(module)
    }

    /// Human-readable listing.
    pub fn disassemble(&self) -> String {
        let mut out = String::new();
        for (idx, f) in self.functions.iter().enumerate() {
            out.push_str(&format!(
                "fn {idx} {} (params {}i/{}f, slots {}i/{}f, frame {} B, ret {}i/{}f)\n",
                f.name,
                f.int_params,
                f.float_params,
                f.int_slots,
                f.float_slots,
                f.frame_bytes,
                f.ret_ints,
                f.ret_floats
            ));
            let start = f.code_offset as usize;
            let end = start + f.code_len as usize;
            let mut pc = start;
            while pc < end.min(self.code.len()) {
                match Instr::decode(&self.code, pc) {
                    Ok(i) => {
                        out.push_str(&format!("  {pc:6}  {i}\n"));
                        pc += i.size();
                    }
                    Err(e) => {
                        out.push_str(&format!("  {pc:6}  <{e}>\n"));
                        break;
                    }
                }
            }
        }
        out
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(DecodeError::Truncated(what))?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(DecodeError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8, DecodeError> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16, DecodeError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32, DecodeError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64, DecodeError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_instrs() -> Vec<Instr> {
        use Instr::*;
        vec![
            IConst(7),
            FConst(1),
            Dup,
            Drop,
            Swap,
            FDup,
            FDrop,
            LoadL(3),
            StoreL(4),
            FLoadL(5),
            FStoreL(6),
            Add,
            Sub,
            Mul,
            DivS,
            DivU,
            RemS,
            RemU,
            And,
            Or,
            Xor,
            Shl,
            ShrS,
            ShrU,
            Neg,
            Not,
            LNot,
            Eq,
            Ne,
            LtS,
            LtU,
            LeS,
            LeU,
            GtS,
            GtU,
            GeS,
            GeU,
            FAdd,
            FSub,
            FMul,
            FDiv,
            FNeg,
            FEq,
            FNe,
            FLt,
            FLe,
            FGt,
            FGe,
            I2F,
            U2F,
            F2I,
            F2U,
            Jmp(10),
            Jz(20),
            Jnz(30),
            Call(2),
            Ret { ints: 1, floats: 0 },
            HostCall {
                id: 18,
                ints: 3,
                floats: 0,
            },
            Halt,
            Ld32,
            LdF64,
            St32,
            StF64,
            FrameAddr(16),
        ]
    }

    #[test]
    fn every_instruction_roundtrips() {
        for i in all_instrs() {
            let mut buf = Vec::new();
            i.encode(&mut buf);
            assert_eq!(buf.len(), i.size(), "{i}");
            assert_eq!(Instr::decode(&buf, 0).unwrap(), i);
        }
    }

    #[test]
    fn container_roundtrips() {
        let mut code = Vec::new();
        Instr::IConst(0).encode(&mut code);
        Instr::Ret { ints: 1, floats: 0 }.encode(&mut code);
        let m = Bytecode {
            words: vec![0, 42],
            floats: vec![1.5, -0.0],
            data: b"hi\0".to_vec(),
            code: code.clone(),
            functions: vec![Function {
                name: "task_entry".into(),
                code_offset: 0,
                code_len: code.len() as u32,
                int_params: 0,
                float_params: 0,
                int_slots: 0,
                float_slots: 0,
                frame_bytes: 0,
                ret_ints: 1,
                ret_floats: 0,
            }],
        };
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        let back = Bytecode::from_bytes(&bytes).unwrap();
        assert_eq!(back.words, m.words);
        assert_eq!(back.floats[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.code, m.code);
        assert_eq!(back.functions, m.functions);
        for cut in 0..bytes.len() {
            assert!(Bytecode::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn unknown_opcode_is_reported() {
        assert_eq!(
            Instr::decode(&[0xEE], 0),
            Err(DecodeError::BadOpcode {
                offset: 0,
                opcode: 0xEE
            })
        );
    }
}
