//! Host-call table: the task-facing engine interface.
//!
//! The canonical text rendering of this table is hashed (MD5) into the
//! firmware hash. Any change to an id, name or signature changes the hash and
//! invalidates previously compiled task binaries.

use std::fmt::Write as _;

use md5::{Digest, Md5};

/// Argument or return kind. Pointers occupy two integer stack slots
/// (handle, offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Void,
    U32,
    Ptr,
}

impl Kind {
    pub fn int_slots(self) -> u8 {
        match self {
            Kind::Void => 0,
            Kind::U32 => 1,
            Kind::Ptr => 2,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Kind::Void => "void",
            Kind::U32 => "u32",
            Kind::Ptr => "ptr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostCall {
    pub id: u8,
    pub name: &'static str,
    pub params: &'static [Kind],
    /// Accepts additional printf-style arguments after `params`.
    pub variadic: bool,
    pub ret: Kind,
}

impl HostCall {
    pub fn fixed_int_slots(&self) -> u8 {
        self.params.iter().map(|k| k.int_slots()).sum()
    }

    /// Canonical one-line signature, e.g. `18 recmodule_get_iq_pair(u32, ptr) -> void`.
    pub fn signature(&self) -> String {
        let mut params: Vec<&str> = self.params.iter().map(|k| k.as_str()).collect();
        if self.variadic {
            params.push("...");
        }
        format!(
            "{} {}({}) -> {}",
            self.id,
            self.name,
            params.join(", "),
            self.ret.as_str()
        )
    }
}

pub mod id {
    pub const PRINTF: u8 = 0;
    pub const ENTER_CRITICAL: u8 = 1;
    pub const EXIT_CRITICAL: u8 = 2;
    pub const RESTART_TIMER: u8 = 3;
    pub const GET_CYCLE_COUNT_TIMER: u8 = 4;
    pub const GET_NS_TIMER: u8 = 5;
    pub const REPORT_ERROR: u8 = 6;
    pub const PRINTF_ERROR: u8 = 7;
    pub const GET_PARAMETERS: u8 = 8;
    pub const GET_PARAMETERS_SIZE: u8 = 9;
    pub const SET_PROGRESS: u8 = 10;
    pub const GET_DATA_BOX: u8 = 11;
    pub const FINISH_DATA_BOX: u8 = 12;
    pub const DISCARD_DATA_BOX: u8 = 13;
    pub const SEQ_WAIT_WHILE_BUSY: u8 = 14;
    pub const SEQ_START_AT: u8 = 15;
    pub const SEQ_WAIT_UNTIL_RELAXED: u8 = 16;
    pub const REC_WAIT_WHILE_BUSY: u8 = 17;
    pub const REC_GET_IQ_PAIR: u8 = 18;
    pub const REG_READ: u8 = 19;
    pub const REG_WRITE: u8 = 20;
    pub const FFT_AUTOCORRELATE: u8 = 21;
}

use Kind::{Ptr, Void, U32};

const fn call(id: u8, name: &'static str, params: &'static [Kind], ret: Kind) -> HostCall {
    HostCall {
        id,
        name,
        params,
        variadic: false,
        ret,
    }
}

/// The host-call table, indexed by id.
pub const TABLE: &[HostCall] = &[
    HostCall {
        id: 0,
        name: "rtos_printf",
        params: &[Ptr],
        variadic: true,
        ret: Void,
    },
    call(1, "rtos_EnterCriticalSection", &[], Void),
    call(2, "rtos_ExitCriticalSection", &[], Void),
    call(3, "rtos_RestartTimer", &[], Void),
    call(4, "rtos_GetCycleCountTimer", &[], U32),
    call(5, "rtos_GetNsTimer", &[], U32),
    call(6, "rtos_ReportError", &[Ptr], Void),
    HostCall {
        id: 7,
        name: "rtos_PrintfError",
        params: &[Ptr],
        variadic: true,
        ret: Void,
    },
    call(8, "rtos_GetParameters", &[], Ptr),
    call(9, "rtos_GetParametersSize", &[], U32),
    call(10, "rtos_SetProgress", &[U32], Void),
    call(11, "rtos_GetDataBox", &[U32], Ptr),
    call(12, "rtos_FinishDataBox", &[Ptr], Void),
    call(13, "rtos_DiscardDataBox", &[Ptr], Void),
    call(14, "sequencer_wait_while_busy", &[], Void),
    call(15, "sequencer_start_at", &[U32], Void),
    call(16, "sequencer_wait_until_qubit_relaxed", &[], Void),
    call(17, "recmodule_wait_while_busy", &[U32], Void),
    call(18, "recmodule_get_iq_pair", &[U32, Ptr], Void),
    call(19, "reg_read", &[U32], U32),
    call(20, "reg_write", &[U32, U32], Void),
    call(21, "fft_autocorrelate", &[Ptr, Ptr, U32], Void),
];

pub const TABLE_HEADER: &str = "qtask host interface v1";

pub fn lookup(id: u8) -> Option<&'static HostCall> {
    TABLE.get(id as usize)
}

pub fn by_name(name: &str) -> Option<&'static HostCall> {
    TABLE.iter().find(|c| c.name == name)
}

/// Canonical serialization of a table: a header line, then one signature
/// per line.
pub fn canonical_text(table: &[HostCall]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TABLE_HEADER}");
    for c in table {
        let _ = writeln!(s, "{}", c.signature());
    }
    s
}

pub fn table_hash(table: &[HostCall]) -> [u8; 16] {
    Md5::digest(canonical_text(table).as_bytes()).into()
}

/// Hash of the interface this engine build implements.
pub fn firmware_hash() -> [u8; 16] {
    table_hash(TABLE)
}

pub fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_match_positions() {
        for (i, c) in TABLE.iter().enumerate() {
            assert_eq!(c.id as usize, i, "{}", c.name);
        }
    }

    #[test]
    fn any_signature_change_changes_the_hash() {
        let base = firmware_hash();
        let mut altered = TABLE.to_vec();
        altered[19].ret = Kind::Ptr;
        assert_ne!(table_hash(&altered), base);
        let mut renamed = TABLE.to_vec();
        renamed[3].name = "rtos_ResetTimer";
        assert_ne!(table_hash(&renamed), base);
        assert_ne!(table_hash(&TABLE[..21]), base);
    }

    #[test]
    fn canonical_text_shape() {
        let text = canonical_text(TABLE);
        assert!(text.starts_with("qtask host interface v1\n0 rtos_printf(ptr, ...) -> void\n"));
        assert!(text.contains("\n18 recmodule_get_iq_pair(u32, ptr) -> void\n"));
        assert_eq!(text.lines().count(), TABLE.len() + 1);
    }
}
