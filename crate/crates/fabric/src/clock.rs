//! Virtual nanosecond clock shared by the fabric and the task engine.
//!
//! Time never advances on its own. Every advance names a [`CostKind`] and is
//! folded into an audit ledger (per-kind totals) and a running trace digest,
//! so two runs can be compared for bit-identical timing without keeping the
//! whole event list in memory.

use std::collections::BTreeMap;
use std::fmt;

/// Category under which a clock advance is booked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CostKind {
    BusRead,
    BusWrite,
    /// VM instruction cycles.
    Cycles,
    /// Communication request pausing the application context.
    Interruption,
    /// Waiting for the qubit relaxation deadline.
    Relaxation,
    /// Fabric-side waiting (sequencer run-out, idle engine).
    Idle,
    /// Modelled cost of a library routine executed by the engine (FFT).
    Compute,
}

impl CostKind {
    pub const ALL: [CostKind; 7] = [
        CostKind::BusRead,
        CostKind::BusWrite,
        CostKind::Cycles,
        CostKind::Interruption,
        CostKind::Relaxation,
        CostKind::Idle,
        CostKind::Compute,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CostKind::BusRead => "bus_read",
            CostKind::BusWrite => "bus_write",
            CostKind::Cycles => "cycles",
            CostKind::Interruption => "interruption",
            CostKind::Relaxation => "relaxation",
            CostKind::Idle => "idle",
            CostKind::Compute => "compute",
        }
    }

    fn tag(&self) -> u8 {
        *self as u8
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aggregated count and duration for one [`CostKind`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerEntry {
    pub events: u64,
    pub total_ns: u64,
}

/// One recorded clock advance (only kept when tracing is enabled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    /// Clock value *before* the advance.
    pub at_ns: u64,
    pub kind: CostKind,
    pub cost_ns: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Monotonic virtual clock with an audit ledger.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now_ns: u64,
    ledger: BTreeMap<CostKind, LedgerEntry>,
    digest: u64,
    trace: Option<Vec<TraceEvent>>,
    trace_limit: usize,
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            now_ns: 0,
            ledger: BTreeMap::new(),
            digest: FNV_OFFSET,
            trace: None,
            trace_limit: 0,
        }
    }

    #[inline]
    pub fn now(&self) -> u64 {
        self.now_ns
    }

    /// Keeps up to `limit` individual events for inspection.
    pub fn enable_trace(&mut self, limit: usize) {
        self.trace = Some(Vec::new());
        self.trace_limit = limit;
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Advances by `cost_ns`, booked under `kind`. Zero-cost advances are
    /// not recorded.
    pub fn charge(&mut self, kind: CostKind, cost_ns: u64) {
        if cost_ns == 0 {
            return;
        }
        let at = self.now_ns;
        self.now_ns = at.checked_add(cost_ns).expect("virtual clock overflow");

        let entry = self.ledger.entry(kind).or_default();
        entry.events += 1;
        entry.total_ns += cost_ns;

        for byte in at
            .to_le_bytes()
            .into_iter()
            .chain(cost_ns.to_le_bytes())
            .chain([kind.tag()])
        {
            self.digest ^= u64::from(byte);
            self.digest = self.digest.wrapping_mul(FNV_PRIME);
        }

        if let Some(trace) = self.trace.as_mut() {
            if trace.len() < self.trace_limit {
                trace.push(TraceEvent {
                    at_ns: at,
                    kind,
                    cost_ns,
                });
            }
        }
    }

    /// Advances to `target_ns` if it lies in the future; returns the amount
    /// of time that passed.
    pub fn advance_to(&mut self, kind: CostKind, target_ns: u64) -> u64 {
        let delta = target_ns.saturating_sub(self.now_ns);
        self.charge(kind, delta);
        delta
    }

    pub fn ledger(&self) -> &BTreeMap<CostKind, LedgerEntry> {
        &self.ledger
    }

    pub fn total_for(&self, kind: CostKind) -> u64 {
        self.ledger.get(&kind).map_or(0, |e| e.total_ns)
    }

    /// Sum of every booked cost. Equals [`now`](Self::now) for a clock that
    /// started at zero.
    pub fn ledger_total(&self) -> u64 {
        self.ledger.values().map(|e| e.total_ns).sum()
    }

    /// FNV-1a digest over every `(at, cost, kind)` advance so far.
    pub fn trace_digest(&self) -> u64 {
        self.digest
    }
}
