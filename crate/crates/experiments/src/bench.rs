//! Timing of typical operations, engine-side against client-side, and task
//! load durations.
//!
//! Engine columns are virtual. Per-access bus costs are read from the clock
//! ledger; the timer columns are what the task itself measures, including
//! its own instruction overhead. Client columns are wall-clock round trips
//! and are written to a separate, unhashed file.

use std::hint::black_box;
use std::time::Instant;

use qtask_core::tasks;
use qtask_fabric::regmap;
use qtask_service::{ClockReport, Session, Transport};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};
use crate::{run_task, u32s};

/// Independent measurement of a 1024-word register copy on the target
/// hardware, used as the comparand for the memcpy row.
pub const REFERENCE_MEMCPY_NS: f64 = 312_401.0;
pub const MEMCPY_WORDS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchParams {
    pub reps: u32,
    /// Status requests issued while the polling target task runs.
    pub polls: u32,
    /// Wall-clock samples per client-side row and per load timing.
    pub client_reps: u32,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            reps: 1000,
            polls: 100,
            client_reps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRow {
    pub operation: String,
    /// Virtual bus or interruption cost per operation, from the ledger.
    pub ledger_ns: Option<f64>,
    /// Median of the task's own timer readings per repetition.
    pub timer_ns: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineReport {
    pub rows: Vec<EngineRow>,
    pub register_read_ns: f64,
    pub register_write_ns: f64,
    pub memcpy_ns: f64,
    pub memcpy_vs_reference: f64,
    pub status_ns: f64,
    pub errors_ns: f64,
    pub boxes_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub operation: String,
    pub median_ns: u64,
    pub min_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadTiming {
    pub task: String,
    pub binary_bytes: usize,
    pub source_median_ns: u64,
    pub binary_median_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub rows: Vec<ClientRow>,
    pub loads: Vec<LoadTiming>,
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v.get(v.len() / 2).copied().unwrap_or(0)
}

fn delta(before: &ClockReport, after: &ClockReport, kind: &str) -> (u64, u64) {
    (
        after.total(kind) - before.total(kind),
        after.events(kind) - before.events(kind),
    )
}

fn bench_task<T: Transport>(
    s: &mut Session<T>,
    op: u32,
    reps: u32,
    poll_ns: u64,
) -> Result<(Vec<u32>, ClockReport, ClockReport)> {
    let before = s.clock()?;
    let mut boxes = Vec::new();
    run_task(s, "bench", tasks::BENCH, &[op, reps], poll_ns, |_, b| {
        boxes.push(b)
    })?;
    let after = s.clock()?;
    let [times] = &boxes[..] else {
        return Err(ExperimentError::Format(format!(
            "bench op {op} produced {} boxes",
            boxes.len()
        )));
    };
    Ok((u32s(times), before, after))
}

fn timer_median(times: &[u32]) -> u32 {
    median(times.iter().map(|&t| u64::from(t)).collect()) as u32
}

/// Engine-side rows.
pub fn engine_report<T: Transport>(
    s: &mut Session<T>,
    p: &BenchParams,
    poll_ns: u64,
) -> Result<EngineReport> {
    let mut rows = Vec::new();
    let per = |(total, events): (u64, u64)| {
        if events == 0 {
            0.0
        } else {
            total as f64 / events as f64
        }
    };

    let (t, b, a) = bench_task(s, 0, p.reps, poll_ns)?;
    let read = per(delta(&b, &a, "bus_read"));
    rows.push(EngineRow {
        operation: "register_read".into(),
        ledger_ns: Some(read),
        timer_ns: Some(timer_median(&t)),
    });

    let (t, b, a) = bench_task(s, 1, p.reps, poll_ns)?;
    let write = per(delta(&b, &a, "bus_write"));
    rows.push(EngineRow {
        operation: "register_write".into(),
        ledger_ns: Some(write),
        timer_ns: Some(timer_median(&t)),
    });

    let (t, b, a) = bench_task(s, 2, p.reps, poll_ns)?;
    let (total, _) = delta(&b, &a, "bus_read");
    let memcpy = total as f64 / f64::from(p.reps.max(1));
    rows.push(EngineRow {
        operation: "memcpy_1024".into(),
        ledger_ns: Some(memcpy),
        timer_ns: Some(timer_median(&t)),
    });

    let (t, _, _) = bench_task(s, 3, p.reps, poll_ns)?;
    rows.push(EngineRow {
        operation: "array_multiply_1024".into(),
        ledger_ns: None,
        timer_ns: Some(timer_median(&t)),
    });

    let (status, errors, boxes) = interruption_costs(s, p.polls)?;
    for (name, v) in [
        ("status_poll", status),
        ("errors_poll", errors),
        ("boxes_poll", boxes),
    ] {
        rows.push(EngineRow {
            operation: name.into(),
            ledger_ns: Some(v),
            timer_ns: None,
        });
    }
    Ok(EngineReport {
        rows,
        register_read_ns: read,
        register_write_ns: write,
        memcpy_ns: memcpy,
        memcpy_vs_reference: memcpy / REFERENCE_MEMCPY_NS - 1.0,
        status_ns: status,
        errors_ns: errors,
        boxes_ns: boxes,
    })
}

/// Virtual pause charged to a running task per status, error and box-list
/// request.
fn interruption_costs<T: Transport>(s: &mut Session<T>, polls: u32) -> Result<(f64, f64, f64)> {
    s.load_source("bench", tasks::BENCH)?;
    // Runs for 100 s of virtual time; stopped once the requests are done.
    s.set_parameters(&[4, 1_000_000])?;
    s.start()?;
    let mut per_kind = Vec::new();
    for method in ["getStatus", "getErrors", "listFinishedBoxes"] {
        let mut total = 0u64;
        let mut served = 0u64;
        for _ in 0..polls {
            s.wait(50_000);
            let before = s.clock()?;
            s.call(method, serde_json::json!({}))?;
            let after = s.clock()?;
            let (ns, _) = delta(&before, &after, "interruption");
            // getVirtualClock itself is not an engine request.
            if ns > 0 {
                total += ns;
                served += 1;
            }
        }
        per_kind.push(if served == 0 {
            0.0
        } else {
            total as f64 / served as f64
        });
    }
    s.stop()?;
    s.wait(1);
    if s.status()?.is_running() {
        return Err(ExperimentError::Task("polling target did not stop".into()));
    }
    s.drain_boxes()?;
    Ok((per_kind[0], per_kind[1], per_kind[2]))
}

fn time_calls(n: u32, mut f: impl FnMut() -> Result<()>) -> Result<ClientRow> {
    let mut samples = Vec::with_capacity(n as usize);
    for _ in 0..n.max(1) {
        let t = Instant::now();
        f()?;
        samples.push(t.elapsed().as_nanos() as u64);
    }
    let min_ns = samples.iter().copied().min().unwrap_or(0);
    Ok(ClientRow {
        operation: String::new(),
        median_ns: median(samples),
        min_ns,
    })
}

/// Client-side wall-clock rows and load timings.
pub fn client_report<T: Transport>(s: &mut Session<T>, p: &BenchParams) -> Result<ClientReport> {
    let n = p.client_reps;
    let mut rows = Vec::new();
    let mut row = |name: &str, r: ClientRow| {
        rows.push(ClientRow {
            operation: name.into(),
            ..r
        })
    };
    row(
        "register_read",
        time_calls(n, || {
            s.read_register(regmap::FABRIC_ID)
                .map(drop)
                .map_err(Into::into)
        })?,
    );
    row(
        "register_write",
        time_calls(n, || {
            s.write_register(regmap::PG_MANIP_SCALE, 1000)
                .map_err(Into::into)
        })?,
    );
    row(
        "status_poll",
        time_calls(n, || s.status().map(drop).map_err(Into::into))?,
    );
    row(
        "memcpy_1024",
        time_calls(n, || {
            s.read_register_block(regmap::REC_BASE + regmap::REC_DURATION, MEMCPY_WORDS)
                .map(drop)
                .map_err(Into::into)
        })?,
    );
    let a: Vec<f64> = (0..1024).map(f64::from).collect();
    let b: Vec<f64> = (0..1024).map(|i| 0.5 * f64::from(i)).collect();
    row(
        "array_multiply_1024",
        time_calls(n, || {
            let c: Vec<f64> = black_box(&a)
                .iter()
                .zip(black_box(&b))
                .map(|(x, y)| x * y)
                .collect();
            black_box(c);
            Ok(())
        })?,
    );
    let loads = load_timings(s, n)?;
    Ok(ClientReport { rows, loads })
}

/// Source loads compile on the service; binary loads only transfer.
pub fn load_timings<T: Transport>(s: &mut Session<T>, reps: u32) -> Result<Vec<LoadTiming>> {
    let mut out = Vec::new();
    for (name, src) in tasks::LOAD_SET {
        let bin = s.compile(name, src)?;
        let source = time_calls(reps, || s.load_source(name, src).map_err(Into::into))?;
        let binary = time_calls(reps, || s.load_binary(&bin).map_err(Into::into))?;
        out.push(LoadTiming {
            task: name.into(),
            binary_bytes: bin.len(),
            source_median_ns: source.median_ns,
            binary_median_ns: binary.median_ns,
        });
    }
    Ok(out)
}
