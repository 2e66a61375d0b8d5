//! Experiment runners that drive the control service as a client: the
//! micro-benchmarks and task load timings, fast parameter sweeps,
//! single-shot histograms and g2 correlation.
//!
//! Every runner takes a [`Session`] and so works against an embedded
//! service (reproducible, virtual time advanced by the client) or a remote
//! `qtaskd`.

pub mod bench;
pub mod error;
pub mod g2;
pub mod histogram;
pub mod output;
pub mod suite;
pub mod sweep;

pub use error::{ExperimentError, Result};

use qtask_service::{Session, Status, Transport};

/// Virtual time between status polls in embedded runs.
pub const POLL_NS: u64 = 200_000_000;

/// Loads and starts a task, streams its boxes to `on_box` and fails unless
/// it returns 0.
pub fn run_task<T: Transport>(
    s: &mut Session<T>,
    name: &str,
    source: &str,
    params: &[u32],
    poll_ns: u64,
    on_box: impl FnMut(u32, Vec<u8>),
) -> Result<Status> {
    s.load_source(name, source)?;
    s.set_parameters(params)?;
    s.start()?;
    let st = s.run_until_done(poll_ns, on_box)?;
    if st.state != "FINISHED" || st.last_return_code != 0 {
        let errors = s.errors()?;
        return Err(ExperimentError::Task(format!(
            "{name} ended {} with code {}: {}",
            st.state,
            st.last_return_code,
            errors.join("; ")
        )));
    }
    Ok(st)
}

pub(crate) fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

pub(crate) fn u32s(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect()
}
