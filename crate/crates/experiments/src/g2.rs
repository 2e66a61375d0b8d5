//! Averaged second-order correlation measured by the bundled g2 task.
//!
//! The task accumulates `C[k] = sum_n A[n] A[n+k]` with
//! `A[n] = conj(s1[n]) s2[n]` over all averages, either for every lag via
//! the engine's FFT routine or for the first few lags by direct summation.
//! Traces depend only on the seed, so both methods see identical data.

use num_complex::Complex64;
use qtask_core::tasks;
use qtask_service::{Session, Transport};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};
use crate::{f64s, run_task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum G2Method {
    Fft,
    Direct { lags: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct G2Params {
    pub averages: u32,
    pub samples: u32,
    pub delay_ns: u32,
    pub method: G2Method,
}

impl G2Params {
    pub fn task_params(&self) -> [u32; 5] {
        let (method, lags) = match self.method {
            G2Method::Fft => (0, 0),
            G2Method::Direct { lags } => (1, lags),
        };
        [self.averages, self.samples, self.delay_ns, method, lags]
    }

    pub fn lags(&self) -> usize {
        match self.method {
            G2Method::Fft => self.samples as usize,
            G2Method::Direct { lags } => lags as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Run {
    pub params: G2Params,
    pub run_ns: u64,
    /// Averaged correlation for lags `0..params.lags()`.
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Row {
    pub lag: usize,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

impl G2Run {
    pub fn rows(&self) -> Vec<G2Row> {
        self.values
            .iter()
            .enumerate()
            .map(|(lag, v)| G2Row {
                lag,
                re: v.re,
                im: v.im,
                abs: v.norm(),
            })
            .collect()
    }
}

pub fn run_g2<T: Transport>(s: &mut Session<T>, p: &G2Params, poll_ns: u64) -> Result<G2Run> {
    let mut boxes = Vec::new();
    let st = run_task(s, "g2", tasks::G2, &p.task_params(), poll_ns, |_, b| {
        boxes.push(b)
    })?;
    let [data] = &boxes[..] else {
        return Err(ExperimentError::Format(format!(
            "g2 produced {} boxes",
            boxes.len()
        )));
    };
    let v = f64s(data);
    if v.len() != 2 * p.samples as usize {
        return Err(ExperimentError::Format(format!(
            "g2 box holds {} values",
            v.len()
        )));
    }
    let scale = 1.0 / f64::from(p.averages.max(1));
    let values = v
        .chunks_exact(2)
        .take(p.lags())
        .map(|c| Complex64::new(c[0], c[1]) * scale)
        .collect();
    Ok(G2Run {
        params: *p,
        run_ns: st.run_ns().unwrap_or(0),
        values,
    })
}
