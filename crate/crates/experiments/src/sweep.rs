//! Fast parameter sweeps and the effect of loop order under slow drift.
//!
//! With a sinusoidal I offset `A sin(w t)`, the drift contribution to the
//! mean of one parameter is the average of the sinusoid over that
//! parameter's shot times. Shots of one parameter are equally spaced in
//! both loop orders, so the average has the closed form
//! `A sin(phi + (M-1) d/2) sin(M d/2) / (M sin(d/2))`.

use qtask_core::tasks::{self, SweepMode};
use qtask_fabric::config::DriftConfig;
use qtask_service::{Session, Transport};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};
use crate::{f64s, run_task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub mode: SweepMode,
    pub n_params: u32,
    pub n_avg: u32,
    pub delay_ns: u32,
    pub start_pc: u32,
    pub scale_start: u32,
    pub scale_step: u32,
}

impl SweepParams {
    /// Rabi-style sweep of the pi-pulse amplitude from 0 to 2x.
    pub fn rabi(mode: SweepMode, n_params: u32, n_avg: u32, delay_ns: u32) -> Self {
        let step = if n_params > 1 {
            2000 / (n_params - 1)
        } else {
            0
        };
        Self {
            mode,
            n_params,
            n_avg,
            delay_ns,
            start_pc: qtask_fabric::config::entry::PI_READOUT,
            scale_start: 0,
            scale_step: step,
        }
    }

    pub fn task_params(&self) -> [u32; 6] {
        [
            self.n_params,
            self.n_avg,
            self.delay_ns,
            self.start_pc,
            self.scale_start,
            self.scale_step,
        ]
    }

    pub fn shots(&self) -> u64 {
        u64::from(self.n_params) * u64::from(self.n_avg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: SweepParams,
    pub shots: u64,
    /// Virtual time from task start to the end of the first and last shot.
    pub first_shot_ns: f64,
    pub last_shot_ns: f64,
    pub run_start_ns: u64,
    pub run_ns: u64,
    pub mean_i: Vec<f64>,
    pub mean_q: Vec<f64>,
}

impl SweepResult {
    pub fn virtual_s(&self) -> f64 {
        self.run_ns as f64 * 1e-9
    }

    /// Mean spacing of consecutive shots.
    pub fn shot_period_ns(&self) -> f64 {
        if self.shots < 2 {
            return 0.0;
        }
        (self.last_shot_ns - self.first_shot_ns) / (self.shots - 1) as f64
    }
}

pub fn run_sweep<T: Transport>(
    s: &mut Session<T>,
    p: &SweepParams,
    poll_ns: u64,
) -> Result<SweepResult> {
    let mut out = Vec::new();
    let st = run_task(
        s,
        p.mode.as_str(),
        &tasks::sweep_source(p.mode),
        &p.task_params(),
        poll_ns,
        |_, b| out.push(b),
    )?;
    let [data] = &out[..] else {
        return Err(ExperimentError::Format(format!(
            "sweep produced {} boxes",
            out.len()
        )));
    };
    let v = f64s(data);
    let n = p.n_params as usize;
    if v.len() != 3 + 2 * n {
        return Err(ExperimentError::Format(format!(
            "sweep box holds {} values",
            v.len()
        )));
    }
    let avg = f64::from(p.n_avg.max(1));
    Ok(SweepResult {
        params: *p,
        shots: v[2] as u64,
        first_shot_ns: v[0],
        last_shot_ns: v[1],
        run_start_ns: st.run_start_ns,
        run_ns: st.run_ns().unwrap_or(0),
        mean_i: (0..n).map(|k| v[3 + 2 * k] / avg).collect(),
        mean_q: (0..n).map(|k| v[4 + 2 * k] / avg).collect(),
    })
}

/// Mean of `A sin(phi + j d)` over `j = 0..m`.
pub fn sampled_sine_mean(amplitude: f64, phi: f64, d: f64, m: u32) -> f64 {
    let m_f = f64::from(m);
    let half = (d / 2.0).sin();
    if half.abs() < 1e-12 {
        return amplitude * phi.sin();
    }
    amplitude * (phi + (m_f - 1.0) * d / 2.0).sin() * (m_f * d / 2.0).sin() / (m_f * half)
}

/// Mean of `A sin(w t)` over the continuous window `[t0, t1]` (ns).
pub fn window_sine_mean(drift: &DriftConfig, t0_ns: f64, t1_ns: f64) -> f64 {
    let w = std::f64::consts::TAU * drift.frequency_hz * 1e-9;
    if w == 0.0 || t1_ns <= t0_ns {
        return drift.amplitude * (w * t0_ns).sin();
    }
    drift.amplitude * ((w * t0_ns).cos() - (w * t1_ns).cos()) / (w * (t1_ns - t0_ns))
}

/// Drift contribution to every parameter's mean I, for shots starting at
/// absolute time `first_ns` and spaced `period_ns` apart.
pub fn predicted_drift_bias(
    p: &SweepParams,
    drift: &DriftConfig,
    first_ns: f64,
    period_ns: f64,
) -> Vec<f64> {
    let w = std::f64::consts::TAU * drift.frequency_hz * 1e-9;
    let (n, m) = (f64::from(p.n_params), f64::from(p.n_avg));
    (0..p.n_params)
        .map(|k| {
            let k = f64::from(k);
            let (first, step) = match p.mode {
                SweepMode::SweepThenAverage => (k, n),
                SweepMode::AverageThenSweep => (k * m, 1.0),
            };
            sampled_sine_mean(
                drift.amplitude,
                w * (first_ns + first * period_ns),
                w * step * period_ns,
                p.n_avg,
            )
        })
        .collect()
}

/// Spread of a per-parameter bias around its mean: the part that would show
/// up as a parameter-dependent feature.
pub fn bias_amplitude(bias: &[f64]) -> f64 {
    if bias.is_empty() {
        return 0.0;
    }
    let mean = bias.iter().sum::<f64>() / bias.len() as f64;
    (bias.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / bias.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStudy {
    pub mode: SweepMode,
    /// Per-parameter mean I with drift minus the drift-free reference run.
    pub measured_bias: Vec<f64>,
    pub predicted_bias: Vec<f64>,
    pub measured_amplitude: f64,
    pub predicted_amplitude: f64,
    /// RMS of measured minus predicted.
    pub residual_rms: f64,
}

pub fn drift_study(
    mode: SweepMode,
    drifted: &SweepResult,
    reference: &SweepResult,
    drift: &DriftConfig,
) -> DriftStudy {
    let measured: Vec<f64> = drifted
        .mean_i
        .iter()
        .zip(&reference.mean_i)
        .map(|(a, b)| a - b)
        .collect();
    // The last shot's readout precedes the timer read that ends it by the
    // readout latency; the offset is negligible against the drift period.
    let first = drifted.run_start_ns as f64 + drifted.first_shot_ns;
    let predicted = predicted_drift_bias(&drifted.params, drift, first, drifted.shot_period_ns());
    let residual_rms = (measured
        .iter()
        .zip(&predicted)
        .map(|(m, p)| (m - p).powi(2))
        .sum::<f64>()
        / measured.len().max(1) as f64)
        .sqrt();
    DriftStudy {
        mode,
        measured_amplitude: bias_amplitude(&measured),
        predicted_amplitude: bias_amplitude(&predicted),
        measured_bias: measured,
        predicted_bias: predicted,
        residual_rms,
    }
}
