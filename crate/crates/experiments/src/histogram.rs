//! Single-shot readout histograms.
//!
//! The expected cluster populations come from a four-level Markov chain
//! built from the qubit configuration: between two readouts the level decays
//! by a Poisson number of steps, then the pulse either leaks the qubit out
//! of the 0/1 subspace or rotates it, and the readout projects it.

use std::collections::HashMap;

use qtask_core::tasks;
use qtask_fabric::config::QubitConfig;
use qtask_fabric::qubit::nearest_cluster;
use qtask_fabric::regmap;
use qtask_service::{Session, Transport};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::run_task;

/// Pairs per streamed data box.
pub const CHUNK: u32 = 100_000;
const BINS: usize = 128;
const DISTINCT_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramParams {
    pub shots: u32,
    pub delay_ns: u32,
    pub start_pc: u32,
    pub chunk: u32,
}

impl HistogramParams {
    pub fn new(shots: u32, delay_ns: u32) -> Self {
        Self {
            shots,
            delay_ns,
            start_pc: qtask_fabric::config::entry::PI_READOUT,
            chunk: CHUNK,
        }
    }
}

/// Uniform 2-D grid; points outside are clamped into the edge bins so the
/// counts always sum to the number of shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub i_min: f64,
    pub q_min: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Grid {
    pub fn around(q: &QubitConfig) -> Self {
        let spread = 6.0 * q.readout_sigma.max(1000.0) + q.drift.amplitude.abs();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for m in &q.cluster_means {
            for a in 0..2 {
                lo[a] = lo[a].min(m[a] - spread);
                hi[a] = hi[a].max(m[a] + spread);
            }
        }
        let width = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / BINS as f64).ceil();
        Self {
            i_min: lo[0],
            q_min: lo[1],
            width,
            counts: vec![0; BINS * BINS],
        }
    }

    fn index(&self, v: f64, min: f64) -> usize {
        (((v - min) / self.width).floor().max(0.0) as usize).min(BINS - 1)
    }

    pub fn add(&mut self, i: i32, q: i32) {
        let (a, b) = (
            self.index(f64::from(i), self.i_min),
            self.index(f64::from(q), self.q_min),
        );
        self.counts[a * BINS + b] += 1;
    }

    /// Non-empty bins as (i_center, q_center, count).
    pub fn rows(&self) -> Vec<BinRow> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &count)| BinRow {
                i_center: self.i_min + (k / BINS) as f64 * self.width + self.width / 2.0,
                q_center: self.q_min + (k % BINS) as f64 * self.width + self.width / 2.0,
                count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub i_center: f64,
    pub q_center: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub params: HistogramParams,
    pub shots: u64,
    pub bytes: u64,
    pub boxes: u32,
    pub run_ns: u64,
    pub shot_period_ns: f64,
    pub cluster_counts: [u64; 4],
    pub fractions: [f64; 4],
    pub expected: [f64; 4],
    /// Binomial standard deviation of each fraction.
    pub sigma: [f64; 4],
    /// Largest |fraction - expected| / sigma.
    pub max_z: f64,
    /// Distinct IQ points seen, if there were at most 64.
    pub distinct_points: Option<Vec<(i32, i32)>>,
    pub occupied_bins: usize,
}

pub struct HistogramRun {
    pub summary: HistogramSummary,
    pub grid: Grid,
}

pub fn run_histogram<T: Transport>(
    s: &mut Session<T>,
    p: &HistogramParams,
    poll_ns: u64,
) -> Result<HistogramRun> {
    let qubit = s.fabric_config()?.qubit;
    // A previous sweep may have left the pulse amplitude scaled.
    s.write_register(regmap::PG_MANIP_SCALE, 1000)?;
    let mut grid = Grid::around(&qubit);
    let mut counts = [0u64; 4];
    let mut distinct: HashMap<(i32, i32), ()> = HashMap::new();
    let mut overflow = false;
    let (mut bytes, mut boxes) = (0u64, 0u32);
    let st = run_task(
        s,
        "histogram",
        tasks::HISTOGRAM,
        &[p.shots, p.start_pc, p.delay_ns, p.chunk],
        poll_ns,
        |_, b| {
            bytes += b.len() as u64;
            boxes += 1;
            for c in b.chunks_exact(8) {
                let i = i32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                let q = i32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                grid.add(i, q);
                counts
                    [nearest_cluster(&qubit.cluster_means, f64::from(i), f64::from(q)) as usize] +=
                    1;
                if !overflow {
                    distinct.insert((i, q), ());
                    overflow = distinct.len() > DISTINCT_LIMIT;
                }
            }
        },
    )?;
    let shots: u64 = counts.iter().sum();
    let run_ns = st.run_ns().unwrap_or(0);
    let period = if shots > 0 {
        run_ns as f64 / shots as f64
    } else {
        0.0
    };
    let theta = f64::from(PI_PULSE_MRAD) * 1e-3;
    let expected = if p.start_pc == qtask_fabric::config::entry::PI_READOUT {
        stationary_populations(&qubit, theta, period)
    } else {
        stationary_populations(&qubit, 0.0, period)
    };
    let n = shots.max(1) as f64;
    let fractions = counts.map(|c| c as f64 / n);
    let sigma = expected.map(|e| (e * (1.0 - e) / n).sqrt());
    let max_z = (0..4)
        .map(|k| {
            let d = (fractions[k] - expected[k]).abs();
            if sigma[k] > 0.0 {
                d / sigma[k]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let mut points: Vec<(i32, i32)> = distinct.into_keys().collect();
    points.sort_unstable();
    let summary = HistogramSummary {
        params: *p,
        shots,
        bytes,
        boxes,
        run_ns,
        shot_period_ns: period,
        cluster_counts: counts,
        fractions,
        expected,
        sigma,
        max_z,
        distinct_points: (!overflow).then_some(points),
        occupied_bins: grid.counts.iter().filter(|&&c| c > 0).count(),
    };
    Ok(HistogramRun { summary, grid })
}

/// Rotation angle of the default pi-readout sequence at unit scale.
const PI_PULSE_MRAD: u32 = 3142;

/// Level distribution after `dt_ns` of relaxation from level `from`.
fn decay(from: usize, dt_ns: f64, t1_ns: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    if t1_ns <= 0.0 || from == 0 {
        out[from] = 1.0;
        return out;
    }
    let lambda = dt_ns / t1_ns;
    let mut pmf = (-lambda).exp();
    let mut left = 1.0;
    for steps in 0..from {
        out[from - steps] = pmf;
        left -= pmf;
        pmf *= lambda / (steps + 1) as f64;
    }
    out[0] = left.max(0.0);
    out
}

/// One shot: relax for `dt_ns`, apply the pulse, read out.
fn transition(q: &QubitConfig, theta: f64, dt_ns: f64) -> [[f64; 4]; 4] {
    let flip = (theta / 2.0).sin().powi(2);
    let mut m = [[0.0; 4]; 4];
    for (from, row) in m.iter_mut().enumerate() {
        for (mid, p) in decay(from, dt_ns, q.t1_ns).into_iter().enumerate() {
            if mid >= 2 {
                row[mid] += p;
                continue;
            }
            // A zero-angle pulse still runs through the leakage draw only
            // when the sequence actually plays a pulse.
            let leak = if theta != 0.0 { q.leakage_prob } else { 0.0 };
            row[3] += p * leak * q.leakage_to_3_fraction;
            row[2] += p * leak * (1.0 - q.leakage_to_3_fraction);
            let stay = p * (1.0 - leak);
            let (to0, to1) = if mid == 0 {
                (1.0 - flip, flip)
            } else {
                (flip, 1.0 - flip)
            };
            row[0] += stay * to0;
            row[1] += stay * to1;
        }
    }
    m
}

/// Long-run readout populations of levels 0..=3 for a sequence that
/// applies a rotation by `theta` before every readout, with readouts
/// `period_ns` apart.
pub fn stationary_populations(q: &QubitConfig, theta: f64, period_ns: f64) -> [f64; 4] {
    let m = transition(q, theta, period_ns);
    let mut p = [1.0, 0.0, 0.0, 0.0];
    for _ in 0..10_000 {
        let mut next = [0.0; 4];
        for (from, row) in m.iter().enumerate() {
            for (to, t) in row.iter().enumerate() {
                next[to] += p[from] * t;
            }
        }
        let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if delta < 1e-16 {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_relaxation_gives_leakage_split() {
        let q = QubitConfig {
            t1_ns: 1.0,
            leakage_prob: 0.02,
            leakage_to_3_fraction: 0.5,
            ..QubitConfig::default()
        };
        let p = stationary_populations(&q, std::f64::consts::PI, 1e6);
        assert!(
            (p[1] - 0.98).abs() < 1e-12
                && (p[2] - 0.01).abs() < 1e-12
                && (p[3] - 0.01).abs() < 1e-12,
            "{p:?}"
        );
    }

    #[test]
    fn decay_rows_are_distributions() {
        for from in 0..4 {
            let d = decay(from, 12_345.0, 10_000.0);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d[from + 1..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn grid_clamps_outliers() {
        let mut g = Grid::around(&QubitConfig::default());
        g.add(i32::MIN, i32::MAX);
        g.add(100_000, 35_000);
        assert_eq!(g.rows().iter().map(|r| r.count).sum::<u64>(), 2);
    }
}
