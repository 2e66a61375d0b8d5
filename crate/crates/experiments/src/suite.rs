//! The full batch: every experiment against embedded services, written to
//! one output directory.

use std::collections::BTreeMap;
use std::time::Instant;

use qtask_core::tasks::SweepMode;
use qtask_fabric::config::DriftConfig;
use qtask_service::{embedded, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchParams, ClientReport, EngineReport};
use crate::error::Result;
use crate::g2::{self, G2Method, G2Params, G2Run};
use crate::histogram::{self, HistogramParams, HistogramSummary};
use crate::output::OutputDir;
use crate::sweep::{self, DriftStudy, SweepParams, SweepResult};
use crate::POLL_NS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub n_params: u32,
    pub n_avg: u32,
    pub delay_ns: u32,
    /// Drift amplitude in units of the readout noise sigma.
    pub sigmas: f64,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub bench: BenchParams,
    pub sweep: SweepParams,
    pub drift: DriftParams,
    pub histogram: HistogramParams,
    pub histogram_noiseless_shots: u32,
    pub g2: G2Params,
    pub g2_direct_lags: u32,
}

impl SuiteConfig {
    pub fn full(seed: u64) -> Self {
        Self {
            seed,
            bench: BenchParams::default(),
            sweep: SweepParams::rabi(SweepMode::SweepThenAverage, 42, 10_000, 100_000),
            drift: DriftParams {
                n_params: 42,
                n_avg: 100,
                delay_ns: 100_000,
                sigmas: 10.0,
                frequency_hz: 50.0,
            },
            histogram: HistogramParams::new(1_000_000, 10_000),
            histogram_noiseless_shots: 1_000_000,
            g2: G2Params {
                averages: 200,
                samples: 1024,
                delay_ns: 100_000,
                method: G2Method::Fft,
            },
            g2_direct_lags: 11,
        }
    }

    /// Small sizes for smoke tests.
    pub fn quick(seed: u64) -> Self {
        Self {
            seed,
            bench: BenchParams {
                reps: 20,
                polls: 5,
                client_reps: 3,
            },
            sweep: SweepParams::rabi(SweepMode::SweepThenAverage, 6, 20, 100_000),
            drift: DriftParams {
                n_params: 8,
                n_avg: 100,
                delay_ns: 100_000,
                sigmas: 10.0,
                frequency_hz: 50.0,
            },
            histogram: HistogramParams {
                shots: 2_000,
                delay_ns: 10_000,
                start_pc: 0,
                chunk: 500,
            },
            histogram_noiseless_shots: 1_000,
            g2: G2Params {
                averages: 3,
                samples: 64,
                delay_ns: 10_000,
                method: G2Method::Fft,
            },
            g2_direct_lags: 5,
        }
    }
}

/// Fabric used for histograms: a short T1 so that consecutive shots are
/// independent at a 10 us repetition time, 2 % leakage split evenly over
/// levels 2 and 3, and readout noise small against the cluster spacing.
pub fn histogram_service(seed: u64, sigma: f64) -> ServiceConfig {
    let mut cfg = ServiceConfig::with_seed(seed);
    let q = &mut cfg.fabric.qubit;
    q.t1_ns = 1_000.0;
    q.leakage_prob = 0.02;
    q.leakage_to_3_fraction = 0.5;
    q.readout_sigma = sigma;
    cfg
}

pub fn drift_service(seed: u64, drift: DriftConfig) -> ServiceConfig {
    let mut cfg = ServiceConfig::with_seed(seed);
    cfg.fabric.qubit.drift = drift;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub params: DriftParams,
    pub drift: DriftConfig,
    pub readout_sigma: f64,
    pub studies: Vec<DriftStudy>,
    /// Bias amplitude of average-then-sweep over sweep-then-average.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Summary {
    pub params: G2Params,
    pub fft_run_ns: u64,
    pub direct_lags: u32,
    pub direct_run_ns: u64,
    /// Normwise relative difference of the overlapping lags.
    pub max_relative_difference: f64,
}

pub struct SuiteReport {
    pub engine: EngineReport,
    pub client: ClientReport,
    pub sweep: SweepResult,
    pub drift: DriftReport,
    pub histogram: HistogramSummary,
    pub noiseless: HistogramSummary,
    pub g2: G2Summary,
    pub g2_fft: G2Run,
    /// Wall-clock seconds per section.
    pub wall_s: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SweepRow {
    param: u32,
    scale: u32,
    mean_i: f64,
    mean_q: f64,
}

#[derive(Serialize)]
struct DriftRow {
    mode: &'static str,
    param: usize,
    measured_bias: f64,
    predicted_bias: f64,
}

pub fn bench_section(
    seed: u64,
    p: &BenchParams,
    out: &mut OutputDir,
) -> Result<(EngineReport, ClientReport)> {
    let mut s = embedded(ServiceConfig::with_seed(seed))?;
    let engine = bench::engine_report(&mut s, p, POLL_NS)?;
    let client = bench::client_report(&mut s, p)?;
    out.write_json("bench.json", &engine)?;
    out.write_unhashed("bench_wallclock.json", &client)?;
    Ok((engine, client))
}

pub fn sweep_section(seed: u64, p: &SweepParams, out: &mut OutputDir) -> Result<SweepResult> {
    let mut s = embedded(ServiceConfig::with_seed(seed))?;
    let r = sweep::run_sweep(&mut s, p, POLL_NS)?;
    write_sweep(&r, out)?;
    Ok(r)
}

pub fn write_sweep(r: &SweepResult, out: &mut OutputDir) -> Result<()> {
    let p = &r.params;
    out.write_csv(
        "sweep.csv",
        (0..p.n_params).map(|k| SweepRow {
            param: k,
            scale: p.scale_start + k * p.scale_step,
            mean_i: r.mean_i[k as usize],
            mean_q: r.mean_q[k as usize],
        }),
    )?;
    out.write_json(
        "sweep_summary.json",
        &serde_json::json!({
            "params": p,
            "shots": r.shots,
            "virtual_s": r.virtual_s(),
            "first_shot_ns": r.first_shot_ns,
            "last_shot_ns": r.last_shot_ns,
            "shot_period_ns": r.shot_period_ns(),
        }),
    )
}

pub fn drift_section(seed: u64, d: &DriftParams, out: &mut OutputDir) -> Result<DriftReport> {
    let sigma = ServiceConfig::with_seed(seed).fabric.qubit.readout_sigma;
    let drift = DriftConfig {
        amplitude: d.sigmas * sigma,
        frequency_hz: d.frequency_hz,
    };
    let flat = DriftConfig {
        amplitude: 0.0,
        frequency_hz: d.frequency_hz,
    };
    let mut studies = Vec::new();
    for mode in [SweepMode::SweepThenAverage, SweepMode::AverageThenSweep] {
        let p = SweepParams::rabi(mode, d.n_params, d.n_avg, d.delay_ns);
        let drifted = sweep::run_sweep(
            &mut embedded(drift_service(seed, drift.clone()))?,
            &p,
            POLL_NS,
        )?;
        let reference = sweep::run_sweep(
            &mut embedded(drift_service(seed, flat.clone()))?,
            &p,
            POLL_NS,
        )?;
        studies.push(sweep::drift_study(mode, &drifted, &reference, &drift));
    }
    let ratio =
        studies[1].measured_amplitude / studies[0].measured_amplitude.max(f64::MIN_POSITIVE);
    out.write_csv(
        "sweep_drift.csv",
        studies.iter().flat_map(|s| {
            (0..s.measured_bias.len()).map(move |k| DriftRow {
                mode: s.mode.as_str(),
                param: k,
                measured_bias: s.measured_bias[k],
                predicted_bias: s.predicted_bias[k],
            })
        }),
    )?;
    let report = DriftReport {
        params: *d,
        drift,
        readout_sigma: sigma,
        studies,
        ratio,
    };
    out.write_json("sweep_drift.json", &report)?;
    Ok(report)
}

pub fn histogram_section(
    seed: u64,
    p: &HistogramParams,
    noiseless_shots: u32,
    out: &mut OutputDir,
) -> Result<(HistogramSummary, HistogramSummary)> {
    let mut s = embedded(histogram_service(seed, 2_000.0))?;
    let run = histogram::run_histogram(&mut s, p, POLL_NS)?;
    out.write_csv("histogram.csv", run.grid.rows())?;
    out.write_json("histogram_summary.json", &run.summary)?;

    let mut s = embedded(histogram_service(seed, 0.0))?;
    let quiet = histogram::run_histogram(
        &mut s,
        &HistogramParams {
            shots: noiseless_shots,
            ..*p
        },
        POLL_NS,
    )?;
    out.write_json("histogram_noiseless.json", &quiet.summary)?;
    Ok((run.summary, quiet.summary))
}

pub fn g2_section(
    seed: u64,
    p: &G2Params,
    direct_lags: u32,
    out: &mut OutputDir,
) -> Result<(G2Summary, G2Run)> {
    let fft = g2::run_g2(&mut embedded(ServiceConfig::with_seed(seed))?, p, POLL_NS)?;
    let dp = G2Params {
        method: G2Method::Direct { lags: direct_lags },
        ..*p
    };
    let direct = g2::run_g2(&mut embedded(ServiceConfig::with_seed(seed))?, &dp, POLL_NS)?;
    let n = direct.values.len();
    let diff = qtask_core::g2::max_relative_error(&fft.values[..n], &direct.values);
    out.write_csv("g2.csv", fft.rows())?;
    out.write_csv("g2_direct.csv", direct.rows())?;
    let summary = G2Summary {
        params: *p,
        fft_run_ns: fft.run_ns,
        direct_lags,
        direct_run_ns: direct.run_ns,
        max_relative_difference: diff,
    };
    out.write_json("g2_summary.json", &summary)?;
    Ok((summary, fft))
}

fn timed<T>(
    wall: &mut BTreeMap<String, f64>,
    name: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let t = Instant::now();
    let r = f()?;
    wall.insert(name.to_owned(), t.elapsed().as_secs_f64());
    log::info!("{name} finished in {:.1} s", t.elapsed().as_secs_f64());
    Ok(r)
}

pub fn run_suite(cfg: &SuiteConfig, out: &mut OutputDir) -> Result<SuiteReport> {
    let mut wall = BTreeMap::new();
    out.write_json("suite_config.json", cfg)?;
    let (engine, client) = timed(&mut wall, "bench", || {
        bench_section(cfg.seed, &cfg.bench, out)
    })?;
    let sweep = timed(&mut wall, "sweep", || {
        sweep_section(cfg.seed, &cfg.sweep, out)
    })?;
    let drift = timed(&mut wall, "sweep_drift", || {
        drift_section(cfg.seed, &cfg.drift, out)
    })?;
    let (histogram, noiseless) = timed(&mut wall, "histogram", || {
        histogram_section(cfg.seed, &cfg.histogram, cfg.histogram_noiseless_shots, out)
    })?;
    let (g2, g2_fft) = timed(&mut wall, "g2", || {
        g2_section(cfg.seed, &cfg.g2, cfg.g2_direct_lags, out)
    })?;
    out.write_unhashed("wallclock.json", &wall)?;
    Ok(SuiteReport {
        engine,
        client,
        sweep,
        drift,
        histogram,
        noiseless,
        g2,
        g2_fft,
        wall_s: wall,
    })
}
