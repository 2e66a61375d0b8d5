//! `qtask`: runs the experiments against an embedded service or a remote
//! `qtaskd` and writes CSV/JSON results plus a hash manifest.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use qtask_core::tasks::SweepMode;
use qtask_experiments::bench::{self, BenchParams};
use qtask_experiments::g2::{G2Method, G2Params};
use qtask_experiments::histogram::{self, HistogramParams};
use qtask_experiments::output::{self, OutputDir};
use qtask_experiments::suite::{self, DriftParams, SuiteConfig};
use qtask_experiments::sweep::{self, SweepParams};
use qtask_experiments::{g2, Result, POLL_NS};
use qtask_fabric::config::DriftConfig;
use qtask_service::{embedded, ServiceConfig, Session, TcpClient, Transport};

#[derive(Parser)]
#[command(name = "qtask", version, about = "Run qubit-control experiments")]
struct Cli {
    /// Talk to a running qtaskd instead of an embedded service.
    #[arg(long, global = true)]
    connect: Option<String>,
    /// Fabric seed for embedded runs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "qtask-out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Engine access costs and client round-trip timings.
    Bench {
        #[arg(long, default_value_t = 1000)]
        reps: u32,
    },
    /// A Rabi-style amplitude sweep.
    Sweep(SweepArgs),
    /// Drift bias of both averaging orders against drift-free references (embedded only).
    Drift {
        #[arg(long, default_value_t = 42)]
        params: u32,
        #[arg(long, default_value_t = 100)]
        averages: u32,
        /// Drift amplitude in readout sigmas.
        #[arg(long, default_value_t = 10.0)]
        sigmas: f64,
        #[arg(long, default_value_t = 50.0)]
        hz: f64,
    },
    /// Single-shot IQ histogram.
    Histogram {
        #[arg(long, default_value_t = 1_000_000)]
        shots: u32,
        #[arg(long, default_value_t = 10_000)]
        delay_ns: u32,
        /// Readout noise for embedded runs.
        #[arg(long, default_value_t = 2000.0)]
        sigma: f64,
    },
    /// g2 correlation of two detector traces.
    G2 {
        #[arg(long, default_value_t = 200)]
        averages: u32,
        #[arg(long, default_value_t = 1024)]
        samples: u32,
        #[arg(long, default_value_t = 100_000)]
        delay_ns: u32,
        /// Use direct summation over this many lags instead of the FFT.
        #[arg(long)]
        direct_lags: Option<u32>,
    },
    /// Every experiment with its default sizes (embedded only).
    Suite {
        /// Small sizes for a smoke run.
        #[arg(long)]
        quick: bool,
    },
    /// Re-hash an output directory against its manifest.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "sweep_then_average")]
    mode: SweepMode,
    #[arg(long, default_value_t = 42)]
    params: u32,
    #[arg(long, default_value_t = 10_000)]
    averages: u32,
    #[arg(long, default_value_t = 100_000)]
    delay_ns: u32,
    /// Sinusoidal drift on I for embedded runs.
    #[arg(long, default_value_t = 0.0)]
    drift_amplitude: f64,
    #[arg(long, default_value_t = 50.0)]
    drift_hz: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qtask: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Cmd::Verify { dir } = &cli.cmd {
        let m = output::verify(dir)?;
        println!("{} files match the manifest", m.files.len());
        return Ok(());
    }
    let mut out = OutputDir::create(&cli.out)?;
    match (&cli.cmd, &cli.connect) {
        (Cmd::Suite { quick }, None) => {
            let cfg = if *quick {
                SuiteConfig::quick(cli.seed)
            } else {
                SuiteConfig::full(cli.seed)
            };
            suite::run_suite(&cfg, &mut out)?;
        }
        (
            Cmd::Drift {
                params,
                averages,
                sigmas,
                hz,
            },
            None,
        ) => {
            let d = DriftParams {
                n_params: *params,
                n_avg: *averages,
                delay_ns: 100_000,
                sigmas: *sigmas,
                frequency_hz: *hz,
            };
            let r = suite::drift_section(cli.seed, &d, &mut out)?;
            println!(
                "bias ratio (average-then-sweep / sweep-then-average): {:.1}",
                r.ratio
            );
        }
        (Cmd::Suite { .. } | Cmd::Drift { .. }, Some(_)) => {
            return Err(qtask_experiments::ExperimentError::Format(
                "this command needs control over the fabric and runs embedded only".into(),
            ));
        }
        (cmd, Some(addr)) => {
            let mut client = TcpClient::connect(addr.as_str())?;
            client.poll = Duration::from_millis(50);
            run_one(&mut Session::new(client), cmd, &mut out)?;
        }
        (cmd, None) => {
            let cfg = match cmd {
                Cmd::Histogram { sigma, .. } => suite::histogram_service(cli.seed, *sigma),
                Cmd::Sweep(a) => suite::drift_service(
                    cli.seed,
                    DriftConfig {
                        amplitude: a.drift_amplitude,
                        frequency_hz: a.drift_hz,
                    },
                ),
                _ => ServiceConfig::with_seed(cli.seed),
            };
            run_one(&mut embedded(cfg)?, cmd, &mut out)?;
        }
    }
    let m = out.finish()?;
    println!(
        "wrote {} files to {}",
        m.files.len() + m.unhashed.len(),
        cli.out.display()
    );
    Ok(())
}

fn run_one<T: Transport>(s: &mut Session<T>, cmd: &Cmd, out: &mut OutputDir) -> Result<()> {
    match cmd {
        Cmd::Bench { reps } => {
            let p = BenchParams {
                reps: *reps,
                ..BenchParams::default()
            };
            let engine = bench::engine_report(s, &p, POLL_NS)?;
            println!(
                "read {:.0} ns, write {:.0} ns, memcpy {:.0} ns, status/errors/boxes {:.0}/{:.0}/{:.0} ns",
                engine.register_read_ns,
                engine.register_write_ns,
                engine.memcpy_ns,
                engine.status_ns,
                engine.errors_ns,
                engine.boxes_ns
            );
            out.write_json("bench.json", &engine)?;
            out.write_unhashed("bench_wallclock.json", &bench::client_report(s, &p)?)?;
        }
        Cmd::Sweep(a) => {
            let p = SweepParams::rabi(a.mode, a.params, a.averages, a.delay_ns);
            let r = sweep::run_sweep(s, &p, POLL_NS)?;
            println!("{} shots in {:.3} s virtual", r.shots, r.virtual_s());
            suite::write_sweep(&r, out)?;
        }
        Cmd::Histogram {
            shots, delay_ns, ..
        } => {
            let run =
                histogram::run_histogram(s, &HistogramParams::new(*shots, *delay_ns), POLL_NS)?;
            println!(
                "{} shots, {} bytes, {:.3} s virtual, fractions {:?}",
                run.summary.shots,
                run.summary.bytes,
                run.summary.run_ns as f64 * 1e-9,
                run.summary.fractions
            );
            out.write_csv("histogram.csv", run.grid.rows())?;
            out.write_json("histogram_summary.json", &run.summary)?;
        }
        Cmd::G2 {
            averages,
            samples,
            delay_ns,
            direct_lags,
        } => {
            let method = direct_lags.map_or(G2Method::Fft, |lags| G2Method::Direct { lags });
            let p = G2Params {
                averages: *averages,
                samples: *samples,
                delay_ns: *delay_ns,
                method,
            };
            let r = g2::run_g2(s, &p, POLL_NS)?;
            println!(
                "{} lags in {:.3} s virtual",
                r.values.len(),
                r.run_ns as f64 * 1e-9
            );
            out.write_csv("g2.csv", r.rows())?;
        }
        Cmd::Suite { .. } | Cmd::Drift { .. } | Cmd::Verify { .. } => {
            unreachable!("handled by the caller")
        }
    }
    Ok(())
}
