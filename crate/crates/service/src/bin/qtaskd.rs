//! `qtaskd serve --config <file> --listen <addr:port> --seed <u64>`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qtask_service::{Server, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "qtaskd", version, about = "qtask control service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Boot the engine and serve JSON-RPC clients.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Overrides `fabric.seed` from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Serve {
        config,
        listen,
        seed,
    } = Cli::parse().command;
    let mut cfg = match config {
        Some(path) => match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| ServiceConfig::from_toml_str(&t).map_err(|e| e.to_string()))
        {
            Ok(c) => c,
            Err(e) => {
                eprintln!("qtaskd: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => ServiceConfig::with_seed(0),
    };
    if let Some(s) = seed {
        cfg.fabric.seed = s;
    }
    let service = match Service::boot(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("qtaskd: {e}");
            return ExitCode::from(2);
        }
    };
    let server = match Server::bind(service, &listen) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("qtaskd: cannot listen on {listen}: {e}");
            return ExitCode::from(3);
        }
    };
    println!("qtaskd listening on {}", server.local_addr());
    server.wait();
    ExitCode::SUCCESS
}
