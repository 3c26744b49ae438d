use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use impactlab_server::config::ServerConfig;
use impactlab_server::{http, Hub};

/// Runs live market sessions for participants connecting over websockets.
#[derive(Debug, Parser)]
#[command(name = "impactlab-server", version)]
struct Args {
    /// Server configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured port.
    #[arg(long)]
    port: Option<u16>,
    /// Overrides the configured data directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let mut cfg = match args.config.as_deref().map(ServerConfig::from_file).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.apply_env(|k| std::env::var(k).ok()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if let Some(p) = args.port {
        cfg.port = p;
    }
    if let Some(d) = args.data_dir {
        cfg.data_dir = d;
    }
    let hub = match Hub::recover(cfg.hub_config()) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: recovery failed: {e}");
            return ExitCode::from(3);
        }
    };
    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {addr}: {e}");
            return ExitCode::from(3);
        }
    };
    tracing::info!(%addr, data_dir = %cfg.data_dir.display(), "listening");
    if let Err(e) = axum::serve(listener, http::router(hub)).await {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
