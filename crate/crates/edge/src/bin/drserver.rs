use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dr_edge::{logging, Server, ServerConfig};

/// Edge server for diminished-reality object substitution.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Plain TCP listen address.
    #[arg(long, default_value = "127.0.0.1:7401")]
    tcp: String,
    /// Websocket listen address. Pass "off" to disable.
    #[arg(long, default_value = "127.0.0.1:7402")]
    ws: String,
    /// Directory of extra asset files.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_sessions: usize,
    /// Log filter; DRPIPE_LOG takes precedence.
    #[arg(long, default_value = "info")]
    log: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    logging::init(&cli.log);
    let cfg = ServerConfig {
        tcp_listen_addr: cli.tcp,
        ws_listen_addr: (cli.ws != "off").then_some(cli.ws),
        max_sessions: cli.max_sessions,
        asset_dir: cli.assets,
        log_level: cli.log,
    };
    match Server::bind(&cfg) {
        Ok(server) => {
            server.run();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("drserver: {e}");
            ExitCode::FAILURE
        }
    }
}
