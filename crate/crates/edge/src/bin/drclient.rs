use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use dr_core::pipeline::SessionConfig;
use dr_core::scenegen::SceneConfig;
use dr_edge::{logging, run_client, ClientError, ClientRunSpec, RunMode, Source};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Offload,
    Local,
}

/// Streams a scene bundle through the edge pipeline and writes the results.
#[derive(Debug, Parser)]
#[command(version, group(ArgGroup::new("source").required(true).args(["bundle", "generate"])))]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:7401")]
    server: String,
    /// Bundle directory written by `drbench generate`.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Scene config JSON to generate the bundle from.
    #[arg(long)]
    generate: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Session config JSON.
    #[arg(long)]
    session: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "offload")]
    mode: Mode,
    /// Send frames as fast as the server keeps up.
    #[arg(long)]
    afap: bool,
    /// Extra assets for client-side compose.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[arg(long, default_value = "warn")]
    log: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ClientError> {
    let bytes = std::fs::read(path).map_err(|e| ClientError::SourceError(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::SourceError(format!("{}: {e}", path.display())))
}

fn spec(cli: Cli) -> Result<ClientRunSpec, ClientError> {
    let source = match (cli.bundle, cli.generate) {
        (Some(dir), _) => Source::BundleDir(dir),
        (None, Some(cfg)) => Source::Generate(read_json::<SceneConfig>(&cfg)?),
        (None, None) => unreachable!("clap requires a source"),
    };
    let mut spec = ClientRunSpec::new(source, cli.out);
    spec.server_addr = cli.server;
    spec.fps = cli.fps;
    if let Some(p) = &cli.session {
        spec.session_cfg = read_json::<SessionConfig>(p)?;
    }
    spec.mode = match cli.mode {
        Mode::Offload => RunMode::Offload,
        Mode::Local => RunMode::Local,
    };
    spec.afap = cli.afap;
    spec.asset_dir = cli.assets;
    Ok(spec)
}

fn main() -> ExitCode {
    // clap's own usage errors exit 2, which is reserved for connect failures
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    logging::init(&cli.log);
    let result = spec(cli).and_then(|s| run_client(&s));
    match result {
        Ok(report) => {
            println!(
                "{} results, {} dropped, {:.1} results/s, round trip p50 {} us, bypass {:.2}, reuse {:.2}",
                report.results,
                report.dropped,
                report.results_per_sec,
                report.round_trip_us.p50,
                report.rates.bypass,
                report.rates.reuse
            );
            for e in report.errors.iter().filter(|e| e.is_protocol()) {
                eprintln!("drclient: error {}: {}", e.code, e.detail);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("drclient: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
