//! Client simulator: streams a bundle to the server (or runs the pipeline
//! in-process), collects results and writes them out.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use dr_core::bench::{write_result_frames, write_results_file, Rates, ResultRecord, ResultsFile};
use dr_core::compose::{Asset, AssetStore};
use dr_core::pipeline::{
    compose_frame, ComposeLocation, Percentiles, PipelineError, PipelineResult, ResultFlags, RunReport,
    Session, SessionConfig,
};
use dr_core::perception::BackendSet;
use dr_core::scenegen::{generate_sequence, read_bundle, SceneConfig, SequenceBundle};
use dr_core::transport::{codes, encode, Decoder, FrameMsg, Message, MetricsReport, PROTO_VERSION};
use dr_core::{Frame, StageTimings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {reason}")]
    ConnectFailure { addr: String, reason: String },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("source: {0}")]
    SourceError(String),
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl ClientError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::ConnectFailure { .. } => 2,
            ClientError::ProtocolError(_) => 3,
            ClientError::SourceError(_) => 4,
            ClientError::InvalidSpec(_) | ClientError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    BundleDir(PathBuf),
    Generate(SceneConfig),
}

impl Source {
    pub fn load(&self) -> Result<SequenceBundle, ClientError> {
        let b = match self {
            Source::BundleDir(d) => read_bundle(d).map_err(|e| ClientError::SourceError(format!("{}: {e}", d.display())))?,
            Source::Generate(cfg) => generate_sequence(cfg).map_err(|e| ClientError::SourceError(e.to_string()))?,
        };
        if b.is_empty() {
            return Err(ClientError::SourceError("bundle has no frames".into()));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Offload,
    Local,
}

#[derive(Debug, Clone)]
pub struct ClientRunSpec {
    pub server_addr: String,
    pub source: Source,
    pub fps: f64,
    pub session_cfg: SessionConfig,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    /// Send as fast as the server keeps up instead of at `fps`.
    pub afap: bool,
    /// Extra assets for client-side compose.
    pub asset_dir: Option<PathBuf>,
    /// Connect and per-read timeout.
    pub timeout: Duration,
}

impl ClientRunSpec {
    pub fn new(source: Source, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            server_addr: "127.0.0.1:7401".into(),
            source,
            fps: 30.0,
            session_cfg: SessionConfig::default(),
            out_dir: out_dir.into(),
            mode: RunMode::Offload,
            afap: false,
            asset_dir: None,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ClientError::InvalidSpec(format!("fps must be positive, got {}", self.fps)));
        }
        self.session_cfg
            .validate()
            .map_err(|e| ClientError::InvalidSpec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: u16,
    pub detail: String,
}

impl ErrorRecord {
    /// Errors that break the exchange itself, as opposed to per-frame
    /// pipeline failures and rejected controls.
    pub fn is_protocol(&self) -> bool {
        !matches!(
            self.code,
            codes::OUT_OF_ORDER | codes::STAGE_FAILURE | codes::NO_INSTANCE_AT_POINT | codes::UNKNOWN_ASSET
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub mode: RunMode,
    pub session_id: Option<u64>,
    pub bundle_hash: String,
    pub frames_sent: u64,
    pub results: u64,
    pub dropped: u64,
    pub wall_ms: f64,
    pub results_per_sec: f64,
    pub round_trip_us: Percentiles,
    pub rates: Rates,
    /// Stage percentiles from the timings carried by each result.
    pub pipeline: RunReport,
    /// Last report pushed by the server.
    pub server_metrics: Option<MetricsReport>,
    pub errors: Vec<ErrorRecord>,
}

impl ClientReport {
    pub fn has_protocol_errors(&self) -> bool {
        self.errors.iter().any(ErrorRecord::is_protocol)
    }

    pub fn exit_code(&self) -> i32 {
        if self.has_protocol_errors() {
            3
        } else {
            0
        }
    }
}

/// What a run accumulates while results come in.
struct Collector {
    out_dir: PathBuf,
    /// Set when the client composes.
    compose: Option<Arc<Asset>>,
    records: Vec<ResultRecord>,
    stats: Vec<(ResultFlags, StageTimings)>,
    round_trips: Vec<u64>,
    errors: Vec<ErrorRecord>,
}

impl Collector {
    fn new(spec: &ClientRunSpec) -> Result<Self, ClientError> {
        let compose = if spec.session_cfg.compose_location == ComposeLocation::Client {
            let mut store = AssetStore::builtin();
            if let Some(d) = &spec.asset_dir {
                store
                    .load_dir(d)
                    .map_err(|e| ClientError::SourceError(format!("assets: {e}")))?;
            }
            let asset = store
                .get(&spec.session_cfg.asset_id)
                .ok_or_else(|| ClientError::InvalidSpec(format!("unknown asset {:?}", spec.session_cfg.asset_id)))?;
            Some(asset)
        } else {
            None
        };
        Ok(Self {
            out_dir: spec.out_dir.clone(),
            compose,
            records: Vec::new(),
            stats: Vec::new(),
            round_trips: Vec::new(),
            errors: Vec::new(),
        })
    }

    fn accept(&mut self, mut r: PipelineResult, sent: &Frame, round_trip: Duration) -> Result<(), ClientError> {
        if let Some(asset) = &self.compose {
            match compose_frame(&r.inpainted, asset, r.placement.as_ref(), sent.intrinsics()) {
                Ok(c) => r.composed = Some(c),
                Err(e) => self.errors.push(ErrorRecord {
                    code: codes::STAGE_FAILURE,
                    detail: format!("frame {}: client compose: {e}", r.frame_id),
                }),
            }
        }
        write_result_frames(&self.out_dir, &r).map_err(|e| io::Error::other(e.to_string()))?;
        self.records.push(ResultRecord::from_result(&r));
        self.stats.push((r.flags, r.timings));
        self.round_trips.push(round_trip.as_micros() as u64);
        Ok(())
    }

    fn finish(
        self,
        spec: &ClientRunSpec,
        bundle: &SequenceBundle,
        session_id: Option<u64>,
        frames_sent: u64,
        wall: Duration,
        server_metrics: Option<MetricsReport>,
    ) -> Result<ClientReport, ClientError> {
        let got: std::collections::BTreeSet<u64> = self.records.iter().map(|r| r.frame_id).collect();
        let dropped_ids: Vec<u64> = bundle
            .frames
            .iter()
            .take(frames_sent as usize)
            .map(Frame::frame_id)
            .filter(|id| !got.contains(id))
            .collect();
        let results = self.records.len() as u64;
        let dropped = dropped_ids.len() as u64;
        write_results_file(
            &self.out_dir,
            &ResultsFile {
                frames: self.records,
                dropped: dropped_ids,
            },
        )
        .map_err(|e| io::Error::other(e.to_string()))?;
        let frac = |n: usize, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let report = ClientReport {
            mode: spec.mode,
            session_id,
            bundle_hash: bundle.bundle_hash(),
            frames_sent,
            results,
            dropped,
            wall_ms: wall.as_secs_f64() * 1e3,
            results_per_sec: if wall.is_zero() { 0.0 } else { results as f64 / wall.as_secs_f64() },
            round_trip_us: Percentiles::of(self.round_trips),
            rates: Rates {
                bypass: frac(self.stats.iter().filter(|(f, _)| f.frame_passer_bypass).count(), results),
                reuse: frac(self.stats.iter().filter(|(f, _)| f.early_stop_reuse).count(), results),
                drop: frac(dropped as usize, frames_sent),
            },
            pipeline: RunReport::from_parts(self.stats.iter().map(|(f, t)| (*f, t)), dropped),
            server_metrics,
            errors: self.errors,
        };
        std::fs::write(
            spec.out_dir.join("report.json"),
            serde_json::to_vec_pretty(&report).map_err(|e| io::Error::other(e.to_string()))?,
        )?;
        Ok(report)
    }
}

/// Runs one client session end to end. Outputs land in `spec.out_dir`,
/// which is only created once the source loaded and, in offload mode, the
/// server accepted the session.
pub fn run_client(spec: &ClientRunSpec) -> Result<ClientReport, ClientError> {
    spec.validate()?;
    let bundle = spec.source.load()?;
    match spec.mode {
        RunMode::Local => run_local(spec, &bundle),
        RunMode::Offload => run_offload(spec, &bundle),
    }
}

fn pace(start: Instant, i: usize, fps: f64) {
    let due = start + Duration::from_secs_f64(i as f64 / fps);
    let now = Instant::now();
    if due > now {
        thread::sleep(due - now);
    }
}

fn run_local(spec: &ClientRunSpec, bundle: &SequenceBundle) -> Result<ClientReport, ClientError> {
    let mut assets = AssetStore::builtin();
    if let Some(d) = &spec.asset_dir {
        assets
            .load_dir(d)
            .map_err(|e| ClientError::SourceError(format!("assets: {e}")))?;
    }
    let mut session = Session::new(spec.session_cfg.clone(), BackendSet::default(), Arc::new(assets))
        .map_err(|e| ClientError::InvalidSpec(e.to_string()))?;
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut col = Collector::new(spec)?;
    let start = Instant::now();
    for (i, frame) in bundle.frames.iter().enumerate() {
        if !spec.afap {
            pace(start, i, spec.fps);
        }
        let t = Instant::now();
        match session.process_frame(frame.clone()) {
            Ok(r) => col.accept(r, frame, t.elapsed())?,
            Err(e) => col.errors.push(ErrorRecord {
                code: match e {
                    PipelineError::OutOfOrderFrame { .. } => codes::OUT_OF_ORDER,
                    _ => codes::STAGE_FAILURE,
                },
                detail: format!("frame {}: {e}", frame.frame_id()),
            }),
        }
    }
    let wall = start.elapsed();
    col.finish(spec, bundle, None, bundle.len() as u64, wall, None)
}

fn connect(spec: &ClientRunSpec) -> Result<TcpStream, ClientError> {
    let fail = |reason: String| ClientError::ConnectFailure {
        addr: spec.server_addr.clone(),
        reason,
    };
    let addrs: Vec<SocketAddr> = spec
        .server_addr
        .to_socket_addrs()
        .map_err(|e| fail(e.to_string()))?
        .collect();
    let mut last = "no address".to_string();
    for a in addrs {
        match TcpStream::connect_timeout(&a, spec.timeout) {
            Ok(s) => {
                s.set_nodelay(true)?;
                s.set_read_timeout(Some(spec.timeout))?;
                return Ok(s);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(fail(last))
}

fn send(stream: &mut TcpStream, msg: &Message) -> io::Result<()> {
    let bytes = encode(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    stream.write_all(&bytes)
}

/// Reads until at least one message is decoded. `Ok(None)` on EOF.
fn read_messages(stream: &mut TcpStream, dec: &mut Decoder, buf: &mut [u8]) -> Result<Option<Vec<Result<Message, String>>>, ClientError> {
    loop {
        let n = match stream.read(buf) {
            Ok(n) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                return Err(ClientError::ProtocolError("timed out waiting for the server".into()))
            }
            Err(e) => return Err(ClientError::ProtocolError(format!("connection lost: {e}"))),
        };
        if n == 0 {
            return Ok(None);
        }
        let out = dec.feed(&buf[..n]);
        if !out.is_empty() {
            return Ok(Some(out.into_iter().map(|r| r.map_err(|e| e.to_string())).collect()));
        }
    }
}

/// Frames sent and frames answered, for windowing in as-fast-as-possible mode.
#[derive(Default)]
struct Flight {
    state: Mutex<FlightState>,
    cv: Condvar,
}

#[derive(Default)]
struct FlightState {
    sent_at: BTreeMap<u64, Instant>,
    sent: usize,
    /// Index of the newest answered frame plus one; results arrive in order,
    /// so anything before it is answered or dropped.
    answered: usize,
}

const WINDOW_WAIT: Duration = Duration::from_secs(1);

fn run_offload(spec: &ClientRunSpec, bundle: &SequenceBundle) -> Result<ClientReport, ClientError> {
    let mut stream = connect(spec)?;
    let mut dec = Decoder::new();
    let mut buf = vec![0u8; 256 * 1024];

    let session_cfg_json = serde_json::to_vec(&spec.session_cfg).expect("config serializes");
    send(
        &mut stream,
        &Message::Hello {
            proto_version: PROTO_VERSION,
            session_cfg_json,
        },
    )
    .map_err(|e| ClientError::ProtocolError(format!("sending hello: {e}")))?;
    let mut first = read_messages(&mut stream, &mut dec, &mut buf)?.unwrap_or_default();
    // anything after the ack is handled with the first result batch
    let mut carry = first.split_off(first.len().min(1));
    let session_id = match first.pop() {
        Some(Ok(Message::HelloAck { session_id, .. })) => session_id,
        Some(Ok(Message::Error { code, detail })) => {
            return Err(ClientError::ProtocolError(format!("server refused session ({code}): {detail}")))
        }
        Some(Ok(other)) => {
            return Err(ClientError::ProtocolError(format!("expected HelloAck, got {:?}", other.msg_type())))
        }
        Some(Err(e)) => return Err(ClientError::ProtocolError(e)),
        None => return Err(ClientError::ProtocolError("server closed during handshake".into())),
    };
    log::info!("session {session_id} open");

    std::fs::create_dir_all(&spec.out_dir)?;
    let mut col = Collector::new(spec)?;
    let index: BTreeMap<u64, usize> = bundle.frames.iter().enumerate().map(|(i, f)| (f.frame_id(), i)).collect();
    let flight = Arc::new(Flight::default());
    let window = spec.session_cfg.queue_capacity.max(1);
    let start = Instant::now();

    let sender = {
        let mut stream = stream.try_clone()?;
        let flight = flight.clone();
        let frames: Vec<Frame> = bundle.frames.clone();
        let (afap, fps) = (spec.afap, spec.fps);
        thread::spawn(move || -> io::Result<usize> {
            for (i, f) in frames.iter().enumerate() {
                if afap {
                    let g = flight.state.lock().unwrap();
                    let _ = flight
                        .cv
                        .wait_timeout_while(g, WINDOW_WAIT, |s| s.sent - s.answered >= window)
                        .unwrap();
                } else {
                    pace(start, i, fps);
                }
                let msg = Message::Frame(FrameMsg::from_frame(f));
                {
                    let mut s = flight.state.lock().unwrap();
                    s.sent_at.insert(f.frame_id(), Instant::now());
                    s.sent = i + 1;
                }
                send(&mut stream, &msg)?;
            }
            send(&mut stream, &Message::Bye)?;
            Ok(frames.len())
        })
    };

    let mut server_metrics = None;
    let mut failure = None;
    'recv: loop {
        let batch = if !carry.is_empty() {
            std::mem::take(&mut carry)
        } else {
            match read_messages(&mut stream, &mut dec, &mut buf) {
            Ok(Some(b)) => b,
            Ok(None) => {
                failure = Some("server closed the connection before Bye".to_string());
                break;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
            }
        };
        for m in batch {
            match m {
                Ok(Message::Result(rm)) => {
                    let Some(&i) = index.get(&rm.frame_id()) else {
                        col.errors.push(ErrorRecord {
                            code: codes::PROTOCOL,
                            detail: format!("result for unknown frame {}", rm.frame_id()),
                        });
                        continue;
                    };
                    let sent = &bundle.frames[i];
                    let sent_at = {
                        let mut s = flight.state.lock().unwrap();
                        s.answered = s.answered.max(i + 1);
                        s.sent_at.get(&rm.frame_id()).copied()
                    };
                    flight.cv.notify_all();
                    match rm.to_result(sent) {
                        Ok(r) => {
                            let rt = sent_at.map(|t| t.elapsed()).unwrap_or_default();
                            col.accept(r, sent, rt)?;
                        }
                        Err(e) => col.errors.push(ErrorRecord {
                            code: codes::PROTOCOL,
                            detail: format!("frame {}: {e}", rm.frame_id()),
                        }),
                    }
                }
                Ok(Message::Metrics { report_json }) => match serde_json::from_slice::<MetricsReport>(&report_json) {
                    Ok(r) => server_metrics = Some(r),
                    Err(e) => col.errors.push(ErrorRecord {
                        code: codes::PROTOCOL,
                        detail: format!("metrics: {e}"),
                    }),
                },
                Ok(Message::Error { code, detail }) => {
                    log::warn!("server error {code}: {detail}");
                    col.errors.push(ErrorRecord { code, detail });
                }
                Ok(Message::Bye) => break 'recv,
                Ok(other) => col.errors.push(ErrorRecord {
                    code: codes::PROTOCOL,
                    detail: format!("unexpected {:?} from server", other.msg_type()),
                }),
                Err(e) => col.errors.push(ErrorRecord {
                    code: codes::PROTOCOL,
                    detail: e,
                }),
            }
        }
    }
    let wall = start.elapsed();
    if failure.is_some() {
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }
    let frames_sent = match sender.join() {
        Ok(Ok(n)) => n,
        Ok(Err(e)) => {
            col.errors.push(ErrorRecord {
                code: codes::PROTOCOL,
                detail: format!("send failed: {e}"),
            });
            flight.state.lock().unwrap().sent
        }
        Err(_) => flight.state.lock().unwrap().sent,
    };
    if let Some(f) = failure {
        col.errors.push(ErrorRecord {
            code: codes::PROTOCOL,
            detail: f,
        });
    }
    col.finish(spec, bundle, Some(session_id), frames_sent as u64, wall, server_metrics)
}

/// Reads `report.json` written by a previous run.
pub fn read_report(dir: &Path) -> Result<ClientReport, ClientError> {
    let bytes = std::fs::read(dir.join("report.json"))?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::SourceError(e.to_string()))
}
