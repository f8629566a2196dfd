//! Per-connection protocol state, independent of the carrier.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use dr_core::pipeline::{
    ControlAction, ControlError, PipelineError, PipelineResult, ResultFlags, RunReport, Session,
    SessionConfig, SharedScheduler, SubmitOutcome,
};
use dr_core::perception::BackendSet;
use dr_core::transport::{codes, encode, Decoder, Message, MetricsReport, ResultMsg, PROTO_VERSION};
use dr_core::StageTimings;

use crate::server::{SessionSlot, Shared};

/// Metrics are pushed after this many processed frames.
pub const METRICS_EVERY: u64 = 30;
/// Frames kept for the metrics window.
pub const METRICS_WINDOW: usize = 1024;

const POLL: Duration = Duration::from_millis(20);

pub(crate) enum Outgoing {
    Bytes(Vec<u8>),
    /// Flush and close the carrier.
    Close,
}

#[derive(Clone)]
pub(crate) struct Outbox(Sender<Outgoing>);

impl Outbox {
    pub fn new(tx: Sender<Outgoing>) -> Self {
        Self(tx)
    }

    pub fn send(&self, msg: &Message) {
        match encode(msg) {
            Ok(b) => {
                let _ = self.0.send(Outgoing::Bytes(b));
            }
            Err(e) => log::error!("cannot encode {:?}: {e}", msg.msg_type()),
        }
    }

    pub fn close(&self) {
        let _ = self.0.send(Outgoing::Close);
    }
}

struct Active {
    session_id: u64,
    sched: Arc<SharedScheduler>,
    controls: Arc<Mutex<VecDeque<ControlAction>>>,
    metrics_requested: Arc<AtomicBool>,
    aborted: Arc<AtomicBool>,
    worker: JoinHandle<()>,
}

enum State {
    AwaitHello,
    Active(Active),
    Done,
}

pub(crate) struct Conn {
    shared: Arc<Shared>,
    out: Outbox,
    decoder: Decoder,
    state: State,
    peer: String,
}

fn epoch_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

fn control_error_code(e: &ControlError) -> u16 {
    match e {
        ControlError::NoInstanceAt { .. } => codes::NO_INSTANCE_AT_POINT,
        ControlError::UnknownAsset(_) => codes::UNKNOWN_ASSET,
        _ => codes::BAD_CONTROL,
    }
}

impl Conn {
    pub fn new(shared: Arc<Shared>, out: Outbox, peer: String) -> Self {
        Self {
            shared,
            out,
            decoder: Decoder::new(),
            state: State::AwaitHello,
            peer,
        }
    }

    /// Feeds received bytes. Returns false once the connection should stop
    /// reading.
    pub fn on_bytes(&mut self, chunk: &[u8]) -> bool {
        for item in self.decoder.feed(chunk) {
            match item {
                Ok(msg) => {
                    if !self.on_message(msg) {
                        return false;
                    }
                }
                Err(e) => {
                    log::warn!("{}: {e}", self.peer);
                    self.out.send(&Message::error(codes::PROTOCOL, e.to_string()));
                }
            }
        }
        !matches!(self.state, State::Done)
    }

    pub fn protocol_error(&self, detail: &str) {
        self.out.send(&Message::error(codes::PROTOCOL, detail));
    }

    /// The peer went away without Bye: drop whatever is queued.
    pub fn on_disconnect(&mut self) {
        if let State::Active(a) = &self.state {
            log::debug!("{}: session {} carrier closed", self.peer, a.session_id);
            a.aborted.store(true, Ordering::SeqCst);
            a.sched.close();
        }
    }

    /// Waits for the session worker to finish.
    pub fn finish(self) {
        if let State::Active(a) = self.state {
            let _ = a.worker.join();
        }
    }

    fn reject(&mut self, code: u16, detail: String) -> bool {
        log::warn!("{}: rejecting: {detail}", self.peer);
        self.out.send(&Message::error(code, detail));
        self.out.close();
        self.state = State::Done;
        false
    }

    fn on_message(&mut self, msg: Message) -> bool {
        match &mut self.state {
            State::Done => false,
            State::AwaitHello => match msg {
                Message::Hello {
                    proto_version,
                    session_cfg_json,
                } => self.on_hello(proto_version, &session_cfg_json),
                other => self.reject(codes::BAD_HELLO, format!("expected Hello, got {:?}", other.msg_type())),
            },
            State::Active(a) => match msg {
                Message::Frame(fm) => {
                    match fm.to_frame() {
                        Ok(frame) => {
                            if let SubmitOutcome::DroppedOldest(id) = a.sched.submit(frame) {
                                log::debug!("session {}: dropped frame {id}", a.session_id);
                            }
                        }
                        Err(e) => self.out.send(&Message::error(codes::PROTOCOL, e.to_string())),
                    }
                    true
                }
                Message::Control { control_json } => {
                    match ControlAction::from_json(&control_json) {
                        Ok(c) => a.controls.lock().unwrap().push_back(c),
                        Err(e) => self.out.send(&Message::error(codes::BAD_CONTROL, e.to_string())),
                    }
                    true
                }
                Message::Metrics { .. } => {
                    a.metrics_requested.store(true, Ordering::SeqCst);
                    true
                }
                Message::Bye => {
                    log::info!("{}: session {} said bye", self.peer, a.session_id);
                    a.sched.close();
                    false
                }
                Message::Error { code, detail } => {
                    log::warn!("{}: peer error {code}: {detail}", self.peer);
                    true
                }
                other => {
                    self.out.send(&Message::error(
                        codes::PROTOCOL,
                        format!("unexpected {:?} from client", other.msg_type()),
                    ));
                    true
                }
            },
        }
    }

    fn on_hello(&mut self, version: u16, cfg_json: &[u8]) -> bool {
        if version != PROTO_VERSION {
            return self.reject(
                codes::UNSUPPORTED_VERSION,
                format!("protocol version {version} unsupported, server speaks {PROTO_VERSION}"),
            );
        }
        let cfg: SessionConfig = if cfg_json.trim_ascii().is_empty() {
            SessionConfig::default()
        } else {
            match serde_json::from_slice(cfg_json) {
                Ok(c) => c,
                Err(e) => return self.reject(codes::BAD_HELLO, format!("session config: {e}")),
            }
        };
        let session = match Session::new(cfg.clone(), BackendSet::default(), self.shared.assets.clone()) {
            Ok(s) => s,
            Err(PipelineError::UnknownAsset(id)) => {
                return self.reject(codes::UNKNOWN_ASSET, format!("unknown asset {id:?}"))
            }
            Err(e) => return self.reject(codes::BAD_HELLO, e.to_string()),
        };
        let Some(slot) = self.shared.registry.acquire(self.shared.max_sessions) else {
            return self.reject(
                codes::TOO_MANY_SESSIONS,
                format!("at most {} concurrent sessions", self.shared.max_sessions),
            );
        };
        let session_id = slot.id();
        log::info!("{}: session {session_id} started", self.peer);
        self.out.send(&Message::HelloAck {
            session_id,
            epoch_us: epoch_us(),
        });
        let sched = Arc::new(SharedScheduler::new(cfg.queue_capacity));
        let controls = Arc::new(Mutex::new(VecDeque::new()));
        let metrics_requested = Arc::new(AtomicBool::new(false));
        let aborted = Arc::new(AtomicBool::new(false));
        let worker = Worker {
            session,
            slot,
            out: self.out.clone(),
            sched: sched.clone(),
            controls: controls.clone(),
            metrics_requested: metrics_requested.clone(),
            aborted: aborted.clone(),
            window: VecDeque::new(),
            processed: 0,
        };
        let worker = thread::Builder::new()
            .name(format!("session-{session_id}"))
            .spawn(move || worker.run())
            .expect("spawn session worker");
        self.state = State::Active(Active {
            session_id,
            sched,
            controls,
            metrics_requested,
            aborted,
            worker,
        });
        true
    }
}

struct Worker {
    session: Session,
    slot: SessionSlot,
    out: Outbox,
    sched: Arc<SharedScheduler>,
    controls: Arc<Mutex<VecDeque<ControlAction>>>,
    metrics_requested: Arc<AtomicBool>,
    aborted: Arc<AtomicBool>,
    window: VecDeque<(ResultFlags, StageTimings)>,
    processed: u64,
}

impl Worker {
    fn run(mut self) {
        loop {
            self.apply_controls();
            if self.metrics_requested.swap(false, Ordering::SeqCst) {
                self.send_metrics();
            }
            if self.aborted.load(Ordering::SeqCst) {
                return;
            }
            match self.sched.take_timeout(POLL) {
                Err(()) => break,
                Ok(None) => {}
                Ok(Some(frame)) => {
                    // controls sent before this frame take effect for it
                    self.apply_controls();
                    self.process(frame)
                }
            }
        }
        // closed by Bye with the queue drained
        self.apply_controls();
        self.send_metrics();
        self.out.send(&Message::Bye);
        self.out.close();
        log::info!("session {} finished after {} frames", self.slot.id(), self.processed);
    }

    fn apply_controls(&mut self) {
        let pending: Vec<ControlAction> = self.controls.lock().unwrap().drain(..).collect();
        for c in pending {
            if let Err(e) = self.session.apply_control(&c) {
                self.out.send(&Message::error(control_error_code(&e), e.to_string()));
            }
        }
    }

    fn process(&mut self, frame: dr_core::Frame) {
        let id = frame.frame_id();
        match self.session.process_frame(frame) {
            Ok(r) => {
                self.sched.mark_emitted(id);
                self.emit(&r);
            }
            Err(e) => {
                let code = match e {
                    PipelineError::OutOfOrderFrame { .. } => codes::OUT_OF_ORDER,
                    _ => codes::STAGE_FAILURE,
                };
                log::warn!("session {}: frame {id}: {e}", self.slot.id());
                self.out.send(&Message::error(code, format!("frame {id}: {e}")));
            }
        }
    }

    fn emit(&mut self, r: &PipelineResult) {
        self.out.send(&Message::Result(ResultMsg::from_result(r)));
        if self.window.len() == METRICS_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back((r.flags, r.timings.clone()));
        self.processed += 1;
        if self.processed.is_multiple_of(METRICS_EVERY) {
            self.send_metrics();
        }
    }

    fn send_metrics(&self) {
        let (counters, _) = self.sched.snapshot();
        let report = MetricsReport {
            session_id: self.slot.id(),
            window_frames: self.window.len() as u64,
            report: RunReport::from_parts(self.window.iter().map(|(f, t)| (*f, t)), counters.dropped),
        };
        match serde_json::to_vec(&report) {
            Ok(report_json) => self.out.send(&Message::Metrics { report_json }),
            Err(e) => log::error!("metrics: {e}"),
        }
    }
}
