//! Edge daemon: accepts clients over raw TCP and over websocket binary
//! messages, one pipeline session per connection.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use dr_core::compose::{AssetStore, ComposeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tungstenite::protocol::WebSocket;

use crate::conn::{Conn, Outbox, Outgoing};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
    #[error("invalid server config: {0}")]
    InvalidConfig(String),
    #[error("assets: {0}")]
    Assets(#[from] ComposeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub tcp_listen_addr: String,
    /// `None` disables the websocket carrier.
    pub ws_listen_addr: Option<String>,
    pub max_sessions: usize,
    pub asset_dir: Option<PathBuf>,
    pub log_level: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            tcp_listen_addr: "127.0.0.1:7401".into(),
            ws_listen_addr: Some("127.0.0.1:7402".into()),
            max_sessions: 8,
            asset_dir: None,
            log_level: "info".into(),
        }
    }
}

impl ServerConfig {
    /// Ephemeral localhost ports for both carriers.
    pub fn ephemeral() -> Self {
        Self {
            tcp_listen_addr: "127.0.0.1:0".into(),
            ws_listen_addr: Some("127.0.0.1:0".into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.max_sessions < 1 {
            return Err(ServerError::InvalidConfig("max_sessions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ids of live sessions.
#[derive(Debug, Default)]
pub struct Registry {
    live: Mutex<BTreeSet<u64>>,
    next_id: AtomicU64,
}

impl Registry {
    pub(crate) fn acquire(self: &Arc<Self>, max: usize) -> Option<SessionSlot> {
        let mut live = self.live.lock().unwrap();
        if live.len() >= max {
            return None;
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        live.insert(id);
        Some(SessionSlot {
            id,
            registry: self.clone(),
        })
    }

    pub fn live_sessions(&self) -> Vec<u64> {
        self.live.lock().unwrap().iter().copied().collect()
    }
}

/// A registry entry, released on drop.
#[derive(Debug)]
pub(crate) struct SessionSlot {
    id: u64,
    registry: Arc<Registry>,
}

impl SessionSlot {
    pub fn id(&self) -> u64 {
        self.id
    }
}

impl Drop for SessionSlot {
    fn drop(&mut self) {
        self.registry.live.lock().unwrap().remove(&self.id);
    }
}

pub(crate) struct Shared {
    pub assets: Arc<AssetStore>,
    pub registry: Arc<Registry>,
    pub max_sessions: usize,
    shutdown: AtomicBool,
}

pub struct Server {
    tcp: TcpListener,
    ws: Option<TcpListener>,
    shared: Arc<Shared>,
}

const ACCEPT_POLL: Duration = Duration::from_millis(10);
const READ_CHUNK: usize = 64 * 1024;

fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    let l = TcpListener::bind(addr).map_err(|source| ServerError::BindFailure {
        addr: addr.to_string(),
        source,
    })?;
    l.set_nonblocking(true).map_err(|source| ServerError::BindFailure {
        addr: addr.to_string(),
        source,
    })?;
    Ok(l)
}

impl Server {
    pub fn bind(cfg: &ServerConfig) -> Result<Self, ServerError> {
        cfg.validate()?;
        let mut assets = AssetStore::builtin();
        if let Some(dir) = &cfg.asset_dir {
            let n = assets.load_dir(dir)?;
            log::info!("loaded {n} assets from {}", dir.display());
        }
        let tcp = bind(&cfg.tcp_listen_addr)?;
        let ws = cfg.ws_listen_addr.as_deref().map(bind).transpose()?;
        Ok(Self {
            tcp,
            ws,
            shared: Arc::new(Shared {
                assets: Arc::new(assets),
                registry: Arc::new(Registry::default()),
                max_sessions: cfg.max_sessions,
                shutdown: AtomicBool::new(false),
            }),
        })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp.local_addr().expect("bound listener")
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws.as_ref().map(|l| l.local_addr().expect("bound listener"))
    }

    pub fn registry(&self) -> Arc<Registry> {
        self.shared.registry.clone()
    }

    /// Serves on background threads until the handle is shut down.
    pub fn spawn(self) -> ServerHandle {
        let tcp_addr = self.tcp_addr();
        let ws_addr = self.ws_addr();
        let shared = self.shared.clone();
        let mut acceptors = vec![spawn_acceptor(self.tcp, shared.clone(), Carrier::Tcp)];
        if let Some(ws) = self.ws {
            acceptors.push(spawn_acceptor(ws, shared.clone(), Carrier::WebSocket));
        }
        log::info!("listening: tcp {tcp_addr}, ws {ws_addr:?}");
        ServerHandle {
            tcp_addr,
            ws_addr,
            shared,
            acceptors,
        }
    }

    /// Serves until the process exits.
    pub fn run(self) {
        let handle = self.spawn();
        for a in handle.acceptors {
            let _ = a.join();
        }
    }
}

pub struct ServerHandle {
    pub tcp_addr: SocketAddr,
    pub ws_addr: Option<SocketAddr>,
    shared: Arc<Shared>,
    acceptors: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn registry(&self) -> Arc<Registry> {
        self.shared.registry.clone()
    }

    /// Stops accepting. Live connections run to completion.
    pub fn shutdown(self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for a in self.acceptors {
            let _ = a.join();
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Carrier {
    Tcp,
    WebSocket,
}

fn spawn_acceptor(listener: TcpListener, shared: Arc<Shared>, carrier: Carrier) -> JoinHandle<()> {
    thread::spawn(move || {
        while !shared.shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let shared = shared.clone();
                    let _ = stream.set_nonblocking(false);
                    let _ = stream.set_nodelay(true);
                    thread::spawn(move || {
                        let peer = format!("{carrier:?} {peer}");
                        log::debug!("{peer}: connected");
                        let r = match carrier {
                            Carrier::Tcp => serve_tcp(stream, shared, peer.clone()),
                            Carrier::WebSocket => serve_ws(stream, shared, peer.clone()),
                        };
                        if let Err(e) = r {
                            log::warn!("{peer}: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) => {
                    log::error!("accept: {e}");
                    thread::sleep(ACCEPT_POLL);
                }
            }
        }
    })
}

fn serve_tcp(stream: TcpStream, shared: Arc<Shared>, peer: String) -> Result<(), String> {
    let (tx, rx) = mpsc::channel();
    let mut write_half = stream.try_clone().map_err(|e| e.to_string())?;
    let writer = thread::spawn(move || {
        for o in rx {
            match o {
                Outgoing::Bytes(b) => {
                    if write_half.write_all(&b).is_err() {
                        break;
                    }
                }
                Outgoing::Close => {
                    let _ = write_half.flush();
                    let _ = write_half.shutdown(Shutdown::Both);
                    break;
                }
            }
        }
    });
    let mut conn = Conn::new(shared, Outbox::new(tx), peer);
    let mut read_half = stream;
    let mut buf = vec![0u8; READ_CHUNK];
    loop {
        match read_half.read(&mut buf) {
            Ok(0) | Err(_) => {
                conn.on_disconnect();
                break;
            }
            Ok(n) => {
                if !conn.on_bytes(&buf[..n]) {
                    break;
                }
            }
        }
    }
    conn.finish();
    let _ = writer.join();
    Ok(())
}

fn serve_ws(stream: TcpStream, shared: Arc<Shared>, peer: String) -> Result<(), String> {
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref()
        .set_read_timeout(Some(ACCEPT_POLL))
        .map_err(|e| e.to_string())?;
    let (tx, rx) = mpsc::channel();
    let mut conn = Some(Conn::new(shared, Outbox::new(tx), peer));
    let mut reading = true;
    'io: loop {
        // drain everything queued for the peer first
        loop {
            let next = if reading {
                rx.try_recv().map_err(|e| e == TryRecvError::Disconnected)
            } else {
                rx.recv_timeout(ACCEPT_POLL).map_err(|e| e == RecvTimeoutError::Disconnected)
            };
            match next {
                Ok(Outgoing::Bytes(b)) => {
                    if ws.send(tungstenite::Message::binary(b)).is_err() {
                        break 'io;
                    }
                }
                Ok(Outgoing::Close) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'io;
                }
                Err(true) => break 'io,
                Err(false) => break,
            }
        }
        if !reading {
            continue;
        }
        let c = conn.as_mut().expect("conn lives while reading");
        match ws.read() {
            Ok(tungstenite::Message::Binary(b)) => {
                if !c.on_bytes(&b) {
                    reading = false;
                }
            }
            Ok(tungstenite::Message::Close(_)) => {
                c.on_disconnect();
                break;
            }
            Ok(tungstenite::Message::Text(_)) => c.protocol_error("text messages are not accepted"),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => {
                c.on_disconnect();
                break;
            }
        }
    }
    if let Some(mut c) = conn.take() {
        // no-op after a completed Bye; stops the worker if the carrier broke
        c.on_disconnect();
        c.finish();
    }
    Ok(())
}
