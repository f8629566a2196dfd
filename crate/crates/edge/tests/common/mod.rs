#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use dr_core::transport::{encode, Decoder, Message, PROTO_VERSION};
use dr_edge::{Server, ServerConfig, ServerHandle};

pub fn start_server(max_sessions: usize) -> ServerHandle {
    let cfg = ServerConfig {
        max_sessions,
        ..ServerConfig::ephemeral()
    };
    Server::bind(&cfg).unwrap().spawn()
}

/// Blocking message-level client over raw TCP.
pub struct RawClient {
    stream: TcpStream,
    dec: Decoder,
    pending: std::collections::VecDeque<Message>,
}

impl RawClient {
    pub fn connect(h: &ServerHandle) -> Self {
        let stream = TcpStream::connect(h.tcp_addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        Self {
            stream,
            dec: Decoder::new(),
            pending: Default::default(),
        }
    }

    pub fn send(&mut self, m: &Message) {
        self.stream.write_all(&encode(m).unwrap()).unwrap();
    }

    pub fn send_raw(&mut self, b: &[u8]) {
        self.stream.write_all(b).unwrap();
    }

    pub fn hello(&mut self, cfg_json: &str) -> Message {
        self.send(&Message::Hello {
            proto_version: PROTO_VERSION,
            session_cfg_json: cfg_json.as_bytes().to_vec(),
        });
        self.recv().expect("reply to hello")
    }

    /// Next message; `None` once the server closed the connection.
    pub fn recv(&mut self) -> Option<Message> {
        let mut buf = [0u8; 65536];
        while self.pending.is_empty() {
            let n = match self.stream.read(&mut buf) {
                Ok(n) => n,
                Err(e) => {
                    eprintln!("read: {e}");
                    0
                }
            };
            if n == 0 {
                return None;
            }
            for m in self.dec.feed(&buf[..n]) {
                self.pending.push_back(m.expect("server sends valid envelopes"));
            }
        }
        self.pending.pop_front()
    }

    /// Messages up to and including the server's Bye.
    pub fn until_bye(&mut self) -> Vec<Message> {
        let mut out = Vec::new();
        while let Some(m) = self.recv() {
            let bye = m == Message::Bye;
            out.push(m);
            if bye {
                break;
            }
        }
        out
    }

    pub fn into_stream(self) -> TcpStream {
        self.stream
    }
}

pub fn wait_until(mut cond: impl FnMut() -> bool) -> bool {
    for _ in 0..500 {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    false
}
