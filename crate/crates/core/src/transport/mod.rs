//! Binary wire protocol.
//!
//! Every message travels in one envelope:
//!
//! ```text
//! "DRM1" | type u8 | payload_len u32 | payload | crc32 u32
//! ```
//!
//! Integers are little-endian. The CRC (IEEE, reflected) covers type, length
//! and payload. The same bytes are used over TCP and, one envelope per
//! binary message, over websocket.

mod decoder;
mod message;
pub mod sample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decoder::{decode_frame, Decoder};
pub use message::{FrameMsg, Message, MessageType, ResultMsg};

use crate::pipeline::RunReport;

pub const MAGIC: [u8; 4] = *b"DRM1";
pub const PROTO_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 9;
/// Envelope bytes around the payload: header plus CRC.
pub const OVERHEAD: usize = HEADER_LEN + 4;
pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 64 MiB limit")]
    OversizedPayload(usize),
    #[error("non-finite float in {0}")]
    NonFiniteFloat(&'static str),
    #[error("{what}: expected {expected} bytes, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    /// Bytes that did not start an envelope were discarded before the next
    /// magic.
    #[error("bad magic: skipped {skipped} bytes")]
    BadMagic { skipped: usize },
    #[error("crc mismatch on message type {msg_type}: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch {
        msg_type: u8,
        stored: u32,
        computed: u32,
    },
    #[error("declared payload of {0} bytes exceeds the limit")]
    Oversized(u32),
    #[error("envelope truncated after {0} bytes")]
    Truncated(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed {msg_type:?} payload: {reason}")]
    Malformed {
        msg_type: MessageType,
        reason: String,
    },
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// Serializes `msg` into exactly one envelope.
pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let payload = msg.encode_payload()?;
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::OversizedPayload(payload.len()));
    }
    let mut out = Vec::with_capacity(OVERHEAD + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(msg.msg_type() as u8);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Body of a METRICS message: a run report over the session's recent
/// window plus the session it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session_id: u64,
    pub window_frames: u64,
    #[serde(flatten)]
    pub report: RunReport,
}

/// Error codes carried by ERROR messages.
pub mod codes {
    pub const UNSUPPORTED_VERSION: u16 = 1000;
    pub const TOO_MANY_SESSIONS: u16 = 1001;
    pub const BAD_HELLO: u16 = 1002;
    pub const OUT_OF_ORDER: u16 = 1003;
    pub const STAGE_FAILURE: u16 = 1004;
    pub const BAD_CONTROL: u16 = 1005;
    pub const PROTOCOL: u16 = 1006;
    pub const UNKNOWN_SESSION: u16 = 1007;
    pub const NO_INSTANCE_AT_POINT: u16 = 2001;
    pub const UNKNOWN_ASSET: u16 = 2002;
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bitwise CRC-32, reflected polynomial 0xEDB88320.
    fn reference_crc(bytes: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in bytes {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
            }
        }
        !crc
    }

    #[test]
    fn bye_bytes() {
        let bytes = encode(&Message::Bye).unwrap();
        assert_eq!(&bytes[..9], &[0x44, 0x52, 0x4D, 0x31, 0x08, 0, 0, 0, 0]);
        let crc = reference_crc(&[0x08, 0, 0, 0, 0]);
        assert_eq!(&bytes[9..], &crc.to_le_bytes());
        assert_eq!(bytes.len(), 13);
    }

    #[test]
    fn crc_matches_reference() {
        for s in [&b""[..], b"123456789", b"DRM1 payload"] {
            assert_eq!(crc32(s), reference_crc(s));
        }
        assert_eq!(reference_crc(b"123456789"), 0xCBF4_3926);
    }

    fn stream(msgs: &[Message]) -> Vec<u8> {
        msgs.iter().flat_map(|m| encode(m).unwrap()).collect()
    }

    fn ok(out: Vec<Result<Message, DecodeError>>) -> Vec<Message> {
        out.into_iter().map(|r| r.unwrap()).collect()
    }

    fn small_frame() -> Message {
        Message::Frame(
            FrameMsg::new(7, 99, 2, 1, [1.0, 2.0, 0.5, 0.5], [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0], vec![1, 2, 3, 4, 5, 6], Some(vec![1.5, 2.5]))
                .unwrap(),
        )
    }

    #[test]
    fn frame_payload_layout() {
        let bytes = encode(&small_frame()).unwrap();
        let p = &bytes[HEADER_LEN..bytes.len() - 4];
        assert_eq!(bytes.len(), OVERHEAD + p.len());
        assert_eq!(&p[..8], &7u64.to_le_bytes());
        assert_eq!(&p[16..20], &2u32.to_le_bytes());
        assert_eq!(p[24], 1);
        assert_eq!(&p[25..29], &1.0f32.to_le_bytes());
        // 8 + 8 + 4 + 4 + 1 header fields, 16 intrinsics, 28 pose
        assert_eq!(&p[69..75], &[1, 2, 3, 4, 5, 6]);
        assert_eq!(&p[75..79], &1.5f32.to_le_bytes());
        assert_eq!(p.len(), 83);
    }

    #[test]
    fn rgb_length_checked_at_construction() {
        let r = FrameMsg::new(0, 0, 2, 2, [1.0; 4], [0.0; 7], vec![0; 11], None);
        assert!(matches!(r, Err(EncodeError::LengthMismatch { .. })));
        let r = ResultMsg::new(0, 0x10, None, None, vec![], 1, 1, vec![0; 3], None);
        assert!(matches!(r, Err(EncodeError::InvalidField(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let m = Message::Frame(FrameMsg::new(0, 0, 1, 1, [f32::NAN, 1.0, 0.0, 0.0], [0.0; 7], vec![0; 3], None).unwrap());
        assert_eq!(encode(&m), Err(EncodeError::NonFiniteFloat("intrinsics")));
    }

    #[test]
    fn empty_chunk_is_a_no_op() {
        let mut d = Decoder::new();
        assert!(d.feed(&[]).is_empty());
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn split_at_every_boundary() {
        let msgs = [small_frame(), Message::Bye];
        let bytes = stream(&msgs);
        for cut in 0..=bytes.len() {
            let mut d = Decoder::new();
            let mut got = ok(d.feed(&bytes[..cut]));
            got.extend(ok(d.feed(&bytes[cut..])));
            assert_eq!(got, msgs, "cut at {cut}");
        }
    }

    #[test]
    fn corrupted_payload_then_recovery() {
        let msgs = [small_frame(), Message::Bye];
        let mut bytes = stream(&msgs);
        bytes[HEADER_LEN + 3] ^= 0x40;
        let out = Decoder::new().feed(&bytes);
        assert!(matches!(out[0], Err(DecodeError::CrcMismatch { msg_type: 3, .. })));
        assert_eq!(out[1], Ok(Message::Bye));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn garbage_reported_once_before_next_message() {
        let mut bytes = b"xxDRyyz".to_vec();
        bytes.extend(encode(&Message::Bye).unwrap());
        for chunk in [1, 2, 3, bytes.len()] {
            let mut d = Decoder::new();
            let out: Vec<_> = bytes.chunks(chunk).flat_map(|c| d.feed(c)).collect();
            assert_eq!(out, vec![Err(DecodeError::BadMagic { skipped: 7 }), Ok(Message::Bye)], "chunk {chunk}");
        }
    }

    #[test]
    fn oversized_header_skipped() {
        let mut bytes = MAGIC.to_vec();
        bytes.push(3);
        bytes.extend_from_slice(&(MAX_PAYLOAD as u32 + 1).to_le_bytes());
        bytes.extend(encode(&Message::Bye).unwrap());
        let out = Decoder::new().feed(&bytes);
        assert_eq!(out[0], Err(DecodeError::Oversized(MAX_PAYLOAD as u32 + 1)));
        assert_eq!(out[1], Err(DecodeError::BadMagic { skipped: 5 }));
        assert_eq!(out[2], Ok(Message::Bye));
    }

    #[test]
    fn unknown_type_and_trailing_bytes() {
        let mut bytes = MAGIC.to_vec();
        let body = [9u8, 0, 0, 0, 0];
        bytes.extend_from_slice(&body);
        bytes.extend_from_slice(&crc32(&body).to_le_bytes());
        assert_eq!(decode_frame(&bytes), Err(DecodeError::UnknownType(9)));

        // HelloAck with one byte too many
        let mut bytes = MAGIC.to_vec();
        let mut body = vec![2u8];
        body.extend_from_slice(&17u32.to_le_bytes());
        body.extend_from_slice(&[0; 17]);
        bytes.extend_from_slice(&body);
        bytes.extend_from_slice(&crc32(&body).to_le_bytes());
        assert!(matches!(decode_frame(&bytes), Err(DecodeError::Malformed { msg_type: MessageType::HelloAck, .. })));
    }

    #[test]
    fn result_round_trips_through_pipeline_types() {
        use crate::pipeline::{end_to_end_once, SessionConfig};
        use crate::scenegen::{generate_sequence, SceneConfig};
        let b = generate_sequence(&SceneConfig { frame_count: 1, ..SceneConfig::default() }).unwrap();
        let (r, _) = end_to_end_once(&b, &SessionConfig::default()).unwrap();
        let wire = Message::Result(ResultMsg::from_result(&r[0]));
        let Message::Result(back) = decode_frame(&encode(&wire).unwrap()).unwrap() else { panic!() };
        let rebuilt = back.to_result(&b.frames[0]).unwrap();
        assert_eq!(rebuilt.composed, r[0].composed);
        assert_eq!(rebuilt.inpainted, r[0].inpainted);
        assert_eq!(rebuilt.placement, r[0].placement);
        assert_eq!(rebuilt.pose.map(|p| p.to_wire()), r[0].pose.map(|p| p.to_wire()));
        assert_eq!(rebuilt.timings, r[0].timings);
        let frame = FrameMsg::from_frame(&b.frames[0]).to_frame().unwrap();
        assert_eq!(frame, b.frames[0]);
    }

    proptest::proptest! {
        #[test]
        fn random_messages_round_trip(seed in proptest::prelude::any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let msgs: Vec<Message> = (0..3).map(|_| sample::random_message(&mut rng, 6)).collect();
            for m in &msgs {
                let bytes = encode(m).unwrap();
                proptest::prop_assert_eq!(bytes.len(), OVERHEAD + m.encode_payload().unwrap().len());
                proptest::prop_assert_eq!(&decode_frame(&bytes).unwrap(), m);
            }
            let bytes = stream(&msgs);
            let mut d = Decoder::new();
            let mut got = Vec::new();
            let mut pos = 0;
            while pos < bytes.len() {
                let n = rand::Rng::random_range(&mut rng, 1..=bytes.len() - pos);
                got.extend(ok(d.feed(&bytes[pos..pos + n])));
                pos += n;
            }
            proptest::prop_assert_eq!(got, msgs);
        }
    }

    #[test]
    fn metrics_json_is_flat() {
        let m = MetricsReport { session_id: 3, window_frames: 30, report: RunReport::default() };
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["session_id"], 3);
        assert!(v.get("bypass_rate").is_some());
        assert!(v.get("report").is_none());
    }
}
