use super::{crc32, DecodeError, Message, MessageType, HEADER_LEN, MAGIC, MAX_PAYLOAD, OVERHEAD};

/// Streaming envelope parser. Output does not depend on how the input is
/// split into chunks.
#[derive(Debug, Default)]
pub struct Decoder {
    buf: Vec<u8>,
    /// Garbage discarded since the last envelope, reported with the next
    /// magic found.
    skipped: usize,
}

/// Length of the longest suffix of `buf` that is a proper prefix of the magic.
fn magic_prefix_suffix(buf: &[u8]) -> usize {
    (1..MAGIC.len())
        .rev()
        .find(|&k| buf.len() >= k && buf[buf.len() - k..] == MAGIC[..k])
        .unwrap_or(0)
}

fn find_magic(buf: &[u8]) -> Option<usize> {
    buf.windows(MAGIC.len()).position(|w| w == MAGIC)
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes held back waiting for more input.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Garbage discarded and not yet reported.
    pub fn pending_skip(&self) -> usize {
        self.skipped
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Vec<Result<Message, DecodeError>> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut start = 0;
        loop {
            let rest = &self.buf[start..];
            if !rest.starts_with(&MAGIC) {
                match find_magic(rest) {
                    Some(p) => {
                        self.skipped += p;
                        start += p;
                    }
                    None => {
                        let drop = rest.len() - magic_prefix_suffix(rest);
                        self.skipped += drop;
                        start += drop;
                        break;
                    }
                }
            }
            if self.skipped > 0 {
                out.push(Err(DecodeError::BadMagic {
                    skipped: self.skipped,
                }));
                self.skipped = 0;
            }
            match decode_frame_step(&self.buf[start..]) {
                Step::NeedMore => break,
                Step::Skip(n, err) => {
                    out.push(Err(err));
                    start += n;
                }
                Step::Done(n, msg) => {
                    out.push(msg);
                    start += n;
                }
            }
        }
        self.buf.drain(..start);
        out
    }
}

pub(super) enum Step {
    NeedMore,
    /// Envelope rejected; discard this many bytes.
    Skip(usize, DecodeError),
    Done(usize, Result<Message, DecodeError>),
}

/// Parses one envelope at the start of `buf`, which begins with the magic.
pub(super) fn decode_frame_step(buf: &[u8]) -> Step {
    if buf.len() < HEADER_LEN {
        return Step::NeedMore;
    }
    let type_byte = buf[4];
    let len = u32::from_le_bytes(buf[5..9].try_into().unwrap());
    if len as usize > MAX_PAYLOAD {
        // the header is garbage; resume the search past this magic
        return Step::Skip(MAGIC.len(), DecodeError::Oversized(len));
    }
    let total = OVERHEAD + len as usize;
    if buf.len() < total {
        return Step::NeedMore;
    }
    let stored = u32::from_le_bytes(buf[total - 4..total].try_into().unwrap());
    let computed = crc32(&buf[4..total - 4]);
    if stored != computed {
        return Step::Skip(
            total,
            DecodeError::CrcMismatch {
                msg_type: type_byte,
                stored,
                computed,
            },
        );
    }
    let Some(msg_type) = MessageType::from_u8(type_byte) else {
        return Step::Skip(total, DecodeError::UnknownType(type_byte));
    };
    Step::Done(total, Message::decode_payload(msg_type, &buf[HEADER_LEN..total - 4]))
}

/// Decodes exactly one complete envelope.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, DecodeError> {
    if !bytes.starts_with(&MAGIC) {
        let skipped = find_magic(bytes).unwrap_or(bytes.len());
        return Err(DecodeError::BadMagic { skipped });
    }
    match decode_frame_step(bytes) {
        Step::NeedMore => Err(DecodeError::Truncated(bytes.len())),
        Step::Skip(_, e) => Err(e),
        Step::Done(n, m) if n == bytes.len() => m,
        Step::Done(n, _) => Err(DecodeError::Malformed {
            msg_type: MessageType::from_u8(bytes[4]).expect("decoded type is known"),
            reason: format!("{} bytes after the envelope", bytes.len() - n),
        }),
    }
}
