use serde::{Deserialize, Serialize};

use crate::compose::Placement;
use crate::pipeline::{PipelineResult, ResultFlags};
use crate::types::{Frame, PinholeIntrinsics, Pose6D, Stage, StageTimings, MAX_DIM};

use super::{DecodeError, EncodeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    HelloAck = 2,
    Frame = 3,
    Result = 4,
    Control = 5,
    Metrics = 6,
    Error = 7,
    Bye = 8,
}

impl MessageType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MessageType::*;
        Some(match v {
            1 => Hello,
            2 => HelloAck,
            3 => Frame,
            4 => Result,
            5 => Control,
            6 => Metrics,
            7 => Error,
            8 => Bye,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        proto_version: u16,
        session_cfg_json: Vec<u8>,
    },
    HelloAck {
        session_id: u64,
        epoch_us: u64,
    },
    Frame(FrameMsg),
    Result(ResultMsg),
    Control {
        control_json: Vec<u8>,
    },
    Metrics {
        report_json: Vec<u8>,
    },
    Error {
        code: u16,
        detail: String,
    },
    Bye,
}

/// Uplink camera frame. Constructed only through [`FrameMsg::new`], which
/// checks plane lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMsg {
    frame_id: u64,
    capture_ts: u64,
    width: u32,
    height: u32,
    intrinsics: [f32; 4],
    camera_pose: [f32; 7],
    rgb: Vec<u8>,
    depth: Option<Vec<f32>>,
}

/// Downlink pipeline output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMsg {
    frame_id: u64,
    flags: u8,
    pose: Option<[f32; 7]>,
    placement: Option<[f32; 8]>,
    timings: Vec<(String, u64)>,
    width: u32,
    height: u32,
    inpainted: Vec<u8>,
    composed: Option<Vec<u8>>,
}

fn check_dims(width: u32, height: u32) -> Result<usize, EncodeError> {
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(EncodeError::InvalidField(format!("dimensions {width}x{height}")));
    }
    Ok(width as usize * height as usize)
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), EncodeError> {
    if expected != actual {
        return Err(EncodeError::LengthMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &[f32]) -> Result<(), EncodeError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EncodeError::NonFiniteFloat(what))
    }
}

impl FrameMsg {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: u64,
        capture_ts: u64,
        width: u32,
        height: u32,
        intrinsics: [f32; 4],
        camera_pose: [f32; 7],
        rgb: Vec<u8>,
        depth: Option<Vec<f32>>,
    ) -> Result<Self, EncodeError> {
        let n = check_dims(width, height)?;
        check_len("rgb", n * 3, rgb.len())?;
        if let Some(d) = &depth {
            check_len("depth", n, d.len())?;
        }
        Ok(Self {
            frame_id,
            capture_ts,
            width,
            height,
            intrinsics,
            camera_pose,
            rgb,
            depth,
        })
    }

    pub fn from_frame(f: &Frame) -> Self {
        let i = f.intrinsics();
        Self {
            frame_id: f.frame_id(),
            capture_ts: f.capture_ts(),
            width: f.width(),
            height: f.height(),
            intrinsics: [i.fx, i.fy, i.cx, i.cy],
            camera_pose: f.camera_pose().to_wire(),
            rgb: f.pixels().to_vec(),
            depth: f.depth().map(<[f32]>::to_vec),
        }
    }

    pub fn to_frame(&self) -> Result<Frame, crate::CoreError> {
        let [fx, fy, cx, cy] = self.intrinsics;
        Frame::new(
            self.frame_id,
            self.capture_ts,
            self.width,
            self.height,
            self.rgb.clone(),
            self.depth.clone(),
            PinholeIntrinsics::new(fx, fy, cx, cy)?,
            Pose6D::from_wire(self.camera_pose, 1.0)?,
        )
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn capture_ts(&self) -> u64 {
        self.capture_ts
    }
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
    pub fn intrinsics(&self) -> [f32; 4] {
        self.intrinsics
    }
    pub fn camera_pose(&self) -> [f32; 7] {
        self.camera_pose
    }
    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }
    pub fn depth(&self) -> Option<&[f32]> {
        self.depth.as_deref()
    }

    pub fn payload_len(&self) -> usize {
        let n = self.width as usize * self.height as usize;
        8 + 8 + 4 + 4 + 1 + 16 + 28 + n * 3 + self.depth.as_ref().map_or(0, |_| n * 4)
    }
}

impl ResultMsg {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        frame_id: u64,
        flags: u8,
        pose: Option<[f32; 7]>,
        placement: Option<[f32; 8]>,
        timings: Vec<(String, u64)>,
        width: u32,
        height: u32,
        inpainted: Vec<u8>,
        composed: Option<Vec<u8>>,
    ) -> Result<Self, EncodeError> {
        if flags & 0xF0 != 0 {
            return Err(EncodeError::InvalidField(format!("flags {flags:#04x}")));
        }
        let n = check_dims(width, height)?;
        check_len("inpainted", n * 3, inpainted.len())?;
        if let Some(c) = &composed {
            check_len("composed", n * 3, c.len())?;
        }
        if timings.len() > u16::MAX as usize {
            return Err(EncodeError::InvalidField("more than 65535 timings".into()));
        }
        if let Some((name, _)) = timings.iter().find(|(n, _)| n.len() > u8::MAX as usize) {
            return Err(EncodeError::InvalidField(format!("timing name {name:?} too long")));
        }
        Ok(Self {
            frame_id,
            flags,
            pose,
            placement,
            timings,
            width,
            height,
            inpainted,
            composed,
        })
    }

    pub fn from_result(r: &PipelineResult) -> Self {
        Self {
            frame_id: r.frame_id,
            flags: r.flags.to_bits(),
            pose: r.pose.map(|p| p.to_wire()),
            placement: r.placement.map(|p| p.to_wire()),
            timings: r.timings.iter().map(|(s, us)| (s.as_str().to_string(), us)).collect(),
            width: r.inpainted.width(),
            height: r.inpainted.height(),
            inpainted: r.inpainted.pixels().to_vec(),
            composed: r.composed.as_ref().map(|c| c.pixels().to_vec()),
        }
    }

    /// Rebuilds a pipeline result. Frame metadata not carried on the wire
    /// (intrinsics, camera pose, depth, capture time) comes from `sent`,
    /// the frame this result answers. Pose confidence is not carried and
    /// decodes as 1.
    pub fn to_result(&self, sent: &Frame) -> Result<PipelineResult, String> {
        if self.frame_id != sent.frame_id() || (self.width, self.height) != (sent.width(), sent.height()) {
            return Err(format!(
                "result {} ({}x{}) does not answer frame {} ({}x{})",
                self.frame_id,
                self.width,
                self.height,
                sent.frame_id(),
                sent.width(),
                sent.height()
            ));
        }
        let flags = ResultFlags::from_bits(self.flags).ok_or("reserved flag bits set")?;
        let pose = self
            .pose
            .map(|p| Pose6D::from_wire(p, 1.0))
            .transpose()
            .map_err(|e| e.to_string())?;
        let placement = self
            .placement
            .map(Placement::from_wire)
            .transpose()
            .map_err(|e| e.to_string())?;
        let frame = |px: &[u8]| sent.with_pixels(px.to_vec()).map_err(|e| e.to_string());
        let timings: StageTimings = self
            .timings
            .iter()
            .filter_map(|(name, us)| Stage::parse(name).map(|s| (s, *us)))
            .collect();
        Ok(PipelineResult {
            frame_id: self.frame_id,
            inpainted: frame(&self.inpainted)?,
            pose,
            placement,
            composed: self.composed.as_deref().map(frame).transpose()?,
            flags,
            timings,
        })
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn flags(&self) -> u8 {
        self.flags
    }
    pub fn pose(&self) -> Option<[f32; 7]> {
        self.pose
    }
    pub fn placement(&self) -> Option<[f32; 8]> {
        self.placement
    }
    pub fn timings(&self) -> &[(String, u64)] {
        &self.timings
    }
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
    pub fn inpainted(&self) -> &[u8] {
        &self.inpainted
    }
    pub fn composed(&self) -> Option<&[u8]> {
        self.composed.as_deref()
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::Hello { .. } => MessageType::Hello,
            Message::HelloAck { .. } => MessageType::HelloAck,
            Message::Frame(_) => MessageType::Frame,
            Message::Result(_) => MessageType::Result,
            Message::Control { .. } => MessageType::Control,
            Message::Metrics { .. } => MessageType::Metrics,
            Message::Error { .. } => MessageType::Error,
            Message::Bye => MessageType::Bye,
        }
    }

    pub fn error(code: u16, detail: impl Into<String>) -> Self {
        Message::Error {
            code,
            detail: detail.into(),
        }
    }

    pub(super) fn encode_payload(&self) -> Result<Vec<u8>, EncodeError> {
        let mut out = Vec::new();
        match self {
            Message::Hello {
                proto_version,
                session_cfg_json,
            } => {
                out.extend_from_slice(&proto_version.to_le_bytes());
                out.extend_from_slice(session_cfg_json);
            }
            Message::HelloAck {
                session_id,
                epoch_us,
            } => {
                out.extend_from_slice(&session_id.to_le_bytes());
                out.extend_from_slice(&epoch_us.to_le_bytes());
            }
            Message::Frame(f) => {
                let n = check_dims(f.width, f.height)?;
                check_len("rgb", n * 3, f.rgb.len())?;
                check_finite("intrinsics", &f.intrinsics)?;
                check_finite("camera_pose", &f.camera_pose)?;
                out.reserve(f.payload_len());
                out.extend_from_slice(&f.frame_id.to_le_bytes());
                out.extend_from_slice(&f.capture_ts.to_le_bytes());
                out.extend_from_slice(&f.width.to_le_bytes());
                out.extend_from_slice(&f.height.to_le_bytes());
                out.push(f.depth.is_some() as u8);
                put_f32s(&mut out, &f.intrinsics);
                put_f32s(&mut out, &f.camera_pose);
                out.extend_from_slice(&f.rgb);
                if let Some(d) = &f.depth {
                    check_len("depth", n, d.len())?;
                    put_f32s(&mut out, d);
                }
            }
            Message::Result(r) => {
                let n = check_dims(r.width, r.height)?;
                check_len("inpainted", n * 3, r.inpainted.len())?;
                out.extend_from_slice(&r.frame_id.to_le_bytes());
                out.push(r.flags);
                match &r.pose {
                    Some(p) => {
                        check_finite("pose", p)?;
                        out.push(1);
                        put_f32s(&mut out, p);
                    }
                    None => out.push(0),
                }
                match &r.placement {
                    Some(p) => {
                        check_finite("placement", p)?;
                        out.push(1);
                        put_f32s(&mut out, p);
                    }
                    None => out.push(0),
                }
                out.extend_from_slice(&(r.timings.len() as u16).to_le_bytes());
                for (name, us) in &r.timings {
                    out.push(name.len() as u8);
                    out.extend_from_slice(name.as_bytes());
                    out.extend_from_slice(&us.to_le_bytes());
                }
                out.extend_from_slice(&r.width.to_le_bytes());
                out.extend_from_slice(&r.height.to_le_bytes());
                out.extend_from_slice(&r.inpainted);
                match &r.composed {
                    Some(c) => {
                        check_len("composed", n * 3, c.len())?;
                        out.push(1);
                        out.extend_from_slice(c);
                    }
                    None => out.push(0),
                }
            }
            Message::Control { control_json } => out.extend_from_slice(control_json),
            Message::Metrics { report_json } => out.extend_from_slice(report_json),
            Message::Error { code, detail } => {
                out.extend_from_slice(&code.to_le_bytes());
                out.extend_from_slice(detail.as_bytes());
            }
            Message::Bye => {}
        }
        Ok(out)
    }

    pub(super) fn decode_payload(msg_type: MessageType, p: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader { buf: p, pos: 0 };
        let malformed = |reason: String| DecodeError::Malformed { msg_type, reason };
        let msg = (|| -> Result<Message, String> {
            Ok(match msg_type {
                MessageType::Hello => Message::Hello {
                    proto_version: r.u16()?,
                    session_cfg_json: r.rest().to_vec(),
                },
                MessageType::HelloAck => Message::HelloAck {
                    session_id: r.u64()?,
                    epoch_us: r.u64()?,
                },
                MessageType::Frame => {
                    let frame_id = r.u64()?;
                    let capture_ts = r.u64()?;
                    let (width, height) = (r.u32()?, r.u32()?);
                    let has_depth = r.flag()?;
                    let intrinsics = r.f32s::<4>()?;
                    let camera_pose = r.f32s::<7>()?;
                    let n = check_dims(width, height).map_err(|e| e.to_string())?;
                    let rgb = r.bytes(n * 3)?.to_vec();
                    let depth = if has_depth {
                        let raw = r.bytes(n * 4)?;
                        let d: Vec<f32> = raw
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect();
                        Some(d)
                    } else {
                        None
                    };
                    Message::Frame(FrameMsg {
                        frame_id,
                        capture_ts,
                        width,
                        height,
                        intrinsics,
                        camera_pose,
                        rgb,
                        depth,
                    })
                }
                MessageType::Result => {
                    let frame_id = r.u64()?;
                    let flags = r.u8()?;
                    if flags & 0xF0 != 0 {
                        return Err(format!("reserved flag bits set in {flags:#04x}"));
                    }
                    let pose = if r.flag()? { Some(r.f32s::<7>()?) } else { None };
                    let placement = if r.flag()? { Some(r.f32s::<8>()?) } else { None };
                    let count = r.u16()? as usize;
                    let mut timings = Vec::with_capacity(count.min(64));
                    for _ in 0..count {
                        let len = r.u8()? as usize;
                        let name = std::str::from_utf8(r.bytes(len)?)
                            .map_err(|_| "timing name is not utf-8".to_string())?
                            .to_string();
                        timings.push((name, r.u64()?));
                    }
                    let (width, height) = (r.u32()?, r.u32()?);
                    let n = check_dims(width, height).map_err(|e| e.to_string())?;
                    let inpainted = r.bytes(n * 3)?.to_vec();
                    let composed = if r.flag()? { Some(r.bytes(n * 3)?.to_vec()) } else { None };
                    Message::Result(ResultMsg {
                        frame_id,
                        flags,
                        pose,
                        placement,
                        timings,
                        width,
                        height,
                        inpainted,
                        composed,
                    })
                }
                MessageType::Control => Message::Control {
                    control_json: r.rest().to_vec(),
                },
                MessageType::Metrics => Message::Metrics {
                    report_json: r.rest().to_vec(),
                },
                MessageType::Error => Message::Error {
                    code: r.u16()?,
                    detail: String::from_utf8(r.rest().to_vec())
                        .map_err(|_| "detail is not utf-8".to_string())?,
                },
                MessageType::Bye => Message::Bye,
            })
        })()
        .map_err(malformed)?;
        if r.pos != p.len() {
            return Err(malformed(format!("{} trailing bytes", p.len() - r.pos)));
        }
        Ok(msg)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            format!("needs {n} bytes at offset {}, {} left", self.pos, self.buf.len() - self.pos)
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.bytes(1)?[0])
    }
    fn flag(&mut self) -> Result<bool, String> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(format!("presence byte {v} at offset {}", self.pos - 1)),
        }
    }
    fn u16(&mut self) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f32s<const N: usize>(&mut self) -> Result<[f32; N], String> {
        let mut out = [0f32; N];
        for v in &mut out {
            *v = f32::from_le_bytes(self.bytes(4)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(format!("non-finite float before offset {}", self.pos));
            }
        }
        Ok(out)
    }
}
