use std::fmt;

use thiserror::Error;

use crate::runtime::ObservationFrame;
use crate::trajectory::{ActionChunk, Timestamp};

pub const VERSION: u8 = 0x01;
pub const TAG_REQUEST: u8 = 0x01;
pub const TAG_RESPONSE: u8 = 0x02;
pub const TAG_ERROR: u8 = 0x7F;
/// Length prefix + tag + version.
pub const HEADER_LEN: usize = 6;
/// Largest accepted value of the length prefix.
pub const MAX_FRAME_LEN: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("length mismatch at offset {offset}: prefix declares {declared} bytes, frame carries {actual}")]
    LengthMismatch { offset: usize, declared: usize, actual: usize },
    #[error("unknown message tag {tag:#04x} at offset {offset}")]
    UnknownTag { offset: usize, tag: u8 },
    #[error("unknown protocol version {version:#04x} at offset {offset}")]
    UnknownVersion { offset: usize, version: u8 },
    #[error("truncated payload at offset {offset}: {field} needs {needed} bytes, {available} left")]
    Truncated { offset: usize, field: &'static str, needed: usize, available: usize },
    #[error("invalid UTF-8 in {field} at offset {offset}")]
    InvalidUtf8 { offset: usize, field: &'static str },
    #[error("{count} unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("frame length {declared} at offset 0 exceeds the {max} byte limit")]
    TooLarge { declared: usize, max: usize },
}

impl DecodeError {
    /// Byte offset (from the start of the frame) where decoding failed.
    pub fn offset(&self) -> usize {
        match *self {
            DecodeError::LengthMismatch { offset, .. }
            | DecodeError::UnknownTag { offset, .. }
            | DecodeError::UnknownVersion { offset, .. }
            | DecodeError::Truncated { offset, .. }
            | DecodeError::InvalidUtf8 { offset, .. }
            | DecodeError::TrailingBytes { offset, .. } => offset,
            DecodeError::TooLarge { .. } => 0,
        }
    }
}

/// Reason codes carried by error frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorReason(pub u16);

impl ErrorReason {
    /// The frame could not be decoded.
    pub const MALFORMED: ErrorReason = ErrorReason(1);
    /// The policy failed to produce a chunk.
    pub const POLICY_FAILED: ErrorReason = ErrorReason(2);
    /// A request arrived while another was outstanding, or ids went backwards.
    pub const SEQUENCE: ErrorReason = ErrorReason(3);
    /// Valid frame of a type the receiver does not accept.
    pub const UNEXPECTED: ErrorReason = ErrorReason(4);

    pub fn name(self) -> &'static str {
        match self {
            Self::MALFORMED => "malformed",
            Self::POLICY_FAILED => "policy-failed",
            Self::SEQUENCE => "sequence",
            Self::UNEXPECTED => "unexpected",
            _ => "unknown",
        }
    }
}

impl fmt::Display for ErrorReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRequest {
    pub request_id: u64,
    pub obs: ObservationFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResponse {
    pub request_id: u64,
    pub obs_time: f64,
    pub horizon: u16,
    pub dims: u16,
    pub sample_rate: f64,
    /// `horizon * dims` values, row-major.
    pub actions: Vec<f64>,
    /// Inference time measured on the server.
    pub server_infer_seconds: f64,
}

impl InferenceResponse {
    pub fn from_chunk(request_id: u64, chunk: &ActionChunk, server_infer_seconds: f64) -> Self {
        Self {
            request_id,
            obs_time: chunk.obs_time().secs(),
            horizon: chunk.len() as u16,
            dims: chunk.dims() as u16,
            sample_rate: chunk.sample_rate(),
            actions: chunk.as_flat().to_vec(),
            server_infer_seconds,
        }
    }

    pub fn to_chunk(&self) -> Result<ActionChunk, String> {
        ActionChunk::from_flat(
            Timestamp::from_secs(self.obs_time),
            self.sample_rate,
            self.dims as usize,
            self.actions.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMessage {
    /// Id of the offending request, or 0 when it could not be read.
    pub request_id: u64,
    pub reason: ErrorReason,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Request(InferenceRequest),
    Response(InferenceResponse),
    Error(ErrorMessage),
}

impl From<InferenceRequest> for Message {
    fn from(m: InferenceRequest) -> Self {
        Message::Request(m)
    }
}

impl From<InferenceResponse> for Message {
    fn from(m: InferenceResponse) -> Self {
        Message::Response(m)
    }
}

impl From<ErrorMessage> for Message {
    fn from(m: ErrorMessage) -> Self {
        Message::Error(m)
    }
}

/// Encodes one complete frame, length prefix included.
///
/// # Panics
/// If a vector length does not fit its wire field (more than 65535 joints
/// or rows, or a string over 4 GiB).
pub fn encode(message: &Message) -> Vec<u8> {
    let mut w = Vec::with_capacity(64);
    w.extend_from_slice(&[0; 4]);
    match message {
        Message::Request(r) => {
            w.extend_from_slice(&[TAG_REQUEST, VERSION]);
            w.extend_from_slice(&r.request_id.to_le_bytes());
            w.extend_from_slice(&r.obs.timestamp.secs().to_le_bytes());
            let m = u16::try_from(r.obs.joint_positions.len()).expect("joint count fits in u16");
            w.extend_from_slice(&m.to_le_bytes());
            put_floats(&mut w, &r.obs.joint_positions);
            put_bytes(&mut w, r.obs.instruction.as_bytes());
            put_bytes(&mut w, &r.obs.visual);
        }
        Message::Response(r) => {
            w.extend_from_slice(&[TAG_RESPONSE, VERSION]);
            w.extend_from_slice(&r.request_id.to_le_bytes());
            w.extend_from_slice(&r.obs_time.to_le_bytes());
            w.extend_from_slice(&r.horizon.to_le_bytes());
            w.extend_from_slice(&r.dims.to_le_bytes());
            w.extend_from_slice(&r.sample_rate.to_le_bytes());
            put_floats(&mut w, &r.actions);
            w.extend_from_slice(&r.server_infer_seconds.to_le_bytes());
        }
        Message::Error(e) => {
            w.extend_from_slice(&[TAG_ERROR, VERSION]);
            w.extend_from_slice(&e.request_id.to_le_bytes());
            w.extend_from_slice(&e.reason.0.to_le_bytes());
            put_bytes(&mut w, e.message.as_bytes());
        }
    }
    let len = u32::try_from(w.len() - 4).expect("frame fits in u32");
    w[..4].copy_from_slice(&len.to_be_bytes());
    w
}

fn put_floats(w: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_bytes(w: &mut Vec<u8>, bytes: &[u8]) {
    let len = u32::try_from(bytes.len()).expect("field fits in u32");
    w.extend_from_slice(&len.to_le_bytes());
    w.extend_from_slice(bytes);
}

/// Decodes exactly one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader { buf: frame, pos: 0 };
    let declared = u32::from_be_bytes(r.array("length prefix")?) as usize;
    let actual = frame.len() - 4;
    if declared != actual {
        return Err(DecodeError::LengthMismatch { offset: 0, declared, actual });
    }
    let [tag] = r.array::<1>("message tag")?;
    if !matches!(tag, TAG_REQUEST | TAG_RESPONSE | TAG_ERROR) {
        return Err(DecodeError::UnknownTag { offset: 4, tag });
    }
    let [version] = r.array::<1>("protocol version")?;
    if version != VERSION {
        return Err(DecodeError::UnknownVersion { offset: 5, version });
    }
    let message = match tag {
        TAG_REQUEST => {
            let request_id = r.u64("request_id")?;
            let timestamp = r.f64("timestamp")?;
            let m = r.u16("joint count")? as usize;
            let joint_positions = r.floats(m, "joint positions")?;
            let instruction = r.string("instruction")?;
            let visual = r.bytes("visual payload")?.to_vec();
            Message::Request(InferenceRequest {
                request_id,
                obs: ObservationFrame {
                    timestamp: Timestamp::from_secs(timestamp),
                    joint_positions,
                    instruction,
                    visual,
                },
            })
        }
        TAG_RESPONSE => {
            let request_id = r.u64("request_id")?;
            let obs_time = r.f64("obs_time")?;
            let horizon = r.u16("horizon")?;
            let dims = r.u16("dims")?;
            let sample_rate = r.f64("sample_rate")?;
            let actions = r.floats(horizon as usize * dims as usize, "actions")?;
            let server_infer_seconds = r.f64("server_infer_seconds")?;
            Message::Response(InferenceResponse {
                request_id,
                obs_time,
                horizon,
                dims,
                sample_rate,
                actions,
                server_infer_seconds,
            })
        }
        _ => {
            let request_id = r.u64("request_id")?;
            let reason = ErrorReason(r.u16("reason")?);
            let message = r.string("message")?;
            Message::Error(ErrorMessage { request_id, reason, message })
        }
    };
    if r.pos != frame.len() {
        return Err(DecodeError::TrailingBytes { offset: r.pos, count: frame.len() - r.pos });
    }
    Ok(message)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], DecodeError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(DecodeError::Truncated { offset: self.pos, field, needed: n, available });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N, field)?.try_into().expect("slice of length N"))
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.array(field)?))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array(field)?))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.array(field)?))
    }

    fn floats(&mut self, n: usize, field: &'static str) -> Result<Vec<f64>, DecodeError> {
        let raw = self.take(n * 8, field)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn bytes(&mut self, field: &'static str) -> Result<&'a [u8], DecodeError> {
        let len = u32::from_le_bytes(self.array(field)?) as usize;
        self.take(len, field)
    }

    fn string(&mut self, field: &'static str) -> Result<String, DecodeError> {
        let offset = self.pos + 4;
        let raw = self.bytes(field)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::InvalidUtf8 { offset, field })
    }
}

/// Splits a byte stream into complete frames, keeping partial input across
/// reads.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, if one is buffered. An oversized length prefix
    /// cannot be resynchronised, so everything buffered is discarded.
    pub fn next_frame(&mut self) -> Result<Option<Vec<u8>>, DecodeError> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let declared = u32::from_be_bytes(self.buf[..4].try_into().expect("4 bytes")) as usize;
        if declared > MAX_FRAME_LEN {
            self.buf.clear();
            return Err(DecodeError::TooLarge { declared, max: MAX_FRAME_LEN });
        }
        if self.buf.len() < 4 + declared {
            return Ok(None);
        }
        let rest = self.buf.split_off(4 + declared);
        Ok(Some(std::mem::replace(&mut self.buf, rest)))
    }
}
