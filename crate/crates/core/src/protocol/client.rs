use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use log::debug;
use thiserror::Error;

use super::codec::{decode, encode, DecodeError, ErrorReason, InferenceRequest, InferenceResponse, Message};
use super::transport::{Transport, TransportError};
use crate::runtime::live::ChunkSource;
use crate::runtime::ObservationFrame;
use crate::trajectory::ActionChunk;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request {request_id} timed out after {timeout:?}")]
    Timeout { request_id: u64, timeout: Duration },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("server closed the connection")]
    Disconnected,
    #[error("server rejected request {request_id}: {reason}: {message}")]
    Server { request_id: u64, reason: ErrorReason, message: String },
    #[error("undecodable reply: {0}")]
    Decode(#[from] DecodeError),
    #[error("transport: {0}")]
    Transport(TransportError),
    #[error("reply is not a valid chunk: {0}")]
    InvalidChunk(String),
}

impl From<TransportError> for ClientError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Closed => ClientError::Disconnected,
            TransportError::Framing(d) => ClientError::Decode(d),
            other => ClientError::Transport(other),
        }
    }
}

/// Serial request/response endpoint.
///
/// A request that times out is remembered; its late reply is dropped when it
/// eventually arrives, so the connection stays usable.
#[derive(Debug)]
pub struct Client<T> {
    transport: T,
    next_id: u64,
    abandoned: BTreeSet<u64>,
}

impl<T: Transport> Client<T> {
    pub fn new(transport: T) -> Self {
        Self { transport, next_id: 1, abandoned: BTreeSet::new() }
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Ids of requests given up on whose replies have not arrived yet.
    pub fn abandoned(&self) -> impl Iterator<Item = u64> + '_ {
        self.abandoned.iter().copied()
    }

    /// Sends `obs` and waits for the matching reply.
    pub fn request(&mut self, obs: &ObservationFrame, timeout: Duration) -> Result<InferenceResponse, ClientError> {
        let request_id = self.next_id;
        self.next_id += 1;
        let frame = encode(&Message::Request(InferenceRequest { request_id, obs: obs.clone() }));
        self.transport.send_frame(&frame)?;
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let bytes = match self.transport.recv_frame(Some(left)) {
                Ok(b) => b,
                Err(TransportError::Timeout) => {
                    self.abandoned.insert(request_id);
                    return Err(ClientError::Timeout { request_id, timeout });
                }
                Err(e) => return Err(e.into()),
            };
            let (id, result) = match decode(&bytes)? {
                Message::Response(r) => (r.request_id, Ok(r)),
                Message::Error(e) => (
                    e.request_id,
                    Err(ClientError::Server { request_id: e.request_id, reason: e.reason, message: e.message }),
                ),
                Message::Request(_) => return Err(ClientError::ProtocolViolation("server sent a request".into())),
            };
            if id == request_id {
                return result;
            }
            if self.abandoned.remove(&id) {
                debug!("dropping late reply to abandoned request {id}");
                continue;
            }
            return Err(ClientError::ProtocolViolation(format!("expected reply to {request_id}, got {id}")));
        }
    }

    /// [`request`](Self::request), converted to a chunk stamped with the
    /// echoed observation time.
    pub fn request_chunk(&mut self, obs: &ObservationFrame, timeout: Duration) -> Result<ActionChunk, ClientError> {
        let reply = self.request(obs, timeout)?;
        if reply.obs_time.to_bits() != obs.timestamp.secs().to_bits() {
            return Err(ClientError::ProtocolViolation(format!(
                "obs_time echo {} does not match request {}",
                reply.obs_time,
                obs.timestamp.secs()
            )));
        }
        reply.to_chunk().map_err(ClientError::InvalidChunk)
    }
}

/// A [`Client`] as the inference source of the threaded executive.
#[derive(Debug)]
pub struct RemoteSource<T> {
    client: Client<T>,
    timeout: Duration,
}

impl<T: Transport> RemoteSource<T> {
    pub fn new(client: Client<T>, timeout: Duration) -> Self {
        Self { client, timeout }
    }
}

impl<T: Transport> ChunkSource for RemoteSource<T> {
    fn infer(&mut self, frame: &ObservationFrame) -> Result<ActionChunk, String> {
        self.client.request_chunk(frame, self.timeout).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::codec::ErrorMessage;
    use crate::protocol::transport::loopback;
    use crate::trajectory::Timestamp;

    fn obs(t: f64) -> ObservationFrame {
        ObservationFrame::new(Timestamp::from_secs(t), vec![0.0, 0.0])
    }

    fn reply(request_id: u64, obs_time: f64) -> Vec<u8> {
        encode(&Message::Response(InferenceResponse {
            request_id,
            obs_time,
            horizon: 2,
            dims: 2,
            sample_rate: 10.0,
            actions: vec![1.0, 2.0, 3.0, 4.0],
            server_infer_seconds: 0.0,
        }))
    }

    #[test]
    fn out_of_order_echo_is_violation() {
        let (a, mut b) = loopback();
        let mut client = Client::new(a);
        b.send_raw(&reply(99, 1.0)).unwrap();
        let err = client.request_chunk(&obs(1.0), Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, ClientError::ProtocolViolation(_)), "{err}");
    }

    #[test]
    fn late_reply_after_timeout_is_skipped() {
        let (a, mut b) = loopback();
        let mut client = Client::new(a);
        let err = client.request_chunk(&obs(1.0), Duration::from_millis(5)).unwrap_err();
        assert!(matches!(err, ClientError::Timeout { request_id: 1, .. }));
        b.send_raw(&reply(1, 1.0)).unwrap();
        b.send_raw(&reply(2, 2.0)).unwrap();
        let chunk = client.request_chunk(&obs(2.0), Duration::from_secs(1)).unwrap();
        assert_eq!(chunk.obs_time().secs(), 2.0);
        assert_eq!((chunk.len(), chunk.dims()), (2, 2));
        assert_eq!(client.abandoned().count(), 0);
    }

    #[test]
    fn server_error_and_disconnect() {
        let (a, mut b) = loopback();
        let mut client = Client::new(a);
        let err = encode(&Message::Error(ErrorMessage {
            request_id: 1,
            reason: ErrorReason::POLICY_FAILED,
            message: "nope".into(),
        }));
        b.send_raw(&err).unwrap();
        assert!(matches!(
            client.request_chunk(&obs(0.0), Duration::from_secs(1)),
            Err(ClientError::Server { reason: ErrorReason::POLICY_FAILED, .. })
        ));
        drop(b);
        assert!(matches!(client.request_chunk(&obs(0.0), Duration::from_secs(1)), Err(ClientError::Disconnected)));
    }
}
