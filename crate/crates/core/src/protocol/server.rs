use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::codec::{
    decode, encode, DecodeError, ErrorMessage, ErrorReason, InferenceRequest, InferenceResponse, Message,
};
use super::transport::{TcpTransport, Transport, TransportError};
use crate::runtime::ObservationFrame;
use crate::trajectory::ActionChunk;

/// A model behind the wire. Must tolerate calls from several connections at
/// once; wrap state in a mutex to make it serial.
pub trait Policy: Send + Sync {
    fn infer(&self, obs: &ObservationFrame) -> Result<ActionChunk, String>;
}

impl<F> Policy for F
where
    F: Fn(&ObservationFrame) -> Result<ActionChunk, String> + Send + Sync,
{
    fn infer(&self, obs: &ObservationFrame) -> Result<ActionChunk, String> {
        self(obs)
    }
}

/// Source of artificial inference delay, in seconds.
pub trait DelayModel: Send {
    fn sample_seconds(&mut self) -> f64;
}

/// No added delay.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDelay;

impl DelayModel for NoDelay {
    fn sample_seconds(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionState {
    Idle,
    Busy(u64),
}

/// Per-connection request/response discipline, independent of any I/O:
/// one outstanding request at a time, ids strictly increasing.
#[derive(Debug)]
pub struct ServerSession {
    state: SessionState,
    last_id: Option<u64>,
}

impl Default for ServerSession {
    fn default() -> Self {
        Self::new()
    }
}

impl ServerSession {
    pub fn new() -> Self {
        Self { state: SessionState::Idle, last_id: None }
    }

    pub fn outstanding(&self) -> Option<u64> {
        match self.state {
            SessionState::Idle => None,
            SessionState::Busy(id) => Some(id),
        }
    }

    /// Accepts one incoming frame. On rejection returns the error frame to
    /// send back; the session stays usable either way.
    pub fn accept(&mut self, frame: &[u8]) -> Result<InferenceRequest, Vec<u8>> {
        let reject =
            |request_id, reason, message: String| encode(&Message::Error(ErrorMessage { request_id, reason, message }));
        let request = match decode(frame) {
            Ok(Message::Request(r)) => r,
            Ok(_) => return Err(reject(0, ErrorReason::UNEXPECTED, "only requests are accepted".into())),
            Err(e) => return Err(malformed(&e)),
        };
        let id = request.request_id;
        if let SessionState::Busy(pending) = self.state {
            return Err(reject(id, ErrorReason::SEQUENCE, format!("request {pending} still outstanding")));
        }
        if self.last_id.is_some_and(|last| id <= last) {
            return Err(reject(id, ErrorReason::SEQUENCE, format!("request id {id} not increasing")));
        }
        self.state = SessionState::Busy(id);
        self.last_id = Some(id);
        Ok(request)
    }

    /// Completes the outstanding request and returns the frame to send.
    ///
    /// # Panics
    /// If no request is outstanding.
    pub fn complete(&mut self, outcome: Result<ActionChunk, String>, infer_seconds: f64) -> Vec<u8> {
        let SessionState::Busy(request_id) = self.state else {
            panic!("complete() without an outstanding request");
        };
        self.state = SessionState::Idle;
        let message = match outcome {
            Ok(chunk) => Message::Response(InferenceResponse::from_chunk(request_id, &chunk, infer_seconds)),
            Err(message) => Message::Error(ErrorMessage { request_id, reason: ErrorReason::POLICY_FAILED, message }),
        };
        encode(&message)
    }
}

/// Error frame for bytes that could not be decoded.
pub fn malformed(e: &DecodeError) -> Vec<u8> {
    encode(&Message::Error(ErrorMessage { request_id: 0, reason: ErrorReason::MALFORMED, message: e.to_string() }))
}

/// Serves one connection until the peer leaves. Every request is delayed by
/// a sample of `delay`, then answered; the reported inference time is the
/// larger of the sample and the measured policy time.
pub fn serve_connection<T, D>(transport: &mut T, policy: &dyn Policy, delay: &mut D) -> Result<(), TransportError>
where
    T: Transport + ?Sized,
    D: DelayModel + ?Sized,
{
    let mut session = ServerSession::new();
    loop {
        let frame = match transport.recv_frame(None) {
            Ok(f) => f,
            Err(TransportError::Closed) => return Ok(()),
            Err(TransportError::Framing(e)) => {
                warn!("unframeable input: {e}");
                transport.send_frame(&malformed(&e))?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let request = match session.accept(&frame) {
            Ok(r) => r,
            Err(reply) => {
                warn!("rejected frame of {} bytes", frame.len());
                transport.send_frame(&reply)?;
                continue;
            }
        };
        let started = Instant::now();
        let sampled = delay.sample_seconds().max(0.0);
        thread::sleep(Duration::from_secs_f64(sampled));
        let outcome = policy.infer(&request.obs);
        if let Err(e) = &outcome {
            warn!("policy failed on request {}: {e}", request.request_id);
        }
        let infer_seconds = started.elapsed().as_secs_f64().max(sampled);
        debug!("request {} served in {infer_seconds:.4}s", request.request_id);
        transport.send_frame(&session.complete(outcome, infer_seconds))?;
    }
}

/// Threaded TCP server: one thread per connection, each with its own
/// session and delay model.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Server {
    pub fn spawn<P, F, D>(addr: &str, policy: P, make_delay: F) -> io::Result<Server>
    where
        P: Policy + 'static,
        F: Fn() -> D + Send + 'static,
        D: DelayModel + 'static,
    {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let policy: Arc<dyn Policy> = Arc::new(policy);
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        info!("connection from {peer}");
                        let policy = policy.clone();
                        let mut delay = make_delay();
                        thread::spawn(move || {
                            let result = stream
                                .set_nonblocking(false)
                                .and_then(|_| TcpTransport::new(stream))
                                .map_err(TransportError::from)
                                .and_then(|mut t| serve_connection(&mut t, policy.as_ref(), &mut delay));
                            match result {
                                Ok(()) => info!("{peer} disconnected"),
                                Err(e) => warn!("{peer}: {e}"),
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        });
        Ok(Server { addr, stop, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Established connections run until their
    /// peers disconnect.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Timestamp;

    fn request(id: u64) -> Vec<u8> {
        let obs = ObservationFrame::new(Timestamp::from_secs(0.5), vec![1.0]);
        encode(&Message::Request(InferenceRequest { request_id: id, obs }))
    }

    fn reason(frame: &[u8]) -> ErrorReason {
        match decode(frame).unwrap() {
            Message::Error(e) => e.reason,
            other => panic!("expected error frame, got {other:?}"),
        }
    }

    #[test]
    fn one_outstanding_request() {
        let mut s = ServerSession::new();
        assert_eq!(s.accept(&request(1)).unwrap().request_id, 1);
        assert_eq!(reason(&s.accept(&request(2)).unwrap_err()), ErrorReason::SEQUENCE);
        let chunk = ActionChunk::new(Timestamp::from_secs(0.5), 10.0, vec![vec![1.0], vec![2.0]]).unwrap();
        let reply = s.complete(Ok(chunk), 0.1);
        assert!(matches!(decode(&reply).unwrap(), Message::Response(r) if r.request_id == 1));
        assert_eq!(s.outstanding(), None);
        assert_eq!(reason(&s.accept(&request(1)).unwrap_err()), ErrorReason::SEQUENCE);
        assert!(s.accept(&request(5)).is_ok());
    }

    #[test]
    fn garbage_is_answered_and_session_survives() {
        let mut s = ServerSession::new();
        assert_eq!(reason(&s.accept(&[0, 0, 0, 2, 0x55, 0x01]).unwrap_err()), ErrorReason::MALFORMED);
        assert!(s.accept(&request(1)).is_ok());
    }

    #[test]
    fn policy_failure_becomes_error_frame() {
        let mut s = ServerSession::new();
        s.accept(&request(3)).unwrap();
        let reply = s.complete(Err("bad".into()), 0.0);
        assert_eq!(reason(&reply), ErrorReason::POLICY_FAILED);
    }
}
