use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::codec::{DecodeError, FrameBuffer};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("peer closed the connection")]
    Closed,
    #[error("bad framing: {0}")]
    Framing(#[from] DecodeError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// A reliable, ordered, frame-oriented byte stream.
pub trait Transport: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    /// Waits for one complete frame; `None` waits forever. Partial input
    /// survives a timeout and is completed by later calls.
    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (**self).send_frame(frame)
    }
    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError> {
        (**self).recv_frame(timeout)
    }
}

fn remaining(deadline: Option<Instant>) -> Result<Option<Duration>, TransportError> {
    match deadline {
        None => Ok(None),
        Some(d) => {
            let left = d.saturating_duration_since(Instant::now());
            if left.is_zero() {
                Err(TransportError::Timeout)
            } else {
                Ok(Some(left))
            }
        }
    }
}

#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
    buffer: FrameBuffer,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Self { stream, buffer: FrameBuffer::new() })
    }

    pub fn connect(addr: &str) -> io::Result<Self> {
        Self::new(TcpStream::connect(addr)?)
    }

    pub fn peer_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.stream.peer_addr()
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(frame).map_err(|e| match e.kind() {
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset => TransportError::Closed,
            _ => TransportError::Io(e),
        })
    }

    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut chunk = [0u8; 4096];
        loop {
            if let Some(frame) = self.buffer.next_frame()? {
                return Ok(frame);
            }
            self.stream.set_read_timeout(remaining(deadline)?)?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(TransportError::Closed),
                Ok(n) => self.buffer.extend(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    return Err(TransportError::Timeout)
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) if e.kind() == io::ErrorKind::ConnectionReset => return Err(TransportError::Closed),
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// In-process byte pipe; one end of a [`loopback`] pair.
#[derive(Debug)]
pub struct LoopbackTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    buffer: FrameBuffer,
}

/// Two connected in-process endpoints.
pub fn loopback() -> (LoopbackTransport, LoopbackTransport) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        LoopbackTransport { tx: a_tx, rx: a_rx, buffer: FrameBuffer::new() },
        LoopbackTransport { tx: b_tx, rx: b_rx, buffer: FrameBuffer::new() },
    )
}

impl LoopbackTransport {
    /// Sends arbitrary bytes, not necessarily a whole frame.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.tx.send(bytes.to_vec()).map_err(|_| TransportError::Closed)
    }
}

impl Transport for LoopbackTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.send_raw(frame)
    }

    fn recv_frame(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(frame) = self.buffer.next_frame()? {
                return Ok(frame);
            }
            let bytes = match remaining(deadline)? {
                None => self.rx.recv().map_err(|_| TransportError::Closed)?,
                Some(left) => self.rx.recv_timeout(left).map_err(|e| match e {
                    RecvTimeoutError::Timeout => TransportError::Timeout,
                    RecvTimeoutError::Disconnected => TransportError::Closed,
                })?,
            };
            self.buffer.extend(&bytes);
        }
    }
}
