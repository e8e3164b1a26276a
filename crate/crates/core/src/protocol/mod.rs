//! Length-prefixed binary request/response protocol between the executive
//! (client) and a policy host (server). See `docs/protocol.md` for the byte
//! layout.

mod client;
mod codec;
mod server;
mod transport;

pub use client::{Client, ClientError, RemoteSource};
pub use codec::{
    decode, encode, DecodeError, ErrorMessage, ErrorReason, FrameBuffer, InferenceRequest, InferenceResponse, Message,
    HEADER_LEN, MAX_FRAME_LEN, TAG_ERROR, TAG_REQUEST, TAG_RESPONSE, VERSION,
};
pub use server::{malformed, serve_connection, DelayModel, NoDelay, Policy, Server, ServerSession};
pub use transport::{loopback, LoopbackTransport, TcpTransport, Transport, TransportError};
