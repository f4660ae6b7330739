//! Length-prefixed wire format for classical messages, with an optional
//! socket transport between two OS processes.
//!
//! Frame layout: 4-byte big-endian payload length, 1-byte message-type code,
//! payload bytes, 2-byte big-endian tag length, tag bytes. Lengths are bit
//! counts; payload and tag occupy `ceil(bits / 8)` bytes packed MSB-first,
//! matching the crate-wide bit order. A missing tag encodes as length 0 with
//! no bytes. The in-process transport is the default and carries identical
//! bytes.

use std::io::{Read, Write};

use thiserror::Error;

use crate::bits::BitSequence;
use crate::channel::{ClassicalMessage, MsgType};

#[derive(Debug, Error)]
pub enum FramingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown message type code {0:#04x}")]
    UnknownMsgType(u8),
    #[error("frame truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("payload of {0} bits exceeds the frame limit")]
    TooLarge(usize),
}

const MAX_PAYLOAD_BITS: usize = u32::MAX as usize;
const MAX_TAG_BITS: usize = u16::MAX as usize;

/// Serialize a message to its frame bytes.
pub fn encode(msg: &ClassicalMessage) -> Result<Vec<u8>, FramingError> {
    if msg.payload.len() > MAX_PAYLOAD_BITS {
        return Err(FramingError::TooLarge(msg.payload.len()));
    }
    let tag_bits = msg.tag.as_ref().map_or(0, |t| t.len());
    if tag_bits > MAX_TAG_BITS {
        return Err(FramingError::TooLarge(tag_bits));
    }
    let mut out = Vec::with_capacity(7 + msg.payload.to_bytes().len());
    out.extend_from_slice(&(msg.payload.len() as u32).to_be_bytes());
    out.push(msg.msg_type.code());
    out.extend_from_slice(msg.payload.to_bytes());
    out.extend_from_slice(&(tag_bits as u16).to_be_bytes());
    if let Some(tag) = &msg.tag {
        out.extend_from_slice(tag.to_bytes());
    }
    Ok(out)
}

/// Decode one frame from `bytes`; returns the message and bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(ClassicalMessage, usize), FramingError> {
    let need = |expected: usize, got: usize| -> Result<(), FramingError> {
        if got < expected {
            Err(FramingError::Truncated { expected, got })
        } else {
            Ok(())
        }
    };
    need(5, bytes.len())?;
    let payload_bits = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let msg_type = MsgType::from_code(bytes[4]).ok_or(FramingError::UnknownMsgType(bytes[4]))?;
    let payload_bytes = payload_bits.div_ceil(8);
    let mut at = 5;
    need(at + payload_bytes + 2, bytes.len())?;
    let payload = BitSequence::from_bytes(&bytes[at..at + payload_bytes], payload_bits)
        .expect("length checked");
    at += payload_bytes;
    let tag_bits = u16::from_be_bytes(bytes[at..at + 2].try_into().unwrap()) as usize;
    at += 2;
    let tag_bytes = tag_bits.div_ceil(8);
    need(at + tag_bytes, bytes.len())?;
    let tag = if tag_bits == 0 {
        None
    } else {
        Some(BitSequence::from_bytes(&bytes[at..at + tag_bytes], tag_bits).expect("length checked"))
    };
    at += tag_bytes;
    Ok((
        ClassicalMessage {
            msg_type,
            payload,
            tag,
        },
        at,
    ))
}

/// Write one frame to a byte stream (e.g. a `TcpStream`).
pub fn write_frame<W: Write>(writer: &mut W, msg: &ClassicalMessage) -> Result<(), FramingError> {
    writer.write_all(&encode(msg)?)?;
    Ok(())
}

/// Read one frame from a byte stream.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<ClassicalMessage, FramingError> {
    let mut head = [0u8; 5];
    reader.read_exact(&mut head)?;
    let payload_bits = u32::from_be_bytes(head[0..4].try_into().unwrap()) as usize;
    let mut body = vec![0u8; payload_bits.div_ceil(8) + 2];
    reader.read_exact(&mut body)?;
    let tag_bits = u16::from_be_bytes(body[body.len() - 2..].try_into().unwrap()) as usize;
    let mut tag = vec![0u8; tag_bits.div_ceil(8)];
    reader.read_exact(&mut tag)?;
    let mut frame = head.to_vec();
    frame.extend_from_slice(&body);
    frame.extend_from_slice(&tag);
    decode(&frame).map(|(msg, _)| msg)
}

/// Transport abstraction so a session can run in-process or over sockets
/// with identical frame bytes.
pub trait Transport {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<(), FramingError>;
    fn recv(&mut self) -> Result<ClassicalMessage, FramingError>;
}

/// Default in-process transport: a FIFO of encoded frames.
#[derive(Debug, Default)]
pub struct InProcessTransport {
    queue: std::collections::VecDeque<Vec<u8>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcessTransport {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<(), FramingError> {
        self.queue.push_back(encode(msg)?);
        Ok(())
    }

    fn recv(&mut self) -> Result<ClassicalMessage, FramingError> {
        let frame = self.queue.pop_front().ok_or_else(|| {
            FramingError::Io(std::io::Error::new(
                std::io::ErrorKind::WouldBlock,
                "transport empty",
            ))
        })?;
        decode(&frame).map(|(msg, _)| msg)
    }
}

/// Socket transport over any `Read + Write` stream.
pub struct StreamTransport<S: Read + Write> {
    stream: S,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<(), FramingError> {
        write_frame(&mut self.stream, msg)
    }

    fn recv(&mut self) -> Result<ClassicalMessage, FramingError> {
        read_frame(&mut self.stream)
    }
}
