//! Frame codec: `[type u8][seq u8][len u32 LE][payload]`.

use thiserror::Error;

pub const HEADER_LEN: usize = 6;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ptype: u8,
    pub seq: u8,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
    #[error("frame declares {declared} payload bytes but carries {actual}")]
    BadLength { declared: usize, actual: usize },
}

impl Frame {
    pub fn new(ptype: u8, seq: u8, payload: Vec<u8>) -> Self {
        Self {
            ptype,
            seq,
            payload,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(FrameError::Oversize(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.ptype);
        out.push(self.seq);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes exactly one frame; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated {
                need: HEADER_LEN,
                have: bytes.len(),
            });
        }
        let len = u32::from_le_bytes(bytes[2..6].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(FrameError::Oversize(len));
        }
        let actual = bytes.len() - HEADER_LEN;
        if actual < len {
            return Err(FrameError::Truncated {
                need: HEADER_LEN + len,
                have: bytes.len(),
            });
        }
        if actual > len {
            return Err(FrameError::BadLength {
                declared: len,
                actual,
            });
        }
        Ok(Self {
            ptype: bytes[0],
            seq: bytes[1],
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_request_bytes() {
        let f = Frame::new(0x02, 0, vec![]);
        assert_eq!(f.encode().unwrap(), vec![0x02, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            Frame::decode(&[0; 5]),
            Err(FrameError::Truncated { need: 6, have: 5 })
        );
        assert_eq!(
            Frame::decode(&[2, 0, 1, 0, 0, 0]),
            Err(FrameError::Truncated { need: 7, have: 6 })
        );
        assert_eq!(
            Frame::decode(&[2, 0, 0, 0, 0, 0, 9]),
            Err(FrameError::BadLength {
                declared: 0,
                actual: 1
            })
        );
        assert_eq!(
            Frame::decode(&[2, 0, 0xFF, 0xFF, 0xFF, 0xFF]),
            Err(FrameError::Oversize(u32::MAX as usize))
        );
    }
}
