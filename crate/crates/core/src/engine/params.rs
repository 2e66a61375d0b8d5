//! Parameter region written by the control side and read by tasks.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamError {
    #[error("parameter write {offset}+{len} exceeds capacity {capacity}")]
    OutOfRange {
        offset: u64,
        len: u64,
        capacity: u64,
    },
    #[error("parameter size {size} exceeds capacity {capacity}")]
    TooLarge { size: u64, capacity: u64 },
}

#[derive(Debug, Clone)]
pub struct ParamRegion {
    buf: Vec<u8>,
    valid: usize,
}

impl ParamRegion {
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: vec![0; capacity],
            valid: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    pub fn valid_size(&self) -> usize {
        self.valid
    }

    pub fn write(&mut self, offset: u64, data: &[u8]) -> Result<(), ParamError> {
        let capacity = self.buf.len() as u64;
        let err = ParamError::OutOfRange {
            offset,
            len: data.len() as u64,
            capacity,
        };
        let end = offset.checked_add(data.len() as u64).ok_or(err.clone())?;
        if end > capacity {
            return Err(err);
        }
        self.buf[offset as usize..end as usize].copy_from_slice(data);
        Ok(())
    }

    pub fn set_valid_size(&mut self, size: u64) -> Result<(), ParamError> {
        if size > self.buf.len() as u64 {
            return Err(ParamError::TooLarge {
                size,
                capacity: self.buf.len() as u64,
            });
        }
        self.valid = size as usize;
        Ok(())
    }

    /// The valid prefix.
    pub fn contents(&self) -> &[u8] {
        &self.buf[..self.valid]
    }
}

/// Little-endian encoding of a parameter list.
pub fn encode_words(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}
