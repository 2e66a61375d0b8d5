//! Task binary container: bytecode followed by a compatibility trailer.
//!
//! Layout: `[bytecode][name_len u16][name][firmware md5 16][trailer_len u32]["QTTR"]`,
//! all integers little-endian. `trailer_len` counts the name length field,
//! the name and the hash.

use thiserror::Error;

use crate::vm::hostcalls::hex;

pub const TRAILER_MAGIC: &[u8; 4] = b"QTTR";
const MAX_NAME: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BinaryError {
    #[error("binary too short for a trailer")]
    TooShort,
    #[error("missing trailer magic")]
    BadMagic,
    #[error("trailer length {0} is inconsistent")]
    BadTrailerLength(u32),
    #[error("task name is not valid UTF-8")]
    BadName,
    #[error("task name longer than {MAX_NAME} bytes")]
    NameTooLong,
    #[error("compiled for firmware {found}, engine runs {expected}")]
    HashMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskBinary {
    pub name: String,
    pub firmware_hash: [u8; 16],
    pub bytecode: Vec<u8>,
}

impl TaskBinary {
    pub fn to_bytes(&self) -> Result<Vec<u8>, BinaryError> {
        let name = self.name.as_bytes();
        if name.len() > MAX_NAME {
            return Err(BinaryError::NameTooLong);
        }
        let mut out = Vec::with_capacity(self.bytecode.len() + name.len() + 28);
        out.extend_from_slice(&self.bytecode);
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&self.firmware_hash);
        out.extend_from_slice(&((2 + name.len() + 16) as u32).to_le_bytes());
        out.extend_from_slice(TRAILER_MAGIC);
        Ok(out)
    }

    /// Splits off and validates the trailer. The bytecode is not decoded.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BinaryError> {
        if bytes.len() < 8 + 2 + 16 {
            return Err(BinaryError::TooShort);
        }
        let (rest, magic) = bytes.split_at(bytes.len() - 4);
        if magic != TRAILER_MAGIC {
            return Err(BinaryError::BadMagic);
        }
        let (rest, len) = rest.split_at(rest.len() - 4);
        let tlen = u32::from_le_bytes(len.try_into().expect("4 bytes"));
        let t = tlen as usize;
        if t < 18 || t > rest.len() {
            return Err(BinaryError::BadTrailerLength(tlen));
        }
        let (bytecode, trailer) = rest.split_at(rest.len() - t);
        let name_len = usize::from(u16::from_le_bytes([trailer[0], trailer[1]]));
        if 2 + name_len + 16 != t || name_len > MAX_NAME {
            return Err(BinaryError::BadTrailerLength(tlen));
        }
        let name =
            std::str::from_utf8(&trailer[2..2 + name_len]).map_err(|_| BinaryError::BadName)?;
        let firmware_hash: [u8; 16] = trailer[2 + name_len..].try_into().expect("16 bytes");
        Ok(Self {
            name: name.to_owned(),
            firmware_hash,
            bytecode: bytecode.to_vec(),
        })
    }

    pub fn check_compatibility(&self, running: &[u8; 16]) -> Result<(), BinaryError> {
        if &self.firmware_hash == running {
            Ok(())
        } else {
            Err(BinaryError::HashMismatch {
                expected: hex(running),
                found: hex(&self.firmware_hash),
            })
        }
    }
}

/// Parses the trailer of `bytes` and compares its hash with `running`.
pub fn check_compatibility(bytes: &[u8], running: &[u8; 16]) -> Result<TaskBinary, BinaryError> {
    let bin = TaskBinary::from_bytes(bytes)?;
    bin.check_compatibility(running)?;
    Ok(bin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TaskBinary {
        TaskBinary {
            name: "basic".into(),
            firmware_hash: [7; 16],
            bytecode: vec![1, 2, 3, 4, 5],
        }
    }

    #[test]
    fn roundtrip_and_exact_length() {
        let b = sample().to_bytes().unwrap();
        assert_eq!(b.len(), 5 + 2 + 5 + 16 + 4 + 4);
        assert_eq!(TaskBinary::from_bytes(&b).unwrap(), sample());
    }

    #[test]
    fn rejects_corruption() {
        let mut b = sample().to_bytes().unwrap();
        let n = b.len();
        b[n - 1] = b'X';
        assert_eq!(TaskBinary::from_bytes(&b), Err(BinaryError::BadMagic));
        let mut b = sample().to_bytes().unwrap();
        b[n - 8] = 99;
        assert!(matches!(
            TaskBinary::from_bytes(&b),
            Err(BinaryError::BadTrailerLength(_))
        ));
        assert_eq!(TaskBinary::from_bytes(&[0; 10]), Err(BinaryError::TooShort));
    }

    #[test]
    fn hash_mismatch_is_reported() {
        let b = sample().to_bytes().unwrap();
        assert!(check_compatibility(&b, &[7; 16]).is_ok());
        assert!(matches!(
            check_compatibility(&b, &[8; 16]),
            Err(BinaryError::HashMismatch { .. })
        ));
    }
}
