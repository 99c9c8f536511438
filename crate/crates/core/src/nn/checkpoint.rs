//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSNCKPT\0"                      8 bytes
//! version                          u32
//! metadata length, metadata JSON   u64, bytes
//! tensor count                     u32
//! per tensor: name length, name    u32, UTF-8 bytes
//!             shape                4 × u32
//!             values               f32 × product(shape)
//! checksum (FNV-1a of all above)   u64
//! ```

use std::path::Path;

use serde_json::Value;

use crate::dataset::io::write_bytes;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TSNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Value,
    pub tensors: Vec<NamedTensor>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.metadata)?;
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("{}: data does not match shape {:?}", t.name, t.shape)));
            }
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            for d in t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let corrupt = |position: usize, message: &str| Error::Parse {
            position,
            message: format!("corrupt checkpoint: {message}"),
        };
        if bytes.len() < 8 + 4 + 8 || &bytes[..8] != MAGIC {
            return Err(corrupt(0, "missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let body_len = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
        if fnv1a(&bytes[..body_len]) != stored {
            return Err(corrupt(body_len, "checksum mismatch"));
        }
        let body = &bytes[..body_len];
        let mut pos = 12;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = body
                .get(pos..pos + n)
                .ok_or_else(|| corrupt(pos, "truncated"))?;
            pos += n;
            Ok(s)
        };
        let meta_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let metadata: Value = serde_json::from_slice(take(meta_len)?)?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|_| corrupt(0, "tensor name is not UTF-8"))?;
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            }
            let n: usize = shape.iter().product();
            let data = take(n * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if pos != body_len {
            return Err(corrupt(pos, "trailing bytes"));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Parse { position, message } => Error::format(path, format!("byte {position}: {message}")),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            metadata: serde_json::json!({"pass": 2, "tree": "((1,2),3)"}),
            tensors: vec![
                NamedTensor {
                    name: "a.weight".into(),
                    shape: [2, 1, 1, 2],
                    data: vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5],
                },
                NamedTensor {
                    name: "bn.running_var".into(),
                    shape: [1, 1, 1, 1],
                    data: vec![0.25],
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.tensors[0].data[1].to_bits(), (-0.0f32).to_bits());
        assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().encode().unwrap();
        bytes[8] = 9;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode().unwrap();
        let k = bytes.len() - 12;
        bytes[k] ^= 0x40;
        assert!(Checkpoint::decode(&bytes).is_err());
        assert!(Checkpoint::decode(&bytes[..20]).is_err());
        assert!(Checkpoint::decode(b"not a checkpoint at all").is_err());
    }
}
