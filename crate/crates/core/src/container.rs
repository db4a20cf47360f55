//! Binary tensor container shared by model weights and baseline ensembles.
//!
//! ```text
//! "PONW" | u32 version | u32 section | u32 header_len | header (UTF-8 JSON)
//! | u32 n_records | records | 32-byte SHA-256 of everything before it
//! record = u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data (LE)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PONW";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Section {
    Model = 1,
    Stumps = 2,
}

impl Section {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Self::Model),
            2 => Some(Self::Stumps),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("checksum mismatch: file is corrupt or truncated")]
    ChecksumMismatch,
    #[error("unsupported container version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("expected a {expected:?} section, found {found:?}")]
    WrongSection { expected: Section, found: Section },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub section: Section,
    pub header: String,
    pub records: Vec<Record>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("container field fits in u32").to_le_bytes());
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.section as u32).to_le_bytes());
        put_u32(&mut out, self.header.len());
        out.extend_from_slice(self.header.as_bytes());
        put_u32(&mut out, self.records.len());
        for r in &self.records {
            put_u32(&mut out, r.name.len());
            out.extend_from_slice(r.name.as_bytes());
            put_u32(&mut out, r.shape.len());
            for &d in &r.shape {
                put_u32(&mut out, d);
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Magic and version are checked before the checksum, so an unknown
    /// version is reported as such rather than as corruption.
    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 12 + DIGEST_LEN || &bytes[..4] != MAGIC {
            return Err(ContainerError::Corrupt("missing PONW magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(ContainerError::VersionUnsupported(version));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ContainerError::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: 8 };
        let section = r.u32()?;
        let section =
            Section::from_u32(section).ok_or_else(|| ContainerError::Corrupt(format!("unknown section {section}")))?;
        let header_len = r.len()?;
        let header = r.string(header_len)?;
        let n = r.len()?;
        let mut records = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name_len = r.len()?;
            let name = r.string(name_len)?;
            let ndim = r.len()?;
            let shape = (0..ndim).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let count = count.ok_or_else(|| ContainerError::Corrupt(format!("record {name} is too large")))?;
            let raw = r.take(count.checked_mul(4).ok_or_else(|| ContainerError::Corrupt("overflow".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            records.push(Record { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(ContainerError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { section, header, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ContainerError> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ContainerError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn expect_section(self, expected: Section) -> Result<Self, ContainerError> {
        if self.section != expected {
            return Err(ContainerError::WrongSection { expected, found: self.section });
        }
        Ok(self)
    }
}

/// Lower-case hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ContainerError::Corrupt("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize, ContainerError> {
        self.u32().map(|v| v as usize)
    }

    fn string(&mut self, n: usize) -> Result<String, ContainerError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ContainerError::Corrupt(e.to_string()))
    }
}
