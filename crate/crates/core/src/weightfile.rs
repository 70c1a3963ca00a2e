//! Binary weight container shared by backbones and classifier heads.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"DARE"
//! version    u16            (currently 1)
//! name       u16 length + UTF-8 bytes
//! records    u32 count, then per record:
//!              layer index  u32
//!              kind tag     u8   (1 conv kernel, 2 conv bias, 3 dense weights, 4 dense bias)
//!              rank         u8
//!              dims         rank × u32
//!              payload      prod(dims) × f32
//! crc        u32            CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DARE";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RecordKind {
    ConvKernel = 1,
    ConvBias = 2,
    DenseWeights = 3,
    DenseBias = 4,
}

impl RecordKind {
    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            1 => RecordKind::ConvKernel,
            2 => RecordKind::ConvBias,
            3 => RecordKind::DenseWeights,
            4 => RecordKind::DenseBias,
            other => return Err(Error::CorruptFile(format!("unknown record kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub layer: u32,
    pub kind: RecordKind,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl Record {
    pub fn new(layer: usize, kind: RecordKind, dims: &[usize], values: &[f64]) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        Self {
            layer: layer as u32,
            kind,
            dims: dims.iter().map(|&d| d as u32).collect(),
            values: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub name: String,
    pub records: Vec<Record>,
}

impl WeightFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let name = self.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for rec in &self.records {
            buf.extend_from_slice(&rec.layer.to_le_bytes());
            buf.push(rec.kind as u8);
            buf.push(rec.dims.len() as u8);
            for d in &rec.dims {
                buf.extend_from_slice(&d.to_le_bytes());
            }
            for v in &rec.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 {
            return Err(Error::CorruptFile("file too short".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::CorruptFile("CRC mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::CorruptFile("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::CorruptFile(format!("unsupported version {version}")));
        }
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::CorruptFile("name is not UTF-8".into()))?;
        let count = r.u32()?;
        let mut records = Vec::new();
        for _ in 0..count {
            let layer = r.u32()?;
            let kind = RecordKind::from_tag(r.u8()?)?;
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let len = len.ok_or_else(|| Error::CorruptFile("record size overflow".into()))?;
            let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::CorruptFile("record size overflow".into()))?)?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            records.push(Record { layer, kind, dims, values });
        }
        if r.pos != body.len() {
            return Err(Error::CorruptFile(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { name, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptFile("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
