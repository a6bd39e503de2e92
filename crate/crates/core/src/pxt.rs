//! PXT: a minimal binary tensor container shared by every tool.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic bytes 'P' 'X' 'T' '1'
//! 4       1         dtype: 1 = f32, 2 = u8
//! 5       1         ndim
//! 6       2         reserved, must be zero
//! 8       8*ndim    dims, u64 each
//! ...     prod*size payload, row-major (last dim fastest)
//! ```
//!
//! Readers reject wrong magic, unknown dtypes, nonzero reserved bytes and
//! any payload length that does not match the header exactly.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"PXT1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_code(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::U8(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new_f32(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let t = Tensor { dims, data: TensorData::F32(data) };
        t.check_shape()?;
        Ok(t)
    }

    pub fn new_u8(dims: Vec<u64>, data: Vec<u8>) -> Result<Self> {
        let t = Tensor { dims, data: TensorData::U8(data) };
        t.check_shape()?;
        Ok(t)
    }

    pub fn element_count(&self) -> Result<u64> {
        self.dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Pxt("dimension product overflows".into()))
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.element_count()?;
        if n != self.data.len() as u64 {
            return Err(Error::Pxt(format!(
                "payload has {} elements but dims {:?} imply {}",
                self.data.len(),
                self.dims,
                n
            )));
        }
        Ok(())
    }

    pub fn as_f32(&self) -> Result<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::U8(_) => Err(Error::Pxt("expected f32 tensor, found u8".into())),
        }
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Ok(v),
            TensorData::F32(_) => Err(Error::Pxt("expected u8 tensor, found f32".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + self.data.len() * 4);
        out.extend_from_slice(&MAGIC);
        out.push(self.data.dtype_code());
        out.push(self.dims.len() as u8);
        out.extend_from_slice(&[0, 0]);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Pxt("file shorter than the 8-byte header".into()));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Pxt("bad magic, not a PXT file".into()));
        }
        let dtype = bytes[4];
        let ndim = bytes[5] as usize;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(Error::Pxt("reserved header bytes must be zero".into()));
        }
        let header_len = 8 + 8 * ndim;
        if bytes.len() < header_len {
            return Err(Error::Pxt("truncated dimension table".into()));
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let off = 8 + 8 * i;
            dims.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        }
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Pxt("dimension product overflows".into()))?;
        let payload = &bytes[header_len..];
        let data = match dtype {
            1 => {
                let expect = count
                    .checked_mul(4)
                    .ok_or_else(|| Error::Pxt("payload size overflows".into()))?;
                if payload.len() as u64 != expect {
                    return Err(Error::Pxt(format!(
                        "payload is {} bytes, header implies {}",
                        payload.len(),
                        expect
                    )));
                }
                let v = payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                TensorData::F32(v)
            }
            2 => {
                if payload.len() as u64 != count {
                    return Err(Error::Pxt(format!(
                        "payload is {} bytes, header implies {}",
                        payload.len(),
                        count
                    )));
                }
                TensorData::U8(payload.to_vec())
            }
            other => return Err(Error::Pxt(format!("unknown dtype code {other}"))),
        };
        Ok(Tensor { dims, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
