//! The AWPT binary tensor container.
//!
//! ```text
//! 41 57 50 54          magic "AWPT"
//! u32 LE               version (1)
//! u8                   dtype: 0 = f32, 1 = f64, 2 = packed bitmask
//! u8                   ndim
//! u64 LE × ndim        dimensions
//! payload              row-major; masks are LSB-first packed bits
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AwpError, Result};
use crate::projections::SparsityMask;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

pub const MAGIC: [u8; 4] = *b"AWPT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_F64: u8 = 1;
pub const DTYPE_MASK: u8 = 2;

/// Header of a container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: u8,
    pub dims: Vec<u64>,
}

impl Header {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }

    fn decode(bytes: &[u8]) -> Result<(Self, &[u8])> {
        let fail = |m: &str| AwpError::Format(m.to_string());
        if bytes.len() < 10 {
            return Err(fail("truncated header"));
        }
        if bytes[..4] != MAGIC {
            return Err(fail("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(AwpError::Format(format!("unsupported version {version}")));
        }
        let dtype = bytes[8];
        if dtype > DTYPE_MASK {
            return Err(AwpError::Format(format!("unknown dtype code {dtype}")));
        }
        let ndim = bytes[9] as usize;
        let rest = &bytes[10..];
        if rest.len() < 8 * ndim {
            return Err(fail("truncated dimensions"));
        }
        let dims = rest[..8 * ndim]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Self { dtype, dims }, &rest[8 * ndim..]))
    }

    /// `(rows, cols)` of a 2-D container.
    pub fn matrix_shape(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => {
                let r = usize::try_from(r).map_err(|_| AwpError::Format("dimension overflow".into()))?;
                let c = usize::try_from(c).map_err(|_| AwpError::Format("dimension overflow".into()))?;
                r.checked_mul(c)
                    .ok_or_else(|| AwpError::Format("dimension overflow".into()))?;
                Ok((r, c))
            }
            _ => Err(AwpError::Format(format!(
                "expected a 2-D tensor, found {} dimensions",
                self.dims.len()
            ))),
        }
    }
}

pub fn encode_matrix<T: Scalar>(m: &DenseMatrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + m.as_slice().len() * T::BYTES);
    Header {
        dtype: T::DTYPE.code(),
        dims: vec![m.rows() as u64, m.cols() as u64],
    }
    .encode(&mut out);
    for &v in m.as_slice() {
        v.write_le(&mut out);
    }
    out
}

/// Decodes a matrix, converting from the stored precision to `T`.
pub fn decode_matrix<T: Scalar>(bytes: &[u8]) -> Result<DenseMatrix<T>> {
    let (header, payload) = Header::decode(bytes)?;
    let (rows, cols) = header.matrix_shape()?;
    match header.dtype {
        DTYPE_F32 => decode_payload::<f32>(rows, cols, payload)?.cast(),
        DTYPE_F64 => decode_payload::<f64>(rows, cols, payload)?.cast(),
        _ => Err(AwpError::Format("expected a real tensor, found a bitmask".into())),
    }
}

fn decode_payload<S: Scalar>(rows: usize, cols: usize, payload: &[u8]) -> Result<DenseMatrix<S>> {
    let n = rows * cols;
    if payload.len() != n * S::BYTES {
        return Err(AwpError::Format(format!(
            "payload of {} bytes for {n} values of {} bytes",
            payload.len(),
            S::BYTES
        )));
    }
    let data: Vec<S> = payload.chunks_exact(S::BYTES).map(S::read_le).collect();
    DenseMatrix::new(rows, cols, data)
}

pub fn encode_mask(mask: &SparsityMask) -> Vec<u8> {
    let mut out = Vec::new();
    Header {
        dtype: DTYPE_MASK,
        dims: vec![mask.rows() as u64, mask.cols() as u64],
    }
    .encode(&mut out);
    out.extend_from_slice(&mask.to_packed());
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<SparsityMask> {
    let (header, payload) = Header::decode(bytes)?;
    if header.dtype != DTYPE_MASK {
        return Err(AwpError::Format("expected a bitmask tensor".into()));
    }
    let (rows, cols) = header.matrix_shape()?;
    SparsityMask::from_packed(rows, cols, payload)
}

pub fn write_matrix<T: Scalar>(path: impl AsRef<Path>, m: &DenseMatrix<T>) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_matrix(m))?;
    Ok(())
}

pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<DenseMatrix<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_matrix(&bytes)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SparsityMask) -> Result<()> {
    fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SparsityMask> {
    decode_mask(&fs::read(path)?)
}

/// Reads only the header.
pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let bytes = fs::read(path)?;
    Ok(Header::decode(&bytes)?.0)
}
