//! Binary tensor container for base weights.
//!
//! Layout, all little-endian: magic `VKWT`, version u32, tensor count u32,
//! then per tensor `{name: u16 length + UTF-8 bytes, rows u32, cols u32,
//! data: rows×cols f32, row-major}`. Used by the merge CLI to read base
//! weights and write merged ones.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"VKWT";
pub const VERSION: u32 = 1;

/// Writes named tensors; values are stored in single precision.
pub fn write_tensors(path: &Path, tensors: &[(String, Matrix)]) -> Result<u64> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut written: u64 = 0;

    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    written += 12;

    for (name, m) in tensors {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "tensor name too long: {} bytes",
                bytes.len()
            )));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        written += 2 + bytes.len() as u64 + 8;
        for &v in m.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        written += 4 * m.data().len() as u64;
    }
    w.flush()?;
    Ok(written)
}

/// Reads all tensors back, validating framing and finiteness.
pub fn read_tensors(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected {MAGIC:02x?}",
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;

    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::Corrupt(format!("tensor name is not UTF-8: {e}")))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 4];
        for _ in 0..rows * cols {
            read_exact(&mut r, &mut buf)?;
            data.push(f32::from_le_bytes(buf) as f64);
        }
        tensors.push((name, Matrix::new(rows, cols, data)?));
    }

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Corrupt("trailing bytes after last tensor".into()));
    }
    Ok(tensors)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Corrupt("truncated file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
