//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"PCFG" | version: u32 | record*
//! record = name_len: u32 | name: utf-8 | rank: u32 | extents: u64 * rank | data: f64 * numel
//! ```
//!
//! Records run to end of file.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::optim::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PCFG";
pub const VERSION: u32 = 1;

pub fn write_params<W: Write>(mut w: W, params: &ParamStore) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| TensorError::Checkpoint(format!("truncated at byte {pos}")))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().expect("4 bytes")))
}

fn read_u64(buf: &[u8], pos: &mut usize) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, pos, 8)?.try_into().expect("8 bytes")))
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    if take(&buf, &mut pos, 4)? != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&buf, &mut pos)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut params = ParamStore::new();
    while pos < buf.len() {
        let name_len = read_u32(&buf, &mut pos)? as usize;
        let name = std::str::from_utf8(take(&buf, &mut pos, name_len)?)
            .map_err(|e| TensorError::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let rank = read_u32(&buf, &mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&buf, &mut pos)? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| TensorError::Checkpoint(format!("`{name}`: extent overflow")))?;
        let raw = take(&buf, &mut pos, numel.saturating_mul(8))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(name, Tensor::new(&shape, data)?);
    }
    Ok(params)
}

pub fn save(path: impl AsRef<Path>, params: &ParamStore) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_params(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
    read_params(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes() {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::scalar(1.5));
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"PCFG");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        // name_len + "b" + rank + one extent + one value
        assert_eq!(buf.len(), 8 + 4 + 1 + 4 + 8 + 8);
    }

    #[test]
    fn rejects_truncated_and_bad_magic() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::ones(&[2, 2]));
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert!(read_params(&buf[..buf.len() - 3]).is_err());
        buf[0] = b'X';
        assert!(read_params(&buf[..]).is_err());
    }
}
