//! `TNSR` tensor container: magic "TNSR", version u32 = 1, tensor count u32,
//! then per tensor {name length u16, UTF-8 name, rank u8, dims u32 each,
//! float32 payload}. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::graph::Mat;
use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u32 = 1;

pub fn encode<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Mat)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(2);
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::corrupt(self.path, format!("unexpected end of file at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
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

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<(String, Mat)>> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4).map_err(|_| Error::Format("file too short for TNSR magic".into()))? != MAGIC {
        return Err(Error::Format(format!("{}: bad TNSR magic", path.display())));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("{}: TNSR version {version}", path.display())));
    }
    let count = c.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::corrupt(path, "tensor name is not UTF-8"))?
            .to_string();
        let rank = c.u8()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            more => (more[0], more[1..].iter().product()),
        };
        let payload = c.take(rows * cols * 4)?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        out.push((name, Array2::from_shape_vec((rows, cols), data).expect("size matches")));
    }
    if c.pos != bytes.len() {
        return Err(Error::corrupt(path, format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}

pub fn save_params(path: &Path, params: &ParamStore) -> Result<()> {
    let bytes = encode(params.iter().map(|(k, v)| (k.as_str(), v)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut store = ParamStore::new();
    for (name, t) in decode(path, &bytes)? {
        store.insert(&name, t);
    }
    Ok(store)
}
