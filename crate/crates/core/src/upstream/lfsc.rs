//! LFSC feature container, little-endian: magic "LFSC", version u32 = 1,
//! L_plus_1 u32, T' u32, D u32, frame_hop u32, source_length u64, then
//! `L_plus_1 * T' * D` float32 values, layer-major, frame-major, channel-minor.

use std::fs;
use std::path::Path;

use ndarray::Array3;

use super::FeatureStack;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFSC";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 * 5 + 8;

pub fn store_features(path: impl AsRef<Path>, stack: &FeatureStack) -> Result<()> {
    let path = path.as_ref();
    let (l, t, d) = stack.layers.dim();
    let mut out = Vec::with_capacity(HEADER + 4 * l * t * d);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, l as u32, t as u32, d as u32, stack.frame_hop] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&stack.source_length.to_le_bytes());
    for v in stack.layers.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{}: bad LFSC magic", path.display())));
    }
    if bytes.len() < HEADER {
        return Err(Error::corrupt(path, "truncated LFSC header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("{}: LFSC version {version}", path.display())));
    }
    let (l, t, d, hop) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize, u32_at(20));
    let source_length = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = l * t * d * 4;
    let have = bytes.len() - HEADER;
    if have != expected {
        return Err(Error::corrupt(
            path,
            format!("header declares {l}x{t}x{d} values ({expected} bytes), payload has {have} bytes"),
        ));
    }
    let data: Vec<f32> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let layers = Array3::from_shape_vec((l, t, d), data).expect("size checked");
    FeatureStack::new(layers, hop, source_length)
}
