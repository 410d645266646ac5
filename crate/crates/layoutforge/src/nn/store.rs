//! Binary checkpoint layout shared by the network and codebook files:
//! a 5-byte magic, a length-prefixed JSON config block, then a named table
//! of 32-bit little-endian floats.

use std::io::{Read, Write};

use thiserror::Error;

use crate::mat::Mat;
use crate::nn::params::ParamSet;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, StoreError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_f32_slice<W: Write>(w: &mut W, data: &[f64]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn read_f32_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>, StoreError> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    magic: &[u8; 5],
    config_json: &str,
    params: &ParamSet,
) -> Result<(), StoreError> {
    w.write_all(magic)?;
    write_u32(&mut w, config_json.len() as u32)?;
    w.write_all(config_json.as_bytes())?;
    write_u32(&mut w, params.len() as u32)?;
    for (name, mat) in params.iter() {
        write_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        write_u32(&mut w, mat.rows as u32)?;
        write_u32(&mut w, mat.cols as u32)?;
        write_f32_slice(&mut w, &mat.data)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(
    mut r: R,
    magic: &[u8; 5],
) -> Result<(String, ParamSet), StoreError> {
    let mut found = [0u8; 5];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(StoreError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&found).into_owned(),
        });
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config = vec![0u8; config_len];
    r.read_exact(&mut config)?;
    let config_json = String::from_utf8(config)
        .map_err(|e| StoreError::Malformed(format!("config not utf-8: {e}")))?;

    let count = read_u32(&mut r)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|e| StoreError::Malformed(format!("name not utf-8: {e}")))?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let data = read_f32_vec(&mut r, rows * cols)?;
        params.insert(&name, Mat::from_vec(rows, cols, data));
    }
    Ok((config_json, params))
}
