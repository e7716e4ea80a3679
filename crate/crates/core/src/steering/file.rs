//! Vector file: magic `STARVEC1`, `u64` config hash, `u32` layer,
//! length-prefixed task, `u32` T, `u32` n, length-prefixed policy, `u32`
//! width, then `mu_positive`, `mu_negative` and `vector` as `f64`.
//! Little-endian throughout.

use std::io::{Read, Write};
use std::path::Path;

use super::SteeringVector;
use crate::error::{Error, Result};
use crate::model::Model;

pub const VECTOR_MAGIC: &[u8; 8] = b"STARVEC1";

const MAX_TEXT: usize = 1 << 16;
const MAX_WIDTH: usize = 1 << 20;

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn write_vector(v: &SteeringVector, w: &mut impl Write) -> Result<()> {
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&v.config_hash.to_le_bytes())?;
    w.write_all(&(v.layer as u32).to_le_bytes())?;
    put_str(w, &v.task)?;
    w.write_all(&(v.seq_len as u32).to_le_bytes())?;
    w.write_all(&(v.n as u32).to_le_bytes())?;
    put_str(w, &v.policy)?;
    w.write_all(&(v.width() as u32).to_le_bytes())?;
    for xs in [&v.mu_positive, &v.mu_negative, &v.vector] {
        for x in xs.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated vector file".into())
    } else {
        Error::Io(e)
    }
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(eof)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(get::<4>(r)?) as usize)
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let len = get_u32(r)?;
    if len > MAX_TEXT {
        return Err(Error::Format("header string too long".into()));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(eof)?;
    String::from_utf8(b).map_err(|_| Error::Format("header string is not UTF-8".into()))
}

pub(crate) fn read_vector(r: &mut impl Read) -> Result<SteeringVector> {
    if &get::<8>(r)? != VECTOR_MAGIC {
        return Err(Error::Format("bad vector file magic".into()));
    }
    let config_hash = u64::from_le_bytes(get::<8>(r)?);
    let layer = get_u32(r)?;
    let task = get_str(r)?;
    let seq_len = get_u32(r)?;
    let n = get_u32(r)?;
    let policy = get_str(r)?;
    let width = get_u32(r)?;
    if width == 0 || width > MAX_WIDTH {
        return Err(Error::Format(format!("implausible vector width {width}")));
    }
    let mut read = || -> Result<Vec<f64>> {
        (0..width).map(|_| Ok(f64::from_le_bytes(get::<8>(r)?))).collect()
    };
    let (mu_positive, mu_negative, vector) = (read()?, read()?, read()?);
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after vector data".into()));
    }
    Ok(SteeringVector {
        layer,
        task,
        config_hash,
        seq_len,
        n,
        policy,
        mu_positive,
        mu_negative,
        vector,
    })
}

pub fn save_vector(v: &SteeringVector, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_vector(v, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_vector(path: &Path) -> Result<SteeringVector> {
    read_vector(&mut std::fs::read(path)?.as_slice())
}

/// Loads a vector and checks it against `model`'s width, depth and config.
pub fn load_vector_for(path: &Path, model: &Model) -> Result<SteeringVector> {
    let v = load_vector(path)?;
    v.check_model(model)?;
    Ok(v)
}
