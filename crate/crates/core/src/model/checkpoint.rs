//! Binary checkpoint format.
//!
//! Layout: magic `STARCKPT`, `u32` version, `u32` length plus JSON config
//! record, then tensors until end of file. Each tensor is a `u32` name
//! length, the UTF-8 name, a `u32` rank, `u64` dims, and `f64` data. All
//! integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STARCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_RANK: usize = 8;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

pub(crate) fn write_checkpoint(model: &Model, w: &mut impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let record = model.config().to_record();
    w.write_all(&(record.len() as u32).to_le_bytes())?;
    w.write_all(record.as_bytes())?;
    for (name, t) in model.params() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads the next name length, or `None` at a clean end of file.
fn read_len_or_eof(r: &mut impl Read) -> Result<Option<u32>> {
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut b[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(Error::Format("truncated checkpoint".into())),
            n => got += n,
        }
    }
    Ok(Some(u32::from_le_bytes(b)))
}

pub(crate) fn read_checkpoint(r: &mut impl Read) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let len = read_u32(r)? as usize;
    let mut record = vec![0u8; len.min(1 << 20)];
    if len > record.len() {
        return Err(Error::Format("config record too long".into()));
    }
    r.read_exact(&mut record).map_err(truncated)?;
    let record = String::from_utf8(record).map_err(|_| Error::Format("config record is not UTF-8".into()))?;
    let config = ModelConfig::from_record(&record)?;
    config.validate()?;
    let layout = super::parameter_layout(&config);

    let mut params = Vec::new();
    while let Some(name_len) = read_len_or_eof(r)? {
        let name_len = name_len as usize;
        if name_len > MAX_NAME {
            return Err(Error::Format("tensor name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(r)? as usize;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        // Refuse sizes the config does not call for before allocating.
        match layout.iter().find(|(n, _)| *n == name) {
            Some((_, expected)) if *expected == shape => {}
            Some((_, expected)) => {
                return Err(Error::Format(format!(
                    "tensor `{name}` has shape {shape:?}, expected {expected:?}"
                )))
            }
            None => return Err(Error::Format(format!("unexpected tensor `{name}`"))),
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_bits(read_u64(r)?));
        }
        params.push((name, Tensor::new(shape, data)?));
    }
    Model::from_params(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        Model::new(ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            max_context: 16,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    fn bytes(model: &Model) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(model, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = tiny();
        let back = read_checkpoint(&mut bytes(&m).as_slice()).unwrap();
        assert_eq!(back.config(), m.config());
        for ((na, a), (nb, b)) in m.params().iter().zip(back.params()) {
            assert_eq!(na, nb);
            assert!(a.bit_eq(b));
        }
    }

    #[test]
    fn bad_magic() {
        let mut b = bytes(&tiny());
        b[0] = b'X';
        assert!(matches!(read_checkpoint(&mut b.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_version() {
        let mut b = bytes(&tiny());
        b[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_checkpoint(&mut b.as_slice()),
            Err(Error::UnsupportedVersion { found: 7, supported: 1 })
        ));
    }

    #[test]
    fn truncated_file_and_missing_tensor() {
        let b = bytes(&tiny());
        assert!(read_checkpoint(&mut &b[..b.len() - 3]).is_err());
        // Dropping the final tensor (unembed, 8x260 f64) leaves a clean EOF.
        let tail = 4 + "unembed".len() + 4 + 16 + 8 * 8 * 260;
        let err = read_checkpoint(&mut &b[..b.len() - tail]).unwrap_err();
        assert!(err.to_string().contains("unembed"), "{err}");
    }
}
