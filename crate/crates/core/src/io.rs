//! Binary tensor files ("VTPT"), checkpoints, and PGM heatmap export.
//!
//! VTPT record: magic `VTPT`, u32 version = 1, u8 dtype (0 = f32, 1 = f64),
//! u8 ndim, ndim x u64 dims, little-endian row-major payload.
//!
//! Checkpoint: u32 entry count, then per entry u16 name length, name bytes,
//! embedded VTPT record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{default_trainable, ParamStore};
use crate::tensor::{Dtype, Elem, Tensor};

const MAGIC: &[u8; 4] = b"VTPT";
const VERSION: u32 = 1;

pub fn write_tensor<E: Elem, W: Write>(w: &mut W, t: &Tensor<E>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[E::DTYPE.code()])?;
    let ndim = t.shape().len();
    if ndim > u8::MAX as usize {
        return Err(Error::Format {
            detail: format!("rank {ndim} exceeds the format limit"),
        });
    }
    w.write_all(&[ndim as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    match E::DTYPE {
        Dtype::F32 => {
            for v in t.data() {
                w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for v in t.data() {
                w.write_all(&v.to_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tensor<E: Elem, R: Read>(r: &mut R) -> Result<Tensor<E>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            detail: format!("bad magic {magic:?}"),
        });
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::Format {
            detail: format!("unsupported version {version}"),
        });
    }
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    let dtype = Dtype::from_code(b[0])?;
    if dtype != E::DTYPE {
        return Err(Error::Format {
            detail: format!("dtype {dtype:?} does not match requested {:?}", E::DTYPE),
        });
    }
    r.read_exact(&mut b)?;
    let ndim = b[0] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut d8 = [0u8; 8];
        r.read_exact(&mut d8)?;
        shape.push(u64::from_le_bytes(d8) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    match dtype {
        Dtype::F32 => {
            let mut buf = [0u8; 4];
            for _ in 0..numel {
                r.read_exact(&mut buf)?;
                data.push(E::from_f64(f32::from_le_bytes(buf) as f64));
            }
        }
        Dtype::F64 => {
            let mut buf = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut buf)?;
                data.push(E::from_f64(f64::from_le_bytes(buf)));
            }
        }
    }
    Tensor::new(&shape, data)
}

pub fn save_tensor<E: Elem>(path: &Path, t: &Tensor<E>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)
}

pub fn load_tensor<E: Elem>(path: &Path) -> Result<Tensor<E>> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

pub fn write_checkpoint<E: Elem, W: Write>(w: &mut W, store: &ParamStore<E>) -> Result<()> {
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, tensor, _) in store.iter() {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::Format {
                detail: format!("name too long: {name}"),
            });
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        write_tensor(w, tensor)?;
    }
    Ok(())
}

/// Load a checkpoint. Trainable flags are not part of the format; they are
/// reconstructed from the naming scheme (running stats stay frozen) and any
/// freeze mode is re-applied by the caller.
pub fn read_checkpoint<E: Elem, R: Read>(r: &mut R) -> Result<ParamStore<E>> {
    let mut c4 = [0u8; 4];
    r.read_exact(&mut c4)?;
    let count = u32::from_le_bytes(c4);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let mut l2 = [0u8; 2];
        r.read_exact(&mut l2)?;
        let len = u16::from_le_bytes(l2) as usize;
        let mut name_bytes = vec![0u8; len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes).map_err(|e| Error::Format {
            detail: format!("non-utf8 name: {e}"),
        })?;
        let tensor = read_tensor(r)?;
        let trainable = default_trainable(&name);
        store.insert_with(&name, tensor, trainable)?;
    }
    Ok(store)
}

pub fn save_checkpoint<E: Elem>(path: &Path, store: &ParamStore<E>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, store)
}

pub fn load_checkpoint<E: Elem>(path: &Path) -> Result<ParamStore<E>> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

/// 8-bit binary PGM, min-max scaled. One file per heatmap channel.
pub fn write_pgm<W: Write>(w: &mut W, values: &[f64], height: usize, width: usize) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::ShapeMismatch {
            op: "write_pgm",
            expected: format!("{}", height * width),
            got: format!("{}", values.len()),
        });
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn tensor_roundtrip_f32_and_f64() {
        let mut rng = Rng::new(1);
        let t32 = Tensor::<f32>::from_fn(&[3, 4], |_| rng.normal(0.0, 1.0) as f32);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t32).unwrap();
        // header: magic 4 + version 4 + dtype 1 + ndim 1 + 2*8 dims
        assert_eq!(&buf[..4], b"VTPT");
        assert_eq!(buf.len(), 4 + 4 + 1 + 1 + 16 + 12 * 4);
        let back: Tensor<f32> = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.shape(), t32.shape());
        assert_eq!(back.data(), t32.data());

        let t64 = Tensor::<f64>::from_fn(&[5], |_| rng.normal(0.0, 1.0));
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t64).unwrap();
        let back: Tensor<f64> = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(back.data(), t64.data());
    }

    #[test]
    fn dtype_mismatch_is_an_error() {
        let t = Tensor::<f32>::zeros(&[2]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(read_tensor::<f64, _>(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn corrupt_magic_is_an_error() {
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&[0u8; 32]);
        assert!(read_tensor::<f32, _>(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_order_and_values() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::new(2);
        store
            .insert("embed.patch.w", Tensor::from_fn(&[4, 3], |_| rng.normal(0.0, 1.0) as f32))
            .unwrap();
        store
            .insert("embed.pos", Tensor::from_fn(&[6], |_| rng.normal(0.0, 1.0) as f32))
            .unwrap();
        store
            .insert_with("head.coco.bn1.rm", Tensor::zeros(&[4]), false)
            .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store).unwrap();
        let back: ParamStore<f32> = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back.names(), store.names());
        assert_eq!(back.fingerprint(), store.fingerprint());
        // running stats come back frozen
        assert!(!back.is_trainable("head.coco.bn1.rm").unwrap());
        assert!(back.is_trainable("embed.pos").unwrap());
    }

    #[test]
    fn pgm_header_and_scaling() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, &[0.0, 0.5, 1.0, 0.25], 2, 2).unwrap();
        let text = String::from_utf8_lossy(&buf[..9]);
        assert!(text.starts_with("P5\n2 2\n"));
        assert_eq!(buf[buf.len() - 4..], [0, 128, 255, 64]);
    }
}
