//! Named-tensor container: `MSTB` magic, version, then for each tensor its
//! name, shape and little-endian `f32` payload.

use std::io::{Read, Write};

use crate::real::Real;
use crate::tensor::Tensor;
use crate::TapeError;

const MAGIC: &[u8; 4] = b"MSTB";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u32(r: &mut impl Read) -> Result<u32, TapeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Serialises tensors as `f32`.
pub fn write_blob<T: Real>(
    w: &mut impl Write,
    tensors: impl IntoIterator<Item = (String, Tensor<T>)>,
) -> Result<(), TapeError> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, tensors.len() as u32)?;
    for (name, t) in &tensors {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.shape().len() as u32)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for &v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_blob<T: Real>(r: &mut impl Read) -> Result<Vec<(String, Tensor<T>)>, TapeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TapeError::Checkpoint("bad tensor blob magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(TapeError::Checkpoint(format!("unsupported tensor blob version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| TapeError::Checkpoint("tensor name is not utf-8".into()))?;
        let ndim = get_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}
