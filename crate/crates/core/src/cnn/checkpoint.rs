//! Versioned binary weight checkpoints.
//!
//! Layout (little endian): magic `GEOSEGCN`, `u32` version, `u32` patch
//! size, `u32` kernel size, `u32` tensor count, then per tensor a `u32` rank,
//! `u32` extents and row-major `f64` values. Tensors appear in
//! [`Network::parameters`] order.

use std::io::{Read, Write};

use crate::cnn::network::{NetConfig, Network};
use crate::cnn::scalar::Scalar;
use crate::error::CnnError;

const MAGIC: &[u8; 8] = b"GEOSEGCN";
const VERSION: u32 = 1;

fn put_u32(out: &mut impl Write, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn get_u32(input: &mut impl Read) -> Result<u32, CnnError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_checkpoint<T: Scalar>(net: &Network<T>, mut out: impl Write) -> Result<(), CnnError> {
    out.write_all(MAGIC)?;
    put_u32(&mut out, VERSION)?;
    let cfg = net.config();
    put_u32(&mut out, cfg.patch_size as u32)?;
    put_u32(&mut out, cfg.kernel_size as u32)?;
    let params = net.parameters();
    put_u32(&mut out, params.len() as u32)?;
    for p in params {
        put_u32(&mut out, p.shape().len() as u32)?;
        for &d in p.shape() {
            put_u32(&mut out, d as u32)?;
        }
        for v in p.values() {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<T: Scalar>(mut input: impl Read) -> Result<Network<T>, CnnError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CnnError::Checkpoint("bad magic".into()));
    }
    let version = get_u32(&mut input)?;
    if version != VERSION {
        return Err(CnnError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let patch = get_u32(&mut input)? as usize;
    let kernel = get_u32(&mut input)? as usize;
    let mut net = Network::<T>::zeros(NetConfig::new(patch, kernel))?;
    let count = get_u32(&mut input)? as usize;
    let params = net.parameters_mut();
    if count != params.len() {
        return Err(CnnError::Checkpoint(format!(
            "expected {} tensors, found {count}",
            params.len()
        )));
    }
    for p in params {
        let rank = get_u32(&mut input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(get_u32(&mut input)? as usize);
        }
        if shape != p.shape() {
            return Err(CnnError::Checkpoint(format!(
                "tensor shape {shape:?} does not match {:?}",
                p.shape()
            )));
        }
        let mut b = [0u8; 8];
        for v in p.values_mut() {
            input.read_exact(&mut b)?;
            *v = T::from_f64(f64::from_le_bytes(b));
        }
    }
    Ok(net)
}
