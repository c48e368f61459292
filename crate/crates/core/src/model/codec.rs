//! Little-endian tensor encoding shared by model and optimizer checkpoints:
//! `u32 rank`, `u32` per dimension, then `f64` values in row-major order.

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub fn write_tensors(out: &mut Vec<u8>, tensors: &[Tensor]) {
    for t in tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn truncated() -> Error {
    Error::Parse {
        source_name: "checkpoint".into(),
        line: 0,
        message: "truncated tensor record".into(),
    }
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(truncated());
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_u32(bytes: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4)?.try_into().unwrap()))
}

/// Reads `count` tensors and returns the unread remainder.
pub fn read_tensors(mut bytes: &[u8], count: usize) -> Result<(Vec<Tensor>, &[u8])> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = take_u32(&mut bytes)? as usize;
        let shape = (0..rank)
            .map(|_| take_u32(&mut bytes).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = take(&mut bytes, n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Tensor::new(shape, data)?);
    }
    Ok((out, bytes))
}
