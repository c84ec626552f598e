//! Flat binary parameter file.
//!
//! ```text
//! magic   b"T2CK"
//! version u32 LE (1)
//! count   u32 LE
//! count × { name_len u32, name utf-8, rank u32, dims u64 × rank, f64 LE × prod(dims) }
//! ```

use std::path::Path;

use super::param::ParamStore;
use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"T2CK";
const VERSION: u32 = 1;

pub fn write_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes every `(name, tensor)` record in file order.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 3 {
            return Err(Error::Checkpoint(format!("{name}: rank {rank} exceeds 3")));
        }
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let payload = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(&dims, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(store)).map_err(|e| Error::io(path, e))
}

/// Loads values into an already-built store; names and shapes must match
/// exactly.
pub fn load_checkpoint(store: &mut ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let records = read_checkpoint(&bytes)?;
    if records.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "{} holds {} parameters, model expects {}",
            path.display(),
            records.len(),
            store.len()
        )));
    }
    for (name, t) in records {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = store.get_mut(id);
        if p.value.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?} in file, {:?} in model",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("s", Tensor::scalar(-0.0));
        store.add("v", Tensor::new(&[3], vec![1.0 / 3.0, f64::MIN_POSITIVE, -7.25]).unwrap());
        store.add("m", Tensor::new(&[2, 1, 2], vec![1e-300, 2.0, 3.0, 4.5]).unwrap());
        let bytes = write_checkpoint(&store);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.len(), 3);
        for ((name, t), p) in back.iter().zip(store.iter()) {
            assert_eq!(name, &p.name);
            assert_eq!(t.shape(), p.value.shape());
            let a: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = p.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(write_checkpoint(&store), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2, 2]));
        let bytes = write_checkpoint(&store);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
    }
}
