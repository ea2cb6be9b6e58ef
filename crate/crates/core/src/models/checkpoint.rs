use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::classifier::{Classifier, ModelSpec};
use crate::numkit::{Matrix, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CLFCKPT1";

/// Writes a named-tensor container: magic, model spec JSON, config echo
/// JSON, then `name, rows, cols, values` per tensor. Integers are u64 and
/// reals f64, little-endian.
pub fn save_checkpoint(path: &Path, model: &Classifier, config_echo: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    blob(&mut w, serde_json::to_string(&model.spec)?.as_bytes())?;
    blob(&mut w, serde_json::to_string(config_echo)?.as_bytes())?;
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    for (name, m) in model.params.named_values() {
        blob(&mut w, name.as_bytes())?;
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Classifier, serde_json::Value)> {
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let spec: ModelSpec = serde_json::from_slice(&read_blob(&mut r)?)?;
    let echo: serde_json::Value = serde_json::from_slice(&read_blob(&mut r)?)?;
    let n = read_u64(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let name = String::from_utf8(read_blob(&mut r)?).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf)?;
        let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        store.add(name, Matrix::from_vec(rows, cols, data)?)?;
    }
    Ok((Classifier::from_params(spec, store)?, echo))
}

fn blob(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_blob(r: &mut impl Read) -> Result<Vec<u8>> {
    let n = read_u64(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}
