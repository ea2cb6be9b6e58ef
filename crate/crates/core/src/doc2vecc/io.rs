use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DocEmbedding, EmbeddingConfig, EmbeddingModel};
use crate::cohort::{read_jsonl, write_jsonl};
use crate::corpus::Vocabulary;
use crate::numkit::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"D2VCMDL1";

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_blob(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    put_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_blob(r: &mut impl Read) -> Result<String> {
    let n = get_u64(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(format!("model file: {e}")))
}

fn get_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Matrix> {
    let mut b = vec![0u8; rows * cols * 8];
    r.read_exact(&mut b)?;
    let data = b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::from_vec(rows, cols, data)
}

impl EmbeddingModel {
    /// Binary layout: magic, d, |V|, config JSON, vocabulary TSV, U, V, loss
    /// history; integers are u64 and reals f64, little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        put_u64(&mut w, self.dim() as u64)?;
        put_u64(&mut w, self.vocab.len() as u64)?;
        put_blob(&mut w, serde_json::to_string(&self.config)?.as_bytes())?;
        put_blob(&mut w, self.vocab.to_tsv().as_bytes())?;
        for m in [&self.input, &self.output] {
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        put_u64(&mut w, self.loss_history.len() as u64)?;
        for v in &self.loss_history {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("{}: not an embedding model file", path.display())));
        }
        let d = get_u64(&mut r)? as usize;
        let n = get_u64(&mut r)? as usize;
        let config: EmbeddingConfig = serde_json::from_str(&get_blob(&mut r)?)?;
        let vocab = Vocabulary::from_tsv(&get_blob(&mut r)?)?;
        if vocab.len() != n || config.dim != d {
            return Err(Error::Format(format!("{}: header disagrees with contents", path.display())));
        }
        let input = get_matrix(&mut r, n, d)?;
        let output = get_matrix(&mut r, n, d)?;
        let h = get_u64(&mut r)? as usize;
        let loss_history = get_matrix(&mut r, 1, h)?.into_vec();
        Ok(Self {
            vocab,
            config,
            input,
            output,
            loss_history,
        })
    }

    /// One line per word: `token v1 … vd` (input embeddings).
    pub fn export_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (i, tok) in self.vocab.tokens().iter().enumerate() {
            write!(w, "{tok}")?;
            for v in self.input.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_embeddings(path: &Path, embeddings: &[DocEmbedding]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_jsonl(path, embeddings)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<DocEmbedding>> {
    read_jsonl(path)
}
