//! CSV and columnar binary export of path batches.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::{PathBatch, Provenance};
use crate::error::{Error, Result};
use crate::time_grid::GridKind;

pub const COLUMNAR_MAGIC: &[u8; 8] = b"EWLBATCH";
const COLUMNAR_VERSION: u32 = 1;

impl PathBatch {
    /// Long-format CSV: `path,t,x1,...,xd`, one row per path and checkpoint.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = ["path".to_string(), "t".to_string()]
            .into_iter()
            .chain((1..=d).map(|j| format!("x{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for p in 0..self.n_paths() {
            for (c, &t) in self.times.iter().enumerate() {
                write!(w, "{p},{t:.17e}")?;
                for j in 0..d {
                    write!(w, ",{:.17e}", self.states[c][(p, j)])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Little-endian columnar layout: magic, version, `n_paths`, `n_checkpoints`,
    /// `d`, the checkpoint times, then for each checkpoint and coordinate the
    /// column of `n_paths` values.
    pub fn write_columnar<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(COLUMNAR_MAGIC)?;
        w.write_all(&COLUMNAR_VERSION.to_le_bytes())?;
        for v in [self.n_paths(), self.times.len(), self.dim()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for m in &self.states {
            // nalgebra storage is column-major: each coordinate column is contiguous
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Reads a batch written by [`PathBatch::write_columnar`]. Provenance is not
/// part of the binary layout and is supplied by the caller.
pub fn read_columnar<R: Read>(mut r: R, provenance: Provenance) -> Result<PathBatch> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != COLUMNAR_MAGIC {
        return Err(Error::invalid("not a columnar path batch"));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != COLUMNAR_VERSION {
        return Err(Error::invalid("unsupported columnar version"));
    }
    let n = read_u64(&mut r)? as usize;
    let nc = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let times = (0..nc).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(nc);
    for _ in 0..nc {
        let data = (0..n * d).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        states.push(DMatrix::from_vec(n, d, data));
    }
    Ok(PathBatch { times, states, provenance })
}

impl Default for Provenance {
    fn default() -> Self {
        Self { spec_id: String::new(), grid: GridKind::Uniform, steps: 0, seed: 0 }
    }
}
