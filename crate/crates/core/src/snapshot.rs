//! The `ce-ensemble/1` snapshot container: a magic tag, a JSON header, and
//! the raw P and S arrays as little-endian f64 in row-major (q1, q2, x)
//! order. See docs/snapshot-format.md for the byte-level layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{CeError, Result};
use crate::grid::Grid;

pub const MAGIC: &[u8] = b"ce-ensemble/1\n";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotMeta {
    pub scenario: String,
    pub time: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    grid: Grid,
    hbar: f64,
    meta: SnapshotMeta,
    /// Axis ordering and element encoding, fixed for version 1.
    layout: Layout,
}

#[derive(Debug, Serialize, Deserialize)]
struct Layout {
    order: String,
    dtype: String,
    arrays: Vec<String>,
}

impl Layout {
    fn v1() -> Layout {
        Layout {
            order: "q1,q2,x".into(),
            dtype: "f64-le".into(),
            arrays: vec!["p".into(), "s".into()],
        }
    }
}

fn write_array(w: &mut impl Write, arr: &Array3<f64>) -> Result<()> {
    let slice = arr.as_slice().expect("contiguous array");
    for v in slice {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array(r: &mut impl Read, shape: (usize, usize, usize)) -> Result<Array3<f64>> {
    let count = shape.0 * shape.1 * shape.2;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array3::from_shape_vec(shape, values)
        .map_err(|e| CeError::Snapshot(format!("array shape mismatch: {e}")))
}

/// Write the ensemble atomically (temp file + rename).
pub fn write_snapshot(path: &Path, e: &Ensemble, meta: &SnapshotMeta) -> Result<()> {
    let header = Header {
        grid: *e.grid(),
        hbar: e.hbar(),
        meta: meta.clone(),
        layout: Layout::v1(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|err| CeError::Snapshot(format!("header serialization: {err}")))?;

    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header_json.len() as u64).to_le_bytes())?;
        w.write_all(&header_json)?;
        write_array(&mut w, e.p())?;
        write_array(&mut w, e.s())?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a snapshot back into a (validated) ensemble.
pub fn read_snapshot(path: &Path) -> Result<(Ensemble, SnapshotMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = vec![0u8; MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CeError::Snapshot(format!(
            "bad magic {:?}; expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 1 << 20 {
        return Err(CeError::Snapshot(format!(
            "unreasonable header length {header_len}"
        )));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|err| CeError::Snapshot(format!("header parse: {err}")))?;
    if header.layout.order != "q1,q2,x" || header.layout.dtype != "f64-le" {
        return Err(CeError::Snapshot(format!(
            "unsupported layout {:?}/{:?}",
            header.layout.order, header.layout.dtype
        )));
    }

    let shape = header.grid.shape();
    let p = read_array(&mut r, shape)?;
    let s = read_array(&mut r, shape)?;
    let e = Ensemble::from_arrays(header.grid, p, s, header.hbar)?;
    Ok((e, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::StandardScenario;

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let e = StandardScenario {
            n: 24,
            ..Default::default()
        }
        .initial(0.5)
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ce");
        let meta = SnapshotMeta {
            scenario: "test".into(),
            time: 0.5,
        };
        write_snapshot(&path, &e, &meta).unwrap();
        let (back, meta_back) = read_snapshot(&path).unwrap();
        assert_eq!(meta, meta_back);
        assert_eq!(e.grid(), back.grid());
        assert_eq!(e.p(), back.p());
        assert_eq!(e.s(), back.s());

        // byte determinism: writing the same state twice is identical
        let path2 = dir.path().join("state2.ce");
        write_snapshot(&path2, &e, &meta).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ce");
        std::fs::write(&path, b"not a snapshot at all").unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(CeError::Snapshot(_)) | Err(CeError::Io(_))
        ));
    }
}
