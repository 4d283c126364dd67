//! Path-bundle file formats.
//!
//! CSV: RFC-4180-style with a header row, `.` decimal separator and LF
//! line endings, one row per (path, node):
//!
//! ```text
//! path_id,t,v,x,exploded
//! ```
//!
//! Binary dump layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"KLIM"
//! u32    format version (currently 1)
//! u64    n_paths
//! u64    n_nodes
//! f64[n_nodes]               grid nodes
//! per path:
//!   u8                       exploded flag
//!   u64                      explosion node index (u64::MAX if none)
//!   f64[n_nodes]             velocities
//!   f64[n_nodes]             positions
//! ```

use std::io::{Read, Write};

use super::{Matrix, PathBundle, SimError};

pub const DUMP_MAGIC: &[u8; 4] = b"KLIM";
pub const DUMP_VERSION: u32 = 1;

impl PathBundle {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        w.write_all(b"path_id,t,v,x,exploded\n")?;
        for i in 0..self.n_paths() {
            let exploded = self.exploded[i];
            for (k, &t) in self.nodes.iter().enumerate() {
                writeln!(w, "{i},{t},{},{},{exploded}", self.v.get(i, k), self.x.get(i, k))?;
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_paths() as u64).to_le_bytes())?;
        w.write_all(&(self.n_nodes() as u64).to_le_bytes())?;
        write_f64s(&mut w, &self.nodes)?;
        for i in 0..self.n_paths() {
            w.write_all(&[self.exploded[i] as u8])?;
            let idx = self.explosion_index[i].map_or(u64::MAX, |k| k as u64);
            w.write_all(&idx.to_le_bytes())?;
            write_f64s(&mut w, self.v.row(i))?;
            write_f64s(&mut w, self.x.row(i))?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(SimError::BadDump("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DUMP_VERSION {
            return Err(SimError::BadDump(format!("unsupported version {version}")));
        }
        let n_paths = read_u64(&mut r)? as usize;
        let n_nodes = read_u64(&mut r)? as usize;
        if n_nodes == 0 || n_paths == 0 {
            return Err(SimError::BadDump("empty dimensions".into()));
        }
        let nodes = read_f64s(&mut r, n_nodes)?;
        let mut v = Matrix::zeros(n_paths, n_nodes);
        let mut x = Matrix::zeros(n_paths, n_nodes);
        let mut exploded = Vec::with_capacity(n_paths);
        let mut explosion_index = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            exploded.push(flag[0] != 0);
            let idx = read_u64(&mut r)?;
            explosion_index.push(if idx == u64::MAX { None } else { Some(idx as usize) });
            let row = read_f64s(&mut r, n_nodes)?;
            v.data[i * n_nodes..(i + 1) * n_nodes].copy_from_slice(&row);
            let row = read_f64s(&mut r, n_nodes)?;
            x.data[i * n_nodes..(i + 1) * n_nodes].copy_from_slice(&row);
        }
        Ok(PathBundle { nodes, v, x, exploded, explosion_index })
    }
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for &v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_ske, RngPolicy, SimOptions, TimeGrid};
    use super::*;
    use crate::model::{DriftSpec, ModelSpec};

    fn small_bundle() -> PathBundle {
        let spec = ModelSpec::new(DriftSpec::zero(), 0.0, 1.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2.0, 4).unwrap();
        simulate_ske(&spec, &grid, 3, &RngPolicy::new(8), &SimOptions::euler()).unwrap()
    }

    #[test]
    fn csv_layout() {
        let bundle = small_bundle();
        let mut buf = Vec::new();
        bundle.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("path_id,t,v,x,exploded"));
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(!text.contains('\r'));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,1,1,0,false"), "got {first}");
    }

    #[test]
    fn binary_round_trip() {
        let bundle = small_bundle();
        let mut buf = Vec::new();
        bundle.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"KLIM");
        let back = PathBundle::read_binary(buf.as_slice()).unwrap();
        assert_eq!(bundle, back);
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(PathBundle::read_binary(&b"NOPE"[..]).is_err());
    }
}
