//! On-disk cache of the pair-quadrature tables.
//!
//! Layout (little endian): magic `FLPQ`, `u32` version, key
//! `(a: f64, b: f64, n_cells: u64, s: f64, p: f64, variant: u8, quad_order: u32)`, then the
//! far-field tables, touching rule, self weight and optional exterior weights, each length-prefixed.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::gagliardo::{near_order, Exterior};
use super::{FracParams, GagliardoDiscretization, Variant};
use crate::domain::Grid1D;
use crate::error::{FracError, Result};

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FLPQ";

pub fn cache_file_name(grid: &Grid1D, params: FracParams, variant: Variant, quad_order: usize) -> String {
    format!(
        "pq_{:016x}_{:016x}_{}_{:016x}_{:016x}_{}_{}.bin",
        grid.a().to_bits(),
        grid.b().to_bits(),
        grid.n_cells(),
        params.s().to_bits(),
        params.p().to_bits(),
        variant.label(),
        quad_order
    )
}

/// Loads the discretisation from `dir` when a matching cache file exists, otherwise builds it
/// and writes the file. Stale or corrupt files are rebuilt.
pub fn load_or_build(
    dir: Option<&Path>,
    grid: &Grid1D,
    params: FracParams,
    variant: Variant,
    quad_order: usize,
) -> Result<GagliardoDiscretization> {
    let Some(dir) = dir else {
        return GagliardoDiscretization::new(grid, params, variant, quad_order);
    };
    let path = dir.join(cache_file_name(grid, params, variant, quad_order));
    if path.exists() {
        match read(&path, grid, params, variant, quad_order) {
            Ok(disc) => return Ok(disc),
            Err(e) => log::warn!("ignoring cache file {}: {e}", path.display()),
        }
    }
    let disc = GagliardoDiscretization::new(grid, params, variant, quad_order)?;
    fs::create_dir_all(dir)?;
    write(&path, &disc)?;
    Ok(disc)
}

fn key_bytes(grid: &Grid1D, params: FracParams, variant: Variant, quad_order: usize) -> Vec<u8> {
    let mut k = Vec::with_capacity(45);
    k.extend_from_slice(&grid.a().to_le_bytes());
    k.extend_from_slice(&grid.b().to_le_bytes());
    k.extend_from_slice(&(grid.n_cells() as u64).to_le_bytes());
    k.extend_from_slice(&params.s().to_le_bytes());
    k.extend_from_slice(&params.p().to_le_bytes());
    k.push(match variant {
        Variant::DirichletExterior => 0,
        Variant::RegionalNeumann => 1,
    });
    k.extend_from_slice(&(quad_order as u32).to_le_bytes());
    k
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    buf.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write(path: &Path, disc: &GagliardoDiscretization) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&key_bytes(disc.grid(), disc.params(), disc.variant(), disc.quad_order()));
    buf.extend_from_slice(&(disc.far.len() as u64).to_le_bytes());
    for table in &disc.far {
        put_f64s(&mut buf, table);
    }
    let touch: Vec<f64> = disc.touch.iter().flat_map(|&(t, w)| [t, w]).collect();
    put_f64s(&mut buf, &touch);
    buf.extend_from_slice(&disc.self_weight.to_le_bytes());
    match &disc.exterior {
        None => buf.push(0),
        Some(ext) => {
            buf.push(1);
            put_f64s(&mut buf, &ext.cell_weights);
            buf.extend_from_slice(&ext.endpoint_weight.to_le_bytes());
        }
    }
    let tmp: PathBuf = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| FracError::Cache("truncated file".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > self.data.len() / 8 {
            return Err(FracError::Cache("implausible array length".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn read(
    path: &Path,
    grid: &Grid1D,
    params: FracParams,
    variant: Variant,
    quad_order: usize,
) -> Result<GagliardoDiscretization> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(FracError::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(FracError::Cache(format!("version {version}, expected {CACHE_VERSION}")));
    }
    let key = key_bytes(grid, params, variant, quad_order);
    if cur.take(key.len())? != key.as_slice() {
        return Err(FracError::Cache("key mismatch".into()));
    }
    let n_far = cur.u64()? as usize;
    if n_far != grid.n_cells().saturating_sub(2) {
        return Err(FracError::Cache("far table count mismatch".into()));
    }
    let far = (0..n_far)
        .map(|idx| {
            let t = cur.f64s()?;
            let order = if idx == 0 { near_order(quad_order) } else { quad_order };
            if t.len() != order * order {
                return Err(FracError::Cache("far table size mismatch".into()));
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let touch_flat = cur.f64s()?;
    if touch_flat.len() != 2 * near_order(quad_order) {
        return Err(FracError::Cache("touching rule size mismatch".into()));
    }
    let touch = touch_flat.chunks(2).map(|c| (c[0], c[1])).collect();
    let self_weight = cur.f64()?;
    let exterior = match cur.take(1)?[0] {
        0 => None,
        1 => {
            let cell_weights = cur.f64s()?;
            if cell_weights.len() != grid.n_cells() * near_order(quad_order) {
                return Err(FracError::Cache("exterior table size mismatch".into()));
            }
            Some(Exterior { cell_weights, endpoint_weight: cur.f64()? })
        }
        _ => return Err(FracError::Cache("bad exterior flag".into())),
    };
    if (variant == Variant::DirichletExterior) != exterior.is_some() {
        return Err(FracError::Cache("variant and exterior table disagree".into()));
    }
    Ok(GagliardoDiscretization::from_tables(
        grid, params, variant, quad_order, far, touch, self_weight, exterior,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(0.0, 1.0, 12).unwrap();
        let params = FracParams::new(0.4, 2.5).unwrap();
        for variant in [Variant::DirichletExterior, Variant::RegionalNeumann] {
            let built = load_or_build(Some(dir.path()), &grid, params, variant, 5).unwrap();
            let path = dir.path().join(cache_file_name(&grid, params, variant, 5));
            assert!(path.exists());
            let loaded = load_or_build(Some(dir.path()), &grid, params, variant, 5).unwrap();
            assert_eq!(built.far, loaded.far);
            assert_eq!(built.touch, loaded.touch);
            assert_eq!(built.self_weight, loaded.self_weight);
            assert_eq!(built.exterior, loaded.exterior);
            let u: Vec<f64> = (0..built.dim()).map(|i| (i as f64).sin()).collect();
            assert_eq!(built.energy(&u).unwrap(), loaded.energy(&u).unwrap());
        }
    }

    #[test]
    fn corrupt_file_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(0.0, 1.0, 6).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let path = dir.path().join(cache_file_name(&grid, params, Variant::RegionalNeumann, 4));
        fs::write(&path, b"FLPQ\x07\x00\x00\x00garbage").unwrap();
        let disc = load_or_build(Some(dir.path()), &grid, params, Variant::RegionalNeumann, 4).unwrap();
        assert!(disc.weights_are_positive());
        assert!(read(&path, &grid, params, Variant::RegionalNeumann, 4).is_ok());
    }

    #[test]
    fn key_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = make_grid(0.0, 1.0, 6).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let other = FracParams::new(0.6, 2.0).unwrap();
        load_or_build(Some(dir.path()), &grid, params, Variant::RegionalNeumann, 4).unwrap();
        let path = dir.path().join(cache_file_name(&grid, params, Variant::RegionalNeumann, 4));
        assert!(matches!(
            read(&path, &grid, other, Variant::RegionalNeumann, 4),
            Err(FracError::Cache(_))
        ));
    }
}
