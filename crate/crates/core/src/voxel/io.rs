//! `.vgrid` binary and sparse text voxel formats.
//!
//! Binary layout (little-endian): `"VGRD"`, version `u32`, dims `3 x u32`,
//! voxel size `f64`, origin `3 x f64`, then one occupancy byte per voxel in
//! x-fastest order.
//!
//! Sparse text: a header line `dims nx ny nz voxel_size s`, then one
//! `i j k` line per occupied voxel. The origin is zero.

use std::fs;
use std::path::Path;

use super::VoxelGrid;
use crate::{Error, Result, Vec3};

const MAGIC: &[u8; 4] = b"VGRD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 12 + 8 + 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Binary,
    SparseText,
}

impl GridFormat {
    /// `.txt` selects the sparse text format, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => GridFormat::SparseText,
            _ => GridFormat::Binary,
        }
    }
}

pub fn load_voxel_grid(path: &Path, format: GridFormat) -> Result<VoxelGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        GridFormat::Binary => decode_binary(&bytes),
        GridFormat::SparseText => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::Format("sparse grid is not UTF-8".into()))?;
            decode_sparse(text)
        }
    }
}

pub fn save_voxel_grid(grid: &VoxelGrid, path: &Path, format: GridFormat) -> Result<()> {
    let bytes = match format {
        GridFormat::Binary => encode_binary(grid),
        GridFormat::SparseText => encode_sparse(grid).into_bytes(),
    };
    crate::fsutil::write_atomic(path, &bytes)
}

pub fn encode_binary(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.voxel_size().to_le_bytes());
    for c in grid.origin().iter() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.extend_from_slice(grid.occupancy());
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<VoxelGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "vgrid header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing VGRD magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported vgrid version {version}")));
    }
    let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
    let voxel_size = f64_at(20);
    let origin = Vec3::new(f64_at(28), f64_at(36), f64_at(44));
    let payload = &bytes[HEADER_LEN..];
    let expected = dims.iter().product::<usize>();
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    VoxelGrid::from_occupancy(dims, voxel_size, origin, payload.to_vec())
}

fn encode_sparse(grid: &VoxelGrid) -> String {
    let [nx, ny, nz] = grid.dims();
    let mut out = format!("dims {nx} {ny} {nz} voxel_size {:?}\n", grid.voxel_size());
    for (i, &v) in grid.occupancy().iter().enumerate() {
        if v != 0 {
            let [x, y, z] = grid.coords(i);
            out.push_str(&format!("{x} {y} {z}\n"));
        }
    }
    out
}

pub fn decode_sparse(text: &str) -> Result<VoxelGrid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty sparse grid".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "dims" || fields[4] != "voxel_size" {
        return Err(Error::Format(format!("bad sparse grid header {header:?}")));
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension {s:?}")))
    };
    let dims = [
        parse_dim(fields[1])?,
        parse_dim(fields[2])?,
        parse_dim(fields[3])?,
    ];
    let voxel_size: f64 = fields[5]
        .parse()
        .map_err(|_| Error::Format(format!("bad voxel size {:?}", fields[5])))?;
    let mut grid = VoxelGrid::new(dims, voxel_size, Vec3::zeros())?;
    for (lineno, line) in lines.enumerate() {
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad index line {}: {line:?}", lineno + 2)))?;
        if idx.len() != 3 || idx[0] >= dims[0] || idx[1] >= dims[1] || idx[2] >= dims[2] {
            return Err(Error::Format(format!(
                "index line {} out of range: {line:?}",
                lineno + 2
            )));
        }
        grid.set(idx[0], idx[1], idx[2], true);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: [u32; 3], voxel_size: f64) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b.extend_from_slice(&voxel_size.to_le_bytes());
        b.extend_from_slice(&[0u8; 24]);
        b
    }

    #[test]
    fn full_block_round_trip() {
        let mut bytes = header([4, 4, 4], 1.0);
        bytes.extend_from_slice(&[1u8; 64]);
        let g = decode_binary(&bytes).unwrap();
        assert_eq!(g.occupied_count(), 64);
        assert_eq!(encode_binary(&g), bytes);
    }

    #[test]
    fn payload_shorter_than_header_claims() {
        let mut bytes = header([2, 2, 2], 1.0);
        bytes.extend_from_slice(&[1u8; 7]);
        assert!(matches!(
            decode_binary(&bytes),
            Err(Error::SizeMismatch {
                expected: 8,
                found: 7
            })
        ));
    }

    #[test]
    fn occupancy_is_thresholded() {
        let mut bytes = header([2, 1, 1], 1.0);
        bytes.extend_from_slice(&[0, 255]);
        let g = decode_binary(&bytes).unwrap();
        assert_eq!(g.occupancy(), &[0, 1]);
    }

    #[test]
    fn rejects_non_positive_voxel_size_and_bad_magic() {
        let mut bytes = header([1, 1, 1], 0.0);
        bytes.push(1);
        assert!(decode_binary(&bytes).is_err());
        let mut bytes = header([1, 1, 1], 1.0);
        bytes.push(1);
        bytes[0] = b'X';
        assert!(matches!(decode_binary(&bytes), Err(Error::Format(_))));
        assert!(decode_binary(&bytes[..10]).is_err());
    }

    #[test]
    fn sparse_text_round_trip() {
        let text = "dims 3 2 2 voxel_size 0.5\n0 0 0\n2 1 1\n";
        let g = decode_sparse(text).unwrap();
        assert_eq!(g.occupied_count(), 2);
        assert!(g.get(2, 1, 1));
        assert_eq!(g.voxel_size(), 0.5);
        assert_eq!(decode_sparse(&encode_sparse(&g)).unwrap(), g);
    }

    #[test]
    fn sparse_text_errors() {
        assert!(decode_sparse("").is_err());
        assert!(decode_sparse("dims 2 2 voxel_size 1").is_err());
        assert!(decode_sparse("dims 2 2 2 voxel_size 1\n2 0 0\n").is_err());
        assert!(decode_sparse("dims 2 2 2 voxel_size -1\n").is_err());
    }
}
