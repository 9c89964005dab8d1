//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use mbf_core::voxel::VoxelGrid;

/// Squared distance from every voxel to the nearest background voxel, by
/// exhaustive search. Everything outside the grid counts as background.
pub fn brute_force_sq_edt(grid: &VoxelGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims();
    let background: Vec<[i64; 3]> = (0..grid.len())
        .filter(|&i| grid.occupancy()[i] == 0)
        .map(|i| grid.coords(i).map(|c| c as i64))
        .collect();
    (0..grid.len())
        .map(|i| {
            if grid.occupancy()[i] == 0 {
                return 0.0;
            }
            let c = grid.coords(i).map(|c| c as i64);
            let n = [nx as i64, ny as i64, nz as i64];
            // Nearest outside voxel lies straight across one face.
            let mut best = (0..3).map(|a| (c[a] + 1).min(n[a] - c[a]).pow(2)).min().unwrap();
            for b in &background {
                let d = (0..3).map(|a| (b[a] - c[a]).pow(2)).sum::<i64>();
                best = best.min(d);
            }
            best as f64
        })
        .collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
