//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas method (Felzenszwalb and
//! Huttenlocher) run on a copy of the grid padded with one layer of
//! background, which makes everything outside the grid count as background.
//! All intermediate values are sums of integer squares, so the squared
//! distances are exact in binary64.

use super::VoxelGrid;

/// Distance (voxel units) from each occupied voxel center to the nearest
/// background voxel center. Background voxels hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl DistanceField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }
}

pub fn distance_transform(grid: &VoxelGrid) -> DistanceField {
    DistanceField {
        dims: grid.dims(),
        values: squared_distance_transform(grid)
            .into_iter()
            .map(f64::sqrt)
            .collect(),
    }
}

/// Squared distances, x-fastest like the grid. Every value is an integer.
pub fn squared_distance_transform(grid: &VoxelGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims();
    let [px, py, pz] = [nx + 2, ny + 2, nz + 2];
    let pidx = |x: usize, y: usize, z: usize| x + px * (y + py * z);

    // Pass 1 (x): binary input, so a forward/backward sweep is enough.
    let mut field = vec![0.0f64; px * py * pz];
    let mut line = vec![0.0f64; px];
    for z in 1..=nz {
        for y in 1..=ny {
            let mut last_bg: Option<usize> = Some(0);
            for x in 0..px {
                let occupied = (1..=nx).contains(&x) && grid.get(x - 1, y - 1, z - 1);
                if occupied {
                    line[x] = last_bg.map_or(f64::INFINITY, |b| (x - b) as f64);
                } else {
                    line[x] = 0.0;
                    last_bg = Some(x);
                }
            }
            // The right padding cell is background, so every run is bounded.
            let mut next_bg = px - 1;
            for x in (0..px).rev() {
                if line[x] == 0.0 {
                    next_bg = x;
                } else {
                    let d = (next_bg - x) as f64;
                    line[x] = line[x].min(d);
                }
            }
            for x in 0..px {
                field[pidx(x, y, z)] = line[x] * line[x];
            }
        }
    }

    let n_max = px.max(py).max(pz);
    let mut env = Envelope::with_capacity(n_max);
    let mut input = vec![0.0; n_max];
    let mut output = vec![0.0; n_max];

    // Pass 2 (y).
    for z in 1..=nz {
        for x in 1..=nx {
            for y in 0..py {
                input[y] = field[pidx(x, y, z)];
            }
            env.transform(&input[..py], &mut output[..py]);
            for y in 1..=ny {
                field[pidx(x, y, z)] = output[y];
            }
        }
    }

    // Pass 3 (z).
    for y in 1..=ny {
        for x in 1..=nx {
            for z in 0..pz {
                input[z] = field[pidx(x, y, z)];
            }
            env.transform(&input[..pz], &mut output[..pz]);
            for z in 1..=nz {
                field[pidx(x, y, z)] = output[z];
            }
        }
    }

    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 1..=nz {
        for y in 1..=ny {
            for x in 1..=nx {
                out.push(field[pidx(x, y, z)]);
            }
        }
    }
    out
}

/// Scratch space for the 1D squared-distance transform of a sampled function.
struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            vertices: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    /// `out[q] = min_p (q - p)^2 + f[p]`. Requires finite `f`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let v = &mut self.vertices;
        let z = &mut self.bounds;
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..n {
            let qf = q as f64;
            loop {
                let p = v[k] as f64;
                let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
                if s <= z[k] {
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let d = qf - v[k] as f64;
            *o = d * d + f[v[k]];
        }
    }
}
