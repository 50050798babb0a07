//! Solid connectivity, floating clusters, and pore size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, SeededRng, VoxelGrid, SOLID, VOID};
use crate::recon::{realize_from_sdf, NoiseField};
use crate::sdfgen::{build_sdf, SdfParams};

/// Voxel adjacency used for labeling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Connectivity {
    #[default]
    Face6,
    Full26,
}

impl Connectivity {
    fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let m = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Face6 => m == 1,
                        Connectivity::Full26 => m > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub n_clusters: usize,
    pub n_floating: usize,
    pub floating_volume_fraction: f64,
    /// Every non-floating cluster touches the z = 0 face.
    pub base_connected: bool,
    /// Same test against the low face of each axis (x, y, z).
    pub base_connected_axes: [bool; 3],
    pub cluster_sizes: Vec<usize>,
}

/// Solid-cluster labels (0 = void, clusters numbered 1..=K by first voxel) and summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    pub labels: Vec<u32>,
    pub report: ClusterReport,
    /// Per cluster (index label - 1): bitmask of touched faces, bit 2a low / 2a+1 high of axis a.
    pub faces: Vec<u8>,
}

impl Labeling {
    pub fn is_floating(&self, label: u32) -> bool {
        label > 0 && self.faces[label as usize - 1] == 0
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

/// Labels solid clusters without periodic wrap.
pub fn label_clusters(grid: &BinaryGrid, connectivity: Connectivity) -> Labeling {
    let [nx, ny, nz] = grid.dims();
    let len = grid.len();
    let data = grid.data();
    let mut parent: Vec<u32> = (0..len as u32).collect();
    // Only backward neighbours are needed for a single union pass.
    let back: Vec<[i64; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|o| (o[2], o[1], o[0]) < (0, 0, 0))
        .collect();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if data[i] != SOLID {
                    continue;
                }
                for o in &back {
                    let (xx, yy, zz) = (x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]);
                    if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 {
                        continue;
                    }
                    let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                    if data[j] == SOLID {
                        let (a, b) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
                        if a != b {
                            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                            parent[hi as usize] = lo;
                        }
                    }
                }
            }
        }
    }
    let mut root_label = vec![0u32; len];
    let mut labels = vec![0u32; len];
    let mut sizes: Vec<usize> = Vec::new();
    let mut faces: Vec<u8> = Vec::new();
    for i in 0..len {
        if data[i] != SOLID {
            continue;
        }
        let r = find(&mut parent, i as u32) as usize;
        if root_label[r] == 0 {
            sizes.push(0);
            faces.push(0);
            root_label[r] = sizes.len() as u32;
        }
        let l = root_label[r];
        labels[i] = l;
        sizes[l as usize - 1] += 1;
        let c = grid.coords(i);
        let d = [nx, ny, nz];
        for a in 0..3 {
            if c[a] == 0 {
                faces[l as usize - 1] |= 1 << (2 * a);
            }
            if c[a] == d[a] - 1 {
                faces[l as usize - 1] |= 1 << (2 * a + 1);
            }
        }
    }
    let report = summarize(&sizes, &faces, len);
    Labeling { labels, report, faces }
}

fn summarize(sizes: &[usize], faces: &[u8], len: usize) -> ClusterReport {
    let floating: Vec<usize> = (0..sizes.len()).filter(|&c| faces[c] == 0).collect();
    let floating_voxels: usize = floating.iter().map(|&c| sizes[c]).sum();
    let mut base = [true; 3];
    for (a, b) in base.iter_mut().enumerate() {
        *b = (0..sizes.len())
            .filter(|&c| faces[c] != 0)
            .all(|c| faces[c] & (1 << (2 * a)) != 0);
    }
    ClusterReport {
        n_clusters: sizes.len(),
        n_floating: floating.len(),
        floating_volume_fraction: floating_voxels as f64 / len as f64,
        base_connected: base[2],
        base_connected_axes: base,
        cluster_sizes: sizes.to_vec(),
    }
}

/// Sets every floating cluster to void; returns the cleaned grid and the removed solid fraction.
pub fn remove_floating(grid: &BinaryGrid, connectivity: Connectivity) -> (BinaryGrid, f64) {
    let lab = label_clusters(grid, connectivity);
    if lab.report.n_floating == 0 {
        return (grid.clone(), 0.0);
    }
    let mut out = grid.clone();
    for (p, &l) in out.data_mut().iter_mut().zip(&lab.labels) {
        if lab.is_floating(l) {
            *p = VOID;
        }
    }
    (out, lab.report.floating_volume_fraction)
}

/// Monte-Carlo floating-cluster estimate over independent realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F3Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub counts: Vec<usize>,
    pub n_degenerate: usize,
}

/// Seed of realization `i` drawn from `seed`.
pub fn realization_seed(seed: SeededRng, i: usize) -> SeededRng {
    seed.child(&[i as u64])
}

/// Mean floating-cluster count over `n_realizations` seeds derived from `seed`.
pub fn estimate_f3(params: &SdfParams, n: usize, n_realizations: usize, seed: SeededRng) -> Result<F3Estimate> {
    if n_realizations == 0 {
        return Err(Error::InvalidInput("need at least one realization".into()));
    }
    let sdf = match build_sdf(params, n) {
        Ok(s) => s,
        Err(Error::DegenerateSdf) => {
            return Ok(F3Estimate {
                mean: f64::NAN,
                std_err: f64::NAN,
                counts: Vec::new(),
                n_degenerate: n_realizations,
            })
        }
        Err(e) => return Err(e),
    };
    let counts: Vec<usize> = (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseField::generate(n, realization_seed(seed, i));
            let m = realize_from_sdf(&sdf, params, 1.0, &noise)?;
            Ok(label_clusters(&m.grid, Connectivity::Face6).report.n_floating)
        })
        .collect::<Result<_>>()?;
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / k;
    let var = if counts.len() > 1 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(F3Estimate {
        mean,
        std_err: (var / k).sqrt(),
        counts,
        n_degenerate: 0,
    })
}

/// Squared distance transform along one line (lower envelope of parabolas).
/// Sites sit at every index with finite `f`, plus solid sites just outside
/// both ends of the line.
fn edt_line(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let border = |i: usize| -> f64 {
        let a = (i + 1) as f64;
        let b = (n - i) as f64;
        (a * a).min(b * b)
    };
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if k < 0 {
            k = 0;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        loop {
            let p = v[k as usize];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
                if k < 0 {
                    break;
                }
            } else {
                break;
            }
        }
        k += 1;
        let ku = k as usize;
        v[ku] = q;
        z[ku] = if ku == 0 {
            f64::NEG_INFINITY
        } else {
            let p = v[ku - 1];
            ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
        };
        z[ku + 1] = f64::INFINITY;
    }
    if k < 0 {
        for (q, o) in out.iter_mut().enumerate() {
            *o = border(q);
        }
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let d = q as f64 - p as f64;
        *o = (d * d + f[p]).min(border(q));
    }
}

/// Euclidean distance (voxel units) from each void voxel to the nearest solid
/// voxel or to the region outside the cell; zero on solid.
pub fn distance_transform(grid: &BinaryGrid) -> VoxelGrid<f64> {
    let [nx, ny, nz] = grid.dims();
    let mut d: Vec<f64> = grid
        .data()
        .iter()
        .map(|&p| if p == SOLID { 0.0 } else { f64::INFINITY })
        .collect();
    let dims = [nx, ny, nz];
    let strides = [1, nx, nx * ny];
    for a in 0..3 {
        let n = dims[a];
        let (b1, b2) = match a {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut f = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut v = vec![0usize; n];
        let mut zb = vec![0.0; n + 1];
        for j in 0..dims[b2] {
            for i in 0..dims[b1] {
                let base = i * strides[b1] + j * strides[b2];
                for q in 0..n {
                    f[q] = d[base + q * strides[a]];
                }
                edt_line(&f, &mut out, &mut v, &mut zb);
                for q in 0..n {
                    d[base + q * strides[a]] = out[q];
                }
            }
        }
    }
    VoxelGrid::new(dims, grid.voxel_size(), d.into_iter().map(f64::sqrt).collect()).expect("same dims")
}

/// Mean distance-transform value at its 26-neighbourhood local maxima, in micrometres.
pub fn mean_pore_radius(grid: &BinaryGrid) -> Result<f64> {
    if grid.solid_count() == grid.len() {
        return Err(Error::InvalidInput("no void phase".into()));
    }
    let edt = distance_transform(grid);
    let [nx, ny, nz] = grid.dims();
    let (mut sum, mut count) = (0.0, 0usize);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = edt.get(x, y, z);
                if v <= 0.0 {
                    continue;
                }
                let mut is_max = true;
                'scan: for dz in -1..=1i64 {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (xx, yy, zz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                                continue;
                            }
                            if edt.get(xx as usize, yy as usize, zz as usize) > v {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    sum += v;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("distance transform has no local maxima".into()));
    }
    Ok(grid.voxel_size() * sum / count as f64)
}

/// Void voxels 6-connected to both low and high faces of `axis`; the rest become solid.
pub fn percolating_void(grid: &BinaryGrid, axis: usize) -> BinaryGrid {
    let inv = grid.map(|p| if p == SOLID { VOID } else { SOLID });
    let lab = label_clusters(&inv, Connectivity::Face6);
    let both = (1u8 << (2 * axis)) | (1u8 << (2 * axis + 1));
    let mut out = grid.clone();
    for (p, &l) in out.data_mut().iter_mut().zip(&lab.labels) {
        if l == 0 || lab.faces[l as usize - 1] & both != both {
            *p = SOLID;
        }
    }
    out
}
