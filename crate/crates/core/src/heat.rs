//! Effective thermal conductivity of the solid phase by a voxel finite-volume
//! conduction solve with Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, BinaryGrid, VoxelGrid};
use crate::morph::{label_clusters, Connectivity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    /// Solid conductivity, W/mK.
    pub k_solid: f64,
    /// Hot minus cold face temperature, K.
    pub delta_t: f64,
    pub cg_tol: f64,
    pub max_cg_iters: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            k_solid: 400.0,
            delta_t: 50.0,
            cg_tol: 1e-8,
            max_cg_iters: 20_000,
        }
    }
}

impl HeatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_solid > 0.0 && self.delta_t > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::InvalidInput("k_solid, delta_t and cg_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Solve record for one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisConduction {
    pub axis: Axis,
    pub k_eff: f64,
    pub percolates: bool,
    pub converged: bool,
    pub cg_iterations: usize,
    pub relative_residual: f64,
    /// Heat flow through the hot and cold faces, W.
    pub q_hot: f64,
    pub q_cold: f64,
    #[serde(skip)]
    pub temperature: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalResult {
    pub k_eff: [f64; 3],
    pub percolates: [bool; 3],
    pub axes: Vec<AxisConduction>,
}

/// Solid voxels belonging to clusters that touch both faces normal to `axis`.
fn spanning_solid(grid: &BinaryGrid, axis: usize) -> Vec<bool> {
    let lab = label_clusters(grid, Connectivity::Face6);
    let both = (1u8 << (2 * axis)) | (1u8 << (2 * axis + 1));
    lab.labels
        .iter()
        .map(|&l| l > 0 && lab.faces[l as usize - 1] & both == both)
        .collect()
}

/// Effective conductivity along `axis` in W/mK.
pub fn conductivity_axis(grid: &BinaryGrid, axis: Axis, cfg: &HeatConfig) -> Result<f64> {
    Ok(solve_axis(grid, axis, cfg, false)?.k_eff)
}

/// Full solve; `hot_high` swaps the hot face to the high end, `keep_field` returns temperatures in K.
pub fn solve_axis_with(
    grid: &BinaryGrid,
    axis: Axis,
    cfg: &HeatConfig,
    hot_high: bool,
    keep_field: bool,
) -> Result<AxisConduction> {
    cfg.validate()?;
    grid.validate_binary()?;
    let a = axis.index();
    let dims = grid.dims();
    let n_axis = dims[a];
    let cross = grid.len() / n_axis;
    let active = spanning_solid(grid, a);
    let mut id = vec![u32::MAX; grid.len()];
    let mut cells = Vec::new();
    for (i, &on) in active.iter().enumerate() {
        if on {
            id[i] = cells.len() as u32;
            cells.push(i);
        }
    }
    let mut out = AxisConduction {
        axis,
        k_eff: 0.0,
        percolates: !cells.is_empty(),
        converged: true,
        cg_iterations: 0,
        relative_residual: 0.0,
        q_hot: 0.0,
        q_cold: 0.0,
        temperature: None,
    };
    if cells.is_empty() {
        if keep_field {
            out.temperature = Some(vec![0.0; grid.len()]);
        }
        return Ok(out);
    }
    // Unit conductance per interior face (k dx = 1), temperatures scaled so hot = 1, cold = 0.
    let n = cells.len();
    let strides = [1usize, dims[0], dims[0] * dims[1]];
    let mut nbr: Vec<[u32; 6]> = vec![[u32::MAX; 6]; n];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let (hot_face, cold_face) = if hot_high { (n_axis - 1, 0) } else { (0, n_axis - 1) };
    for (u, &c) in cells.iter().enumerate() {
        let p = grid.coords(c);
        for b in 0..3 {
            for (s, dir) in [(0usize, -1i64), (1, 1)] {
                let q = p[b] as i64 + dir;
                if q < 0 || q >= dims[b] as i64 {
                    continue;
                }
                let j = (c as i64 + dir * strides[b] as i64) as usize;
                if id[j] != u32::MAX {
                    nbr[u][2 * b + s] = id[j];
                    diag[u] += 1.0;
                }
            }
        }
        if p[a] == hot_face {
            diag[u] += 2.0;
            rhs[u] += 2.0;
        }
        if p[a] == cold_face {
            diag[u] += 2.0;
        }
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        for u in 0..n {
            let mut s = diag[u] * x[u];
            for &v in &nbr[u] {
                if v != u32::MAX {
                    s -= x[v as usize];
                }
            }
            y[u] = s;
        }
    };
    // Start from the linear profile between the faces.
    let mut t: Vec<f64> = cells
        .iter()
        .map(|&c| {
            let pa = grid.coords(c)[a] as f64 + 0.5;
            let frac = pa / n_axis as f64;
            if hot_high {
                frac
            } else {
                1.0 - frac
            }
        })
        .collect();
    let mut r = vec![0.0; n];
    apply(&t, &mut r);
    for u in 0..n {
        r[u] = rhs[u] - r[u];
    }
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut pdir = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    let mut it = 0;
    while res > cfg.cg_tol && it < cfg.max_cg_iters {
        apply(&pdir, &mut ap);
        let pap: f64 = pdir.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for u in 0..n {
            t[u] += alpha * pdir[u];
            r[u] -= alpha * ap[u];
        }
        for u in 0..n {
            z[u] = r[u] / diag[u];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for u in 0..n {
            pdir[u] = z[u] + beta * pdir[u];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        it += 1;
    }
    out.cg_iterations = it;
    out.relative_residual = res;
    out.converged = res <= cfg.cg_tol;
    if !out.converged {
        log::warn!("conduction CG along {axis:?} stopped at residual {res:e}");
    }
    let (mut q_hot, mut q_cold) = (0.0, 0.0);
    for (u, &c) in cells.iter().enumerate() {
        let pa = grid.coords(c)[a];
        if pa == hot_face {
            q_hot += 2.0 * (1.0 - t[u]);
        }
        if pa == cold_face {
            q_cold += 2.0 * t[u];
        }
    }
    // Dimensional flux: q = k dx dT * (scaled flux); k_eff = q / (N dx dT).
    let scale = cfg.k_solid / n_axis as f64 * (n_axis * n_axis) as f64 / cross as f64;
    out.k_eff = q_hot * scale;
    let dx = grid.voxel_size() * 1e-6;
    out.q_hot = q_hot * cfg.k_solid * dx * cfg.delta_t;
    out.q_cold = q_cold * cfg.k_solid * dx * cfg.delta_t;
    if keep_field {
        let mut field = vec![0.0; grid.len()];
        for (u, &c) in cells.iter().enumerate() {
            field[c] = t[u] * cfg.delta_t;
        }
        out.temperature = Some(field);
    }
    Ok(out)
}

fn solve_axis(grid: &BinaryGrid, axis: Axis, cfg: &HeatConfig, keep_field: bool) -> Result<AxisConduction> {
    solve_axis_with(grid, axis, cfg, false, keep_field)
}

/// Conductivities along x, y, z; checks the parallel (Voigt) bound.
pub fn conductivity_tensor(grid: &BinaryGrid, cfg: &HeatConfig) -> Result<ThermalResult> {
    let mut axes = Vec::with_capacity(3);
    for axis in Axis::ALL {
        axes.push(solve_axis(grid, axis, cfg, false)?);
    }
    let k_eff = [axes[0].k_eff, axes[1].k_eff, axes[2].k_eff];
    let bound = grid.solid_fraction() * cfg.k_solid;
    for (a, &k) in k_eff.iter().enumerate() {
        let slack = 1e-6 * bound.max(cfg.k_solid * 1e-12) + 10.0 * cfg.cg_tol * cfg.k_solid;
        assert!(k >= 0.0 && k <= bound + slack, "axis {a}: k_eff {k} exceeds bound {bound}");
    }
    Ok(ThermalResult {
        k_eff,
        percolates: [axes[0].percolates, axes[1].percolates, axes[2].percolates],
        axes,
    })
}

/// Temperature field (K) of one axis solve as a grid, for export.
pub fn temperature_field(grid: &BinaryGrid, axis: Axis, cfg: &HeatConfig) -> Result<VoxelGrid<f64>> {
    let r = solve_axis(grid, axis, cfg, true)?;
    VoxelGrid::new(grid.dims(), grid.voxel_size(), r.temperature.expect("field requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SeededRng, SOLID, VOID};
    use rand::Rng;

    #[test]
    fn uniform_slab() {
        let g = BinaryGrid::cube(10, 50.0, SOLID).unwrap();
        let cfg = HeatConfig::default();
        for axis in Axis::ALL {
            let k = conductivity_axis(&g, axis, &cfg).unwrap();
            assert!((k - 400.0).abs() / 400.0 < 1e-6, "{k}");
        }
    }

    #[test]
    fn parallel_columns() {
        let mut g = BinaryGrid::cube(12, 50.0, VOID).unwrap();
        let mut count = 0;
        for (x, y) in [(1, 1), (5, 7), (6, 7), (10, 3), (2, 9)] {
            count += 1;
            for z in 0..12 {
                g.set(x, y, z, SOLID);
            }
        }
        let v = count as f64 / 144.0;
        let cfg = HeatConfig::default();
        let k = conductivity_axis(&g, Axis::Z, &cfg).unwrap();
        assert!((k - v * 400.0).abs() / (v * 400.0) < 1e-6);
        assert_eq!(conductivity_axis(&g, Axis::X, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn void_cell_conducts_nothing() {
        let g = BinaryGrid::cube(8, 50.0, VOID).unwrap();
        assert_eq!(conductivity_tensor(&g, &HeatConfig::default()).unwrap().k_eff, [0.0; 3]);
    }

    #[test]
    fn reversed_drop_and_energy_balance() {
        let mut rng = SeededRng::new(8, 0).rng();
        let data = (0..16 * 16 * 16).map(|_| rng.random_bool(0.6) as u8).collect();
        let g = BinaryGrid::new([16; 3], 1.0, data).unwrap();
        let cfg = HeatConfig::default();
        for axis in Axis::ALL {
            let f = solve_axis_with(&g, axis, &cfg, false, false).unwrap();
            let r = solve_axis_with(&g, axis, &cfg, true, false).unwrap();
            assert!((f.k_eff - r.k_eff).abs() <= 1e-6 * f.k_eff);
            assert!((f.q_hot - f.q_cold).abs() <= 10.0 * cfg.cg_tol * f.q_hot.abs(), "{} {}", f.q_hot, f.q_cold);
        }
    }

    #[test]
    fn permuting_axes_permutes_k() {
        let mut rng = SeededRng::new(3, 0).rng();
        let data = (0..10 * 12 * 14).map(|_| rng.random_bool(0.55) as u8).collect();
        let g = BinaryGrid::new([10, 12, 14], 1.0, data).unwrap();
        let cfg = HeatConfig {
            cg_tol: 1e-12,
            ..HeatConfig::default()
        };
        let k = conductivity_tensor(&g, &cfg).unwrap().k_eff;
        let p = conductivity_tensor(&g.permute_axes([2, 0, 1]).unwrap(), &cfg).unwrap().k_eff;
        for (i, &src) in [2usize, 0, 1].iter().enumerate() {
            assert!((p[i] - k[src]).abs() <= 1e-8 * k[src].max(1.0));
        }
    }

    #[test]
    fn temperature_field_spans_drop() {
        let g = BinaryGrid::cube(8, 50.0, SOLID).unwrap();
        let t = temperature_field(&g, Axis::X, &HeatConfig::default()).unwrap();
        assert!((t.get(0, 3, 3) - 50.0 * (1.0 - 0.5 / 8.0)).abs() < 1e-6);
        assert!((t.get(7, 3, 3) - 50.0 * 0.5 / 8.0).abs() < 1e-6);
    }
}
