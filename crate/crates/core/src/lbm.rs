//! D3Q19 BGK lattice-Boltzmann permeability of the void phase.
//!
//! Flow is driven by fixed densities on two opposite faces (Zou-He type
//! closure) with halfway bounce-back on solid voxels and the four lateral
//! faces. Each simulation permutes the grid so that the flow axis is z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, BinaryGrid, SOLID};
use crate::morph::percolating_void;

const Q: usize = 19;

const E: [[i32; 3]; Q] = [
    [0, 0, 0],
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, -1, 0],
    [-1, 1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [1, 0, -1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, -1],
    [0, 1, -1],
    [0, -1, 1],
];

const OPP: [usize; Q] = [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17];

const W: [f64; Q] = [
    1.0 / 3.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 18.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
    1.0 / 36.0,
];

const NO_FLUID: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbmConfig {
    pub tau: f64,
    /// Inlet minus outlet lattice density.
    pub delta_rho: f64,
    pub max_iters: usize,
    /// Iterations over which the permeability change is judged.
    pub window: usize,
    pub k_tol_um2: f64,
    pub rel_tol: f64,
}

impl Default for LbmConfig {
    fn default() -> Self {
        LbmConfig {
            tau: 1.0,
            delta_rho: 1e-3,
            max_iters: 200_000,
            window: 10_000,
            k_tol_um2: 5e-4,
            rel_tol: 1e-4,
        }
    }
}

impl LbmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.5 && self.tau <= 2.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0.5, 2], got {}", self.tau)));
        }
        if !(self.delta_rho > 0.0 && self.delta_rho < 0.1) {
            return Err(Error::InvalidInput(format!("delta_rho must lie in (0, 0.1), got {}", self.delta_rho)));
        }
        if self.window == 0 || self.max_iters == 0 {
            return Err(Error::InvalidInput("window and max_iters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn viscosity(&self) -> f64 {
        (self.tau - 0.5) / 3.0
    }
}

/// Outcome of one directional simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisFlow {
    pub axis: Axis,
    pub reverse: bool,
    pub k_um2: f64,
    pub k_lattice: f64,
    pub iterations: usize,
    pub converged: bool,
    pub percolates: bool,
    /// Superficial lattice velocity along the flow axis (solid counted as zero).
    pub mean_velocity: f64,
    pub inlet_mass_flux: f64,
    pub outlet_mass_flux: f64,
    /// Lattice pressure drop and length used in Darcy's law.
    pub delta_p_lattice: f64,
    pub length_lattice: f64,
    pub viscosity_lattice: f64,
    #[serde(skip)]
    pub velocity_magnitude: Option<Vec<f64>>,
}

impl AxisFlow {
    fn closed(axis: Axis, reverse: bool, cfg: &LbmConfig, n: usize) -> Self {
        AxisFlow {
            axis,
            reverse,
            k_um2: 0.0,
            k_lattice: 0.0,
            iterations: 0,
            converged: true,
            percolates: false,
            mean_velocity: 0.0,
            inlet_mass_flux: 0.0,
            outlet_mass_flux: 0.0,
            delta_p_lattice: cfg.delta_rho / 3.0,
            length_lattice: (n - 1) as f64,
            viscosity_lattice: cfg.viscosity(),
            velocity_magnitude: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    /// Permeabilities along x, y, z in square micrometres.
    pub k: [f64; 3],
    pub axes: Vec<AxisFlow>,
    /// Reverse-direction permeabilities when requested.
    pub k_reverse: Option<[f64; 3]>,
    pub all_converged: bool,
}

impl FlowResult {
    /// Largest relative forward/reverse mismatch, if reverse runs were made.
    pub fn reverse_mismatch(&self) -> Option<f64> {
        self.k_reverse.map(|r| {
            (0..3)
                .map(|a| {
                    if self.k[a] > 0.0 {
                        (self.k[a] - r[a]).abs() / self.k[a]
                    } else {
                        r[a].abs()
                    }
                })
                .fold(0.0, f64::max)
        })
    }
}

fn axis_perm(axis: Axis) -> [usize; 3] {
    match axis {
        Axis::X => [1, 2, 0],
        Axis::Y => [2, 0, 1],
        Axis::Z => [0, 1, 2],
    }
}

struct Lattice {
    dims: [usize; 3],
    nf: usize,
    /// Flat voxel index (permuted frame) of each fluid node.
    cells: Vec<usize>,
    links: Vec<u32>,
    /// Fluid node ranges on the z = 0 and z = nz - 1 planes (nodes are z-ordered).
    low: std::ops::Range<usize>,
    high: std::ops::Range<usize>,
}

impl Lattice {
    fn build(grid: &BinaryGrid) -> Lattice {
        let dims = grid.dims();
        let [nx, ny, nz] = dims;
        let mut id = vec![NO_FLUID; grid.len()];
        let mut cells = Vec::new();
        for (i, &p) in grid.data().iter().enumerate() {
            if p != SOLID {
                id[i] = cells.len() as u32;
                cells.push(i);
            }
        }
        let nf = cells.len();
        let mut links = vec![0u32; Q * nf];
        for (n, &c) in cells.iter().enumerate() {
            let [x, y, z] = grid.coords(c);
            for i in 0..Q {
                let e = E[i];
                let (sx, sy, sz) = (x as i64 - e[0] as i64, y as i64 - e[1] as i64, z as i64 - e[2] as i64);
                links[i * nf + n] = if sz < 0 || sz >= nz as i64 {
                    // reads the trailing zero slot; the closure rebuilds it
                    (Q * nf) as u32
                } else if sx < 0 || sy < 0 || sx >= nx as i64 || sy >= ny as i64 {
                    (OPP[i] * nf + n) as u32
                } else {
                    let s = id[sx as usize + nx * (sy as usize + ny * sz as usize)];
                    if s == NO_FLUID {
                        (OPP[i] * nf + n) as u32
                    } else {
                        (i * nf + s as usize) as u32
                    }
                };
            }
        }
        let plane = nx * ny;
        let low_end = cells.iter().position(|&c| c >= plane).unwrap_or(nf);
        let high_start = cells.iter().position(|&c| c >= plane * (nz - 1)).unwrap_or(nf);
        Lattice {
            dims,
            nf,
            cells,
            links,
            low: 0..low_end,
            high: high_start..nf,
        }
    }
}

/// Density closure on a face with inward normal `s` (+1 at z = 0, -1 at z = nz - 1).
#[inline]
fn pressure_boundary(f: &mut [f64; Q], rho: f64, s: i32) {
    let mut tangential = 0.0;
    let mut outgoing = 0.0;
    let (mut nx, mut ny) = (0.0, 0.0);
    for i in 0..Q {
        let ez = E[i][2] * s;
        if ez == 0 {
            tangential += f[i];
            nx += f[i] * E[i][0] as f64;
            ny += f[i] * E[i][1] as f64;
        } else if ez < 0 {
            outgoing += f[i];
        }
    }
    let un = 1.0 - (tangential + 2.0 * outgoing) / rho;
    nx *= 0.5;
    ny *= 0.5;
    for i in 0..Q {
        if E[i][2] * s > 0 {
            let o = OPP[i];
            f[i] = if E[i][0] == 0 && E[i][1] == 0 {
                f[o] + rho * un / 3.0
            } else {
                f[o] + rho * un / 6.0 - E[i][0] as f64 * nx - E[i][1] as f64 * ny
            };
        }
    }
}

struct StepStats {
    sum_uz: f64,
    max_u2: f64,
}

const EF: [[f64; 3]; Q] = {
    let mut out = [[0.0; 3]; Q];
    let mut i = 0;
    while i < Q {
        out[i] = [E[i][0] as f64, E[i][1] as f64, E[i][2] as f64];
        i += 1;
    }
    out
};

const BLOCK: usize = 64;

fn step(lat: &Lattice, old: &[f64], new: &mut [f64], omega: f64, rho_low: f64, rho_high: f64) -> StepStats {
    let nf = lat.nf;
    let links = &lat.links;
    let mut stats = StepStats {
        sum_uz: 0.0,
        max_u2: 0.0,
    };
    let mut f = [[0.0f64; BLOCK]; Q];
    let mut n0 = 0;
    while n0 < nf {
        let b = BLOCK.min(nf - n0);
        for i in 0..Q {
            let li = &links[i * nf + n0..i * nf + n0 + b];
            for (dst, &l) in f[i][..b].iter_mut().zip(li) {
                *dst = old[l as usize];
            }
        }
        let on_face = n0 < lat.low.end || n0 + b > lat.high.start;
        for k in 0..if on_face { b } else { 0 } {
            let n = n0 + k;
            let s = if n < lat.low.end {
                1
            } else if n >= lat.high.start {
                -1
            } else {
                continue;
            };
            let mut g = [0.0; Q];
            for i in 0..Q {
                g[i] = f[i][k];
            }
            pressure_boundary(&mut g, if s == 1 { rho_low } else { rho_high }, s);
            for i in 0..Q {
                f[i][k] = g[i];
            }
        }
        let mut rho = [0.0; BLOCK];
        let mut ux = [0.0; BLOCK];
        let mut uy = [0.0; BLOCK];
        let mut uz = [0.0; BLOCK];
        let mut usq = [0.0; BLOCK];
        for fi in f.iter() {
            for k in 0..BLOCK {
                rho[k] += fi[k];
            }
        }
        for k in 0..BLOCK {
            let r = rho[k];
            let jx = f[1][k] - f[2][k] + f[7][k] - f[8][k] + f[9][k] - f[10][k] + f[11][k] - f[12][k] + f[13][k]
                - f[14][k];
            let jy = f[3][k] - f[4][k] + f[7][k] - f[8][k] - f[9][k] + f[10][k] + f[15][k] - f[16][k] + f[17][k]
                - f[18][k];
            let jz = f[5][k] - f[6][k] + f[11][k] - f[12][k] - f[13][k] + f[14][k] + f[15][k] - f[16][k] - f[17][k]
                + f[18][k];
            let inv = 1.0 / r;
            ux[k] = jx * inv;
            uy[k] = jy * inv;
            uz[k] = jz * inv;
            usq[k] = ux[k] * ux[k] + uy[k] * uy[k] + uz[k] * uz[k];
        }
        for k in 0..b {
            stats.sum_uz += uz[k];
            if !(usq[k] <= stats.max_u2) {
                stats.max_u2 = if usq[k].is_nan() { f64::INFINITY } else { usq[k] };
            }
        }
        for i in 0..Q {
            let [ex, ey, ez] = EF[i];
            let w = W[i];
            let out = &mut new[i * nf + n0..i * nf + n0 + b];
            for k in 0..b {
                let eu = ex * ux[k] + ey * uy[k] + ez * uz[k];
                let feq = w * rho[k] * (1.0 - 1.5 * usq[k] + 3.0 * eu + 4.5 * eu * eu);
                out[k] = f[i][k] + omega * (feq - f[i][k]);
            }
        }
        n0 += b;
    }
    stats
}

/// Directional permeability in square micrometres along `axis`.
pub fn permeability_axis(grid: &BinaryGrid, axis: Axis, cfg: &LbmConfig) -> Result<AxisFlow> {
    simulate_axis(grid, axis, cfg, false, false)
}

/// Full simulation record for one axis; `reverse` swaps inlet and outlet,
/// `velocity_field` keeps |u| per voxel in the original frame.
pub fn simulate_axis(
    grid: &BinaryGrid,
    axis: Axis,
    cfg: &LbmConfig,
    reverse: bool,
    velocity_field: bool,
) -> Result<AxisFlow> {
    cfg.validate()?;
    grid.require_sim_dims()?;
    grid.validate_binary()?;
    let perm = axis_perm(axis);
    let local = percolating_void(&grid.permute_axes(perm)?, 2);
    let n_flow = local.dims()[2];
    let mut out = AxisFlow::closed(axis, reverse, cfg, n_flow);
    if local.solid_count() == local.len() {
        return Ok(out);
    }
    out.percolates = true;
    let lat = Lattice::build(&local);
    let nf = lat.nf;
    let [nx, ny, nz] = lat.dims;
    let total = (nx * ny * nz) as f64;
    let (mut rho_low, mut rho_high) = (1.0 + 0.5 * cfg.delta_rho, 1.0 - 0.5 * cfg.delta_rho);
    if reverse {
        std::mem::swap(&mut rho_low, &mut rho_high);
    }
    let mut old = vec![0.0; Q * nf + 1];
    for (n, &c) in lat.cells.iter().enumerate() {
        let z = c / (nx * ny);
        let rho = rho_low + (rho_high - rho_low) * z as f64 / (nz - 1) as f64;
        for i in 0..Q {
            old[i * nf + n] = W[i] * rho;
        }
    }
    let mut new = old.clone();
    let omega = 1.0 / cfg.tau;
    let nu = cfg.viscosity();
    let dp = cfg.delta_rho / 3.0;
    let length = (nz - 1) as f64;
    let sign = if reverse { -1.0 } else { 1.0 };
    let vs2 = grid.voxel_size() * grid.voxel_size();
    let k_tol = cfg.k_tol_um2 / vs2;
    let sample_every = (cfg.window / 10).max(1);
    let mut samples: Vec<(usize, f64)> = Vec::new();
    let mut k_lat = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let stats = step(&lat, &old, &mut new, omega, rho_low, rho_high);
        std::mem::swap(&mut old, &mut new);
        iterations = it;
        if it % sample_every != 0 {
            continue;
        }
        if !(stats.max_u2 <= 0.01) {
            return Err(Error::Divergence {
                iteration: it,
                max_velocity: stats.max_u2.sqrt(),
            });
        }
        k_lat = sign * stats.sum_uz / total * nu * length / dp;
        samples.push((it, k_lat));
        if it >= cfg.window {
            let from = it - cfg.window;
            let recent = samples.iter().filter(|s| s.0 >= from).map(|s| s.1);
            let (lo, hi) = recent.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), k| (a.min(k), b.max(k)));
            let spread = hi - lo;
            if spread < k_tol || spread < cfg.rel_tol * k_lat.abs() {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        log::warn!("permeability along {axis:?} did not converge in {} iterations", cfg.max_iters);
    }
    // Final moments from the post-collision state (collision conserves mass and momentum).
    let mut sum_uz = 0.0;
    let (mut flux_low, mut flux_high) = (0.0, 0.0);
    let mut mag = velocity_field.then(|| vec![0.0; grid.len()]);
    let odims = grid.dims();
    for n in 0..nf {
        let mut rho = 0.0;
        let mut j = [0.0; 3];
        for i in 0..Q {
            let v = old[i * nf + n];
            rho += v;
            for a in 0..3 {
                j[a] += v * E[i][a] as f64;
            }
        }
        sum_uz += j[2] / rho;
        if lat.low.contains(&n) {
            flux_low += j[2];
        }
        if lat.high.contains(&n) {
            flux_high += j[2];
        }
        if let Some(m) = mag.as_mut() {
            let c = lat.cells[n];
            let p = [c % nx, (c / nx) % ny, c / (nx * ny)];
            let mut o = [0usize; 3];
            for a in 0..3 {
                o[perm[a]] = p[a];
            }
            let idx = o[0] + odims[0] * (o[1] + odims[1] * o[2]);
            m[idx] = (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]).sqrt() / rho;
        }
    }
    if converged {
        k_lat = sign * sum_uz / total * nu * length / dp;
    }
    out.k_lattice = k_lat.max(0.0);
    out.k_um2 = out.k_lattice * vs2;
    out.iterations = iterations;
    out.converged = converged;
    out.mean_velocity = sign * sum_uz / total;
    out.inlet_mass_flux = sign * if reverse { flux_high } else { flux_low };
    out.outlet_mass_flux = sign * if reverse { flux_low } else { flux_high };
    out.velocity_magnitude = mag;
    Ok(out)
}

/// Permeabilities along all three axes, optionally with reversed-flow checks.
pub fn permeability_tensor(grid: &BinaryGrid, cfg: &LbmConfig, validate_reverse: bool) -> Result<FlowResult> {
    let mut axes = Vec::with_capacity(3);
    let mut k = [0.0; 3];
    let mut errors = Vec::new();
    for axis in Axis::ALL {
        match permeability_axis(grid, axis, cfg) {
            Ok(r) => {
                k[axis.index()] = r.k_um2;
                axes.push(r);
            }
            Err(e) => errors.push((axis, e)),
        }
    }
    let mut k_reverse = None;
    if validate_reverse && errors.is_empty() {
        let mut kr = [0.0; 3];
        for axis in Axis::ALL {
            match simulate_axis(grid, axis, cfg, true, false) {
                Ok(r) => {
                    kr[axis.index()] = r.k_um2;
                    axes.push(r);
                }
                Err(e) => errors.push((axis, e)),
            }
        }
        k_reverse = Some(kr);
    }
    if let Some((axis, e)) = errors.into_iter().next() {
        log::error!("permeability along {axis:?} failed: {e}");
        return Err(e);
    }
    let all_converged = axes.iter().all(|a| a.converged);
    Ok(FlowResult {
        k,
        axes,
        k_reverse,
        all_converged,
    })
}

/// Liquid properties entering the capillary and mass-flow formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidProps {
    /// Density, kg/m^3.
    pub rho: f64,
    /// Dynamic viscosity, Pa s.
    pub mu: f64,
    /// Surface tension, N/m.
    pub surface_tension: f64,
    /// Contact angle, radians.
    pub contact_angle: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        FluidProps {
            rho: 997.0,
            mu: 8.9e-4,
            surface_tension: 0.072,
            contact_angle: 30f64.to_radians(),
        }
    }
}

/// Young-Laplace capillary pressure in Pa for a pore radius in micrometres.
pub fn capillary_pressure(fluid: &FluidProps, r_um: f64) -> Result<f64> {
    if !(r_um > 0.0) {
        return Err(Error::InvalidInput(format!("pore radius must be positive, got {r_um}")));
    }
    if fluid.contact_angle.abs() > std::f64::consts::FRAC_PI_2 + 1e-12 {
        return Err(Error::InvalidInput("contact angle must satisfy |theta| <= pi/2".into()));
    }
    let p = 2.0 * fluid.surface_tension * fluid.contact_angle.cos() / (r_um * 1e-6);
    Ok(p.max(0.0))
}
