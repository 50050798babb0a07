//! Voxel grids, reproducible random streams and file IO.
//!
//! All grids use one memory order: row-major with x fastest, so the linear
//! index of `(x, y, z)` is `x + nx * (y + ny * z)`.

mod io;
mod rng;
mod vtk;

pub use io::{read_binary_grid, read_voxel_file, write_voxel_file, FieldKind, GridData, VoxelFile, VoxelHeader};
pub use rng::{derive_stream, SeededRng, RNG_ALGORITHM};
pub use vtk::{export_vtk, VtkValue};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Phase value of pore space.
pub const VOID: u8 = 0;
/// Phase value of solid material.
pub const SOLID: u8 = 1;

/// Smallest edge length accepted by the simulation entry points.
pub const MIN_SIM_DIM: usize = 8;

/// Cartesian axis of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }
}

/// Regular 3-D voxel field with a physical voxel edge length in micrometres.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T> {
    dims: [usize; 3],
    voxel_size: f64,
    data: Vec<T>,
}

/// Two-phase grid (`VOID` / `SOLID`).
pub type BinaryGrid = VoxelGrid<u8>;
/// Real-valued grid.
pub type ScalarGrid = VoxelGrid<f64>;

impl<T: Copy> VoxelGrid<T> {
    pub fn new(dims: [usize; 3], voxel_size: f64, data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!("grid dims must be positive, got {dims:?}")));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel_size}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(VoxelGrid {
            dims,
            voxel_size,
            data,
        })
    }

    /// Grid with every voxel set to `value`.
    pub fn filled(dims: [usize; 3], voxel_size: f64, value: T) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, voxel_size, vec![value; n])
    }

    /// Cubic unit cell of side `cell_um` resolved by `n` voxels per edge.
    pub fn cube(n: usize, cell_um: f64, value: T) -> Result<Self> {
        Self::filled([n, n, n], cell_um / n as f64, value)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    /// Same voxel size, new payload.
    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> VoxelGrid<U> {
        VoxelGrid {
            dims: self.dims,
            voxel_size: self.voxel_size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Relabel axes: axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permute_axes(&self, perm: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(Error::InvalidInput(format!("not an axis permutation: {perm:?}")));
            }
            seen[p] = true;
        }
        let dims = [self.dims[perm[0]], self.dims[perm[1]], self.dims[perm[2]]];
        let mut data = Vec::with_capacity(self.data.len());
        let mut src = [0usize; 3];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    src[perm[0]] = x;
                    src[perm[1]] = y;
                    src[perm[2]] = z;
                    data.push(self.get(src[0], src[1], src[2]));
                }
            }
        }
        Ok(VoxelGrid {
            dims,
            voxel_size: self.voxel_size,
            data,
        })
    }

    /// Fails unless every edge is at least [`MIN_SIM_DIM`].
    pub fn require_sim_dims(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < MIN_SIM_DIM) {
            return Err(Error::InvalidInput(format!(
                "simulation grids need every edge >= {MIN_SIM_DIM}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

impl BinaryGrid {
    /// Checks that the grid holds only `VOID`/`SOLID`.
    pub fn validate_binary(&self) -> Result<()> {
        match self.data.iter().position(|&v| v > SOLID) {
            Some(index) => Err(Error::UnknownPhase {
                value: self.data[index],
                index,
            }),
            None => Ok(()),
        }
    }

    pub fn solid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == SOLID).count()
    }

    pub fn solid_fraction(&self) -> f64 {
        self.solid_count() as f64 / self.len() as f64
    }

    pub fn is_solid(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(x, y, z) == SOLID
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_is_x_fastest() {
        let g = BinaryGrid::filled([3, 4, 5], 1.0, 0).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        assert_eq!(g.coords(g.index(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn permutation_moves_voxels() {
        let mut g = BinaryGrid::filled([2, 3, 4], 1.0, 0).unwrap();
        g.set(1, 2, 3, SOLID);
        let p = g.permute_axes([2, 0, 1]).unwrap();
        assert_eq!(p.dims(), [4, 2, 3]);
        assert_eq!(p.get(3, 1, 2), SOLID);
        assert_eq!(p.solid_count(), 1);
        assert!(g.permute_axes([0, 0, 1]).is_err());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(BinaryGrid::new([2, 2, 2], 1.0, vec![0; 7]).is_err());
        assert!(BinaryGrid::new([2, 2, 2], 0.0, vec![0; 8]).is_err());
        let g = BinaryGrid::new([2, 2, 2], 1.0, vec![0, 1, 2, 0, 0, 0, 0, 0]).unwrap();
        assert!(matches!(g.validate_binary(), Err(Error::UnknownPhase { value: 2, index: 2 })));
    }

    #[test]
    fn unit_cell_voxel_size() {
        let g = BinaryGrid::cube(125, 50.0, VOID).unwrap();
        assert!((g.voxel_size() - 0.4).abs() < 1e-15);
    }
}
