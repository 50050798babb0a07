//! Voxel file format: one line of JSON header, a newline, then the raw
//! little-endian payload in x-fastest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryGrid, ScalarGrid, SeededRng, VoxelGrid, RNG_ALGORITHM, SOLID};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "sdfwick-voxel";
const FORMAT_VERSION: u32 = 1;

/// What a voxel file stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Phase map, one byte per voxel (0 void, 1 solid).
    Binary,
    /// Generic real field, f64 per voxel.
    Scalar,
    /// Spectral density, f64 per voxel, zero frequency at the array centre.
    Sdf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelHeader {
    pub format: String,
    pub version: u32,
    pub dims: [usize; 3],
    pub voxel_size_um: f64,
    pub kind: FieldKind,
    pub dtype: String,
    /// Generator name and seed pair when the grid came from a random realization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<SeededRng>,
    /// Free-form provenance (e.g. the generating SDF parameters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridData {
    Binary(BinaryGrid),
    Scalar(ScalarGrid),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelFile {
    pub header: VoxelHeader,
    pub grid: GridData,
}

impl VoxelFile {
    pub fn binary(grid: BinaryGrid, seed: Option<SeededRng>) -> Self {
        VoxelFile {
            header: header_for(grid.dims(), grid.voxel_size(), FieldKind::Binary, seed),
            grid: GridData::Binary(grid),
        }
    }

    pub fn scalar(grid: ScalarGrid, kind: FieldKind, seed: Option<SeededRng>) -> Self {
        VoxelFile {
            header: header_for(grid.dims(), grid.voxel_size(), kind, seed),
            grid: GridData::Scalar(grid),
        }
    }

    pub fn with_provenance(mut self, value: serde_json::Value) -> Self {
        self.header.provenance = Some(value);
        self
    }
}

fn header_for(dims: [usize; 3], voxel_size: f64, kind: FieldKind, seed: Option<SeededRng>) -> VoxelHeader {
    VoxelHeader {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        dims,
        voxel_size_um: voxel_size,
        kind,
        dtype: match kind {
            FieldKind::Binary => "u8".into(),
            FieldKind::Scalar | FieldKind::Sdf => "f64le".into(),
        },
        rng: seed.map(|_| RNG_ALGORITHM.to_string()),
        seed,
        provenance: None,
    }
}

pub fn write_voxel_file(file: &VoxelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut header = file.header.clone();
    let payload: Vec<u8> = match &file.grid {
        GridData::Binary(g) => {
            header.dims = g.dims();
            header.voxel_size_um = g.voxel_size();
            header.kind = FieldKind::Binary;
            header.dtype = "u8".into();
            g.data().to_vec()
        }
        GridData::Scalar(g) => {
            header.dims = g.dims();
            header.voxel_size_um = g.voxel_size();
            if header.kind == FieldKind::Binary {
                header.kind = FieldKind::Scalar;
            }
            header.dtype = "f64le".into();
            g.data().iter().flat_map(|v| v.to_le_bytes()).collect()
        }
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let mut out = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    out.write_all(line.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.write_all(&payload))
        .map_err(|e| Error::io(path, e))
}

pub fn read_voxel_file(path: impl AsRef<Path>) -> Result<VoxelFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header terminator".into()))?;
    let header: VoxelHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(Error::MalformedHeader(format!("unexpected format tag {:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {}", header.version)));
    }
    let payload = &bytes[split + 1..];
    let n: usize = header.dims.iter().product();
    let grid = match (header.kind, header.dtype.as_str()) {
        (FieldKind::Binary, "u8") => {
            if payload.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: payload.len(),
                });
            }
            let g = VoxelGrid::new(header.dims, header.voxel_size_um, payload.to_vec())?;
            g.validate_binary()?;
            GridData::Binary(g)
        }
        (FieldKind::Scalar | FieldKind::Sdf, "f64le") => {
            if payload.len() != 8 * n {
                return Err(Error::SizeMismatch {
                    expected: 8 * n,
                    found: payload.len(),
                });
            }
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            GridData::Scalar(VoxelGrid::new(header.dims, header.voxel_size_um, data)?)
        }
        (kind, dtype) => {
            return Err(Error::MalformedHeader(format!("kind {kind:?} with dtype {dtype:?}")));
        }
    };
    Ok(VoxelFile { header, grid })
}

/// Reads a file that must hold a phase map.
pub fn read_binary_grid(path: impl AsRef<Path>) -> Result<BinaryGrid> {
    match read_voxel_file(path)?.grid {
        GridData::Binary(g) => Ok(g),
        GridData::Scalar(g) => {
            // Accept scalar files that happen to hold 0/1 values only.
            let mut out = Vec::with_capacity(g.len());
            for (index, &v) in g.data().iter().enumerate() {
                if v == 0.0 || v == 1.0 {
                    out.push(v as u8);
                } else {
                    return Err(Error::UnknownPhase {
                        value: v.clamp(0.0, 255.0) as u8,
                        index,
                    });
                }
            }
            debug_assert!(out.iter().all(|&v| v <= SOLID));
            VoxelGrid::new(g.dims(), g.voxel_size(), out)
        }
    }
}
