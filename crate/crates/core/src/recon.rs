//! Stochastic reconstruction: filter white noise by the square root of a
//! spectral density, then level-cut the result to an exact solid count.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, ScalarGrid, SeededRng, VoxelGrid, SOLID, VOID};
use crate::sdfgen::{build_sdf, SdfParams, SpectralDensity};

/// Default unit-cell edge in micrometres.
pub const DEFAULT_CELL_UM: f64 = 50.0;

/// In-place 3-D FFT over an x-fastest cube.
pub struct Fft3 {
    n: usize,
    plan: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(n: usize, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            plan: planner.plan_fft(n, direction),
        }
    }

    /// Unnormalized transform.
    pub fn process(&self, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let mut scratch = vec![Complex64::default(); self.plan.get_inplace_scratch_len()];
        // x lines are contiguous
        self.plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::default(); n];
        for z in 0..n {
            for x in 0..n {
                for y in 0..n {
                    line[y] = data[x + n * (y + n * z)];
                }
                self.plan.process_with_scratch(&mut line, &mut scratch);
                for y in 0..n {
                    data[x + n * (y + n * z)] = line[y];
                }
            }
        }
        for y in 0..n {
            for x in 0..n {
                for z in 0..n {
                    line[z] = data[x + n * (y + n * z)];
                }
                self.plan.process_with_scratch(&mut line, &mut scratch);
                for z in 0..n {
                    data[x + n * (y + n * z)] = line[z];
                }
            }
        }
    }
}

/// Forward FFT of a real cube.
pub fn fft3_real(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft3::new(n, FftDirection::Forward).process(&mut data);
    data
}

/// I.i.d. standard-normal white noise on an N^3 lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    n: usize,
    values: Vec<f64>,
    seed: SeededRng,
}

impl NoiseField {
    pub fn generate(n: usize, seed: SeededRng) -> Self {
        let mut rng = seed.rng();
        let values = (0..n * n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        NoiseField { n, values, seed }
    }

    /// Wraps given values; used to build matched realizations in transformed frames.
    pub fn from_values(n: usize, values: Vec<f64>, seed: SeededRng) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(Error::SizeMismatch {
                expected: n * n * n,
                found: values.len(),
            });
        }
        Ok(NoiseField { n, values, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> SeededRng {
        self.seed
    }
}

/// Filters `noise` by the square root of `sdf` and returns the real field.
///
/// The filter is point symmetric, so the inverse transform is real up to
/// rounding and its real part is kept (a modulus would fold the field and
/// destroy its spectrum). Output has voxel size 1; callers rescale.
pub fn reconstruct_field(sdf: &SpectralDensity, noise: &NoiseField) -> Result<ScalarGrid> {
    let n = sdf.n();
    if noise.n() != n {
        return Err(Error::DimMismatch {
            left: [n; 3],
            right: [noise.n(); 3],
        });
    }
    if sdf.is_zero() {
        return VoxelGrid::filled([n; 3], 1.0, 0.0);
    }
    let mut data = fft3_real(noise.values(), n);
    for kz in 0..n {
        for ky in 0..n {
            for kx in 0..n {
                data[kx + n * (ky + n * kz)] *= sdf.at_bin(kx, ky, kz).sqrt();
            }
        }
    }
    Fft3::new(n, FftDirection::Inverse).process(&mut data);
    let scale = 1.0 / (n * n * n) as f64;
    VoxelGrid::new([n; 3], 1.0, data.iter().map(|c| c.re * scale).collect())
}

/// A binary unit cell with its generating design point and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Microstructure {
    pub grid: BinaryGrid,
    pub params: Option<SdfParams>,
    pub seed: Option<SeededRng>,
    pub target_v: f64,
    pub v_real: f64,
}

impl Microstructure {
    pub fn from_grid(grid: BinaryGrid) -> Self {
        let v = grid.solid_fraction();
        Microstructure {
            grid,
            params: None,
            seed: None,
            target_v: v,
            v_real: v,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.dims()[0]
    }

    /// Replaces the grid and refreshes the realized fraction.
    pub fn with_grid(mut self, grid: BinaryGrid) -> Self {
        self.v_real = grid.solid_fraction();
        self.grid = grid;
        self
    }
}

/// Number of solids the level cut places: `round(v * len)`.
pub fn solid_target(v: f64, len: usize) -> usize {
    ((v * len as f64).round() as usize).min(len)
}

/// Marks the `round(v * len)` largest values solid; ties go to the lower index.
pub fn level_cut(field: &ScalarGrid, v: f64) -> Result<Microstructure> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidInput(format!("volume fraction must lie in (0, 1), got {v}")));
    }
    if field.data().iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("field contains NaN".into()));
    }
    let len = field.len();
    let k = solid_target(v, len);
    let vals = field.data();
    let mut order: Vec<u32> = (0..len as u32).collect();
    let mut phase = vec![VOID; len];
    if k > 0 {
        let cmp = |a: &u32, b: &u32| {
            vals[*b as usize]
                .total_cmp(&vals[*a as usize])
                .then(a.cmp(b))
        };
        if k < len {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        for &i in &order[..k] {
            phase[i as usize] = SOLID;
        }
    }
    let grid = VoxelGrid::new(field.dims(), field.voxel_size(), phase)?;
    Ok(Microstructure {
        v_real: k as f64 / len as f64,
        grid,
        params: None,
        seed: None,
        target_v: v,
    })
}

/// Builds the SDF, draws noise, filters and level-cuts one unit cell.
pub fn realize(params: &SdfParams, n: usize, cell_um: f64, seed: SeededRng) -> Result<Microstructure> {
    let sdf = build_sdf(params, n)?;
    realize_from_sdf(&sdf, params, cell_um, &NoiseField::generate(n, seed))
}

/// Realization from a prebuilt SDF and noise field.
pub fn realize_from_sdf(
    sdf: &SpectralDensity,
    params: &SdfParams,
    cell_um: f64,
    noise: &NoiseField,
) -> Result<Microstructure> {
    if !(cell_um > 0.0) {
        return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_um}")));
    }
    let n = sdf.n();
    let field = reconstruct_field(sdf, noise)?;
    let mut m = level_cut(&field, params.v)?;
    m.grid = VoxelGrid::new([n; 3], cell_um / n as f64, m.grid.into_data())?;
    m.params = Some(*params);
    m.seed = Some(noise.seed());
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdfgen::SdfType;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn noise_moments() {
        let n = 32;
        let noise = NoiseField::generate(n, SeededRng::new(42, 0));
        let m = noise.values().iter().sum::<f64>() / (n * n * n) as f64;
        let var = noise.values().iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n * n * n) as f64;
        assert!(m.abs() <= 5.0 / ((n * n * n) as f64).sqrt());
        assert!((var - 1.0).abs() < 0.1);
    }

    #[test]
    fn fft_round_trip() {
        let n = 8;
        let noise = NoiseField::generate(n, SeededRng::new(1, 1));
        let mut d = fft3_real(noise.values(), n);
        Fft3::new(n, FftDirection::Inverse).process(&mut d);
        for (a, b) in d.iter().zip(noise.values()) {
            assert!((a.re / 512.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sdf_gives_zero_field() {
        let sdf = SpectralDensity::from_values(8, vec![0.0; 512]).unwrap();
        let f = reconstruct_field(&sdf, &NoiseField::generate(8, SeededRng::new(0, 0))).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dims_must_match() {
        let sdf = SpectralDensity::from_values(8, vec![0.0; 512]).unwrap();
        let noise = NoiseField::generate(16, SeededRng::new(0, 0));
        assert!(matches!(reconstruct_field(&sdf, &noise), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn exact_counts_and_ties() {
        let f = ScalarGrid::filled([64; 3], 1.0, 0.0).unwrap();
        assert_eq!(level_cut(&f, 0.5).unwrap().grid.solid_count(), 131072);
        let f = ScalarGrid::filled([8; 3], 1.0, 3.0).unwrap();
        let m = level_cut(&f, 0.25).unwrap();
        assert_eq!(m.grid.solid_count(), 128);
        assert!(m.grid.data()[..128].iter().all(|&p| p == SOLID));
        assert!(level_cut(&f, 0.0).is_err());
        assert!(level_cut(&f, 1.0).is_err());
    }

    #[test]
    fn nested_cuts() {
        let noise = NoiseField::generate(16, SeededRng::new(9, 9));
        let f = ScalarGrid::new([16; 3], 1.0, noise.values().to_vec()).unwrap();
        let a = level_cut(&f, 0.3).unwrap();
        let b = level_cut(&f, 0.6).unwrap();
        for (x, y) in a.grid.data().iter().zip(b.grid.data()) {
            assert!(*x <= *y);
        }
    }

    #[test]
    fn realizations_differ_but_share_fraction() {
        let p = SdfParams::new(7.40, 1.22, 1.25, 0.30, 0.4, SdfType::Cyl);
        let ms: Vec<_> = (0..4)
            .map(|s| realize(&p, 32, DEFAULT_CELL_UM, SeededRng::new(s, 0)).unwrap())
            .collect();
        for i in 0..4 {
            assert_eq!(ms[i].v_real, ms[0].v_real);
            for j in 0..i {
                let d = ms[i]
                    .grid
                    .data()
                    .iter()
                    .zip(ms[j].grid.data())
                    .filter(|(a, b)| a != b)
                    .count();
                assert!(d > 0);
            }
        }
        let again = realize(&p, 32, DEFAULT_CELL_UM, SeededRng::new(2, 0)).unwrap();
        assert_eq!(again, ms[2]);
    }

    #[test]
    fn full_shell_is_isotropic() {
        // Directional lag-1..3 autocovariance of the phase map.
        let p = SdfParams::new(5.0, 2.5, FRAC_PI_2, FRAC_PI_2, 0.5, SdfType::Sph);
        let n = 48;
        let m = realize(&p, n, DEFAULT_CELL_UM, SeededRng::new(5, 0)).unwrap();
        let g = &m.grid;
        let v = m.v_real;
        let mut lens = [0.0f64; 3];
        for (a, len) in lens.iter_mut().enumerate() {
            for lag in 1..=3usize {
                let mut s = 0.0;
                for z in 0..n {
                    for y in 0..n {
                        for x in 0..n {
                            let mut c = [x, y, z];
                            c[a] = (c[a] + lag) % n;
                            let p0 = g.get(x, y, z) as f64 - v;
                            let p1 = g.get(c[0], c[1], c[2]) as f64 - v;
                            s += p0 * p1;
                        }
                    }
                }
                *len += s / (n * n * n) as f64 / (v * (1.0 - v));
            }
        }
        let max = lens.iter().cloned().fold(f64::MIN, f64::max);
        let min = lens.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 1.15, "{lens:?}");
    }

    #[test]
    fn wrapped_faces_look_like_interior() {
        let p = SdfParams::new(6.0, 1.0, 1.0, 0.8, 0.45, SdfType::Sph);
        let n = 32;
        let m = realize(&p, n, DEFAULT_CELL_UM, SeededRng::new(11, 0)).unwrap();
        let g = &m.grid;
        for a in 0..3 {
            let (mut wrap, mut inner, mut inner_pairs) = (0usize, 0usize, 0usize);
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        let mut c = [x, y, z];
                        let at_face = c[a] == n - 1;
                        c[a] = (c[a] + 1) % n;
                        let t = (g.get(x, y, z) != g.get(c[0], c[1], c[2])) as usize;
                        if at_face {
                            wrap += t;
                        } else {
                            inner += t;
                            inner_pairs += 1;
                        }
                    }
                }
            }
            let rate = inner as f64 / inner_pairs as f64;
            let pairs = (n * n) as f64;
            let sd = (rate * (1.0 - rate) / pairs).sqrt();
            assert!((wrap as f64 / pairs - rate).abs() <= 3.0 * sd, "axis {a}");
        }
    }
}
