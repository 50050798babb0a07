//! Parameterized spectral density functions.
//!
//! Two shape families are built from a partial ring of radius `r` in the x-y
//! plane: `Sph` sweeps it into a patch of a sphere, `Cyl` extrudes it along z
//! by `h = r tan(phi / 2)`. The radial profile is a Gaussian of width `sigma`
//! centred on `r`. Folding every offset to absolute coordinates realizes the
//! reflection across the y-z plane together with point symmetry.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, VoxelGrid};

/// SDF shape family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SdfType {
    Sph,
    Cyl,
}

impl SdfType {
    /// Numeric encoding used as a quantitative input (0 for Sph, 1 for Cyl).
    pub fn code(self) -> f64 {
        match self {
            SdfType::Sph => 0.0,
            SdfType::Cyl => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            SdfType::Sph => 0,
            SdfType::Cyl => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<SdfType> {
        match i {
            0 => Some(SdfType::Sph),
            1 => Some(SdfType::Cyl),
            _ => None,
        }
    }
}

impl std::fmt::Display for SdfType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SdfType::Sph => "sph",
            SdfType::Cyl => "cyl",
        })
    }
}

impl std::str::FromStr for SdfType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sph" => Ok(SdfType::Sph),
            "cyl" => Ok(SdfType::Cyl),
            other => Err(Error::InvalidInput(format!("unknown SDF type {other:?}"))),
        }
    }
}

/// The design variables of one SDF family point.
///
/// `r` and `sigma` are in frequency-index units of the N^3 lattice, angles in
/// radians, `v` is the target solid volume fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfParams {
    pub r: f64,
    pub sigma: f64,
    pub theta: f64,
    pub phi: f64,
    pub v: f64,
    pub sdf_type: SdfType,
}

impl SdfParams {
    pub fn new(r: f64, sigma: f64, theta: f64, phi: f64, v: f64, sdf_type: SdfType) -> Self {
        SdfParams {
            r,
            sigma,
            theta,
            phi,
            v,
            sdf_type,
        }
    }

    /// Extrusion half-height of the Cyl shape.
    pub fn h(&self) -> f64 {
        self.r * (self.phi / 2.0).tan()
    }

    /// Quantitative input vector `[r, sigma, theta, phi, v]`.
    pub fn genome(&self) -> [f64; 5] {
        [self.r, self.sigma, self.theta, self.phi, self.v]
    }

    pub fn from_genome(g: &[f64], sdf_type: SdfType) -> Self {
        SdfParams::new(g[0], g[1], g[2], g[3], g[4], sdf_type)
    }

    /// Basic validity: finite values, positive width, angles in `[0, pi/2]`, `0 < v < 1`.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.r, self.sigma, self.theta, self.phi, self.v]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput(format!("non-finite SDF parameters {self:?}")));
        }
        if self.r < 0.0 {
            return Err(Error::InvalidInput(format!("r must be >= 0, got {}", self.r)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", self.sigma)));
        }
        for (name, a) in [("theta", self.theta), ("phi", self.phi)] {
            if !(0.0..=FRAC_PI_2 + 1e-12).contains(&a) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, pi/2], got {a}")));
            }
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            return Err(Error::InvalidInput(format!("v must lie in (0, 1), got {}", self.v)));
        }
        Ok(())
    }
}

/// Gaussian radial power spectrum evaluated at frequency distance `s`.
pub fn radial_spectrum(s: f64, r: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
    }
    if s < 0.0 {
        return Err(Error::InvalidInput(format!("frequency distance must be >= 0, got {s}")));
    }
    let z = (s - r) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

#[inline]
fn gaussian(s: f64, r: f64, sigma: f64) -> f64 {
    let z = (s - r) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Angular membership of an offset in the Sph patch.
///
/// The ring arc (latitude towards y bounded by theta) is swept about y by
/// +-phi; the same arc swept in the other order (azimuth towards y, latitude
/// towards z) is included so swapping (y, theta) with (z, phi) maps the shape
/// onto itself exactly.
#[inline]
fn sph_member(dx: f64, dy: f64, dz: f64, theta: f64, phi: f64) -> bool {
    let (ax, ay, az) = (dx.abs(), dy.abs(), dz.abs());
    let rho = (dx * dx + dy * dy + dz * dz).sqrt();
    let lat_y = (ay / rho).min(1.0).asin();
    let lat_z = (az / rho).min(1.0).asin();
    (lat_y <= theta && az.atan2(ax) <= phi) || (ay.atan2(ax) <= theta && lat_z <= phi)
}

#[inline]
fn cyl_member(dx: f64, dy: f64, dz: f64, theta: f64, h: f64) -> bool {
    dy.abs().atan2(dx.abs()) <= theta && dz.abs() <= h
}

/// Value of the SDF at integer offset `(dx, dy, dz)` from the zero frequency.
pub fn sdf_value(params: &SdfParams, dx: i64, dy: i64, dz: i64) -> f64 {
    if dx == 0 && dy == 0 && dz == 0 {
        return 0.0;
    }
    let (fx, fy, fz) = (dx as f64, dy as f64, dz as f64);
    match params.sdf_type {
        SdfType::Sph => {
            if sph_member(fx, fy, fz, params.theta, params.phi) {
                gaussian((fx * fx + fy * fy + fz * fz).sqrt(), params.r, params.sigma)
            } else {
                0.0
            }
        }
        SdfType::Cyl => {
            if cyl_member(fx, fy, fz, params.theta, params.h()) {
                gaussian((fx * fx + fy * fy).sqrt(), params.r, params.sigma)
            } else {
                0.0
            }
        }
    }
}

/// Radial coordinate the SDF weights by: spherical for Sph, cylindrical for Cyl.
pub fn radial_coordinate(sdf_type: SdfType, dx: f64, dy: f64, dz: f64) -> f64 {
    match sdf_type {
        SdfType::Sph => (dx * dx + dy * dy + dz * dz).sqrt(),
        SdfType::Cyl => (dx * dx + dy * dy).sqrt(),
    }
}

/// Discrete N^3 spectral density with the zero frequency at index `N / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensity {
    n: usize,
    values: Vec<f64>,
}

impl SpectralDensity {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n * n {
            return Err(Error::SizeMismatch {
                expected: n * n * n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("spectral density must be finite and >= 0".into()));
        }
        Ok(SpectralDensity { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> usize {
        self.n / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at signed offset from the centre; offsets wrap periodically.
    pub fn at_offset(&self, dx: i64, dy: i64, dz: i64) -> f64 {
        let n = self.n as i64;
        let c = self.center() as i64;
        let w = |d: i64| ((d + c).rem_euclid(n)) as usize;
        self.values[w(dx) + self.n * (w(dy) + self.n * w(dz))]
    }

    /// Value aligned with unshifted FFT bin `(kx, ky, kz)`.
    #[inline]
    pub fn at_bin(&self, kx: usize, ky: usize, kz: usize) -> f64 {
        let c = self.center();
        let n = self.n;
        let s = |k: usize| (k + c) % n;
        self.values[s(kx) + n * (s(ky) + n * s(kz))]
    }

    pub fn scaled(&self, c: f64) -> SpectralDensity {
        SpectralDensity {
            n: self.n,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// As a scalar grid for export; voxel size is one frequency index.
    pub fn to_grid(&self) -> ScalarGrid {
        VoxelGrid::new([self.n; 3], 1.0, self.values.clone()).expect("consistent sdf dims")
    }
}

/// Builds the N^3 SDF for `params`.
pub fn build_sdf(params: &SdfParams, n: usize) -> Result<SpectralDensity> {
    if n < 8 {
        return Err(Error::InvalidInput(format!("SDF resolution must be >= 8, got {n}")));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", params.sigma)));
    }
    if ![params.r, params.theta, params.phi].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite SDF parameters {params:?}")));
    }
    let c = (n / 2) as i64;
    let mut values = Vec::with_capacity(n * n * n);
    for k in 0..n as i64 {
        for j in 0..n as i64 {
            for i in 0..n as i64 {
                values.push(sdf_value(params, i - c, j - c, k - c));
            }
        }
    }
    let sdf = SpectralDensity { n, values };
    if sdf.is_zero() {
        return Err(Error::DegenerateSdf);
    }
    Ok(sdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn peak_value() {
        let f = radial_spectrum(7.40, 7.40, 1.22).unwrap();
        assert_relative_eq!(f, 1.0 / (1.22 * (2.0 * PI).sqrt()), max_relative = 1e-15);
        assert!((f - 0.3270).abs() < 5e-5);
        let tail = radial_spectrum(7.40 + 3.0 * 1.22, 7.40, 1.22).unwrap();
        assert_relative_eq!(tail / f, (-4.5f64).exp(), max_relative = 1e-12);
        assert!((tail / f - 0.0111).abs() < 1e-4);
        assert!(radial_spectrum(1.0, 1.0, 0.0).is_err());
        assert!(radial_spectrum(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn full_sweep_is_a_shell() {
        let p = SdfParams::new(5.0, 0.8, FRAC_PI_2, FRAC_PI_2, 0.5, SdfType::Sph);
        let sdf = build_sdf(&p, 24).unwrap();
        let c = 12i64;
        for k in -c..c {
            for j in -c..c {
                for i in -c..c {
                    let d = ((i * i + j * j + k * k) as f64).sqrt();
                    if d > 0.0 && (d - p.r).abs() <= 4.0 * p.sigma {
                        assert!(sdf.at_offset(i, j, k) > 0.0, "({i},{j},{k})");
                    }
                }
            }
        }
        assert_eq!(sdf.at_offset(0, 0, 0), 0.0);
    }

    #[test]
    fn squat_cylinder_height() {
        let p = SdfParams::new(7.40, 1.22, 1.25, 0.30, 0.5, SdfType::Cyl);
        assert!((p.h() - 1.118).abs() < 5e-4);
        let sdf = build_sdf(&p, 32).unwrap();
        // |dz| <= 1.118 keeps only the planes dz in {-1, 0, 1}.
        assert!(sdf.at_offset(7, 0, 1) > 0.0);
        assert_eq!(sdf.at_offset(7, 0, 2), 0.0);
        // Cylindrical radius: the value does not change with dz inside the slab.
        assert_eq!(sdf.at_offset(7, 2, 1), sdf.at_offset(7, 2, 0));
    }

    #[test]
    fn unreachable_ring_is_degenerate() {
        let p = SdfParams::new(400.0, 0.06, 0.5, 0.5, 0.5, SdfType::Sph);
        assert!(matches!(build_sdf(&p, 16), Err(Error::DegenerateSdf)));
    }

    #[test]
    fn axis_swap_maps_sph_onto_itself() {
        let n = 64usize;
        for (a, b) in [(0.3, 1.2), (0.785, 0.785), (0.2, 1.5), (1.0, 1.3)] {
            let pa = SdfParams::new(7.0, 1.0, a, b, 0.5, SdfType::Sph);
            let pb = SdfParams::new(7.0, 1.0, b, a, 0.5, SdfType::Sph);
            let sa = build_sdf(&pa, n).unwrap();
            let sb = build_sdf(&pb, n).unwrap();
            let c = (n / 2) as i64;
            let (mut inter, mut union) = (0usize, 0usize);
            for k in -c..c {
                for j in -c..c {
                    for i in -c..c {
                        let x = sa.at_offset(i, k, j) > 0.0;
                        let y = sb.at_offset(i, j, k) > 0.0;
                        inter += (x && y) as usize;
                        union += (x || y) as usize;
                    }
                }
            }
            let jaccard = inter as f64 / union as f64;
            assert!(jaccard >= 0.95, "jaccard {jaccard} for ({a}, {b})");
        }
    }

    fn arb_params() -> impl Strategy<Value = SdfParams> {
        (3.0f64..10.0, 0.06f64..3.0, 0.15f64..FRAC_PI_2, 0.15f64..FRAC_PI_2, prop::bool::ANY).prop_map(
            |(r, s, t, p, cyl)| SdfParams::new(r, s, t, p, 0.5, if cyl { SdfType::Cyl } else { SdfType::Sph }),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn point_symmetric(p in arb_params()) {
            let n = 16usize;
            let sdf = build_sdf(&p, n).unwrap();
            let c = (n / 2) as i64;
            for k in -c..c {
                for j in -c..c {
                    for i in -c..c {
                        prop_assert_eq!(sdf.at_offset(i, j, k), sdf.at_offset(-i, -j, -k));
                    }
                }
            }
            prop_assert!(sdf.values().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn support_grows_with_sweep(p in arb_params(), dt in 0.0f64..0.5, dp in 0.0f64..0.5) {
            let n = 16usize;
            let small = build_sdf(&p, n).unwrap();
            let mut q = p;
            q.theta = (p.theta + dt).min(FRAC_PI_2);
            q.phi = (p.phi + dp).min(FRAC_PI_2);
            let big = build_sdf(&q, n).unwrap();
            for (a, b) in small.values().iter().zip(big.values()) {
                if *a > 0.0 {
                    prop_assert!(*b > 0.0);
                }
            }
        }
    }
}
