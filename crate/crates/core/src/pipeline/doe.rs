//! Sobol design of experiments over the five design variables plus the SDF type.

use rand::RngCore;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use super::config::Ranges;
use crate::grid::{derive_stream, SeededRng};
use crate::sdfgen::{SdfParams, SdfType};

/// Dimensions drawn per design: r, sigma, theta, phi, v and the type selector.
pub const DOE_DIMS: usize = 6;

/// First `n` nonzero points of the Joe-Kuo Sobol sequence in `dims` dimensions.
/// A nonzero `scramble` applies a seeded digital shift.
pub fn sobol_points(n: usize, dims: usize, scramble: u64) -> Vec<Vec<f64>> {
    let params = JoeKuoD6::minimal();
    let seq = Sobol::<f64>::new(dims, &params);
    let shifts: Vec<u64> = if scramble == 0 {
        vec![0; dims]
    } else {
        let mut rng = SeededRng::new(scramble, derive_stream(&[0x646f65])).rng();
        // keep the 53 bits an f64 point carries
        (0..dims).map(|_| rng.next_u64() & !0x7ff).collect()
    };
    seq.skip(1)
        .take(n)
        .map(|p| {
            p.iter()
                .zip(&shifts)
                .map(|(&u, &s)| {
                    let bits = (u * 18_446_744_073_709_551_616.0) as u64;
                    (bits ^ s) as f64 / 18_446_744_073_709_551_616.0
                })
                .collect()
        })
        .collect()
}

/// Map a unit-cube point onto design parameters.
pub fn point_to_params(u: &[f64], ranges: &Ranges) -> SdfParams {
    let g: Vec<f64> = ranges
        .as_array()
        .iter()
        .zip(u)
        .map(|((lo, hi), t)| lo + t * (hi - lo))
        .collect();
    let t = if u[5] < 0.5 { SdfType::Sph } else { SdfType::Cyl };
    SdfParams::from_genome(&g, t)
}

pub fn sobol_doe(n: usize, ranges: &Ranges, scramble: u64) -> Vec<SdfParams> {
    sobol_points(n, DOE_DIMS, scramble)
        .iter()
        .map(|u| point_to_params(u, ranges))
        .collect()
}
