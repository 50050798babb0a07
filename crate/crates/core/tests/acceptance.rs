//! Acceptance checks, one per criterion. Runs as a plain binary so every
//! criterion prints a single PASS/FAIL line; the exit status is non-zero if
//! any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdfwick::grid::{derive_stream, Axis, BinaryGrid, SeededRng, VoxelGrid, SOLID, VOID};
use sdfwick::heat::{conductivity_axis, conductivity_tensor, HeatConfig};
use sdfwick::lbm::{permeability_axis, permeability_tensor, LbmConfig};
use sdfwick::morph::{label_clusters, mean_pore_radius, remove_floating, Connectivity};
use sdfwick::objectives::{delta_p_uc, f1, f2, orient, Orientation, SystemConfig};
use sdfwick::optimize::{
    dominates, igd, nondominated_sort, run_nsga2, sbx_unclipped, zdt1, zdt1_front, GaConfig, ParetoIndividual,
};
use sdfwick::pipeline::campaign::{front_path, table_path};
use sdfwick::pipeline::{run_campaign, CampaignConfig};
use sdfwick::recon::{fft3_real, realize, realize_from_sdf, reconstruct_field, solid_target, NoiseField};
use sdfwick::sdfgen::{build_sdf, radial_coordinate, SdfParams, SdfType};
use sdfwick::surrogate::{nrmse, GpData, GroupSpec, LmgpModel, LmgpSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn random_params(rng: &mut ChaCha8Rng) -> SdfParams {
    let t = if rng.random::<bool>() { SdfType::Sph } else { SdfType::Cyl };
    SdfParams::new(
        rng.random_range(3.0..10.0),
        rng.random_range(0.06..3.0),
        rng.random_range(0.15..PI / 2.0),
        rng.random_range(0.15..PI / 2.0),
        rng.random_range(0.15..0.7),
        t,
    )
}

fn quick_lbm() -> LbmConfig {
    LbmConfig {
        window: 1000,
        ..LbmConfig::default()
    }
}

// ---------------------------------------------------------------- 1

/// Square-duct permeability over a^2 from the Fourier series, odd terms up to `terms`.
fn duct_series(terms: usize) -> f64 {
    let s: f64 = (0..terms)
        .map(|i| {
            let n = (2 * i + 1) as f64;
            (n * PI / 2.0).tanh() / n.powi(5)
        })
        .sum();
    (1.0 - 192.0 / PI.powi(5) * s) / 12.0
}

fn lbm_duct() -> Outcome {
    let oracle = duct_series(200);
    if rel(oracle, 0.035144) > 1e-4 {
        return Err(format!("series oracle gives {oracle}"));
    }
    let a = 64usize;
    let duct = BinaryGrid::filled([a; 3], 1.0, VOID).unwrap();
    // settling time scales as a^2 / viscosity; tau 1.5 doubles the viscosity of the default
    let cfg = LbmConfig {
        tau: 1.5,
        ..quick_lbm()
    };
    let t = Instant::now();
    let flow = permeability_axis(&duct, Axis::Z, &cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let duct_ratio = flow.k_lattice / (a * a) as f64;
    let duct_err = rel(duct_ratio, 0.035144);

    let h = 16usize;
    let gap = BinaryGrid::filled([32 * h, h, h], 1.0, VOID).unwrap();
    let g = permeability_axis(&gap, Axis::Z, &cfg).map_err(|e| e.to_string())?;
    let gap_err = rel(g.k_lattice, (h * h) as f64 / 12.0);
    check(
        duct_err <= 0.08 && secs <= 300.0 && gap_err <= 0.10 && flow.converged && g.converged,
        format!(
            "tau 1.5: duct k/a^2 {duct_ratio:.6} (series {oracle:.6}, err {:.2}%, {} iters, {secs:.0} s); gap H=16 err {:.2}%",
            100.0 * duct_err,
            flow.iterations,
            100.0 * gap_err
        ),
    )
}

// ---------------------------------------------------------------- 2

fn lbm_reverse() -> Outcome {
    let p = SdfParams::new(5.0, 1.0, 0.5, 1.3, 0.35, SdfType::Cyl);
    let m = realize(&p, 48, 50.0, SeededRng::new(11, 0)).map_err(|e| e.to_string())?;
    let (clean, _) = remove_floating(&m.grid, Connectivity::Face6);
    let flow = permeability_tensor(&clean, &quick_lbm(), true).map_err(|e| e.to_string())?;
    let rev = flow.k_reverse.ok_or("no reverse runs")?;
    let mismatch = flow.reverse_mismatch().unwrap();
    let kmax = flow.k.iter().cloned().fold(0.0, f64::max);
    let kmin = flow.k.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        mismatch <= 0.02 && kmin > 0.0 && kmax / kmin > 1.1,
        format!(
            "k {:?} um^2, reversed {:?}, anisotropy {:.2}, worst mismatch {:.3}%",
            flow.k.map(|k| (k * 1e4).round() / 1e4),
            rev.map(|k| (k * 1e4).round() / 1e4),
            kmax / kmin,
            100.0 * mismatch
        ),
    )
}

// ---------------------------------------------------------------- 3

fn face_neighbors(dims: [usize; 3], i: usize) -> impl Iterator<Item = usize> {
    let [nx, ny, nz] = dims;
    let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
    let mut out = Vec::with_capacity(6);
    if x > 0 {
        out.push(i - 1);
    }
    if x + 1 < nx {
        out.push(i + 1);
    }
    if y > 0 {
        out.push(i - nx);
    }
    if y + 1 < ny {
        out.push(i + nx);
    }
    if z > 0 {
        out.push(i - nx * ny);
    }
    if z + 1 < nz {
        out.push(i + nx * ny);
    }
    out.into_iter()
}

/// Dense resistor network: unit bonds between face-adjacent solids, half-cell
/// bonds (conductance 2) to the fixed-temperature faces. Returns k_eff / k_solid.
fn resistor_oracle(grid: &BinaryGrid, axis: usize) -> f64 {
    let dims = grid.dims();
    let len = grid.len();
    let coord = |i: usize| [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])][axis];
    let solid: Vec<bool> = grid.data().iter().map(|&p| p == SOLID).collect();
    // components touching neither face carry no heat and would leave the system singular
    let mut keep = vec![false; len];
    let mut seen = vec![false; len];
    for s in 0..len {
        if !solid[s] || seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            for j in face_neighbors(dims, i) {
                if solid[j] && !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                    q.push_back(j);
                }
            }
        }
        if comp.iter().any(|&i| coord(i) == 0 || coord(i) == dims[axis] - 1) {
            for i in comp {
                keep[i] = true;
            }
        }
    }
    let idx: Vec<usize> = (0..len).filter(|&i| keep[i]).collect();
    if idx.is_empty() {
        return 0.0;
    }
    let mut pos = vec![usize::MAX; len];
    for (k, &i) in idx.iter().enumerate() {
        pos[i] = k;
    }
    let n = idx.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        for j in face_neighbors(dims, i) {
            if keep[j] {
                a[(k, k)] += 1.0;
                a[(k, pos[j])] -= 1.0;
            }
        }
        if coord(i) == 0 {
            a[(k, k)] += 2.0;
            b[k] += 2.0;
        }
        if coord(i) == dims[axis] - 1 {
            a[(k, k)] += 2.0;
        }
    }
    let t = a.cholesky().expect("network matrix is SPD").solve(&b);
    let q: f64 = idx
        .iter()
        .enumerate()
        .filter(|(_, &i)| coord(i) == 0)
        .map(|(k, _)| 2.0 * (1.0 - t[k]))
        .sum();
    let cross = (dims[0] * dims[1] * dims[2] / dims[axis]) as f64;
    q * dims[axis] as f64 / cross
}

fn columns(n: usize, axis: usize) -> BinaryGrid {
    let mut g = BinaryGrid::filled([n; 3], 1.0, VOID).unwrap();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let c = [x, y, z];
                let (u, w) = (c[(axis + 1) % 3], c[(axis + 2) % 3]);
                if u % 4 < 2 && w % 3 == 0 {
                    g.set(x, y, z, SOLID);
                }
            }
        }
    }
    g
}

fn conduction_oracles() -> Outcome {
    let ks = 400.0;
    let tight = HeatConfig {
        k_solid: ks,
        cg_tol: 1e-13,
        max_cg_iters: 200_000,
        ..HeatConfig::default()
    };
    let solid = BinaryGrid::filled([16; 3], 1.0, SOLID).unwrap();
    let r = conductivity_tensor(&solid, &tight).map_err(|e| e.to_string())?;
    let err_solid = r.k_eff.iter().map(|k| rel(*k, ks)).fold(0.0, f64::max);

    let mut err_cols: f64 = 0.0;
    for axis in 0..3 {
        let g = columns(24, axis);
        let k = conductivity_axis(&g, Axis::ALL[axis], &tight).map_err(|e| e.to_string())?;
        err_cols = err_cols.max(rel(k, g.solid_fraction() * ks));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut err_net: f64 = 0.0;
    let mut cases = 0;
    for c in 0..10 {
        let g = if c < 5 {
            let v = rng.random_range(0.35..0.8);
            let data = (0..12 * 12 * 12).map(|_| if rng.random::<f64>() < v { SOLID } else { VOID }).collect();
            VoxelGrid::new([12; 3], 1.0, data).unwrap()
        } else {
            let p = random_params(&mut rng);
            match realize(&p, 12, 1.0, SeededRng::new(3, c)) {
                Ok(m) => m.grid,
                Err(_) => continue,
            }
        };
        for axis in 0..3 {
            let want = resistor_oracle(&g, axis) * ks;
            let got = conductivity_axis(&g, Axis::ALL[axis], &tight).map_err(|e| e.to_string())?;
            // a network that does not span carries only roundoff
            let e = if want > 1e-10 * ks { rel(got, want) } else { (got - want).abs() / ks };
            err_net = err_net.max(e);
            cases += 1;
        }
    }

    let default = HeatConfig {
        k_solid: ks,
        ..HeatConfig::default()
    };
    let mut worst_ratio: f64 = 0.0;
    let mut done = 0;
    let mut i = 0u64;
    while done < 100 {
        i += 1;
        let p = random_params(&mut rng);
        let Ok(m) = realize(&p, 48, 50.0, SeededRng::new(4, i)) else { continue };
        let r = conductivity_tensor(&m.grid, &default).map_err(|e| e.to_string())?;
        for k in r.k_eff {
            worst_ratio = worst_ratio.max(k / (m.v_real * ks));
        }
        done += 1;
    }
    check(
        err_solid <= 1e-6 && err_cols <= 1e-6 && err_net <= 1e-8 && worst_ratio <= 1.0,
        format!(
            "all-solid err {err_solid:.1e}; columns err {err_cols:.1e}; network err {err_net:.1e} over {cases} solves; \
             max k/(v k_s) {worst_ratio:.6} over 100 structures"
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Share of the field's spectral power whose radial frequency lies in [r - 4s, r + 4s].
fn band_power(values: &[f64], n: usize, p: &SdfParams) -> f64 {
    let spec = fft3_real(values, n);
    let off = |k: usize| if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    let (lo, hi) = (p.r - 4.0 * p.sigma, p.r + 4.0 * p.sigma);
    let (mut inside, mut total) = (0.0, 0.0);
    for kz in 0..n {
        for ky in 0..n {
            for kx in 0..n {
                let pw = spec[kx + n * (ky + n * kz)].norm_sqr();
                let s = radial_coordinate(p.sdf_type, off(kx), off(ky), off(kz));
                total += pw;
                if s >= lo && s <= hi {
                    inside += pw;
                }
            }
        }
    }
    inside / total
}

fn reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = [16usize, 20, 24, 32];
    let mut pairs = 0;
    let mut count_bad = 0;
    let mut worst_band: f64 = 1.0;
    let mut scale_bad = 0;
    let mut det_bad = 0;
    let mut attempt = 0u64;
    while pairs < 200 {
        attempt += 1;
        let p = random_params(&mut rng);
        let n = sizes[rng.random_range(0..sizes.len())];
        let seed = SeededRng::new(rng.random(), attempt);
        let Ok(sdf) = build_sdf(&p, n) else { continue };
        let noise = NoiseField::generate(n, seed);
        let m = realize_from_sdf(&sdf, &p, 1.0, &noise).map_err(|e| e.to_string())?;
        if m.grid.solid_count() != solid_target(p.v, n * n * n)
            || m.grid.solid_count() != (p.v * (n * n * n) as f64).round() as usize
        {
            count_bad += 1;
        }
        let field = reconstruct_field(&sdf, &noise).map_err(|e| e.to_string())?;
        worst_band = worst_band.min(band_power(field.data(), n, &p));
        if pairs % 10 == 0 {
            for c in [1e-6, 0.37, 42.0, 1e9] {
                let scaled = realize_from_sdf(&sdf.scaled(c), &p, 1.0, &noise).map_err(|e| e.to_string())?;
                scale_bad += (scaled.grid != m.grid) as usize;
            }
            let again = realize(&p, n, 1.0, seed).map_err(|e| e.to_string())?;
            det_bad += (again.grid.data() != m.grid.data() || again.v_real.to_bits() != m.v_real.to_bits()) as usize;
        }
        pairs += 1;
    }
    check(
        count_bad == 0 && worst_band >= 0.99 && scale_bad == 0 && det_bad == 0,
        format!(
            "{pairs} pairs: count mismatches {count_bad}, min band power {:.4}%, scale mismatches {scale_bad}/80, \
             repeat mismatches {det_bad}/20",
            100.0 * worst_band
        ),
    )
}

// ---------------------------------------------------------------- 5

fn all_neighbors(dims: [usize; 3], i: usize, full: bool) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
    let mut out = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let m = dx.abs() + dy.abs() + dz.abs();
                if m == 0 || (!full && m > 1) {
                    continue;
                }
                let (a, b, c) = (x + dx, y + dy, z + dz);
                if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                    continue;
                }
                out.push(a as usize + nx * (b as usize + ny * c as usize));
            }
        }
    }
    out
}

/// Breadth-first flood fill in index order: labels and per-cluster face masks.
fn flood_fill(grid: &BinaryGrid, full: bool) -> (Vec<u32>, Vec<u8>) {
    let dims = grid.dims();
    let mut labels = vec![0u32; grid.len()];
    let mut faces = Vec::new();
    let mut next = 0u32;
    for s in 0..grid.len() {
        if grid.data()[s] != SOLID || labels[s] != 0 {
            continue;
        }
        next += 1;
        let mut mask = 0u8;
        labels[s] = next;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            let c = grid.coords(i);
            for a in 0..3 {
                if c[a] == 0 {
                    mask |= 1 << (2 * a);
                }
                if c[a] == dims[a] - 1 {
                    mask |= 1 << (2 * a + 1);
                }
            }
            for j in all_neighbors(dims, i, full) {
                if grid.data()[j] == SOLID && labels[j] == 0 {
                    labels[j] = next;
                    q.push_back(j);
                }
            }
        }
        faces.push(mask);
    }
    (labels, faces)
}

fn morphology() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut label_bad = 0;
    let mut idem_bad = 0;
    let mut float_bad = 0;
    for _ in 0..500 {
        let dims = [rng.random_range(1..=24), rng.random_range(1..=24), rng.random_range(1..=24)];
        let v = rng.random_range(0.05..0.9);
        let len = dims[0] * dims[1] * dims[2];
        let data = (0..len).map(|_| if rng.random::<f64>() < v { SOLID } else { VOID }).collect();
        let g = VoxelGrid::new(dims, 1.0, data).unwrap();
        for (conn, full) in [(Connectivity::Face6, false), (Connectivity::Full26, true)] {
            let lab = label_clusters(&g, conn);
            let (labels, faces) = flood_fill(&g, full);
            if lab.labels != labels || lab.faces != faces {
                label_bad += 1;
            }
            let (once, _) = remove_floating(&g, conn);
            let (twice, dv) = remove_floating(&once, conn);
            if twice != once || dv != 0.0 {
                idem_bad += 1;
            }
            if flood_fill(&once, full).1.iter().any(|&m| m == 0) {
                float_bad += 1;
            }
        }
    }
    check(
        label_bad == 0 && idem_bad == 0 && float_bad == 0,
        format!("500 grids x 2 connectivities: label mismatches {label_bad}, non-idempotent {idem_bad}, floating after removal {float_bad}"),
    )
}

// ---------------------------------------------------------------- 6

fn three_source(seed: u64) -> GpData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut l = Vec::new();
    let mut y = Vec::new();
    // high is exact, mid slightly biased, low strongly biased
    for (lv, n, bias) in [(0usize, 10, 0.0), (1, 20, 0.15), (2, 30, 1.2)] {
        for _ in 0..n {
            let p: [f64; 2] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let f = (5.0 * p[0]).sin() * (1.0 + p[1]) + p[1];
            y.push(f + bias * ((4.0 * p[1]).cos() + p[0]));
            x.push(p.to_vec());
            l.push(vec![lv]);
        }
    }
    GpData::new(x, l, y)
}

fn surrogate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<Vec<f64>> = (0..25)
        .map(|_| vec![rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0)])
        .collect();
    let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + 0.5 * p[1] * p[1] + p[0] * p[1]).collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let data = GpData::new(x.clone(), vec![vec![]; 25], y.clone());
    let m = LmgpModel::fit(&data, &LmgpSpec { n_starts: 4, ..Default::default() }).map_err(|e| e.to_string())?;
    let interp = x
        .iter()
        .zip(&y)
        .map(|(p, v)| (m.predict(p, &[]).mean - v).abs() / sd)
        .fold(0.0, f64::max);

    let spec = LmgpSpec {
        nugget_group: Some(0),
        n_starts: 4,
        ..LmgpSpec::new(vec![GroupSpec::new("fidelity", 3)])
    };
    let fused = LmgpModel::fit(&three_source(99), &spec).map_err(|e| e.to_string())?;
    let a: f64 = 1.1;
    let moves = [
        fused.transform_latent(0, [[a.cos(), -a.sin()], [a.sin(), a.cos()]], [0.7, -3.0]),
        fused.transform_latent(0, [[-1.0, 0.0], [0.0, 1.0]], [2.0, 0.5]),
    ];
    let mut gauge: f64 = 0.0;
    for moved in moves {
        let moved = moved.map_err(|e| e.to_string())?;
        for lv in 0..3 {
            for t in [0.05, 0.3, 0.62, 0.97] {
                let p = [t, 1.0 - 0.8 * t];
                let (p0, p1) = (fused.predict(&p, &[lv]), moved.predict(&p, &[lv]));
                gauge = gauge.max((p0.mean - p1.mean).abs() / p0.mean.abs().max(1.0));
                gauge = gauge.max((p0.variance - p1.variance).abs() / fused.prior_variance());
            }
        }
    }

    let mut ordered = 0;
    for seed in 0..10 {
        let m = LmgpModel::fit(&three_source(seed), &LmgpSpec { seed, ..spec.clone() }).map_err(|e| e.to_string())?;
        let h = m.hyper();
        ordered += (h.latent_distance(0, 0, 1) < h.latent_distance(0, 0, 2)) as usize;
    }
    let hand = nrmse(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
    check(
        interp <= 1e-6 && gauge <= 1e-10 && ordered >= 8 && (hand - 1.0).abs() <= 1e-15,
        format!(
            "interpolation {interp:.1e} std; gauge change {gauge:.1e}; mid closer than low in {ordered}/10 seeds; nrmse {hand}"
        ),
    )
}

// ---------------------------------------------------------------- 7

fn better(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

fn brute_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| better(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        out.push(front);
    }
    out
}

fn nsga2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sort_bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=60);
        let m = rng.random_range(2..=4);
        let coarse = rng.random::<bool>();
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| if coarse { rng.random_range(0..5) as f64 } else { rng.random_range(-1.0..1.0) })
                    .collect()
            })
            .collect();
        let mut got = nondominated_sort(&pts);
        for f in &mut got {
            f.sort_unstable();
        }
        if got != brute_fronts(&pts) {
            sort_bad += 1;
        }
        if n >= 2 && dominates(&pts[0], &pts[1]) != better(&pts[0], &pts[1]) {
            sort_bad += 1;
        }
    }

    let cfg = GaConfig {
        sbx_prob: 1.0,
        sbx_var_prob: 1.0,
        bounds: vec![(0.0, 1.0); 5],
        ..GaConfig::default()
    };
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let (c1, c2) = sbx_unclipped(&a, &b, &cfg, &mut rng);
        for i in 0..5 {
            drift = drift.max(((c1[i] + c2[i]) - (a[i] + b[i])).abs() / 2.0);
        }
    }

    let zcfg = GaConfig {
        bounds: vec![(0.0, 1.0); 30],
        seed: 1,
        ..GaConfig::default()
    };
    let t = Instant::now();
    let res = run_nsga2(&zcfg, |x| Ok(zdt1(x).iter().map(|v| -v).collect())).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let front: Vec<Vec<f64>> = res.front.iter().map(|i| i.objectives.iter().map(|v| -v).collect()).collect();
    let reference: Vec<Vec<f64>> = zdt1_front(1000).iter().map(|p| p.to_vec()).collect();
    let d = igd(&front, &reference);
    check(
        sort_bad == 0 && drift <= 1e-12 && d <= 0.01 && secs <= 120.0 && res.generations_done == 256,
        format!(
            "sort mismatches {sort_bad}/1000; SBX mean drift {drift:.1e}; ZDT1 IGD {d:.4} after {} generations in {secs:.1} s",
            res.generations_done
        ),
    )
}

// ---------------------------------------------------------------- 8

fn trends() -> Outcome {
    let base = SdfParams::new(6.0, 1.0, 1.0, 1.0, 0.2, SdfType::Sph);
    let sdf = build_sdf(&base, 48).map_err(|e| e.to_string())?;
    let noise = NoiseField::generate(48, SeededRng::new(8, 0));
    let heat = HeatConfig::default();
    let mut perm = Vec::new();
    let mut cond = Vec::new();
    for v in [0.2, 0.3, 0.4, 0.5, 0.6] {
        let p = SdfParams { v, ..base };
        let m = realize_from_sdf(&sdf, &p, 50.0, &noise).map_err(|e| e.to_string())?;
        perm.push(permeability_tensor(&m.grid, &quick_lbm(), false).map_err(|e| e.to_string())?.k);
        cond.push(conductivity_tensor(&m.grid, &heat).map_err(|e| e.to_string())?.k_eff);
    }
    let mut ok = true;
    for w in 1..5 {
        for a in 0..3 {
            ok &= perm[w][a] <= perm[w - 1][a];
            ok &= cond[w][a] >= cond[w - 1][a];
        }
    }
    let show = |v: &[[f64; 3]]| v.iter().map(|k| format!("{:.3}", k[0])).collect::<Vec<_>>().join(" ");
    check(
        ok,
        format!("v 0.2..0.6: k_x {} um^2; kappa_x {} W/mK", show(&perm), show(&cond)),
    )
}

// ---------------------------------------------------------------- 9

fn swap_yz(values: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                out[x + n * (y + n * z)] = values[x + n * (z + n * y)];
            }
        }
    }
    out
}

struct Objectives {
    f1: f64,
    f2: f64,
    f3: f64,
}

fn oriented(params: &SdfParams, o: Orientation, noises: &[NoiseField], sys: &SystemConfig) -> Result<Objectives, String> {
    let n = noises[0].n();
    let sdf = build_sdf(params, n).map_err(|e| e.to_string())?;
    let cell = sys.cell_um;
    let m = realize_from_sdf(&sdf, params, cell, &noises[0]).map_err(|e| e.to_string())?;
    let (clean, _) = remove_floating(&m.grid, Connectivity::Face6);
    let [a, b, c] = o.axes();
    let mut p = [0.0; 3];
    for ax in [a, b] {
        p[ax] = permeability_axis(&clean, Axis::ALL[ax], &quick_lbm()).map_err(|e| e.to_string())?.k_um2;
    }
    let mut k = [0.0; 3];
    k[c] = conductivity_axis(&clean, Axis::ALL[c], &HeatConfig::default()).map_err(|e| e.to_string())?;
    let (px, py, kz) = orient(k, p, o);
    let dp = delta_p_uc(sys, mean_pore_radius(&clean).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut floating = 0usize;
    for noise in noises {
        let r = realize_from_sdf(&sdf, params, cell, noise).map_err(|e| e.to_string())?;
        floating += label_clusters(&r.grid, Connectivity::Face6).report.n_floating;
    }
    Ok(Objectives {
        f1: f1(px, py, sys, dp),
        f2: f2(kz, sys),
        f3: floating as f64 / noises.len() as f64,
    })
}

fn sph_symmetry() -> Outcome {
    let sys = SystemConfig::default();
    let n = 64;
    let designs = [
        (4.0, 0.8, 0.5, 1.2, 0.35),
        (6.0, 1.5, 0.9, 0.4, 0.45),
        (8.0, 0.5, 1.3, 0.7, 0.3),
        (5.0, 2.0, 0.3, 1.0, 0.5),
        (7.0, 1.0, 1.1, 1.4, 0.4),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (d, &(r, s, alpha, beta, v)) in designs.iter().enumerate() {
        let o1 = SdfParams::new(r, s, alpha, beta, v, SdfType::Sph);
        let o2 = SdfParams::new(r, s, beta, alpha, v, SdfType::Sph);
        let seeds: Vec<SeededRng> = (0..4).map(|i| SeededRng::new(9, derive_stream(&[d as u64, i]))).collect();
        let a: Vec<NoiseField> = seeds.iter().map(|&sd| NoiseField::generate(n, sd)).collect();
        let b: Vec<NoiseField> = a
            .iter()
            .map(|f| NoiseField::from_values(n, swap_yz(f.values(), n), f.seed()).unwrap())
            .collect();
        let x = oriented(&o1, Orientation::O1, &a, &sys)?;
        let y = oriented(&o2, Orientation::O2, &b, &sys)?;
        let diff = |p: f64, q: f64| {
            let m = p.abs().max(q.abs());
            if m == 0.0 {
                0.0
            } else {
                (p - q).abs() / m
            }
        };
        let e = diff(x.f1, y.f1).max(diff(x.f2, y.f2)).max(diff(x.f3, y.f3));
        worst = worst.max(e);
        lines.push(format!("{:.2}%", 100.0 * e));
    }
    check(
        worst <= 0.15,
        format!("per-design worst relative difference {}", lines.join(", ")),
    )
}

// ---------------------------------------------------------------- 10

fn smoke_campaign() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = CampaignConfig::smoke(dir.path());
    let t = Instant::now();
    let report = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();

    let mut problems = Vec::new();
    let mut members = 0;
    for ty in [SdfType::Sph, SdfType::Cyl] {
        for o in Orientation::ALL {
            let path = front_path(dir.path(), ty, o);
            let text = std::fs::read_to_string(&path).unwrap_or_default();
            let rows: Vec<_> = text.lines().map(serde_json::from_str::<ParetoIndividual>).collect();
            if rows.is_empty() || rows.iter().any(|r| r.is_err()) {
                problems.push(format!("front {ty} {o} is empty or malformed"));
            }
            members += rows.len();
        }
    }
    let table = std::fs::read_to_string(table_path(dir.path())).unwrap_or_default();
    let header = "structure,sdf_type,orientation,r,sigma,theta,phi,v,f1_simulated,f1_emulated";
    if !table.starts_with(header) || table.lines().count() != 1 + report.validation.len() {
        problems.push("comparison table is missing or short".into());
    }
    let mut f2s = Vec::new();
    for row in &report.validation {
        match row.f2_simulated {
            Some(f) => {
                f2s.push(format!("{f:.2e}"));
                if !(1e-4..=1e-2).contains(&f) {
                    problems.push(format!("{} f2 {f:.3e} W/K outside band", row.structure));
                }
                let vtk = dir.path().join("validate").join(format!("{}.vtk", row.structure));
                if !std::fs::read_to_string(&vtk).is_ok_and(|s| s.starts_with("# vtk DataFile")) {
                    problems.push(format!("{} has no VTK export", row.structure));
                }
            }
            None => problems.push(format!("{} was not simulated: {}", row.structure, row.note)),
        }
    }
    if report.validation.len() != 3 {
        problems.push(format!("{} designs validated", report.validation.len()));
    }
    check(
        problems.is_empty() && secs <= 1800.0,
        format!(
            "{secs:.0} s; {} records; {members} front members; simulated f2 [{}] W/K{}",
            report.dataset.records,
            f2s.join(", "),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("LBM duct and plane gap", lbm_duct),
        ("LBM inlet/outlet reversal", lbm_reverse),
        ("conduction oracles", conduction_oracles),
        ("reconstruction", reconstruction),
        ("morphology", morphology),
        ("surrogate", surrogate),
        ("NSGA-II", nsga2),
        ("volume-fraction trends", trends),
        ("Sph orientation symmetry", sph_symmetry),
        ("smoke campaign", smoke_campaign),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += outcome.is_err() as usize;
        println!("{tag} criterion {id:>2} {name} ({secs:.1} s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
