//! Latent-map Gaussian-process emulators over mixed quantitative and
//! categorical inputs.
//!
//! Every categorical group gets its own 2-D latent map. The correlation between
//! two inputs is
//! `exp(-sum_k 10^omega_k (x_k - x'_k)^2) * prod_g exp(-|z_g(l) - z_g(l')|^2)`.
//! Quantitative inputs are min-max scaled on the training ranges and the output
//! is standardized. Hyperparameters maximize the concentrated Gaussian log
//! likelihood (constant mean and process variance profiled out).

pub mod cv;
pub mod optim;

pub use cv::{cross_validate, mae, nrmse, CvReport};

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

const LN10: f64 = std::f64::consts::LN_10;
/// Latent coordinates are searched in `[-LATENT_BOUND, LATENT_BOUND]`.
pub const LATENT_BOUND: f64 = 4.0;
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Training rows: quantitative coordinates, one level index per categorical
/// group, and the scalar response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpData {
    pub x: Vec<Vec<f64>>,
    pub levels: Vec<Vec<usize>>,
    pub y: Vec<f64>,
}

impl GpData {
    pub fn new(x: Vec<Vec<f64>>, levels: Vec<Vec<usize>>, y: Vec<f64>) -> Self {
        GpData { x, levels, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> GpData {
        GpData {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            levels: idx.iter().map(|&i| self.levels[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Number of rows carrying each level of group `g`.
    pub fn level_counts(&self, g: usize, n_levels: usize) -> Vec<usize> {
        let mut c = vec![0; n_levels];
        for l in &self.levels {
            if l[g] < n_levels {
                c[l[g]] += 1;
            }
        }
        c
    }

    /// sha256 over the exact bit patterns of the rows.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for ((x, l), y) in self.x.iter().zip(&self.levels).zip(&self.y) {
            for v in x {
                h.update(v.to_bits().to_le_bytes());
            }
            for &v in l {
                h.update((v as u64).to_le_bytes());
            }
            h.update(y.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check(&self, spec: &LmgpSpec) -> Result<()> {
        let n = self.len();
        if n < 2 {
            return Err(Error::DegenerateData(format!("{n} rows, need at least 2")));
        }
        if self.x.len() != n || self.levels.len() != n {
            return Err(Error::InvalidInput("x, levels and y lengths differ".into()));
        }
        let d = self.dim();
        for (i, (x, l)) in self.x.iter().zip(&self.levels).enumerate() {
            if x.len() != d {
                return Err(Error::InvalidInput(format!("row {i} has {} inputs, expected {d}", x.len())));
            }
            if l.len() != spec.groups.len() {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} levels, expected {}",
                    l.len(),
                    spec.groups.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has a non-finite input")));
            }
            for (g, (&lv, gs)) in l.iter().zip(&spec.groups).enumerate() {
                if lv >= gs.n_levels {
                    return Err(Error::InvalidInput(format!(
                        "row {i}: level {lv} out of range for group {g} ({})",
                        gs.name
                    )));
                }
            }
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("output {i} is not finite")));
        }
        for (g, gs) in spec.groups.iter().enumerate() {
            for (lv, c) in self.level_counts(g, gs.n_levels).into_iter().enumerate() {
                if c == 1 {
                    return Err(Error::DegenerateData(format!(
                        "level {lv} of group {} has a single row",
                        gs.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One categorical input and its number of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub n_levels: usize,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, n_levels: usize) -> Self {
        GroupSpec {
            name: name.into(),
            n_levels,
        }
    }
}

/// Fitting options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmgpSpec {
    pub groups: Vec<GroupSpec>,
    /// Group whose levels each get their own nugget (usually fidelity); `None`
    /// means one shared nugget.
    pub nugget_group: Option<usize>,
    pub n_starts: usize,
    pub seed: u64,
    pub omega_bounds: (f64, f64),
    pub log_nugget_bounds: (f64, f64),
    pub max_iters: usize,
}

impl Default for LmgpSpec {
    fn default() -> Self {
        LmgpSpec {
            groups: Vec::new(),
            nugget_group: None,
            n_starts: 8,
            seed: 0,
            omega_bounds: (-3.0, 3.0),
            log_nugget_bounds: (-8.0, -2.0),
            max_iters: 200,
        }
    }
}

impl LmgpSpec {
    pub fn new(groups: Vec<GroupSpec>) -> Self {
        LmgpSpec {
            groups,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidInput("n_starts must be at least 1".into()));
        }
        let (a, b) = self.omega_bounds;
        let (c, d) = self.log_nugget_bounds;
        if !(a.is_finite() && b.is_finite() && a < b && c.is_finite() && d.is_finite() && c <= d) {
            return Err(Error::InvalidInput("bad hyperparameter bounds".into()));
        }
        if let Some(g) = self.nugget_group {
            if g >= self.groups.len() {
                return Err(Error::InvalidInput(format!("nugget group {g} does not exist")));
            }
        }
        if self.groups.iter().any(|g| g.n_levels == 0) {
            return Err(Error::InvalidInput("categorical group without levels".into()));
        }
        Ok(())
    }

    fn n_nuggets(&self) -> usize {
        self.nugget_group.map_or(1, |g| self.groups[g].n_levels)
    }
}

/// Kernel hyperparameters in model units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// log10 roughness per quantitative input.
    pub omega: Vec<f64>,
    /// Latent coordinates per group and level.
    pub latent: Vec<Vec<[f64; 2]>>,
    pub log_nuggets: Vec<f64>,
}

impl Hyper {
    /// Correlation between two scaled inputs.
    pub fn correlation(&self, xa: &[f64], la: &[usize], xb: &[f64], lb: &[usize]) -> f64 {
        let mut s = 0.0;
        for ((w, a), b) in self.omega.iter().zip(xa).zip(xb) {
            s += 10f64.powf(*w) * (a - b) * (a - b);
        }
        for ((lat, &i), &j) in self.latent.iter().zip(la).zip(lb) {
            let (p, q) = (lat[i], lat[j]);
            s += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        }
        (-s).exp()
    }

    /// Distance between two levels of a latent group.
    pub fn latent_distance(&self, group: usize, a: usize, b: usize) -> f64 {
        let (p, q) = (self.latent[group][a], self.latent[group][b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }
}

/// Mapping between hyperparameters and the flat optimizer vector.
#[derive(Clone, Debug)]
struct Layout {
    d: usize,
    levels: Vec<usize>,
    latent_offset: Vec<usize>,
    nugget_offset: usize,
    n_nuggets: usize,
    omega_bounds: (f64, f64),
    nugget_bounds: (f64, f64),
}

impl Layout {
    fn new(d: usize, spec: &LmgpSpec) -> Self {
        let levels: Vec<usize> = spec.groups.iter().map(|g| g.n_levels).collect();
        let mut latent_offset = Vec::with_capacity(levels.len());
        let mut off = d;
        for &l in &levels {
            latent_offset.push(off);
            off += Self::latent_params(l);
        }
        Layout {
            d,
            levels,
            latent_offset,
            nugget_offset: off,
            n_nuggets: spec.n_nuggets(),
            omega_bounds: spec.omega_bounds,
            nugget_bounds: spec.log_nugget_bounds,
        }
    }

    /// Level 0 sits at the origin and level 1 on the first axis.
    fn latent_params(levels: usize) -> usize {
        if levels < 2 {
            0
        } else {
            2 * levels - 3
        }
    }

    fn len(&self) -> usize {
        self.nugget_offset + self.n_nuggets
    }

    fn bounds(&self, k: usize) -> (f64, f64) {
        if k < self.d {
            self.omega_bounds
        } else if k < self.nugget_offset {
            (-LATENT_BOUND, LATENT_BOUND)
        } else {
            self.nugget_bounds
        }
    }

    /// Index into the flat vector of coordinate `c` of `level` in group `g`.
    fn latent_index(&self, g: usize, level: usize, c: usize) -> Option<usize> {
        match (level, c) {
            (0, _) | (1, 1) => None,
            (1, 0) => Some(self.latent_offset[g]),
            _ => Some(self.latent_offset[g] + 1 + 2 * (level - 2) + c),
        }
    }

    fn unpack(&self, p: &[f64]) -> Hyper {
        let omega = p[..self.d].to_vec();
        let latent = self
            .levels
            .iter()
            .enumerate()
            .map(|(g, &l)| {
                (0..l)
                    .map(|lv| {
                        let mut z = [0.0; 2];
                        for (c, zc) in z.iter_mut().enumerate() {
                            if let Some(k) = self.latent_index(g, lv, c) {
                                *zc = p[k];
                            }
                        }
                        z
                    })
                    .collect()
            })
            .collect();
        let log_nuggets = p[self.nugget_offset..].to_vec();
        Hyper {
            omega,
            latent,
            log_nuggets,
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

/// Put a hyperparameter set into the pinned gauge: level 0 at the origin,
/// level 1 on the positive first axis.
pub fn canonical_gauge(h: &Hyper) -> Hyper {
    let mut out = h.clone();
    for lat in &mut out.latent {
        if lat.is_empty() {
            continue;
        }
        let o = lat[0];
        for z in lat.iter_mut() {
            z[0] -= o[0];
            z[1] -= o[1];
        }
        if lat.len() > 1 {
            let a = lat[1][1].atan2(lat[1][0]);
            let (s, c) = (-a).sin_cos();
            for z in lat.iter_mut() {
                let (x, y) = (z[0], z[1]);
                z[0] = c * x - s * y;
                z[1] = s * x + c * y;
            }
            lat[1][1] = 0.0;
        }
        if lat.len() > 2 && lat[2][1] < 0.0 {
            for z in lat.iter_mut() {
                z[1] = -z[1];
            }
        }
    }
    out
}

/// Scaled training set plus the standardization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_min: Vec<f64>,
    pub x_range: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Scaling {
    fn from_data(data: &GpData) -> Self {
        let d = data.dim();
        let mut x_min = vec![f64::INFINITY; d];
        let mut x_max = vec![f64::NEG_INFINITY; d];
        for x in &data.x {
            for k in 0..d {
                x_min[k] = x_min[k].min(x[k]);
                x_max[k] = x_max[k].max(x[k]);
            }
        }
        let x_range = x_min
            .iter()
            .zip(&x_max)
            .map(|(a, b)| if b > a { b - a } else { 1.0 })
            .collect();
        let n = data.len() as f64;
        let y_mean = data.y.iter().sum::<f64>() / n;
        let var = data.y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
        Scaling {
            x_min,
            x_range,
            y_mean,
            y_std: var.sqrt(),
        }
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x_min)
            .zip(&self.x_range)
            .map(|((v, m), r)| (v - m) / r)
            .collect()
    }
}

/// Per-start record of the likelihood search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    /// Negative concentrated log likelihood at the starting point.
    pub initial_nll: f64,
    pub final_nll: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub pattern_search: bool,
}

/// Posterior at one input, in output units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// Some quantitative input lies outside the training range.
    pub extrapolated: bool,
}

#[derive(Clone, Debug)]
struct Cache {
    xs: Vec<Vec<f64>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// R^-1 (y - mu) in standardized units.
    alpha: DVector<f64>,
    mu: f64,
    sigma2: f64,
    jitter: f64,
    nll: f64,
}

/// Stored part of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub format: String,
    pub version: String,
    pub kernel: String,
    pub optimizer: String,
    pub input_scaling: String,
    pub nugget_scheme: String,
    pub spec: LmgpSpec,
    pub hyper: Hyper,
    pub scaling: Scaling,
    /// Output is constant; the model returns it with zero variance.
    pub constant: bool,
    pub data: GpData,
    pub dataset_digest: String,
    pub trace: Vec<StartTrace>,
    pub log_likelihood: f64,
    pub jitter: f64,
}

/// A fitted emulator. Immutable once built; prediction is reentrant.
#[derive(Clone, Debug)]
pub struct LmgpModel {
    record: ModelRecord,
    cache: Option<Cache>,
}

/// Build `R` and, if requested, the pairwise pieces needed for gradients.
fn correlation_matrix(xs: &[Vec<f64>], levels: &[Vec<usize>], h: &Hyper, nugget_group: Option<usize>) -> DMatrix<f64> {
    let n = xs.len();
    let w: Vec<f64> = h.omega.iter().map(|o| 10f64.powf(*o)).collect();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let mut s = 0.0;
            for k in 0..w.len() {
                let d = xs[i][k] - xs[j][k];
                s += w[k] * d * d;
            }
            for (g, lat) in h.latent.iter().enumerate() {
                let (p, q) = (lat[levels[i][g]], lat[levels[j][g]]);
                s += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            }
            let c = (-s).exp();
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
        let lv = nugget_group.map_or(0, |g| levels[i][g]);
        r[(i, i)] = 1.0 + 10f64.powf(h.log_nuggets[lv]);
    }
    r
}

fn cholesky_escalating(r: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    for &j in &JITTERS {
        let mut m = r.clone();
        if j > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += j;
            }
        }
        if let Some(c) = m.cholesky() {
            if j > 0.0 {
                log::debug!("covariance needed jitter {j:e}");
            }
            return Ok((c, j));
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTERS[JITTERS.len() - 1],
    })
}

struct Profiled {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    mu: f64,
    sigma2: f64,
    jitter: f64,
    nll: f64,
}

/// Concentrated negative log likelihood `n/2 ln s2 + 1/2 ln|R|`.
fn profile(xs: &[Vec<f64>], levels: &[Vec<usize>], ys: &DVector<f64>, h: &Hyper, nugget_group: Option<usize>) -> Result<Profiled> {
    let n = ys.len();
    let r = correlation_matrix(xs, levels, h, nugget_group);
    let (chol, jitter) = cholesky_escalating(&r)?;
    let ones = DVector::from_element(n, 1.0);
    let ri1 = chol.solve(&ones);
    let riy = chol.solve(ys);
    let mu = riy.sum() / ri1.sum();
    let alpha = &riy - &ri1 * mu;
    let resid = ys - &ones * mu;
    let sigma2 = (resid.dot(&alpha) / n as f64).max(1e-300);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let nll = 0.5 * n as f64 * sigma2.ln() + 0.5 * logdet;
    Ok(Profiled {
        chol,
        alpha,
        mu,
        sigma2,
        jitter,
        nll,
    })
}

/// Objective in the flat parameter vector with its gradient.
fn nll_and_grad(
    layout: &Layout,
    p: &[f64],
    xs: &[Vec<f64>],
    levels: &[Vec<usize>],
    ys: &DVector<f64>,
    nugget_group: Option<usize>,
) -> (f64, Vec<f64>) {
    let h = layout.unpack(p);
    let Ok(pr) = profile(xs, levels, ys, &h, nugget_group) else {
        return (f64::INFINITY, vec![0.0; p.len()]);
    };
    let n = ys.len();
    let rinv = pr.chol.inverse();
    // dL/dtheta = -1/2 sum W_ij dR_ij with W = a a^T / s2 - R^-1
    let w = |i: usize, j: usize| pr.alpha[i] * pr.alpha[j] / pr.sigma2 - rinv[(i, j)];
    let mut grad = vec![0.0; p.len()];
    let wts: Vec<f64> = h.omega.iter().map(|o| 10f64.powf(*o)).collect();
    for i in 0..n {
        for j in 0..i {
            let mut s = 0.0;
            for k in 0..wts.len() {
                let d = xs[i][k] - xs[j][k];
                s += wts[k] * d * d;
            }
            for (g, lat) in h.latent.iter().enumerate() {
                let (a, b) = (lat[levels[i][g]], lat[levels[j][g]]);
                s += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            }
            let c = (-s).exp();
            // both (i,j) and (j,i) terms
            let f = -w(i, j) * c;
            for k in 0..wts.len() {
                let d = xs[i][k] - xs[j][k];
                grad[k] += f * (-LN10 * wts[k] * d * d);
            }
            for (g, lat) in h.latent.iter().enumerate() {
                let (li, lj) = (levels[i][g], levels[j][g]);
                if li == lj {
                    continue;
                }
                for cidx in 0..2 {
                    let diff = lat[li][cidx] - lat[lj][cidx];
                    if let Some(k) = layout.latent_index(g, li, cidx) {
                        grad[k] += f * (-2.0 * diff);
                    }
                    if let Some(k) = layout.latent_index(g, lj, cidx) {
                        grad[k] += f * (2.0 * diff);
                    }
                }
            }
        }
        let lv = nugget_group.map_or(0, |g| levels[i][g]);
        grad[layout.nugget_offset + lv] += -0.5 * w(i, i) * LN10 * 10f64.powf(h.log_nuggets[lv]);
    }
    (pr.nll, grad)
}

impl LmgpModel {
    /// Maximum-likelihood fit with seeded multi-start local search.
    pub fn fit(data: &GpData, spec: &LmgpSpec) -> Result<LmgpModel> {
        spec.validate()?;
        data.check(spec)?;
        let scaling = Scaling::from_data(data);
        let layout = Layout::new(data.dim(), spec);
        if scaling.y_std == 0.0 {
            log::warn!("constant output {}; emulator has no signal", scaling.y_mean);
            let hyper = layout.unpack(&vec![0.0; layout.len()]);
            let mut hyper = hyper;
            hyper.log_nuggets.iter_mut().for_each(|g| *g = spec.log_nugget_bounds.0);
            return Self::from_record(Self::make_record(data, spec, hyper, scaling, true, Vec::new()));
        }
        let xs: Vec<Vec<f64>> = data.x.iter().map(|x| scaling.scale_x(x)).collect();
        let ys = DVector::from_iterator(data.len(), data.y.iter().map(|y| (y - scaling.y_mean) / scaling.y_std));

        let np = layout.len();
        let to_param = |u: &[f64]| -> Vec<f64> {
            u.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (lo, hi) = layout.bounds(k);
                    lo + (hi - lo) * sigmoid(v)
                })
                .collect()
        };
        let starts = Self::starting_points(&layout, spec);
        let ng = spec.nugget_group;
        let results: Vec<(Vec<f64>, StartTrace)> = starts
            .par_iter()
            .enumerate()
            .map(|(si, u0)| {
                let obj = |u: &[f64]| -> (f64, Vec<f64>) {
                    let p = to_param(u);
                    let (v, g) = nll_and_grad(&layout, &p, &xs, &data.levels, &ys, ng);
                    let gu = g
                        .iter()
                        .enumerate()
                        .map(|(k, gk)| {
                            let (lo, hi) = layout.bounds(k);
                            let s = sigmoid(u[k]);
                            gk * (hi - lo) * s * (1.0 - s)
                        })
                        .collect();
                    (v, gu)
                };
                let initial = obj(u0).0;
                let m = optim::bfgs(obj, u0, spec.max_iters, 1e-6);
                let mut best = (m.x.clone(), m.value);
                let mut used_ps = false;
                let mut iterations = m.iterations;
                let mut evaluations = m.evaluations;
                if !m.clean_exit || !m.value.is_finite() {
                    used_ps = true;
                    let value_only = |u: &[f64]| {
                        let p = to_param(u);
                        let h = layout.unpack(&p);
                        profile(&xs, &data.levels, &ys, &h, ng).map_or(f64::INFINITY, |pr| pr.nll)
                    };
                    let ps = optim::pattern_search(value_only, &best.0, best.1, 0.5, 1e-4, 40 * (np + 1) * 10);
                    iterations += ps.iterations;
                    evaluations += ps.evaluations;
                    if ps.value < best.1 || !best.1.is_finite() {
                        best = (ps.x, ps.value);
                    }
                }
                let trace = StartTrace {
                    start: si,
                    initial_nll: initial,
                    final_nll: best.1,
                    iterations,
                    evaluations,
                    pattern_search: used_ps,
                };
                (to_param(&best.0), trace)
            })
            .collect();
        let mut best_i = None;
        for (i, (_, t)) in results.iter().enumerate() {
            if t.final_nll.is_finite() && best_i.is_none_or(|b: usize| t.final_nll < results[b].1.final_nll) {
                best_i = Some(i);
            }
        }
        let trace: Vec<StartTrace> = results.iter().map(|r| r.1.clone()).collect();
        let Some(bi) = best_i else {
            return Err(Error::NotPositiveDefinite {
                jitter: JITTERS[JITTERS.len() - 1],
            });
        };
        let hyper = layout.unpack(&results[bi].0);
        Self::from_record(Self::make_record(data, spec, hyper, scaling, false, trace))
    }

    fn starting_points(layout: &Layout, spec: &LmgpSpec) -> Vec<Vec<f64>> {
        let mut rng = crate::grid::SeededRng::new(spec.seed, crate::grid::derive_stream(&[0x6c6d_6770])).rng();
        (0..spec.n_starts)
            .map(|s| {
                (0..layout.len())
                    .map(|k| {
                        let frac = if s == 0 {
                            // a middle-of-the-box start: smooth, spread levels, small nugget
                            if k < layout.d {
                                0.5
                            } else if k < layout.nugget_offset {
                                0.6
                            } else {
                                0.2
                            }
                        } else {
                            rng.random_range(0.05..0.95)
                        };
                        logit(frac)
                    })
                    .collect()
            })
            .collect()
    }

    fn make_record(data: &GpData, spec: &LmgpSpec, hyper: Hyper, scaling: Scaling, constant: bool, trace: Vec<StartTrace>) -> ModelRecord {
        ModelRecord {
            format: "lmgp-model".into(),
            version: crate::VERSION.into(),
            kernel: "exp(-sum 10^omega_k dx_k^2) * prod_groups exp(-|dz|^2), 2-D latent maps".into(),
            optimizer: "multi-start BFGS on logistic-transformed bounds, Hooke-Jeeves fallback".into(),
            input_scaling: "min-max to [0,1] per input; output standardized".into(),
            nugget_scheme: match spec.nugget_group {
                Some(g) => format!("one log10 nugget per level of group '{}'", spec.groups[g].name),
                None => "single log10 nugget".into(),
            },
            spec: spec.clone(),
            hyper,
            scaling,
            constant,
            dataset_digest: data.digest(),
            data: data.clone(),
            trace,
            log_likelihood: f64::NAN,
            jitter: 0.0,
        }
    }

    fn from_record(mut record: ModelRecord) -> Result<LmgpModel> {
        if record.constant {
            record.log_likelihood = f64::NAN;
            return Ok(LmgpModel { record, cache: None });
        }
        let sc = &record.scaling;
        let xs: Vec<Vec<f64>> = record.data.x.iter().map(|x| sc.scale_x(x)).collect();
        let ys = DVector::from_iterator(record.data.len(), record.data.y.iter().map(|y| (y - sc.y_mean) / sc.y_std));
        let mut pr = profile(&xs, &record.data.levels, &ys, &record.hyper, record.spec.nugget_group)?;
        // two steps of iterative refinement so near-interpolating models reproduce their data
        let mut r = correlation_matrix(&xs, &record.data.levels, &record.hyper, record.spec.nugget_group);
        for i in 0..r.nrows() {
            r[(i, i)] += pr.jitter;
        }
        let b = ys.add_scalar(-pr.mu);
        for _ in 0..2 {
            let res = &b - &r * &pr.alpha;
            pr.alpha += pr.chol.solve(&res);
        }
        record.log_likelihood = -pr.nll;
        record.jitter = pr.jitter;
        let cache = Cache {
            xs,
            chol: pr.chol,
            alpha: pr.alpha,
            mu: pr.mu,
            sigma2: pr.sigma2,
            jitter: pr.jitter,
            nll: pr.nll,
        };
        Ok(LmgpModel {
            record,
            cache: Some(cache),
        })
    }

    /// Model with fixed hyperparameters on `data` (no likelihood search).
    pub fn condition(data: &GpData, spec: &LmgpSpec, hyper: Hyper) -> Result<LmgpModel> {
        spec.validate()?;
        data.check(spec)?;
        let d = data.dim();
        if hyper.omega.len() != d
            || hyper.latent.len() != spec.groups.len()
            || hyper.latent.iter().zip(&spec.groups).any(|(l, g)| l.len() != g.n_levels)
            || hyper.log_nuggets.len() != spec.n_nuggets()
        {
            return Err(Error::InvalidInput("hyperparameter shape does not match the spec".into()));
        }
        let scaling = Scaling::from_data(data);
        let constant = scaling.y_std == 0.0;
        Self::from_record(Self::make_record(data, spec, hyper, scaling, constant, Vec::new()))
    }

    pub fn record(&self) -> &ModelRecord {
        &self.record
    }

    pub fn hyper(&self) -> &Hyper {
        &self.record.hyper
    }

    pub fn spec(&self) -> &LmgpSpec {
        &self.record.spec
    }

    pub fn is_constant(&self) -> bool {
        self.record.constant
    }

    pub fn trace(&self) -> &[StartTrace] {
        &self.record.trace
    }

    /// Maximized concentrated log likelihood.
    pub fn log_likelihood(&self) -> f64 {
        self.cache.as_ref().map_or(f64::NAN, |c| -c.nll)
    }

    /// Process variance in output units.
    pub fn prior_variance(&self) -> f64 {
        self.cache
            .as_ref()
            .map_or(0.0, |c| c.sigma2 * self.record.scaling.y_std.powi(2))
    }

    /// Jitter that was added to the diagonal to factorize.
    pub fn jitter(&self) -> f64 {
        self.cache.as_ref().map_or(0.0, |c| c.jitter)
    }

    /// Correlation between two raw inputs.
    pub fn kernel(&self, xa: &[f64], la: &[usize], xb: &[f64], lb: &[usize]) -> f64 {
        let sc = &self.record.scaling;
        self.record.hyper.correlation(&sc.scale_x(xa), la, &sc.scale_x(xb), lb)
    }

    pub fn predict(&self, x: &[f64], levels: &[usize]) -> Prediction {
        let sc = &self.record.scaling;
        let xs = sc.scale_x(x);
        let extrapolated = xs.iter().any(|v| !(-1e-9..=1.0 + 1e-9).contains(v));
        let Some(c) = &self.cache else {
            return Prediction {
                mean: sc.y_mean,
                variance: 0.0,
                extrapolated,
            };
        };
        let h = &self.record.hyper;
        // at a training site the nugget is part of the covariance, so the
        // model returns the observation there
        let ng = self.record.spec.nugget_group;
        let r = DVector::from_iterator(
            c.xs.len(),
            self.record
                .data
                .x
                .iter()
                .zip(&c.xs)
                .zip(&self.record.data.levels)
                .map(|((xr, xt), lt)| {
                    let k = h.correlation(&xs, levels, xt, lt);
                    if xr.as_slice() == x && lt.as_slice() == levels {
                        k + 10f64.powf(h.log_nuggets[ng.map_or(0, |g| lt[g])]) + c.jitter
                    } else {
                        k
                    }
                }),
        );
        let mean_s = c.mu + r.dot(&c.alpha);
        let v = c.chol.solve(&r);
        let var_s = c.sigma2 * (1.0 - r.dot(&v)).max(0.0);
        Prediction {
            mean: sc.y_mean + sc.y_std * mean_s,
            variance: var_s * sc.y_std * sc.y_std,
            extrapolated,
        }
    }

    pub fn predict_many(&self, x: &[Vec<f64>], levels: &[Vec<usize>]) -> Vec<Prediction> {
        x.par_iter().zip(levels).map(|(x, l)| self.predict(x, l)).collect()
    }

    /// Same model with group `g`'s latent points mapped by `z -> q z + t`.
    pub fn transform_latent(&self, g: usize, q: [[f64; 2]; 2], t: [f64; 2]) -> Result<LmgpModel> {
        let mut rec = self.record.clone();
        let lat = rec
            .hyper
            .latent
            .get_mut(g)
            .ok_or_else(|| Error::InvalidInput(format!("no latent group {g}")))?;
        for z in lat.iter_mut() {
            let (x, y) = (z[0], z[1]);
            *z = [q[0][0] * x + q[0][1] * y + t[0], q[1][0] * x + q[1][1] * y + t[1]];
        }
        Self::from_record(rec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.record).expect("model record serializes")
    }

    pub fn from_json(s: &str) -> Result<LmgpModel> {
        let rec: ModelRecord = serde_json::from_str(s).map_err(|e| Error::Record(e.to_string()))?;
        if rec.data.digest() != rec.dataset_digest {
            return Err(Error::Record("dataset digest does not match stored rows".into()));
        }
        Self::from_record(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<LmgpModel> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// `group,level,name,z1,z2` rows for plotting latent maps.
    pub fn latent_csv(&self, level_names: &[Vec<String>]) -> String {
        let mut out = String::from("group,level,name,z1,z2\n");
        for (g, lat) in self.record.hyper.latent.iter().enumerate() {
            let gname = &self.record.spec.groups[g].name;
            for (lv, z) in lat.iter().enumerate() {
                let name = level_names
                    .get(g)
                    .and_then(|n| n.get(lv))
                    .cloned()
                    .unwrap_or_else(|| lv.to_string());
                out.push_str(&format!("{gname},{lv},{name},{},{}\n", z[0], z[1]));
            }
        }
        out
    }
}
