//! NSGA-II over real-coded genomes, plus the emulated design objective.
//!
//! Every objective is maximized. Variation is simulated binary crossover and
//! bounded polynomial mutation; survival is rank then crowding distance.

use crate::grid::SeededRng;
use crate::objectives::Orientation;
use crate::sdfgen::{SdfParams, SdfType};
use crate::surrogate::LmgpModel;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Designs with a predicted floating-cluster count above this are flagged.
pub const F3_FLAG_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub offspring: usize,
    /// Probability that a mating pair is recombined.
    pub sbx_prob: f64,
    /// Per-variable exchange probability inside a recombined pair.
    pub sbx_var_prob: f64,
    pub sbx_eta: f64,
    pub pm_eta: f64,
    /// Per-variable mutation probability; `None` means `1 / d`.
    pub pm_prob: Option<f64>,
    pub generations: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    /// Record the rank-1 hypervolume against this point every generation.
    pub hv_reference: Option<Vec<f64>>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 500,
            offspring: 100,
            sbx_prob: 0.9,
            sbx_var_prob: 0.5,
            sbx_eta: 15.0,
            pm_eta: 20.0,
            pm_prob: None,
            generations: 256,
            bounds: Vec::new(),
            seed: 0,
            hv_reference: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.offspring < 1 || self.population < self.offspring {
            return Err(Error::InvalidInput(format!(
                "population {} / offspring {}",
                self.population, self.offspring
            )));
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::InvalidInput("bounds must be finite with lo <= hi".into()));
        }
        for p in [self.sbx_prob, self.sbx_var_prob].into_iter().chain(self.pm_prob) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
            }
        }
        if !(self.sbx_eta >= 0.0 && self.pm_eta >= 0.0) {
            return Err(Error::InvalidInput("distribution indices must be non-negative".into()));
        }
        Ok(())
    }

    fn mutation_prob(&self) -> f64 {
        self.pm_prob.unwrap_or(1.0 / self.bounds.len() as f64)
    }
}

/// `a` is at least as good everywhere and better somewhere (maximization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut better = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            better = true;
        }
    }
    better
}

/// Fronts of indices, best first.
pub fn nondominated_sort(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&points[i], &points[j]) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order). Boundary points get infinity.
pub fn crowding_distance(points: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let k = front.len();
    let mut d = vec![0.0; k];
    if k <= 2 {
        return vec![f64::INFINITY; k];
    }
    let m = points[front[0]].len();
    let mut order: Vec<usize> = (0..k).collect();
    for obj in 0..m {
        order.sort_by(|&a, &b| points[front[a]][obj].total_cmp(&points[front[b]][obj]).then(a.cmp(&b)));
        let lo = points[front[order[0]]][obj];
        let hi = points[front[order[k - 1]]][obj];
        if hi <= lo {
            continue;
        }
        d[order[0]] = f64::INFINITY;
        d[order[k - 1]] = f64::INFINITY;
        for w in 1..k - 1 {
            let gap = points[front[order[w + 1]]][obj] - points[front[order[w - 1]]][obj];
            d[order[w]] += gap / (hi - lo);
        }
    }
    d
}

/// SBX children before clipping to bounds.
pub fn sbx_unclipped(p1: &[f64], p2: &[f64], cfg: &GaConfig, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.random::<f64>() >= cfg.sbx_prob {
        return (c1, c2);
    }
    for i in 0..p1.len() {
        if rng.random::<f64>() >= cfg.sbx_var_prob || (p1[i] - p2[i]).abs() <= 1e-14 {
            continue;
        }
        let u: f64 = rng.random();
        let e = 1.0 / (cfg.sbx_eta + 1.0);
        let beta = if u <= 0.5 {
            (2.0 * u).powf(e)
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(e)
        };
        let mid = 0.5 * (p1[i] + p2[i]);
        let half = 0.5 * beta * (p2[i] - p1[i]).abs();
        let (mut a, mut b) = (mid - half, mid + half);
        if rng.random::<bool>() {
            std::mem::swap(&mut a, &mut b);
        }
        c1[i] = a;
        c2[i] = b;
    }
    (c1, c2)
}

fn clip(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

pub fn sbx_crossover(p1: &[f64], p2: &[f64], cfg: &GaConfig, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let (mut c1, mut c2) = sbx_unclipped(p1, p2, cfg, rng);
    clip(&mut c1, &cfg.bounds);
    clip(&mut c2, &cfg.bounds);
    (c1, c2)
}

/// Bounded polynomial mutation.
pub fn pm_mutation(x: &[f64], cfg: &GaConfig, rng: &mut impl Rng) -> Vec<f64> {
    let prob = cfg.mutation_prob();
    let mut y = x.to_vec();
    let pow = 1.0 / (cfg.pm_eta + 1.0);
    for (i, yi) in y.iter_mut().enumerate() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let (lo, hi) = cfg.bounds[i];
        if hi <= lo {
            continue;
        }
        let d1 = (*yi - lo) / (hi - lo);
        let d2 = (hi - *yi) / (hi - lo);
        let u: f64 = rng.random();
        let dq = if u < 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(cfg.pm_eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(cfg.pm_eta + 1.0);
            1.0 - v.powf(pow)
        };
        *yi = (*yi + dq * (hi - lo)).clamp(lo, hi);
    }
    y
}

/// Hypervolume dominated by `points` above `reference` (maximization).
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a > r))
        .map(|p| p.iter().zip(reference).map(|(a, r)| a - r).collect())
        .collect();
    hv_rec(pts)
}

fn hv_rec(mut pts: Vec<Vec<f64>>) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let m = pts[0].len();
    if m == 1 {
        return pts.iter().map(|p| p[0]).fold(0.0, f64::max);
    }
    // slice along the last objective, highest first
    pts.sort_by(|a, b| b[m - 1].total_cmp(&a[m - 1]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let top = pts[i][m - 1];
        let bottom = if i + 1 < pts.len() { pts[i + 1][m - 1] } else { 0.0 };
        if top <= bottom {
            continue;
        }
        let slice: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..m - 1].to_vec()).collect();
        vol += (top - bottom) * hv_rec(nondominated_only(slice));
    }
    vol
}

fn nondominated_only(pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let keep: Vec<bool> = (0..pts.len())
        .map(|i| {
            !pts.iter()
                .enumerate()
                .any(|(j, q)| j != i && (dominates(q, &pts[i]) || (q == &pts[i] && j < i)))
        })
        .collect();
    pts.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

/// The two-objective ZDT1 benchmark, returned as minimization values.
pub fn zdt1(x: &[f64]) -> [f64; 2] {
    let f1 = x[0];
    let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
    [f1, g * (1.0 - (f1 / g).sqrt())]
}

/// `n` points on the analytic ZDT1 front.
pub fn zdt1_front(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let f1 = i as f64 / (n - 1) as f64;
            [f1, 1.0 - f1.sqrt()]
        })
        .collect()
}

/// Mean distance from each reference point to its nearest obtained point.
pub fn igd(obtained: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    reference
        .iter()
        .map(|r| {
            obtained
                .iter()
                .map(|p| p.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum::<f64>()
        / reference.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: Vec<f64>,
    /// 1 for the first front.
    pub rank: usize,
    pub crowding: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub front_size: usize,
    pub hypervolume: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Nsga2Result {
    pub population: Vec<Individual>,
    /// Rank-1 members of the final population.
    pub front: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub generations_done: usize,
    /// Set when an evaluation failed; the population is the last complete one.
    pub aborted: Option<String>,
}

fn evaluate_all<F>(genomes: &[Vec<f64>], f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let out: Vec<Result<Vec<f64>>> = genomes.par_iter().map(|g| f(g)).collect();
    let mut v = Vec::with_capacity(out.len());
    for r in out {
        let o = r?;
        if o.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("objective evaluated to a non-finite value".into()));
        }
        v.push(o);
    }
    Ok(v)
}

/// Keep `size` of `pool` by front, then crowding distance. Returns ranked individuals.
fn survive(pool: Vec<(Vec<f64>, Vec<f64>)>, size: usize) -> Vec<Individual> {
    let objs: Vec<Vec<f64>> = pool.iter().map(|p| p.1.clone()).collect();
    let fronts = nondominated_sort(&objs);
    let mut out = Vec::with_capacity(size);
    for (r, front) in fronts.iter().enumerate() {
        if out.len() >= size {
            break;
        }
        let cd = crowding_distance(&objs, front);
        let mut members: Vec<(usize, f64)> = front.iter().copied().zip(cd).collect();
        if out.len() + members.len() > size {
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            members.truncate(size - out.len());
            // crowding among the survivors of this front
            let kept: Vec<usize> = members.iter().map(|m| m.0).collect();
            let cd = crowding_distance(&objs, &kept);
            members = kept.into_iter().zip(cd).collect();
        }
        for (i, c) in members {
            out.push(Individual {
                genome: pool[i].0.clone(),
                objectives: pool[i].1.clone(),
                rank: r + 1,
                crowding: c,
            });
        }
    }
    out
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut ChaCha8Rng) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if a.rank != b.rank {
        return if a.rank < b.rank { a } else { b };
    }
    if a.crowding != b.crowding {
        return if a.crowding > b.crowding { a } else { b };
    }
    if rng.random::<bool>() {
        a
    } else {
        b
    }
}

/// Run NSGA-II on `f`, which maps a genome to objectives to maximize.
pub fn run_nsga2<F>(cfg: &GaConfig, f: F) -> Result<Nsga2Result>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let d = cfg.bounds.len();
    let mut rng = SeededRng::new(cfg.seed, crate::grid::derive_stream(&[0x6761])).rng();
    let init: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| {
            cfg.bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect()
        })
        .collect();
    let objs = evaluate_all(&init, &f)?;
    let mut evaluations = init.len();
    let mut pop = survive(init.into_iter().zip(objs).collect(), cfg.population);
    let mut history = Vec::with_capacity(cfg.generations + 1);
    let stats = |pop: &[Individual], generation: usize| {
        let front: Vec<Vec<f64>> = pop.iter().filter(|i| i.rank == 1).map(|i| i.objectives.clone()).collect();
        GenerationStats {
            generation,
            front_size: front.len(),
            hypervolume: cfg.hv_reference.as_ref().map(|r| hypervolume(&front, r)),
        }
    };
    history.push(stats(&pop, 0));
    let mut aborted = None;
    let mut done = 0;
    for generation in 1..=cfg.generations {
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(cfg.offspring + 1);
        while children.len() < cfg.offspring {
            let p1 = tournament(&pop, &mut rng).genome.clone();
            let p2 = tournament(&pop, &mut rng).genome.clone();
            let (c1, c2) = sbx_crossover(&p1, &p2, cfg, &mut rng);
            for c in [c1, c2] {
                if children.len() < cfg.offspring {
                    let c = pm_mutation(&c, cfg, &mut rng);
                    debug_assert_eq!(c.len(), d);
                    children.push(c);
                }
            }
        }
        let objs = match evaluate_all(&children, &f) {
            Ok(o) => o,
            Err(e) => {
                log::error!("evaluation failed in generation {generation}: {e}");
                aborted = Some(e.to_string());
                break;
            }
        };
        evaluations += children.len();
        let mut pool: Vec<(Vec<f64>, Vec<f64>)> = pop.into_iter().map(|i| (i.genome, i.objectives)).collect();
        pool.extend(children.into_iter().zip(objs));
        pop = survive(pool, cfg.population);
        history.push(stats(&pop, generation));
        done = generation;
    }
    let front = pop.iter().filter(|i| i.rank == 1).cloned().collect();
    Ok(Nsga2Result {
        population: pop,
        front,
        history,
        evaluations,
        generations_done: done,
        aborted,
    })
}

/// The three trained emulators.
#[derive(Clone, Debug)]
pub struct Emulators {
    /// Inputs `[r, sigma, theta, phi, v, T]`, levels `[fidelity, orientation]`.
    pub permeability: LmgpModel,
    /// Same inputs as `permeability`.
    pub conduction: LmgpModel,
    /// Inputs `[r, sigma, theta, phi, v]`, levels `[T]`.
    pub floating: LmgpModel,
}

/// Fidelity level index used for design predictions.
pub const HIGH_FIDELITY: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulatedObjectives {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub variances: [f64; 3],
    pub extrapolated: bool,
}

impl Emulators {
    pub fn predict(&self, genome: &[f64], sdf_type: SdfType, orientation: Orientation) -> EmulatedObjectives {
        let t = sdf_type.index() as f64;
        let mut x = genome.to_vec();
        x.push(t);
        let lv = [HIGH_FIDELITY, orientation.index()];
        let p1 = self.permeability.predict(&x, &lv);
        let p2 = self.conduction.predict(&x, &lv);
        let p3 = self.floating.predict(genome, &[sdf_type.index()]);
        // all three objectives are non-negative quantities
        EmulatedObjectives {
            f1: p1.mean.max(0.0),
            f2: p2.mean.max(0.0),
            f3: p3.mean.max(0.0),
            variances: [p1.variance, p2.variance, p3.variance],
            extrapolated: p1.extrapolated || p2.extrapolated || p3.extrapolated,
        }
    }
}

/// One member of an emulated Pareto set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoIndividual {
    pub genome: [f64; 5],
    pub sdf_type: SdfType,
    pub orientation: Orientation,
    /// `[f1, f2, f3]` emulator means.
    pub predicted: [f64; 3],
    pub variances: [f64; 3],
    pub rank: usize,
    /// Infinite at the front's extremes; stored as null.
    #[serde(with = "inf_as_null")]
    pub crowding: f64,
    pub f3_flag: bool,
    pub extrapolated: bool,
}

// JSON has no infinity, and serde_json writes it as null
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ParetoIndividual {
    pub fn params(&self) -> SdfParams {
        SdfParams::from_genome(&self.genome, self.sdf_type)
    }
}

#[derive(Clone, Debug)]
pub struct ParetoSet {
    pub sdf_type: SdfType,
    pub orientation: Orientation,
    pub members: Vec<ParetoIndividual>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub aborted: Option<String>,
}

impl ParetoSet {
    /// Line-delimited JSON, one member per line.
    pub fn to_jsonl(&self) -> String {
        self.members
            .iter()
            .map(|m| serde_json::to_string(m).expect("pareto record serializes") + "\n")
            .collect()
    }
}

/// Emulated search for one (SDF type, orientation) pair; maximizes `[f1, f2, -f3]`.
pub fn optimize_emulated(em: &Emulators, sdf_type: SdfType, orientation: Orientation, cfg: &GaConfig) -> Result<ParetoSet> {
    if cfg.bounds.len() != 5 {
        return Err(Error::InvalidInput(format!("expected 5 genome bounds, got {}", cfg.bounds.len())));
    }
    let res = run_nsga2(cfg, |g| {
        let p = em.predict(g, sdf_type, orientation);
        Ok(vec![p.f1, p.f2, -p.f3])
    })?;
    let members = res
        .front
        .iter()
        .map(|ind| {
            let p = em.predict(&ind.genome, sdf_type, orientation);
            ParetoIndividual {
                genome: [ind.genome[0], ind.genome[1], ind.genome[2], ind.genome[3], ind.genome[4]],
                sdf_type,
                orientation,
                predicted: [p.f1, p.f2, p.f3],
                variances: p.variances,
                rank: ind.rank,
                crowding: ind.crowding,
                f3_flag: p.f3 > F3_FLAG_THRESHOLD,
                extrapolated: p.extrapolated,
            }
        })
        .collect();
    log::info!(
        "front for ({sdf_type}, {orientation}): {} members after {} generations",
        res.front.len(),
        res.generations_done
    );
    Ok(ParetoSet {
        sdf_type,
        orientation,
        members,
        history: res.history,
        evaluations: res.evaluations,
        aborted: res.aborted,
    })
}
