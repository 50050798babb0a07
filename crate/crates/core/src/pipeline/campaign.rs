//! Optimization over the emulators, design selection and validation by simulation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use super::dataset::{build_dataset, load_records, read_jsonl, DatasetSummary};
use super::train::{train_emulators, TrainReport};
use crate::grid::{derive_stream, export_vtk, SeededRng};
use crate::objectives::{f1_dimensionless, simulate_design, Evaluation, Orientation};
use crate::optimize::{hypervolume, nondominated_sort, optimize_emulated, Emulators, GaConfig, ParetoIndividual, ParetoSet};
use crate::sdfgen::SdfType;
use crate::{Error, Result};

const VALIDATE_TAG: u64 = 0x76;

pub const SDF_TYPES: [SdfType; 2] = [SdfType::Sph, SdfType::Cyl];

pub fn front_path(out_dir: &Path, t: SdfType, o: Orientation) -> PathBuf {
    out_dir.join("optimize").join(format!("front_{t}_{o}.jsonl"))
}

pub fn table_path(out_dir: &Path) -> PathBuf {
    out_dir.join("validate").join("comparison.csv")
}

/// GA config with bounds taken from the training data's design-variable ranges.
pub fn ga_with_training_bounds(cfg: &CampaignConfig) -> Result<GaConfig> {
    let records = load_records(&cfg.out_dir)?;
    if records.is_empty() {
        return Err(Error::DegenerateData("dataset is empty".into()));
    }
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); 5];
    for r in &records {
        for (b, g) in bounds.iter_mut().zip(r.params.genome()) {
            b.0 = b.0.min(g);
            b.1 = b.1.max(g);
        }
    }
    Ok(GaConfig {
        bounds,
        seed: cfg.seed,
        ..cfg.ga.clone()
    })
}

/// One NSGA-II run per (type, orientation); fronts written as line-delimited records.
pub fn optimize_all(cfg: &CampaignConfig, em: &Emulators) -> Result<Vec<ParetoSet>> {
    let ga = ga_with_training_bounds(cfg)?;
    let dir = cfg.out_dir.join("optimize");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut sets = Vec::new();
    for t in SDF_TYPES {
        for o in Orientation::ALL {
            let run = GaConfig {
                seed: derive_stream(&[ga.seed, t.index() as u64, o.index() as u64]),
                ..ga.clone()
            };
            let set = optimize_emulated(em, t, o, &run)?;
            let path = front_path(&cfg.out_dir, t, o);
            std::fs::write(&path, set.to_jsonl()).map_err(|e| Error::io(&path, e))?;
            if let Some(msg) = &set.aborted {
                log::warn!("run ({t}, {o}) stopped early: {msg}");
            }
            sets.push(set);
        }
    }
    Ok(sets)
}

pub fn load_fronts(out_dir: &Path) -> Result<Vec<ParetoIndividual>> {
    let mut all = Vec::new();
    for t in SDF_TYPES {
        for o in Orientation::ALL {
            all.extend(read_jsonl::<ParetoIndividual>(&front_path(out_dir, t, o))?);
        }
    }
    Ok(all)
}

/// `k` members of the combined first front, at the centres of `k` equal
/// slices of its f1 ordering.
pub fn select_designs(members: &[ParetoIndividual], k: usize) -> Vec<ParetoIndividual> {
    if members.is_empty() || k == 0 {
        return Vec::new();
    }
    let pts: Vec<Vec<f64>> = members
        .iter()
        .map(|m| vec![m.predicted[0], m.predicted[1], -m.predicted[2]])
        .collect();
    let mut best: Vec<&ParetoIndividual> = nondominated_sort(&pts)[0].iter().map(|&i| &members[i]).collect();
    best.sort_by(|a, b| a.predicted[0].total_cmp(&b.predicted[0]));
    let n = best.len();
    if k >= n {
        return best.into_iter().cloned().collect();
    }
    // bin centres: the two ends of a front sit on the training-range boundary
    let mut picked: Vec<usize> = (0..k).map(|i| ((2 * i + 1) * n) / (2 * k)).collect();
    picked.dedup();
    picked.into_iter().map(|i| best[i].clone()).collect()
}

/// A selected design: emulated objectives next to the simulated ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub structure: String,
    pub sdf_type: SdfType,
    pub orientation: Orientation,
    pub genome: [f64; 5],
    pub f1_simulated: Option<f64>,
    pub f1_emulated: f64,
    pub f1_dimensionless_simulated: Option<f64>,
    pub f1_dimensionless_emulated: f64,
    pub f2_simulated: Option<f64>,
    pub f2_emulated: f64,
    pub f3_simulated: Option<f64>,
    pub f3_emulated: f64,
    /// Why the simulated columns are empty, if they are.
    pub note: String,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6e}"))
}

pub fn table_csv(rows: &[ValidationRow]) -> String {
    let mut s = String::from(
        "structure,sdf_type,orientation,r,sigma,theta,phi,v,f1_simulated,f1_emulated,\
         f1_dimensionless_simulated,f1_dimensionless_emulated,f2_simulated,f2_emulated,f3_simulated,f3_emulated,note\n",
    );
    for r in rows {
        let g = r.genome;
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6e},{},{:.6e},{},{:.6e},{},{:.6e},{}",
            r.structure,
            r.sdf_type,
            r.orientation,
            g[0],
            g[1],
            g[2],
            g[3],
            g[4],
            opt(r.f1_simulated),
            r.f1_emulated,
            opt(r.f1_dimensionless_simulated),
            r.f1_dimensionless_emulated,
            opt(r.f2_simulated),
            r.f2_emulated,
            opt(r.f3_simulated),
            r.f3_emulated,
            r.note.replace(',', ";"),
        );
    }
    s
}

/// Simulate the selected designs at the high-fidelity resolution.
pub fn validate_designs(cfg: &CampaignConfig, picked: &[ParetoIndividual]) -> Result<Vec<ValidationRow>> {
    let dir = cfg.out_dir.join("validate");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let n = cfg.fidelity.resolutions[0];
    let rows: Vec<Result<ValidationRow>> = picked
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let name = format!("M{}", i + 1);
            let seed = SeededRng::new(cfg.seed, derive_stream(&[VALIDATE_TAG, i as u64]));
            let mut row = ValidationRow {
                structure: name.clone(),
                sdf_type: m.sdf_type,
                orientation: m.orientation,
                genome: m.genome,
                f1_simulated: None,
                f1_emulated: m.predicted[0],
                f1_dimensionless_simulated: None,
                f1_dimensionless_emulated: f1_dimensionless(m.predicted[0], &cfg.system),
                f2_simulated: None,
                f2_emulated: m.predicted[1],
                f3_simulated: None,
                f3_emulated: m.predicted[2],
                note: String::new(),
            };
            match simulate_design(&m.params(), n, &cfg.system, &cfg.eval, seed) {
                Ok(Evaluation::Accepted(props, grid)) => {
                    let obj = props.objectives(m.orientation, &cfg.system);
                    row.f1_simulated = Some(obj.f1);
                    row.f1_dimensionless_simulated = Some(obj.f1_dimensionless);
                    row.f2_simulated = Some(obj.f2);
                    row.f3_simulated = obj.f3;
                    if cfg.selection.export_vtk {
                        export_vtk(&grid, &name, dir.join(format!("{name}.vtk")))?;
                    }
                }
                Ok(Evaluation::Discarded { reason, .. }) => row.note = format!("discarded: {reason}"),
                Err(e) => {
                    log::warn!("validation of {name} failed: {e}");
                    row.note = format!("failed: {e}");
                }
            }
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let path = table_path(&cfg.out_dir);
    std::fs::write(&path, table_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    let jpath = dir.join("validation.jsonl");
    super::dataset::write_jsonl(&jpath, &rows)?;
    Ok(rows)
}

/// Relative hypervolume difference between two fronts, each objective
/// normalized to the joint range and measured from its joint minimum.
pub fn relative_hypervolume_difference(a: &[ParetoIndividual], b: &[ParetoIndividual]) -> Option<f64> {
    let pts = |s: &[ParetoIndividual]| -> Vec<Vec<f64>> {
        s.iter().map(|m| vec![m.predicted[0], m.predicted[1], -m.predicted[2]]).collect()
    };
    let (pa, pb) = (pts(a), pts(b));
    if pa.is_empty() || pb.is_empty() {
        return None;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pa.iter().chain(&pb) {
        for j in 0..3 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let norm = |v: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        v.into_iter()
            .map(|p| {
                (0..3)
                    .map(|j| {
                        let span = hi[j] - lo[j];
                        if span > 0.0 {
                            (p[j] - lo[j]) / span
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let reference = [-0.1; 3];
    let ha = hypervolume(&norm(pa), &reference);
    let hb = hypervolume(&norm(pb), &reference);
    let m = ha.max(hb);
    (m > 0.0).then(|| (ha - hb).abs() / m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSummary {
    pub sdf_type: SdfType,
    pub orientation: Orientation,
    pub members: usize,
    pub evaluations: usize,
    pub final_hypervolume: Option<f64>,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub dataset: DatasetSummary,
    pub training: TrainReport,
    pub fronts: Vec<FrontSummary>,
    pub sph_o1_o2_hypervolume_difference: Option<f64>,
    pub validation: Vec<ValidationRow>,
    pub seconds: f64,
}

/// DOE, dataset, training, optimization and validation in one go.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    let t0 = std::time::Instant::now();
    let dataset = build_dataset(cfg)?;
    log::info!("dataset: {} rows, {} quarantined", dataset.records, dataset.quarantined);
    let (em, training) = train_emulators(cfg)?;
    let sets = optimize_all(cfg, &em)?;
    let all: Vec<ParetoIndividual> = sets.iter().flat_map(|s| s.members.iter().cloned()).collect();
    let picked = select_designs(&all, cfg.selection.designs);
    let validation = validate_designs(cfg, &picked)?;
    let find = |t: SdfType, o: Orientation| sets.iter().find(|s| s.sdf_type == t && s.orientation == o);
    let hv = match (find(SdfType::Sph, Orientation::O1), find(SdfType::Sph, Orientation::O2)) {
        (Some(a), Some(b)) => relative_hypervolume_difference(&a.members, &b.members),
        _ => None,
    };
    let report = CampaignReport {
        dataset,
        training,
        fronts: sets
            .iter()
            .map(|s| FrontSummary {
                sdf_type: s.sdf_type,
                orientation: s.orientation,
                members: s.members.len(),
                evaluations: s.evaluations,
                final_hypervolume: s.history.last().and_then(|h| h.hypervolume),
                aborted: s.aborted.clone(),
            })
            .collect(),
        sph_o1_o2_hypervolume_difference: hv,
        validation,
        seconds: t0.elapsed().as_secs_f64(),
    };
    let path = cfg.out_dir.join("campaign_report.json");
    let s = serde_json::to_string_pretty(&report).map_err(|e| Error::Record(e.to_string()))?;
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
