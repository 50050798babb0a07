//! Emulator training on the built dataset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, FIDELITY_NAMES};
use super::dataset::{load_f3, load_records, F3Record};
use crate::objectives::PropertyRecord;
use crate::optimize::Emulators;
use crate::surrogate::{cross_validate, mae, nrmse, GpData, GroupSpec, LmgpModel, LmgpSpec};
use crate::{Error, Result};

const ORIENTATION_NAMES: [&str; 3] = ["O1", "O2", "O3"];
const TYPE_NAMES: [&str; 2] = ["Sph", "Cyl"];

/// Which objective a multi-fidelity emulator targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    F1,
    F2,
}

fn fidelity_index(name: &str) -> Result<usize> {
    FIDELITY_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::Record(format!("unknown fidelity {name:?}")))
}

/// Inputs `[r, sigma, theta, phi, v_real, T]`, levels `[fidelity, orientation]`.
pub fn property_data(records: &[PropertyRecord], target: Target) -> Result<GpData> {
    let mut x = Vec::with_capacity(records.len());
    let mut levels = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        let g = r.params.genome();
        x.push(vec![g[0], g[1], g[2], g[3], r.v_real, r.params.sdf_type.index() as f64]);
        levels.push(vec![fidelity_index(&r.fidelity)?, r.orientation.index()]);
        y.push(match target {
            Target::F1 => r.f1,
            Target::F2 => r.f2,
        });
    }
    Ok(GpData::new(x, levels, y))
}

/// Inputs `[r, sigma, theta, phi, v]`, levels `[T]`.
pub fn floating_data(records: &[F3Record]) -> GpData {
    GpData::new(
        records.iter().map(|r| r.params.genome().to_vec()).collect(),
        records.iter().map(|r| vec![r.params.sdf_type.index()]).collect(),
        records.iter().map(|r| r.f3).collect(),
    )
}

fn property_spec(cfg: &CampaignConfig, seed: u64) -> LmgpSpec {
    LmgpSpec {
        nugget_group: Some(0),
        n_starts: cfg.surrogate.n_starts,
        seed,
        omega_bounds: cfg.surrogate.omega_bounds,
        log_nugget_bounds: cfg.surrogate.log_nugget_bounds,
        max_iters: cfg.surrogate.max_iters,
        ..LmgpSpec::new(vec![GroupSpec::new("fidelity", 3), GroupSpec::new("orientation", 3)])
    }
}

fn floating_spec(cfg: &CampaignConfig, seed: u64) -> LmgpSpec {
    LmgpSpec {
        n_starts: cfg.surrogate.n_starts,
        seed,
        omega_bounds: cfg.surrogate.omega_bounds,
        log_nugget_bounds: cfg.surrogate.log_nugget_bounds,
        max_iters: cfg.surrogate.max_iters,
        ..LmgpSpec::new(vec![GroupSpec::new("sdf_type", 2)])
    }
}

/// Keep the first `rows[f]` rows of each fidelity (in dataset order).
fn take_per_fidelity(records: &[PropertyRecord], rows: &[usize]) -> Result<Vec<PropertyRecord>> {
    if rows.is_empty() {
        return Ok(records.to_vec());
    }
    let mut used = [0usize; 3];
    let mut out = Vec::new();
    for r in records {
        let f = fidelity_index(&r.fidelity)?;
        if used[f] < rows[f] {
            used[f] += 1;
            out.push(r.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub fraction: f64,
    pub rows: usize,
    pub nrmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulatorReport {
    pub name: String,
    pub rows: usize,
    pub rows_per_level: Vec<usize>,
    pub log_likelihood: f64,
    pub jitter: f64,
    pub constant: bool,
    /// Cross-validated NRMSE (property emulators) or test-split NRMSE (floating).
    pub nrmse: Option<f64>,
    pub mae: Option<f64>,
    pub test_rows: usize,
    pub convergence: Vec<ConvergencePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_digest: String,
    pub emulators: Vec<EmulatorReport>,
}

pub struct ModelPaths {
    pub dir: PathBuf,
}

impl ModelPaths {
    pub fn new(out_dir: &Path) -> Self {
        ModelPaths {
            dir: out_dir.join("models"),
        }
    }
    pub fn model(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("train_report.json")
    }
}

/// Emulator file names: permeability, conduction, floating.
pub const MODEL_NAMES: [&str; 3] = ["eta1", "eta2", "eta3"];

fn convergence_study(data: &GpData, spec: &LmgpSpec, fractions: &[f64], folds: usize) -> Vec<ConvergencePoint> {
    let mut out = Vec::new();
    for &fr in fractions {
        // the leading share of every first-group level, so fidelities stay mixed
        let n_levels = data.levels.iter().map(|l| l[0] + 1).max().unwrap_or(0);
        let mut idx = Vec::new();
        for lv in 0..n_levels {
            let rows: Vec<usize> = (0..data.len()).filter(|&i| data.levels[i][0] == lv).collect();
            let take = ((rows.len() as f64 * fr).round() as usize).min(rows.len());
            idx.extend_from_slice(&rows[..take]);
        }
        idx.sort_unstable();
        let m = idx.len();
        let sub = data.subset(&idx);
        match cross_validate(&sub, spec, folds.min(m), spec.seed) {
            Ok(cv) => out.push(ConvergencePoint {
                fraction: fr,
                rows: m,
                nrmse: cv.nrmse,
            }),
            Err(e) => log::warn!("convergence point {fr}: {e}"),
        }
    }
    out
}

fn level_names_property() -> Vec<Vec<String>> {
    vec![
        FIDELITY_NAMES.iter().map(|s| s.to_string()).collect(),
        ORIENTATION_NAMES.iter().map(|s| s.to_string()).collect(),
    ]
}

fn fit_property(
    cfg: &CampaignConfig,
    name: &str,
    records: &[PropertyRecord],
    target: Target,
    seed: u64,
) -> Result<(LmgpModel, EmulatorReport)> {
    let data = property_data(records, target)?;
    let spec = property_spec(cfg, seed);
    log::info!("fitting {name} on {} rows", data.len());
    let model = LmgpModel::fit(&data, &spec)?;
    let (cv_nrmse, cv_mae) = if cfg.surrogate.folds >= 2 && data.len() >= 2 * cfg.surrogate.folds {
        match cross_validate(&data, &spec, cfg.surrogate.folds, seed) {
            Ok(cv) => (Some(cv.nrmse), Some(cv.mae)),
            Err(e) => {
                log::warn!("{name} cross-validation skipped: {e}");
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    let convergence = convergence_study(&data, &spec, &cfg.surrogate.convergence_fractions, cfg.surrogate.folds);
    let report = EmulatorReport {
        name: name.into(),
        rows: data.len(),
        rows_per_level: data.level_counts(0, 3),
        log_likelihood: model.log_likelihood(),
        jitter: model.jitter(),
        constant: model.is_constant(),
        nrmse: cv_nrmse,
        mae: cv_mae,
        test_rows: 0,
        convergence,
    };
    Ok((model, report))
}

/// Fit the three emulators, write them with their latent maps and a report.
pub fn train_emulators(cfg: &CampaignConfig) -> Result<(Emulators, TrainReport)> {
    let records = load_records(&cfg.out_dir)?;
    let mut per = [0usize; 3];
    for r in &records {
        per[fidelity_index(&r.fidelity)?] += 1;
    }
    if per[0] == 0 {
        return Err(Error::DegenerateData("no high-fidelity rows in the dataset".into()));
    }
    let eta1_records = take_per_fidelity(&records, &cfg.surrogate.eta1_rows)?;
    let (eta1, r1) = fit_property(cfg, MODEL_NAMES[0], &eta1_records, Target::F1, cfg.seed)?;
    let (eta2, r2) = fit_property(cfg, MODEL_NAMES[1], &records, Target::F2, cfg.seed.wrapping_add(1))?;

    let f3 = load_f3(&cfg.out_dir)?;
    let (train, test): (Vec<F3Record>, Vec<F3Record>) = f3.into_iter().partition(|r| r.split == "train");
    let data = floating_data(&train);
    let spec = floating_spec(cfg, cfg.seed.wrapping_add(2));
    log::info!("fitting {} on {} rows", MODEL_NAMES[2], data.len());
    let eta3 = LmgpModel::fit(&data, &spec)?;
    let (t_nrmse, t_mae) = if test.len() >= 2 {
        let pred: Vec<f64> = test
            .iter()
            .map(|r| eta3.predict(&r.params.genome(), &[r.params.sdf_type.index()]).mean)
            .collect();
        let obs: Vec<f64> = test.iter().map(|r| r.f3).collect();
        (Some(nrmse(&pred, &obs)), Some(mae(&pred, &obs)))
    } else {
        (None, None)
    };
    let r3 = EmulatorReport {
        name: MODEL_NAMES[2].into(),
        rows: data.len(),
        rows_per_level: data.level_counts(0, 2),
        log_likelihood: eta3.log_likelihood(),
        jitter: eta3.jitter(),
        constant: eta3.is_constant(),
        nrmse: t_nrmse,
        mae: t_mae,
        test_rows: test.len(),
        convergence: convergence_study(&data, &spec, &cfg.surrogate.convergence_fractions, cfg.surrogate.folds),
    };

    let paths = ModelPaths::new(&cfg.out_dir);
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    for (name, model) in MODEL_NAMES.iter().zip([&eta1, &eta2]) {
        model.save(&paths.model(name))?;
        let p = paths.dir.join(format!("{name}_latent.csv"));
        std::fs::write(&p, model.latent_csv(&level_names_property())).map_err(|e| Error::io(&p, e))?;
    }
    eta3.save(&paths.model(MODEL_NAMES[2]))?;
    let p = paths.dir.join(format!("{}_latent.csv", MODEL_NAMES[2]));
    let names = vec![TYPE_NAMES.iter().map(|s| s.to_string()).collect()];
    std::fs::write(&p, eta3.latent_csv(&names)).map_err(|e| Error::io(&p, e))?;

    let report = TrainReport {
        config_digest: cfg.digest(),
        emulators: vec![r1, r2, r3],
    };
    let s = serde_json::to_string_pretty(&report).map_err(|e| Error::Record(e.to_string()))?;
    std::fs::write(paths.report(), s).map_err(|e| Error::io(paths.report(), e))?;
    for r in &report.emulators {
        log::info!("{}: {} rows, NRMSE {:?}, MAE {:?}", r.name, r.rows, r.nrmse, r.mae);
    }
    Ok((
        Emulators {
            permeability: eta1,
            conduction: eta2,
            floating: eta3,
        },
        report,
    ))
}

pub fn load_emulators(out_dir: &Path) -> Result<Emulators> {
    let paths = ModelPaths::new(out_dir);
    Ok(Emulators {
        permeability: LmgpModel::load(&paths.model(MODEL_NAMES[0]))?,
        conduction: LmgpModel::load(&paths.model(MODEL_NAMES[1]))?,
        floating: LmgpModel::load(&paths.model(MODEL_NAMES[2]))?,
    })
}
