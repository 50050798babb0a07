//! Multi-fidelity property dataset and the floating-cluster dataset.
//!
//! Files under `<out>/dataset/`: `records.jsonl` (three orientation rows per
//! accepted design), `quarantine.jsonl` (discards and failures), `f3.jsonl`
//! and `manifest.json`. Rows are appended in design order in chunks, so an
//! interrupted run resumed with the same config reproduces the same bytes.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, FIDELITY_NAMES};
use super::doe::sobol_doe;
use crate::grid::{derive_stream, SeededRng, RNG_ALGORITHM};
use crate::morph::estimate_f3;
use crate::objectives::{simulate_design, Evaluation, Orientation, PropertyRecord};
use crate::sdfgen::SdfParams;
use crate::{Error, Result};

const DESIGN_TAG: u64 = 0x64;
const F3_SET_TAG: u64 = 0x66;

/// Seed of design `id` at fidelity index `fid`.
pub fn design_seed(master: u64, fid: usize, id: usize) -> SeededRng {
    SeededRng::new(master, derive_stream(&[DESIGN_TAG, fid as u64, id as u64]))
}

pub fn f3_seed(master: u64, id: usize) -> SeededRng {
    SeededRng::new(master, derive_stream(&[F3_SET_TAG, id as u64]))
}

/// A design point that produced no rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarantineRecord {
    pub design_id: usize,
    pub fidelity: String,
    pub params: SdfParams,
    pub n: usize,
    pub seeds: SeededRng,
    /// `discarded` (floating-cluster rule) or `failed` (solver error).
    pub kind: String,
    pub reason: String,
    pub dv: Option<f64>,
    pub scanned: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct F3Record {
    pub design_id: usize,
    pub params: SdfParams,
    pub n: usize,
    pub seeds: SeededRng,
    pub f3: f64,
    pub std_err: f64,
    pub n_degenerate: usize,
    /// `train` or `test`.
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub fidelity: String,
    pub design_id: usize,
    pub seeds: SeededRng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub rng: String,
    pub doe: String,
    pub seeds: Vec<SeedEntry>,
    pub records: usize,
    pub quarantined: usize,
    pub f3_records: usize,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub quarantined: usize,
    pub f3_records: usize,
    /// Design evaluations skipped because a previous run finished them.
    pub resumed: usize,
    pub rows_per_fidelity: [usize; 3],
}

pub struct DatasetPaths {
    pub dir: PathBuf,
}

impl DatasetPaths {
    pub fn new(out_dir: &Path) -> Self {
        DatasetPaths {
            dir: out_dir.join("dataset"),
        }
    }
    pub fn records(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }
    pub fn quarantine(&self) -> PathBuf {
        self.dir.join("quarantine.jsonl")
    }
    pub fn f3(&self) -> PathBuf {
        self.dir.join("f3.jsonl")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }
}

/// Parse a line-delimited file; unknown fields are rejected by the record types.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Record(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).map_err(|e| Error::Record(e.to_string()))?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Drop a trailing partial line left by an interrupted write.
fn trim_partial_line(path: &Path) -> Result<()> {
    let Ok(bytes) = std::fs::read(path) else {
        return Ok(());
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    log::warn!("dropping partial trailing line of {}", path.display());
    std::fs::write(path, &bytes[..keep]).map_err(|e| Error::io(path, e))
}

struct Appender {
    path: PathBuf,
    file: File,
}

impl Appender {
    fn open(path: PathBuf) -> Result<Self> {
        trim_partial_line(&path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Appender { path, file })
    }

    fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let mut s = serde_json::to_string(row).map_err(|e| Error::Record(e.to_string()))?;
        s.push('\n');
        self.file.write_all(s.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

enum Outcome {
    Rows(Vec<PropertyRecord>),
    Quarantine(QuarantineRecord),
}

fn evaluate_point(cfg: &CampaignConfig, fid: usize, id: usize, params: &SdfParams) -> Outcome {
    let n = cfg.fidelity.resolutions[fid];
    let seed = design_seed(cfg.seed, fid, id);
    let name = FIDELITY_NAMES[fid];
    let quarantine = |kind: &str, reason: String, dv, scanned| {
        Outcome::Quarantine(QuarantineRecord {
            design_id: id,
            fidelity: name.into(),
            params: *params,
            n,
            seeds: seed,
            kind: kind.into(),
            reason,
            dv,
            scanned,
        })
    };
    match simulate_design(params, n, &cfg.system, &cfg.eval, seed) {
        Ok(Evaluation::Accepted(props, _)) => Outcome::Rows(
            Orientation::ALL
                .iter()
                .map(|&o| props.record(id, name, o, &cfg.system))
                .collect(),
        ),
        Ok(Evaluation::Discarded { dv, scanned, reason }) => quarantine("discarded", reason, Some(dv), Some(scanned)),
        Err(e) => {
            log::warn!("design {id} ({name}) failed: {e}");
            quarantine("failed", e.to_string(), None, None)
        }
    }
}

fn manifest_seeds(cfg: &CampaignConfig) -> Vec<SeedEntry> {
    let mut v = Vec::new();
    for fid in 0..3 {
        for id in 0..cfg.fidelity.counts[fid] {
            v.push(SeedEntry {
                fidelity: FIDELITY_NAMES[fid].into(),
                design_id: id,
                seeds: design_seed(cfg.seed, fid, id),
            });
        }
    }
    let base = cfg.fidelity.counts[2];
    for id in base..base + cfg.f3.points {
        v.push(SeedEntry {
            fidelity: "f3".into(),
            design_id: id,
            seeds: f3_seed(cfg.seed, id),
        });
    }
    v
}

fn write_manifest(cfg: &CampaignConfig, paths: &DatasetPaths, counts: (usize, usize, usize), complete: bool) -> Result<()> {
    let m = Manifest {
        format: "dataset-manifest".into(),
        version: crate::VERSION.into(),
        config_digest: cfg.digest(),
        master_seed: cfg.seed,
        rng: RNG_ALGORITHM.into(),
        doe: format!("Sobol (Joe-Kuo D6), first nonzero point onward, digital shift {}", cfg.doe_scramble),
        seeds: manifest_seeds(cfg),
        records: counts.0,
        quarantined: counts.1,
        f3_records: counts.2,
        complete,
    };
    let path = paths.manifest();
    let s = serde_json::to_string_pretty(&m).map_err(|e| Error::Record(e.to_string()))?;
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(out_dir: &Path) -> Result<Manifest> {
    let path = DatasetPaths::new(out_dir).manifest();
    let s = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Record(e.to_string()))
}

fn chunk_size() -> usize {
    (2 * rayon::current_num_threads()).max(1)
}

/// Evaluate every design at every fidelity and the f3 set, resuming if possible.
pub fn build_dataset(cfg: &CampaignConfig) -> Result<DatasetSummary> {
    cfg.validate()?;
    let paths = DatasetPaths::new(&cfg.out_dir);
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    if paths.manifest().exists() {
        let m = read_manifest(&cfg.out_dir)?;
        if m.config_digest != cfg.digest() {
            return Err(Error::Config(format!(
                "{} was built with a different config (digest {}); use a fresh output directory",
                paths.dir.display(),
                m.config_digest
            )));
        }
    }
    for p in [paths.records(), paths.quarantine(), paths.f3()] {
        trim_partial_line(&p)?;
    }
    let mut done: HashSet<(String, usize)> = HashSet::new();
    if paths.records().exists() {
        for r in read_jsonl::<PropertyRecord>(&paths.records())? {
            done.insert((r.fidelity, r.design_id));
        }
    }
    if paths.quarantine().exists() {
        for q in read_jsonl::<QuarantineRecord>(&paths.quarantine())? {
            done.insert((q.fidelity, q.design_id));
        }
    }
    let mut f3_done: HashSet<usize> = HashSet::new();
    if paths.f3().exists() {
        for r in read_jsonl::<F3Record>(&paths.f3())? {
            f3_done.insert(r.design_id);
        }
    }
    // a design whose three rows were cut short is redone from scratch
    if paths.records().exists() {
        let rows = read_jsonl::<PropertyRecord>(&paths.records())?;
        let mut per: std::collections::HashMap<(String, usize), usize> = Default::default();
        for r in &rows {
            *per.entry((r.fidelity.clone(), r.design_id)).or_default() += 1;
        }
        if per.values().any(|&c| c != Orientation::ALL.len()) {
            let keep: Vec<&PropertyRecord> = rows
                .iter()
                .filter(|r| per[&(r.fidelity.clone(), r.design_id)] == Orientation::ALL.len())
                .collect();
            write_jsonl(&paths.records(), &keep)?;
            done.retain(|k| per.get(k).is_none_or(|&c| c == Orientation::ALL.len()));
        }
    }
    let resumed = done.len() + f3_done.len();
    write_manifest(cfg, &paths, (0, 0, 0), false)?;

    let designs = sobol_doe(cfg.doe_points(), &cfg.ranges, cfg.doe_scramble);
    let mut records = Appender::open(paths.records())?;
    let mut quarantine = Appender::open(paths.quarantine())?;
    for fid in 0..3 {
        let name = FIDELITY_NAMES[fid];
        let todo: Vec<usize> = (0..cfg.fidelity.counts[fid])
            .filter(|&id| !done.contains(&(name.to_string(), id)))
            .collect();
        log::info!(
            "{name} fidelity: {} designs at {}^3 ({} already done)",
            todo.len(),
            cfg.fidelity.resolutions[fid],
            cfg.fidelity.counts[fid] - todo.len()
        );
        for chunk in todo.chunks(chunk_size()) {
            let outs: Vec<Outcome> = chunk
                .par_iter()
                .map(|&id| evaluate_point(cfg, fid, id, &designs[id]))
                .collect();
            for o in outs {
                match o {
                    Outcome::Rows(rows) => {
                        for r in &rows {
                            records.push(r)?;
                        }
                    }
                    Outcome::Quarantine(q) => quarantine.push(&q)?,
                }
            }
            records.flush()?;
            quarantine.flush()?;
        }
    }

    let mut f3_out = Appender::open(paths.f3())?;
    let base = cfg.fidelity.counts[2];
    let todo: Vec<usize> = (base..base + cfg.f3.points).filter(|id| !f3_done.contains(id)).collect();
    log::info!("floating-cluster set: {} designs at {}^3", todo.len(), cfg.f3.resolution);
    for chunk in todo.chunks(chunk_size()) {
        let outs: Vec<std::result::Result<F3Record, QuarantineRecord>> = chunk
            .par_iter()
            .map(|&id| {
                let params = designs[id];
                let seed = f3_seed(cfg.seed, id);
                match estimate_f3(&params, cfg.f3.resolution, cfg.f3.realizations, seed) {
                    Ok(e) if e.mean.is_finite() => Ok(F3Record {
                        design_id: id,
                        params,
                        n: cfg.f3.resolution,
                        seeds: seed,
                        f3: e.mean,
                        std_err: e.std_err,
                        n_degenerate: e.n_degenerate,
                        split: if id - base < cfg.f3.train { "train" } else { "test" }.into(),
                    }),
                    other => Err(QuarantineRecord {
                        design_id: id,
                        fidelity: "f3".into(),
                        params,
                        n: cfg.f3.resolution,
                        seeds: seed,
                        kind: "failed".into(),
                        reason: match other {
                            Err(e) => e.to_string(),
                            Ok(_) => "no valid realization".into(),
                        },
                        dv: None,
                        scanned: None,
                    }),
                }
            })
            .collect();
        for o in outs {
            match o {
                Ok(r) => f3_out.push(&r)?,
                Err(q) => quarantine.push(&q)?,
            }
        }
        f3_out.flush()?;
        quarantine.flush()?;
    }

    let recs: Vec<PropertyRecord> = read_jsonl(&paths.records())?;
    let quar: Vec<QuarantineRecord> = read_jsonl(&paths.quarantine())?;
    let f3s: Vec<F3Record> = read_jsonl(&paths.f3())?;
    let mut per = [0usize; 3];
    for r in &recs {
        if let Some(i) = FIDELITY_NAMES.iter().position(|n| *n == r.fidelity) {
            per[i] += 1;
        }
    }
    write_manifest(cfg, &paths, (recs.len(), quar.len(), f3s.len()), true)?;
    Ok(DatasetSummary {
        records: recs.len(),
        quarantined: quar.len(),
        f3_records: f3s.len(),
        resumed,
        rows_per_fidelity: per,
    })
}

/// Property rows sorted by fidelity then design id.
pub fn load_records(out_dir: &Path) -> Result<Vec<PropertyRecord>> {
    let mut v: Vec<PropertyRecord> = read_jsonl(&DatasetPaths::new(out_dir).records())?;
    let fid = |r: &PropertyRecord| FIDELITY_NAMES.iter().position(|n| *n == r.fidelity).unwrap_or(3);
    v.sort_by_key(|r| (fid(r), r.design_id, r.orientation));
    Ok(v)
}

pub fn load_f3(out_dir: &Path) -> Result<Vec<F3Record>> {
    let mut v: Vec<F3Record> = read_jsonl(&DatasetPaths::new(out_dir).f3())?;
    v.sort_by_key(|r| r.design_id);
    Ok(v)
}
