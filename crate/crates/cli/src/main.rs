use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdfwick::grid::{
    export_vtk, read_binary_grid, read_voxel_file, write_voxel_file, FieldKind, GridData, SeededRng,
    VoxelFile,
};
use sdfwick::heat::conductivity_tensor;
use sdfwick::lbm::permeability_tensor;
use sdfwick::objectives::{simulate_design, Evaluation, Orientation};
use sdfwick::optimize::ParetoIndividual;
use sdfwick::pipeline::campaign::{load_fronts, optimize_all};
use sdfwick::pipeline::{
    build_dataset, load_emulators, run_campaign, select_designs, sobol_doe, train_emulators, validate_designs,
    CampaignConfig,
};
use sdfwick::recon::realize;
use sdfwick::sdfgen::{build_sdf, SdfParams, SdfType};
use sdfwick::Error;

#[derive(Parser)]
#[command(name = "sdfwick", version, about = "Spectral-density wick design: reconstruction, simulation, emulation and search")]
struct Cli {
    /// TOML config; every key is optional (see `config --dump`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the config; 0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct DesignArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    phi: f64,
    /// Target solid volume fraction.
    #[arg(long)]
    v: f64,
    /// sph or cyl.
    #[arg(long = "type", default_value = "sph")]
    sdf_type: SdfType,
    /// Voxels per edge.
    #[arg(long, default_value_t = 64)]
    n: usize,
}

impl DesignArgs {
    fn params(&self) -> SdfParams {
        SdfParams::new(self.r, self.sigma, self.theta, self.phi, self.v, self.sdf_type)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the spectral density of a design as a voxel file.
    Generate {
        #[command(flatten)]
        design: DesignArgs,
        /// Output file (default <out>/sdf.vox).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Realize a binary microstructure from a design.
    Reconstruct {
        #[command(flatten)]
        design: DesignArgs,
        /// Noise stream id under the master seed.
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Permeability tensor of a binary voxel file (JSON on stdout).
    SimulatePerm {
        input: PathBuf,
        /// Also run every axis with inlet and outlet swapped.
        #[arg(long)]
        reverse: bool,
    },
    /// Effective conductivity tensor of a binary voxel file (JSON on stdout).
    SimulateCond { input: PathBuf },
    /// Select, clean and simulate one design; prints its record for every orientation.
    Evaluate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Print the first `n` design points as line-delimited JSON.
    Doe {
        #[arg(long)]
        n: usize,
    },
    /// Evaluate the design of experiments at every fidelity (resumable).
    BuildDataset,
    /// Fit the emulators on the dataset.
    Train,
    /// Search the emulated objectives for every SDF type and orientation.
    Optimize,
    /// Simulate designs picked from the fronts and write the comparison table.
    Validate,
    /// Every stage in sequence.
    Campaign,
    /// Convert a voxel file to legacy VTK.
    ExportVtk {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "phase")]
        name: String,
    },
    /// Print the effective config.
    Config {
        /// Print every key with its value.
        #[arg(long)]
        dump: bool,
        /// Start from the desk-scale smoke campaign instead of the defaults.
        #[arg(long)]
        smoke: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Io { .. } => 4,
        Error::InvalidInput(_) | Error::DegenerateData(_) | Error::DimMismatch { .. } => 5,
        Error::Divergence { .. } | Error::NotPositiveDefinite { .. } | Error::DegenerateSdf => 6,
        Error::MalformedHeader(_) | Error::SizeMismatch { .. } | Error::UnknownPhase { .. } | Error::Record(_) => 7,
    }
}

fn load_config(cli: &Cli, smoke: bool) -> sdfwick::Result<CampaignConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CampaignConfig::load(p)?,
        None if smoke => CampaignConfig::smoke("campaign"),
        None => CampaignConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> sdfwick::Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Record(e.to_string()))
}

fn output_path(cfg: &CampaignConfig, given: &Option<PathBuf>, default: &str) -> sdfwick::Result<PathBuf> {
    match given {
        Some(p) => Ok(p.clone()),
        None => {
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io {
                path: cfg.out_dir.clone(),
                source: e,
            })?;
            Ok(cfg.out_dir.join(default))
        }
    }
}

fn provenance(p: &SdfParams) -> serde_json::Value {
    serde_json::to_value(p).unwrap_or_default()
}

fn run(cli: &Cli) -> sdfwick::Result<()> {
    let smoke = matches!(cli.cmd, Cmd::Config { smoke: true, .. });
    let cfg = load_config(cli, smoke)?;
    if cfg.threads > 0 {
        // a second initialization only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match &cli.cmd {
        Cmd::Generate { design, output } => {
            let p = design.params();
            let sdf = build_sdf(&p, design.n)?;
            let path = output_path(&cfg, output, "sdf.vox")?;
            write_voxel_file(
                &VoxelFile::scalar(sdf.to_grid(), FieldKind::Sdf, None).with_provenance(provenance(&p)),
                &path,
            )?;
            println!("{}", path.display());
        }
        Cmd::Reconstruct { design, stream, output } => {
            let p = design.params();
            let seed = SeededRng::new(cfg.seed, *stream);
            let m = realize(&p, design.n, cfg.system.cell_um, seed)?;
            let path = output_path(&cfg, output, "structure.vox")?;
            write_voxel_file(&VoxelFile::binary(m.grid, Some(seed)).with_provenance(provenance(&p)), &path)?;
            println!(
                "{}",
                json(&serde_json::json!({"path": path, "v_target": m.target_v, "v_real": m.v_real}))?
            );
        }
        Cmd::SimulatePerm { input, reverse } => {
            let g = read_binary_grid(input)?;
            println!("{}", json(&permeability_tensor(&g, &cfg.eval.lbm, *reverse)?)?);
        }
        Cmd::SimulateCond { input } => {
            let g = read_binary_grid(input)?;
            println!("{}", json(&conductivity_tensor(&g, &cfg.eval.heat(&cfg.system))?)?);
        }
        Cmd::Evaluate { design, stream } => {
            let seed = SeededRng::new(cfg.seed, *stream);
            match simulate_design(&design.params(), design.n, &cfg.system, &cfg.eval, seed)? {
                Evaluation::Accepted(props, _) => {
                    let rows: Vec<_> = Orientation::ALL
                        .iter()
                        .map(|&o| props.record(0, "custom", o, &cfg.system))
                        .collect();
                    println!("{}", json(&rows)?);
                }
                Evaluation::Discarded { dv, scanned, reason } => {
                    println!("{}", json(&serde_json::json!({"discarded": true, "dv": dv, "scanned": scanned, "reason": reason}))?);
                }
            }
        }
        Cmd::Doe { n } => {
            if *n == 0 {
                return Err(Error::InvalidInput("doe needs n >= 1".into()));
            }
            for p in sobol_doe(*n, &cfg.ranges, cfg.doe_scramble) {
                println!("{}", serde_json::to_string(&p).map_err(|e| Error::Record(e.to_string()))?);
            }
        }
        Cmd::BuildDataset => println!("{}", json(&build_dataset(&cfg)?)?),
        Cmd::Train => println!("{}", json(&train_emulators(&cfg)?.1)?),
        Cmd::Optimize => {
            let em = load_emulators(&cfg.out_dir)?;
            for s in optimize_all(&cfg, &em)? {
                println!("{} {} {}", s.sdf_type, s.orientation, s.members.len());
            }
        }
        Cmd::Validate => {
            let all: Vec<ParetoIndividual> = load_fronts(&cfg.out_dir)?;
            let picked = select_designs(&all, cfg.selection.designs);
            println!("{}", json(&validate_designs(&cfg, &picked)?)?);
        }
        Cmd::Campaign => {
            let r = run_campaign(&cfg)?;
            println!("{}", json(&r)?);
        }
        Cmd::ExportVtk { input, output, name } => match read_voxel_file(input)?.grid {
            GridData::Binary(g) => export_vtk(&g, name, output)?,
            GridData::Scalar(g) => export_vtk(&g, name, output)?,
        },
        Cmd::Config { dump, .. } => {
            if *dump {
                print!("{}", cfg.to_toml());
            } else {
                println!("config digest {}", cfg.digest());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
