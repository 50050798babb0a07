//! Design objectives: supplied mass flow (f1), conductance (f2) and floating
//! clusters (f3), plus the per-design simulation that feeds them.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, SeededRng};
use crate::heat::{conductivity_tensor, HeatConfig};
use crate::lbm::{capillary_pressure, permeability_tensor, FluidProps, LbmConfig};
use crate::morph::{estimate_f3, label_clusters, mean_pore_radius, remove_floating, ClusterReport, Connectivity};
use crate::recon::{realize_from_sdf, Microstructure, NoiseField};
use crate::sdfgen::{build_sdf, SdfParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Unit-cell edge, micrometres.
    pub cell_um: f64,
    /// Wick length, micrometres.
    pub d_wick_um: f64,
    pub fluid: FluidProps,
    /// Solid conductivity, W/mK.
    pub k_solid: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            cell_um: 50.0,
            d_wick_um: 1000.0,
            fluid: FluidProps::default(),
            k_solid: 400.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_um > 0.0) {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        if !(self.d_wick_um >= self.cell_um) {
            return Err(Error::InvalidInput("wick length must be at least one cell".into()));
        }
        if !(self.k_solid > 0.0 && self.fluid.rho > 0.0 && self.fluid.mu > 0.0) {
            return Err(Error::InvalidInput("material properties must be positive".into()));
        }
        Ok(())
    }
}

/// Which microstructure axis becomes the system's vertical (supply) axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    O1,
    O2,
    O3,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::O1, Orientation::O2, Orientation::O3];

    pub fn index(self) -> usize {
        match self {
            Orientation::O1 => 0,
            Orientation::O2 => 1,
            Orientation::O3 => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Microstructure axes feeding (x', y', z').
    pub fn axes(self) -> [usize; 3] {
        match self {
            Orientation::O1 => [0, 1, 2],
            Orientation::O2 => [0, 2, 1],
            Orientation::O3 => [1, 2, 0],
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "O{}", self.index() + 1)
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "O1" => Ok(Orientation::O1),
            "O2" => Ok(Orientation::O2),
            "O3" => Ok(Orientation::O3),
            other => Err(Error::InvalidInput(format!("unknown orientation {other:?}"))),
        }
    }
}

/// In-plane permeabilities and vertical conductivity seen by the system.
pub fn orient(k: [f64; 3], p: [f64; 3], o: Orientation) -> (f64, f64, f64) {
    let [a, b, c] = o.axes();
    (p[a], p[b], k[c])
}

/// Pressure drop across one unit cell (Pa) for a pore radius in micrometres.
pub fn delta_p_uc(sys: &SystemConfig, r_um: f64) -> Result<f64> {
    Ok(capillary_pressure(&sys.fluid, r_um)? * sys.cell_um / sys.d_wick_um)
}

/// Lateral liquid supply rate, kg/s, from permeabilities in square micrometres.
pub fn f1(p_x: f64, p_y: f64, sys: &SystemConfig, dp_uc: f64) -> f64 {
    let p_m2 = (p_x + p_y) * 1e-12;
    4.0 * sys.fluid.rho * p_m2 * dp_uc * sys.cell_um * 1e-6 / sys.fluid.mu
}

/// `f1` divided by `mu * a`, which leaves a pure number.
pub fn f1_dimensionless(f1: f64, sys: &SystemConfig) -> f64 {
    f1 / (sys.fluid.mu * sys.cell_um * 1e-6)
}

/// Vertical thermal conductance, W/K, from conductivity in W/mK.
pub fn f2(k_z: f64, sys: &SystemConfig) -> f64 {
    k_z * sys.cell_um * 1e-6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub f1: f64,
    pub f2: f64,
    pub f3: Option<f64>,
    pub f1_dimensionless: f64,
}

/// Knobs of the per-design simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub max_realizations: usize,
    /// Accept a structure only if the removed floating fraction is below this.
    pub dv_limit: f64,
    /// Realizations averaged for the per-record floating-cluster count (0 skips it).
    pub f3_realizations: usize,
    pub lbm: LbmConfig,
    pub cg_tol: f64,
    pub max_cg_iters: usize,
    pub delta_t: f64,
    pub record_timings: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            max_realizations: 50,
            dv_limit: 0.05,
            f3_realizations: 50,
            lbm: LbmConfig::default(),
            cg_tol: 1e-8,
            max_cg_iters: 20_000,
            delta_t: 50.0,
            record_timings: false,
        }
    }
}

impl EvalSettings {
    pub fn heat(&self, sys: &SystemConfig) -> HeatConfig {
        HeatConfig {
            k_solid: sys.k_solid,
            delta_t: self.delta_t,
            cg_tol: self.cg_tol,
            max_cg_iters: self.max_cg_iters,
        }
    }
}

/// Stream tags separating realization noise from the floating-cluster estimate.
const REALIZATION_TAG: u64 = 1;
const F3_TAG: u64 = 2;

pub fn realization_stream(seed: SeededRng, i: usize) -> SeededRng {
    seed.child(&[REALIZATION_TAG, i as u64])
}

pub fn f3_stream(seed: SeededRng) -> SeededRng {
    seed.child(&[F3_TAG])
}

/// Structure chosen from a realization scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub scanned: usize,
    /// Structure after floating-cluster removal.
    pub structure: Microstructure,
    pub dv: f64,
    pub accepted: bool,
    pub report: ClusterReport,
}

/// Takes the first structure without floating clusters, otherwise the one with
/// the smallest floating volume; removes its floaters and applies the limit.
pub fn select_structure<I>(realizations: I, dv_limit: f64) -> Result<Selection>
where
    I: IntoIterator<Item = Result<Microstructure>>,
{
    let mut best: Option<(usize, Microstructure, f64)> = None;
    let mut scanned = 0;
    for (i, m) in realizations.into_iter().enumerate() {
        let m = m?;
        scanned += 1;
        let report = label_clusters(&m.grid, Connectivity::Face6).report;
        let fv = report.floating_volume_fraction;
        if best.as_ref().is_none_or(|b| fv < b.2) {
            best = Some((i, m, fv));
        }
        if report.n_floating == 0 {
            break;
        }
    }
    let (index, m, _) = best.ok_or_else(|| Error::InvalidInput("no realizations to select from".into()))?;
    let (clean, dv) = remove_floating(&m.grid, Connectivity::Face6);
    let report = label_clusters(&clean, Connectivity::Face6).report;
    Ok(Selection {
        index,
        scanned,
        structure: m.with_grid(clean),
        dv,
        accepted: dv < dv_limit,
        report,
    })
}

/// Realizes up to `max_realizations` structures of one design and selects one.
pub fn select_design_structure(
    params: &SdfParams,
    n: usize,
    cell_um: f64,
    seed: SeededRng,
    settings: &EvalSettings,
) -> Result<Selection> {
    let sdf = build_sdf(params, n)?;
    let iter = (0..settings.max_realizations.max(1)).map(|i| {
        let noise = NoiseField::generate(n, realization_stream(seed, i));
        realize_from_sdf(&sdf, params, cell_um, &noise)
    });
    select_structure(iter, settings.dv_limit)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub realize_s: f64,
    pub lbm_s: f64,
    pub heat_s: f64,
    pub f3_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFlags {
    pub lbm_converged: bool,
    pub heat_converged: bool,
    pub base_connected: bool,
    pub f3_degenerate: bool,
}

/// Simulated properties of one accepted design structure (orientation free).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignProperties {
    pub params: SdfParams,
    pub n: usize,
    pub seed: SeededRng,
    pub realization: usize,
    pub v_real: f64,
    pub dv: f64,
    /// Permeabilities, square micrometres.
    pub p: [f64; 3],
    /// Conductivities, W/mK.
    pub k: [f64; 3],
    pub r_um: f64,
    pub dp_uc: f64,
    pub f3: Option<f64>,
    pub report: ClusterReport,
    pub lbm_converged: bool,
    pub heat_converged: bool,
    pub f3_degenerate: bool,
    pub timings: Option<Timings>,
}

/// One dataset row: a design at one resolution under one orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyRecord {
    pub design_id: usize,
    pub fidelity: String,
    pub params: SdfParams,
    pub n: usize,
    pub orientation: Orientation,
    pub seeds: SeededRng,
    pub realization: usize,
    pub v_real: f64,
    pub dv: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub k_z: f64,
    pub r_um: f64,
    pub dp_uc: f64,
    pub f1: f64,
    pub f1_dimensionless: f64,
    pub f2: f64,
    pub f3: Option<f64>,
    pub system: SystemConfig,
    pub flags: RecordFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl DesignProperties {
    pub fn objectives(&self, o: Orientation, sys: &SystemConfig) -> ObjectiveVector {
        let (px, py, kz) = orient(self.k, self.p, o);
        let f1v = f1(px, py, sys, self.dp_uc);
        ObjectiveVector {
            f1: f1v,
            f2: f2(kz, sys),
            f3: self.f3,
            f1_dimensionless: f1_dimensionless(f1v, sys),
        }
    }

    pub fn record(&self, design_id: usize, fidelity: &str, o: Orientation, sys: &SystemConfig) -> PropertyRecord {
        let obj = self.objectives(o, sys);
        PropertyRecord {
            design_id,
            fidelity: fidelity.to_string(),
            params: self.params,
            n: self.n,
            orientation: o,
            seeds: self.seed,
            realization: self.realization,
            v_real: self.v_real,
            dv: self.dv,
            p_x: self.p[0],
            p_y: self.p[1],
            p_z: self.p[2],
            k_x: self.k[0],
            k_y: self.k[1],
            k_z: self.k[2],
            r_um: self.r_um,
            dp_uc: self.dp_uc,
            f1: obj.f1,
            f1_dimensionless: obj.f1_dimensionless,
            f2: obj.f2,
            f3: obj.f3,
            system: sys.clone(),
            flags: RecordFlags {
                lbm_converged: self.lbm_converged,
                heat_converged: self.heat_converged,
                base_connected: self.report.base_connected_axes[o.axes()[2]],
                f3_degenerate: self.f3_degenerate,
            },
            timings: self.timings.clone(),
        }
    }
}

/// Outcome of a design evaluation: simulated properties or a discard.
#[derive(Clone, Debug, PartialEq)]
pub enum Evaluation {
    Accepted(Box<DesignProperties>, Box<BinaryGrid>),
    Discarded { dv: f64, scanned: usize, reason: String },
}

/// Simulates properties of an already selected structure.
pub fn simulate_structure(
    m: &Microstructure,
    sys: &SystemConfig,
    settings: &EvalSettings,
) -> Result<(FlowHeat, f64, f64)> {
    let t0 = Instant::now();
    let flow = permeability_tensor(&m.grid, &settings.lbm, false)?;
    let lbm_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let heat = conductivity_tensor(&m.grid, &settings.heat(sys))?;
    let heat_s = t1.elapsed().as_secs_f64();
    let r_um = mean_pore_radius(&m.grid)?;
    let dp = delta_p_uc(sys, r_um)?;
    Ok((
        FlowHeat {
            p: flow.k,
            k: heat.k_eff,
            lbm_converged: flow.all_converged,
            heat_converged: heat.axes.iter().all(|a| a.converged),
            lbm_s,
            heat_s,
        },
        r_um,
        dp,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowHeat {
    pub p: [f64; 3],
    pub k: [f64; 3],
    pub lbm_converged: bool,
    pub heat_converged: bool,
    pub lbm_s: f64,
    pub heat_s: f64,
}

/// Selects, cleans and simulates one design at resolution `n`.
pub fn simulate_design(
    params: &SdfParams,
    n: usize,
    sys: &SystemConfig,
    settings: &EvalSettings,
    seed: SeededRng,
) -> Result<Evaluation> {
    sys.validate()?;
    let t0 = Instant::now();
    let sel = select_design_structure(params, n, sys.cell_um, seed, settings)?;
    let realize_s = t0.elapsed().as_secs_f64();
    if !sel.accepted {
        return Ok(Evaluation::Discarded {
            dv: sel.dv,
            scanned: sel.scanned,
            reason: format!(
                "smallest floating volume {:.4} over {} realizations is not below {}",
                sel.dv, sel.scanned, settings.dv_limit
            ),
        });
    }
    let (fh, r_um, dp_uc) = simulate_structure(&sel.structure, sys, settings)?;
    let t3 = Instant::now();
    let (f3, f3_degenerate) = if settings.f3_realizations > 0 {
        let e = estimate_f3(params, n, settings.f3_realizations, f3_stream(seed))?;
        (Some(e.mean).filter(|m| m.is_finite()), e.n_degenerate > 0)
    } else {
        (None, false)
    };
    let f3_s = t3.elapsed().as_secs_f64();
    let props = DesignProperties {
        params: *params,
        n,
        seed,
        realization: sel.index,
        v_real: sel.structure.v_real,
        dv: sel.dv,
        p: fh.p,
        k: fh.k,
        r_um,
        dp_uc,
        f3,
        report: sel.report,
        lbm_converged: fh.lbm_converged,
        heat_converged: fh.heat_converged,
        f3_degenerate,
        timings: settings.record_timings.then_some(Timings {
            realize_s,
            lbm_s: fh.lbm_s,
            heat_s: fh.heat_s,
            f3_s,
        }),
    };
    Ok(Evaluation::Accepted(Box::new(props), Box::new(sel.structure.grid)))
}

/// Objectives of one design under one orientation, or `None` when discarded.
pub fn evaluate_design(
    params: &SdfParams,
    n: usize,
    orientation: Orientation,
    sys: &SystemConfig,
    settings: &EvalSettings,
    seed: SeededRng,
) -> Result<Option<(ObjectiveVector, PropertyRecord)>> {
    match simulate_design(params, n, sys, settings, seed)? {
        Evaluation::Accepted(props, _) => {
            let rec = props.record(0, "custom", orientation, sys);
            Ok(Some((props.objectives(orientation, sys), rec)))
        }
        Evaluation::Discarded { .. } => Ok(None),
    }
}
