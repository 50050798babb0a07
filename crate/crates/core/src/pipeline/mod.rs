//! Campaign orchestration: DOE, dataset, emulator training, optimization and
//! validation of selected designs.

pub mod campaign;
pub mod config;
pub mod dataset;
pub mod doe;
pub mod train;

pub use campaign::{
    optimize_all, relative_hypervolume_difference, run_campaign, select_designs, validate_designs, CampaignReport,
    ValidationRow,
};
pub use config::{CampaignConfig, FIDELITY_NAMES};
pub use dataset::{build_dataset, design_seed, load_f3, load_records, read_jsonl, DatasetSummary, F3Record, QuarantineRecord};
pub use doe::{point_to_params, sobol_doe, sobol_points};
pub use train::{load_emulators, train_emulators, TrainReport};
