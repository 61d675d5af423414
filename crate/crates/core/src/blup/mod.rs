//! Closed-form and linear-system estimators of random effects.

pub mod family;
pub mod mme;
pub mod predict;
pub mod ridge;
pub mod scan;

pub use family::{best_predict_family_future, sire_blup_closed_form, FamilySummary};
pub use mme::solve_mme;
pub use predict::{predict, PredictDesign};
pub use ridge::{gblup, gblup_predict_new, gblup_with, snp_blup, snp_blup_with, SolverOptions, SolverStrategy};
pub use scan::{ls_scan, shrink_ls, ScanResult};
