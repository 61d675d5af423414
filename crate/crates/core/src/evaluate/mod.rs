//! Accuracy, calibration and selection-bias measures, the two winner's-curse
//! experiments, the SNP-BLUP/GBLUP equivalence check, and k-fold
//! cross-validation.

mod accuracy;
mod cv;
mod equivalence;
mod selection;

pub use accuracy::{accuracy_report, estimator_equivalence, AccuracyReport, EquivalenceReport};
pub use cv::{cross_validate, fold_assignment, CvData, CvMethod, CvReport, FoldReport};
pub use equivalence::{equivalence_experiment, snp_blup_dense_reference, EquivalenceExperiment};
pub use selection::{
    calibration_by_threshold, fixed_effect_replicates, selection_bias_report, selection_bias_report_by,
    truncated_normal_mean, truncation_experiment, FixedEffectReplicates, HistogramBin, ScanSelectionExperiment,
    ScanSelectionResult, ScatterPoint, SelectionBiasReport, TruncationResult,
};
