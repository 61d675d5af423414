//! Winner's-curse experiments: truncation of a single noisy estimate, and
//! selection of the largest estimates from a genome-wide scan.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::accuracy::regress;
use crate::blup::{ls_scan, shrink_ls};
use crate::error::{Error, Result};
use crate::model::{FixedDesign, GenotypeMatrix};
use crate::rng::{derive_seed, domain, stream};
use crate::simulate::{simulate_marker_scan, MarkerScan};

const TRUNCATION_BLOCK: usize = 1 << 16;

/// Mean of `b + se Z` given `b + se Z > threshold`.
pub fn truncated_normal_mean(b: f64, se: f64, threshold: f64) -> f64 {
    if threshold == f64::NEG_INFINITY {
        return b;
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let alpha = (threshold - b) / se;
    b + se * std.pdf(alpha) / std.sf(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    /// Entries of this bin above the significance threshold.
    pub selected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationResult {
    pub b: f64,
    pub se: f64,
    pub threshold: f64,
    pub replicates: usize,
    pub selected: usize,
    /// Mean estimate among replicates above the threshold.
    pub selected_mean: Option<f64>,
    pub selected_mean_se: Option<f64>,
    pub analytic_mean: f64,
    /// Histogram of all estimates on `b ± 5 se` in bins of `se / 4`; values
    /// outside the range go to the end bins.
    pub histogram: Vec<HistogramBin>,
}

/// Replicates `b_hat = b + N(0, se^2)` and keeps those with `b_hat > threshold`.
pub fn truncation_experiment(b: f64, se: f64, threshold: f64, replicates: usize, seed: u64) -> Result<TruncationResult> {
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::invalid(format!("se must be > 0, got {se}")));
    }
    if replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    if threshold.is_nan() || !b.is_finite() {
        return Err(Error::invalid("b and threshold must be numbers"));
    }
    const BINS: usize = 40;
    let lo = b - 5.0 * se;
    let width = se / 4.0;
    let bin_of = |v: f64| (((v - lo) / width).floor().max(0.0) as usize).min(BINS - 1);

    // Per block: selected count, sum and sum of squares of the selected
    // estimates, and histogram counts (all, selected).
    type Block = (usize, f64, f64, Vec<u64>, Vec<u64>);
    let blocks: Vec<Block> = (0..replicates.div_ceil(TRUNCATION_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let len = TRUNCATION_BLOCK.min(replicates - blk * TRUNCATION_BLOCK);
            let mut rng = stream(seed, domain::TRUNCATION, blk as u64);
            let (mut k, mut s, mut s2) = (0usize, 0.0, 0.0);
            let mut counts = vec![0u64; BINS];
            let mut sel = vec![0u64; BINS];
            for _ in 0..len {
                let z: f64 = StandardNormal.sample(&mut rng);
                let est = b + se * z;
                let bin = bin_of(est);
                counts[bin] += 1;
                if est > threshold {
                    k += 1;
                    s += est;
                    s2 += est * est;
                    sel[bin] += 1;
                }
            }
            (k, s, s2, counts, sel)
        })
        .collect();

    let (mut k, mut s, mut s2) = (0usize, 0.0, 0.0);
    let mut histogram: Vec<HistogramBin> = (0..BINS)
        .map(|i| HistogramBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            count: 0,
            selected: 0,
        })
        .collect();
    for (bk, bs, bs2, counts, sel) in blocks {
        k += bk;
        s += bs;
        s2 += bs2;
        for i in 0..BINS {
            histogram[i].count += counts[i];
            histogram[i].selected += sel[i];
        }
    }
    let selected_mean = (k > 0).then(|| s / k as f64);
    let selected_mean_se = (k > 1).then(|| {
        let m = s / k as f64;
        ((s2 - k as f64 * m * m).max(0.0) / (k - 1) as f64 / k as f64).sqrt()
    });
    Ok(TruncationResult {
        b,
        se,
        threshold,
        replicates,
        selected: k,
        selected_mean,
        selected_mean_se,
        analytic_mean: truncated_normal_mean(b, se, threshold),
        histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionBiasReport {
    pub threshold: f64,
    pub two_sided: bool,
    pub total: usize,
    pub selected: usize,
    pub mean_estimate: Option<f64>,
    pub mean_truth: Option<f64>,
    pub mean_abs_estimate: Option<f64>,
    pub mean_abs_truth: Option<f64>,
    /// SE of `mean|truth| - mean|estimate|` over the selected (paired).
    pub abs_diff_se: Option<f64>,
    /// Slope of truth on estimate within the selected set.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
}

fn passes(score: f64, threshold: f64, two_sided: bool) -> bool {
    if two_sided {
        score.abs() > threshold
    } else {
        score > threshold
    }
}

/// Selects on the estimates themselves.
pub fn selection_bias_report(b_true: &[f64], estimates: &[f64], threshold: f64, two_sided: bool) -> Result<SelectionBiasReport> {
    selection_bias_report_by(b_true, estimates, estimates, threshold, two_sided)
}

/// Selects on `score` (e.g. least-squares estimates) and reports on
/// `estimates` (e.g. their shrunk counterparts).
pub fn selection_bias_report_by(
    b_true: &[f64],
    estimates: &[f64],
    score: &[f64],
    threshold: f64,
    two_sided: bool,
) -> Result<SelectionBiasReport> {
    for (what, v) in [("estimates", estimates), ("selection scores", score)] {
        if v.len() != b_true.len() {
            return Err(Error::Dimension {
                context: what,
                expected: b_true.len(),
                found: v.len(),
            });
        }
    }
    if two_sided && !(threshold >= 0.0) {
        return Err(Error::invalid(format!("two-sided threshold must be >= 0, got {threshold}")));
    }
    let idx: Vec<usize> = (0..score.len()).filter(|&i| passes(score[i], threshold, two_sided)).collect();
    let k = idx.len();
    let est: Vec<f64> = idx.iter().map(|&i| estimates[i]).collect();
    let tru: Vec<f64> = idx.iter().map(|&i| b_true[i]).collect();
    let mean = |v: &[f64]| (k > 0).then(|| v.iter().sum::<f64>() / k as f64);
    let abs_e: Vec<f64> = est.iter().map(|v| v.abs()).collect();
    let abs_t: Vec<f64> = tru.iter().map(|v| v.abs()).collect();
    let abs_diff_se = (k > 1).then(|| {
        let d: Vec<f64> = abs_t.iter().zip(&abs_e).map(|(t, e)| t - e).collect();
        let m = d.iter().sum::<f64>() / k as f64;
        (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
    });
    let reg = regress(&est, &tru);
    Ok(SelectionBiasReport {
        threshold,
        two_sided,
        total: b_true.len(),
        selected: k,
        mean_estimate: mean(&est),
        mean_truth: mean(&tru),
        mean_abs_estimate: mean(&abs_e),
        mean_abs_truth: mean(&abs_t),
        abs_diff_se,
        slope: reg.map(|r| r.slope),
        slope_se: reg.and_then(|r| r.slope_se),
    })
}

/// One selected marker of the scan experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub truth: f64,
    pub ls: f64,
    pub shrunk: f64,
}

/// Direct scan model `b_tilde = b + e` replicated until enough markers pass
/// `|b_tilde| > threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSelectionExperiment {
    pub sigma_b2: f64,
    pub sigma_err2: f64,
    pub markers: usize,
    pub threshold: f64,
    pub min_selected: usize,
    /// Shrinkage ratio; `None` uses `sigma_err2 / sigma_b2`.
    pub lambda: Option<f64>,
    pub max_replicates: usize,
    pub seed: u64,
}

impl Default for ScanSelectionExperiment {
    fn default() -> Self {
        Self {
            sigma_b2: 0.5,
            sigma_err2: 0.5,
            markers: 100_000,
            threshold: 2.5,
            min_selected: 200,
            lambda: None,
            max_replicates: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSelectionResult {
    pub replicates: usize,
    pub lambda: f64,
    pub ls: SelectionBiasReport,
    pub shrunk: SelectionBiasReport,
    pub scatter: Vec<ScatterPoint>,
}

impl ScanSelectionExperiment {
    /// The full scan of replicate `r`.
    pub fn replicate(&self, r: usize) -> Result<MarkerScan> {
        simulate_marker_scan(
            self.markers,
            self.sigma_b2,
            self.sigma_err2,
            derive_seed(self.seed, domain::REPLICATE, r as u64),
        )
    }

    pub fn run(&self) -> Result<ScanSelectionResult> {
        let lambda = match self.lambda {
            Some(l) => l,
            None if self.sigma_b2 > 0.0 => self.sigma_err2 / self.sigma_b2,
            None => return Err(Error::invalid("lambda undefined for sigma_b2 = 0")),
        };
        if self.max_replicates == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        let (mut truth, mut ls, mut shrunk) = (Vec::new(), Vec::new(), Vec::new());
        let mut replicates = 0;
        while replicates < self.max_replicates && (replicates == 0 || truth.len() < self.min_selected) {
            let scan = self.replicate(replicates)?;
            let s = shrink_ls(&scan.b_tilde, lambda)?;
            for i in 0..scan.b_tilde.len() {
                if passes(scan.b_tilde[i], self.threshold, true) {
                    truth.push(scan.b_true[i]);
                    ls.push(scan.b_tilde[i]);
                    shrunk.push(s[i]);
                }
            }
            replicates += 1;
        }
        let ls_report = selection_bias_report(&truth, &ls, self.threshold, true)?;
        let shrunk_report = selection_bias_report_by(&truth, &shrunk, &ls, self.threshold, true)?;
        Ok(ScanSelectionResult {
            replicates,
            lambda,
            ls: ls_report,
            shrunk: shrunk_report,
            scatter: (0..truth.len())
                .map(|i| ScatterPoint {
                    truth: truth[i],
                    ls: ls[i],
                    shrunk: shrunk[i],
                })
                .collect(),
        })
    }
}

/// Shrunk-estimate calibration after selecting on `|ls| > t` for each `t`.
pub fn calibration_by_threshold(
    truth: &[f64],
    ls: &[f64],
    shrunk: &[f64],
    thresholds: &[f64],
) -> Result<Vec<SelectionBiasReport>> {
    thresholds
        .iter()
        .map(|&t| selection_bias_report_by(truth, shrunk, ls, t, true))
        .collect()
}

/// Replicated least-squares scan of one marker with a fixed true effect.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffectReplicates {
    pub b: f64,
    /// Exact sampling SD of the estimate for the fixed design.
    pub sampling_sd: f64,
    pub replicates: usize,
    pub mean_estimate: f64,
    pub mean_estimate_se: f64,
    pub threshold: f64,
    pub selected: usize,
    pub selected_mean: Option<f64>,
    pub selected_mean_se: Option<f64>,
    /// Truncated-normal mean of the selected estimates.
    pub analytic_selected_mean: f64,
}

/// Holds the genotypes of one marker fixed, redraws residuals each
/// replicate, and refits with `ls_scan` (intercept + marker). Selection keeps
/// replicates whose estimate exceeds `threshold` (one-sided).
pub fn fixed_effect_replicates(
    genotypes: &GenotypeMatrix,
    b: f64,
    sigma_e2: f64,
    threshold: f64,
    replicates: usize,
    seed: u64,
) -> Result<FixedEffectReplicates> {
    if genotypes.p() != 1 {
        return Err(Error::invalid("fixed-effect replicates need a single marker"));
    }
    if !(sigma_e2 > 0.0) || replicates < 2 {
        return Err(Error::invalid("need sigma_e2 > 0 and at least two replicates"));
    }
    let n = genotypes.n();
    let w: Vec<f64> = genotypes.to_imputed()?.column(0).iter().copied().collect();
    let mw = w.iter().sum::<f64>() / n as f64;
    let sxx: f64 = w.iter().map(|v| (v - mw).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::AllMonomorphic);
    }
    let sampling_sd = (sigma_e2 / sxx).sqrt();
    let x = FixedDesign::intercept(n);
    let estimates: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, domain::RESIDUALS, r as u64);
            let y: Vec<f64> = w
                .iter()
                .map(|wi| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1.0 + wi * b + sigma_e2.sqrt() * z
                })
                .collect();
            let fit = ls_scan(genotypes, &x, &y)?;
            fit.estimate[0].ok_or(Error::AllMonomorphic)
        })
        .collect::<Result<_>>()?;
    let stats = |v: &[f64]| {
        let k = v.len() as f64;
        let m = v.iter().sum::<f64>() / k;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
        (m, (var / k).sqrt())
    };
    let (mean_estimate, mean_estimate_se) = stats(&estimates);
    let sel: Vec<f64> = estimates.iter().copied().filter(|&e| e > threshold).collect();
    let (selected_mean, selected_mean_se) = match sel.len() {
        0 => (None, None),
        1 => (Some(sel[0]), None),
        _ => {
            let (m, se) = stats(&sel);
            (Some(m), Some(se))
        }
    };
    Ok(FixedEffectReplicates {
        b,
        sampling_sd,
        replicates,
        mean_estimate,
        mean_estimate_se,
        threshold,
        selected: sel.len(),
        selected_mean,
        selected_mean_se,
        analytic_selected_mean: truncated_normal_mean(b, sampling_sd, threshold),
    })
}
