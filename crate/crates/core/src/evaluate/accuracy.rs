use crate::error::{Error, Result};
use crate::model::ModelFit;

/// Agreement between true values and predictions. Correlation and slope are
/// `None` when the prediction is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub n: usize,
    pub correlation: Option<f64>,
    /// Large-sample SE `(1 - r^2) / sqrt(n)`.
    pub correlation_se: Option<f64>,
    /// OLS slope of truth on prediction.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub intercept: Option<f64>,
    pub mse: f64,
}

/// Simple regression of `y` on `x` with intercept.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: Option<f64>,
    pub correlation: Option<f64>,
}

pub(crate) fn regress(x: &[f64], y: &[f64]) -> Option<Regression> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 1e-300 * nf {
        return None;
    }
    let slope = sxy / sxx;
    let slope_se = (n > 2).then(|| {
        let rss = (syy - slope * sxy).max(0.0);
        (rss / (nf - 2.0) / sxx).sqrt()
    });
    let correlation = (syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0));
    Some(Regression {
        slope,
        intercept: my - slope * mx,
        slope_se,
        correlation,
    })
}

pub fn accuracy_report(truth: &[f64], prediction: &[f64]) -> Result<AccuracyReport> {
    if truth.len() != prediction.len() {
        return Err(Error::Dimension {
            context: "predictions",
            expected: truth.len(),
            found: prediction.len(),
        });
    }
    let n = truth.len();
    if n < 2 {
        return Err(Error::TooFewSamples { required: 2, found: n });
    }
    if let Some(i) = truth.iter().chain(prediction).position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value at position {}", i % n)));
    }
    let mse = truth.iter().zip(prediction).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n as f64;
    let reg = regress(prediction, truth);
    let correlation = reg.and_then(|r| r.correlation);
    Ok(AccuracyReport {
        n,
        correlation,
        correlation_se: correlation.map(|r| (1.0 - r * r) / (n as f64).sqrt()),
        slope: reg.map(|r| r.slope),
        slope_se: reg.and_then(|r| r.slope_se),
        intercept: reg.map(|r| r.intercept),
        mse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub n: usize,
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the fitted genetic values of two fits on the same individuals.
pub fn estimator_equivalence(a: &ModelFit, b: &ModelFit, tolerance: f64) -> Result<EquivalenceReport> {
    let ga = a
        .genetic_values
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{} fit has no genetic values", a.method)))?;
    let gb = b
        .genetic_values
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{} fit has no genetic values", b.method)))?;
    if ga.len() != gb.len() {
        return Err(Error::Dimension {
            context: "individuals in compared fits",
            expected: ga.len(),
            found: gb.len(),
        });
    }
    let diffs: Vec<f64> = ga.iter().zip(gb).map(|(x, y)| (x - y).abs()).collect();
    let max_abs_diff = diffs.iter().copied().fold(0.0, f64::max);
    let mean_abs_diff = if diffs.is_empty() { 0.0 } else { diffs.iter().sum::<f64>() / diffs.len() as f64 };
    Ok(EquivalenceReport {
        n: diffs.len(),
        max_abs_diff,
        mean_abs_diff,
        tolerance,
        pass: max_abs_diff < tolerance,
    })
}
