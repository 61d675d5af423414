//! Single-marker least-squares scan and scalar shrinkage of its estimates.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Absorber;
use crate::model::{FixedDesign, GenotypeMatrix};
use crate::relationship::allele_frequencies;

/// Per-marker least-squares estimates. `None` marks markers with no genotype
/// variation after absorbing the fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub marker_ids: Vec<String>,
    pub estimate: Vec<Option<f64>>,
    pub se: Vec<Option<f64>>,
    pub statistic: Vec<Option<f64>>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.estimate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimate.is_empty()
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.estimate
            .iter()
            .enumerate()
            .filter_map(|(j, e)| e.is_none().then_some(j))
            .collect()
    }
}

/// Fits `y = X c + w_j b_j + e` separately for every marker.
pub fn ls_scan(w: &GenotypeMatrix, x: &FixedDesign, y: &[f64]) -> Result<ScanResult> {
    let n = w.n();
    if y.len() != n {
        return Err(Error::Dimension {
            context: "phenotypes",
            expected: n,
            found: y.len(),
        });
    }
    if x.nrows() != n {
        return Err(Error::Dimension {
            context: "fixed design rows",
            expected: n,
            found: x.nrows(),
        });
    }
    let df = n as i64 - x.ncols() as i64 - 1;
    if df < 1 {
        return Err(Error::invalid(format!(
            "need n > c + 1 for a marker scan (n={n}, c={})",
            x.ncols()
        )));
    }
    let absorber = Absorber::new(&x.x)?;
    let yt = absorber.apply_vec(&DVector::from_column_slice(y));
    let yy = yt.norm_squared();
    let freqs = if w.has_missing() { Some(allele_frequencies(w)?) } else { None };

    let fits: Vec<(Option<f64>, Option<f64>, Option<f64>)> = (0..w.p())
        .into_par_iter()
        .map(|j| {
            let col = DVector::from_fn(n, |i, _| match w.get(i, j) {
                Some(c) => f64::from(c),
                None => 2.0 * freqs.as_ref().map_or(0.0, |f| f[j]),
            });
            let raw_ss = col.norm_squared();
            let wt = absorber.apply_vec(&col);
            let ww = wt.norm_squared();
            if ww <= 1e-12 * raw_ss.max(1.0) {
                return (None, None, None);
            }
            let b = wt.dot(&yt) / ww;
            let rss = (yy - b * b * ww).max(0.0);
            let se = (rss / df as f64 / ww).sqrt();
            (Some(b), Some(se), Some(b / se))
        })
        .collect();

    let (mut estimate, mut se, mut statistic) = (Vec::new(), Vec::new(), Vec::new());
    for (b, s, t) in fits {
        estimate.push(b);
        se.push(s);
        statistic.push(t);
    }
    Ok(ScanResult {
        marker_ids: w.marker_ids().to_vec(),
        estimate,
        se,
        statistic,
    })
}

/// Scalar shrinkage `b / (1 + lambda)` with `lambda = sigma_e2 / sigma_b2`.
pub fn shrink_ls(b_tilde: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(b_tilde.iter().map(|b| b / (1.0 + lambda)).collect())
}
