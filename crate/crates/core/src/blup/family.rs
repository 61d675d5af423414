//! Best prediction within half-sib families.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::IncidenceMatrix;

/// Record count and mean per family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySummary {
    pub counts: Vec<usize>,
    /// `None` for families without records.
    pub means: Vec<Option<f64>>,
}

impl FamilySummary {
    pub fn from_groups(groups: &[Vec<f64>]) -> Self {
        let counts = groups.iter().map(Vec::len).collect();
        let means = groups
            .iter()
            .map(|g| (!g.is_empty()).then(|| g.iter().sum::<f64>() / g.len() as f64))
            .collect();
        Self { counts, means }
    }

    pub fn from_incidence(y: &[f64], z: &IncidenceMatrix) -> Result<Self> {
        if y.len() != z.nrows() {
            return Err(Error::Dimension {
                context: "records vs incidence rows",
                expected: z.nrows(),
                found: y.len(),
            });
        }
        let mut sums = vec![0.0; z.levels()];
        let mut counts = vec![0usize; z.levels()];
        for (v, a) in y.iter().zip(z.assignment()) {
            if let Some(l) = a {
                sums[*l] += v;
                counts[*l] += 1;
            }
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(Self { counts, means })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Sire BLUP without fixed effects: `s_i = ybar_i n_i / (n_i + lambda)`.
pub fn sire_blup_closed_form(fams: &FamilySummary, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(fams
        .counts
        .iter()
        .zip(&fams.means)
        .map(|(&n, mean)| match mean {
            Some(m) if n > 0 => {
                let n = n as f64;
                if lambda.is_infinite() {
                    0.0
                } else {
                    m * n / (n + lambda)
                }
            }
            _ => 0.0,
        })
        .collect())
}

/// Expected record of a future family member given the existing records,
/// `v' V^-1 y` with `V = I sigma_e2 + J sigma_s2` and `v = sigma_s2 1`.
pub fn best_predict_family_future(y_existing: &[f64], sigma_s2: f64, sigma_e2: f64) -> Result<f64> {
    if !(sigma_s2 >= 0.0 && sigma_e2 >= 0.0) {
        return Err(Error::invalid(format!(
            "variances must be >= 0 (sigma_s2={sigma_s2}, sigma_e2={sigma_e2})"
        )));
    }
    if sigma_s2 == 0.0 && sigma_e2 == 0.0 {
        return Err(Error::Singular("both variance components are zero".into()));
    }
    let m = y_existing.len();
    if m == 0 {
        return Ok(0.0);
    }
    let v_existing = DMatrix::from_fn(m, m, |i, j| sigma_s2 + if i == j { sigma_e2 } else { 0.0 });
    let chol = v_existing
        .cholesky()
        .ok_or_else(|| Error::Singular("covariance of existing records".into()))?;
    let alpha = chol.solve(&DVector::from_column_slice(y_existing));
    Ok(sigma_s2 * alpha.sum())
}
