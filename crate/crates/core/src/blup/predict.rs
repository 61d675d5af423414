use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{FixedDesign, GenotypeMatrix, IncidenceMatrix, ModelFit};

/// Design for new individuals: a level allocation (sire/family models) or
/// marker genotypes (SNP models, matched to the fit by marker id).
#[derive(Debug, Clone, Copy)]
pub enum PredictDesign<'a> {
    Incidence(&'a IncidenceMatrix),
    Genotypes(&'a GenotypeMatrix),
}

/// `y = X_new c + design * u` for the fitted effects.
pub fn predict(fit: &ModelFit, design: PredictDesign<'_>, x_new: &FixedDesign) -> Result<Vec<f64>> {
    if x_new.ncols() != fit.fixed_estimates.len() {
        return Err(Error::Dimension {
            context: "new fixed design columns",
            expected: fit.fixed_estimates.len(),
            found: x_new.ncols(),
        });
    }
    let random = match design {
        PredictDesign::Incidence(z) => {
            if let Some(&Some(l)) = z
                .assignment()
                .iter()
                .find(|a| a.is_some_and(|l| l >= fit.random_estimates.len()))
            {
                return Err(Error::UnknownId {
                    kind: "level",
                    id: format!("level{}", l + 1),
                });
            }
            z.assignment()
                .iter()
                .map(|a| a.map_or(0.0, |l| fit.random_estimates[l]))
                .collect::<Vec<f64>>()
        }
        PredictDesign::Genotypes(w) => {
            let index: HashMap<&str, usize> = fit
                .random_ids
                .iter()
                .enumerate()
                .map(|(k, id)| (id.as_str(), k))
                .collect();
            let mut b = vec![0.0; w.p()];
            let mut seen = vec![false; fit.random_ids.len()];
            for (j, id) in w.marker_ids().iter().enumerate() {
                let k = *index.get(id.as_str()).ok_or_else(|| Error::UnknownId {
                    kind: "marker",
                    id: id.clone(),
                })?;
                b[j] = fit.random_estimates[k];
                seen[k] = true;
            }
            if let Some(k) = seen.iter().position(|s| !s) {
                return Err(Error::UnknownId {
                    kind: "fitted marker absent from genotypes",
                    id: fit.random_ids[k].clone(),
                });
            }
            w.mul_vec(&b)?
        }
    };
    if x_new.nrows() != random.len() {
        return Err(Error::Dimension {
            context: "new fixed design rows",
            expected: random.len(),
            found: x_new.nrows(),
        });
    }
    Ok(random
        .iter()
        .enumerate()
        .map(|(i, u)| u + (0..x_new.ncols()).map(|k| x_new.x[(i, k)] * fit.fixed_estimates[k]).sum::<f64>())
        .collect())
}
