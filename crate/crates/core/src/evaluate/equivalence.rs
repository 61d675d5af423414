use nalgebra::{DMatrix, DVector};

use super::accuracy::{estimator_equivalence, EquivalenceReport};
use crate::blup::{gblup, snp_blup};
use crate::error::{Error, Result};
use crate::model::{FixedDesign, GenotypeMatrix, Method, ModelFit, VarianceComponents};
use crate::relationship::{genomic_relationship, Centering};
use crate::simulate::simulate_matched;

/// Solves the full `(c + p)` mixed-model system densely by LU, without
/// absorbing fixed effects or switching to the individual-space form.
pub fn snp_blup_dense_reference(
    w: &GenotypeMatrix,
    x: &FixedDesign,
    y: &[f64],
    vc: &VarianceComponents,
) -> Result<ModelFit> {
    let lambda = vc
        .lambda()
        .ok_or_else(|| Error::invalid("dense reference needs sigma_u2 > 0"))?;
    let wd = w.to_imputed()?;
    let (n, c, p) = (w.n(), x.ncols(), w.p());
    let mut full = DMatrix::zeros(n, c + p);
    full.view_mut((0, 0), (n, c)).copy_from(&x.x);
    full.view_mut((0, c), (n, p)).copy_from(&wd);
    let mut lhs = full.transpose() * &full;
    for j in 0..p {
        lhs[(c + j, c + j)] += lambda;
    }
    let rhs = full.transpose() * DVector::from_column_slice(y);
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("dense mixed-model system".into()))?;
    let b: Vec<f64> = sol.rows(c, p).iter().copied().collect();
    let g = &wd * DVector::from_column_slice(&b);
    let mut fit = ModelFit::new(Method::SnpBlup, sol.rows(0, c).iter().copied().collect(), b, w.marker_ids().to_vec());
    fit.genetic_values = Some(g.iter().copied().collect());
    fit.variance = Some(*vc);
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceExperiment {
    pub n: usize,
    pub p: usize,
    pub variance: VarianceComponents,
    /// `(label, report)` for each compared pair of estimators.
    pub comparisons: Vec<(String, EquivalenceReport)>,
}

impl EquivalenceExperiment {
    pub fn pass(&self) -> bool {
        self.comparisons.iter().all(|(_, r)| r.pass)
    }
}

/// Simulates matched data and compares SNP-BLUP, GBLUP with `G = WW'`, and
/// the dense reference solve on their fitted genetic values.
pub fn equivalence_experiment(n: usize, p: usize, h2: f64, tolerance: f64, seed: u64) -> Result<EquivalenceExperiment> {
    let (d, vc) = simulate_matched(n, p, (0.05, 0.5), h2, seed)?;
    let x = FixedDesign::intercept(n);
    let snp = snp_blup(&d.w, &x, &d.y.values, &vc)?;
    let g = genomic_relationship(&d.w, Centering::Raw)?;
    let gb = gblup(&g, &x, &d.y.values, &vc)?;
    let dense = snp_blup_dense_reference(&d.w, &x, &d.y.values, &vc)?;
    Ok(EquivalenceExperiment {
        n,
        p,
        variance: vc,
        comparisons: vec![
            ("snp-blup vs gblup".into(), estimator_equivalence(&snp, &gb, tolerance)?),
            ("snp-blup vs dense".into(), estimator_equivalence(&snp, &dense, tolerance)?),
            ("gblup vs dense".into(), estimator_equivalence(&gb, &dense, tolerance)?),
        ],
    })
}
