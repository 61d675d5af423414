use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::accuracy::{accuracy_report, AccuracyReport};
use crate::bayes::{bayes_a, bayes_b, BayesOptions, ChainConfig};
use crate::blup::{gblup_predict_new, predict, snp_blup, PredictDesign};
use crate::error::{Error, Result};
use crate::model::{EffectPrior, FixedDesign, GenotypeMatrix, VarianceComponents};
use crate::relationship::{genomic_relationship, Centering};
use crate::rng::{domain, stream};

/// Estimator used inside cross-validation.
#[derive(Debug, Clone, Copy)]
pub enum CvMethod<'a> {
    SnpBlup(VarianceComponents),
    /// GBLUP with `G` built from all individuals' genotypes.
    Gblup(VarianceComponents, Centering),
    BayesA(EffectPrior, BayesOptions, ChainConfig),
    BayesB(EffectPrior, BayesOptions, ChainConfig),
    /// Predicts the given value for each held-out individual.
    Oracle(&'a [f64]),
    /// Predicts zero.
    Null,
}

#[derive(Debug, Clone, Copy)]
pub struct CvData<'a> {
    pub w: &'a GenotypeMatrix,
    pub x: &'a FixedDesign,
    pub y: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub test_size: usize,
    /// `None` when the fold is too small or the prediction constant.
    pub accuracy: Option<AccuracyReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub pooled: AccuracyReport,
    /// Held-out prediction for every individual.
    pub predictions: Vec<f64>,
    pub assignment: Vec<usize>,
}

/// Random partition of `0..n` into `folds` groups of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} rows cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, domain::CV_FOLDS, 0));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    Ok(assignment)
}

pub fn cross_validate(data: CvData<'_>, method: CvMethod<'_>, folds: usize, seed: u64) -> Result<CvReport> {
    let n = data.w.n();
    for (what, len) in [("phenotypes", data.y.len()), ("fixed design rows", data.x.nrows())] {
        if len != n {
            return Err(Error::Dimension {
                context: what,
                expected: n,
                found: len,
            });
        }
    }
    if let CvMethod::Oracle(v) = method {
        if v.len() != n {
            return Err(Error::Dimension {
                context: "oracle values",
                expected: n,
                found: v.len(),
            });
        }
    }
    let assignment = fold_assignment(n, folds, seed)?;
    let g = match method {
        CvMethod::Gblup(_, centering) => Some(genomic_relationship(data.w, centering)?),
        _ => None,
    };

    let results: Vec<Result<Vec<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            fold_predictions(data, method, g.as_ref(), &train, &test).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })
        })
        .collect();

    let mut predictions = vec![0.0; n];
    let mut reports = Vec::with_capacity(folds);
    for (f, res) in results.into_iter().enumerate() {
        let pred = res?;
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        for (&i, &p) in test.iter().zip(&pred) {
            predictions[i] = p;
        }
        let truth: Vec<f64> = test.iter().map(|&i| data.y[i]).collect();
        reports.push(FoldReport {
            fold: f,
            test_size: test.len(),
            accuracy: accuracy_report(&truth, &pred).ok(),
        });
    }
    Ok(CvReport {
        folds: reports,
        pooled: accuracy_report(data.y, &predictions)?,
        predictions,
        assignment,
    })
}

fn fold_predictions(
    data: CvData<'_>,
    method: CvMethod<'_>,
    g: Option<&crate::model::RelationshipMatrix>,
    train: &[usize],
    test: &[usize],
) -> Result<Vec<f64>> {
    let y_train: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
    let x_train = data.x.select_rows(train);
    let x_test = data.x.select_rows(test);
    match method {
        CvMethod::Oracle(v) => Ok(test.iter().map(|&i| v[i]).collect()),
        CvMethod::Null => Ok(vec![0.0; test.len()]),
        CvMethod::Gblup(vc, _) => {
            let g = g.expect("relationship built for GBLUP");
            gblup_predict_new(g, train, test, &x_train, &x_test, &y_train, &vc)
        }
        CvMethod::SnpBlup(vc) => {
            let fit = snp_blup(&data.w.select_rows(train)?, &x_train, &y_train, &vc)?;
            predict(&fit, PredictDesign::Genotypes(&data.w.select_rows(test)?), &x_test)
        }
        CvMethod::BayesA(prior, opts, cfg) | CvMethod::BayesB(prior, opts, cfg) => {
            let w_train = data.w.select_rows(train)?;
            let opts = BayesOptions {
                keep_traces: false,
                ..opts
            };
            let summary = if matches!(method, CvMethod::BayesA(..)) {
                bayes_a(&w_train, &x_train, &y_train, &prior, &opts, &cfg)?
            } else {
                bayes_b(&w_train, &x_train, &y_train, &prior, &opts, &cfg)?
            };
            predict(
                &summary.to_model_fit(),
                PredictDesign::Genotypes(&data.w.select_rows(test)?),
                &x_test,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::ResidualVariance;
    use crate::simulate::simulate_matched;

    #[test]
    fn folds_partition_rows() {
        let a = fold_assignment(103, 5, 1).unwrap();
        let mut sizes = [0usize; 5];
        for &f in &a {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 20 || s == 21));
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert_eq!(a, fold_assignment(103, 5, 1).unwrap());
        assert_ne!(a, fold_assignment(103, 5, 2).unwrap());
        assert!(fold_assignment(3, 5, 1).is_err());
        assert!(fold_assignment(10, 1, 1).is_err());
    }

    #[test]
    fn oracle_and_null() {
        let (d, _) = simulate_matched(60, 20, (0.1, 0.5), 0.5, 1).unwrap();
        let m = d.y.values.iter().sum::<f64>() / 60.0;
        let y: Vec<f64> = d.y.values.iter().map(|v| v - m).collect();
        let x = FixedDesign::none(60);
        let data = CvData { w: &d.w, x: &x, y: &y };
        let r = cross_validate(data, CvMethod::Oracle(&y), 4, 3).unwrap();
        assert!((r.pooled.correlation.unwrap() - 1.0).abs() < 1e-12);
        let r = cross_validate(data, CvMethod::Null, 4, 3).unwrap();
        assert!(r.pooled.correlation.is_none());
        let var = y.iter().map(|v| v * v).sum::<f64>() / 60.0;
        assert!((r.pooled.mse - var).abs() < 1e-12);
    }

    #[test]
    fn gblup_and_snp_blup_agree_with_raw_g() {
        let (d, vc) = simulate_matched(60, 30, (0.1, 0.5), 0.5, 2).unwrap();
        let x = FixedDesign::intercept(60);
        let data = CvData { w: &d.w, x: &x, y: &d.y.values };
        let a = cross_validate(data, CvMethod::SnpBlup(vc), 3, 5).unwrap();
        let b = cross_validate(data, CvMethod::Gblup(vc, Centering::Raw), 3, 5).unwrap();
        for (u, v) in a.predictions.iter().zip(&b.predictions) {
            assert!((u - v).abs() < 1e-8);
        }
        assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn failures_name_the_fold() {
        let (d, _) = simulate_matched(30, 10, (0.1, 0.5), 0.5, 2).unwrap();
        // two identical intercept columns: every fold's fit is rank deficient
        let x = FixedDesign::new(nalgebra::DMatrix::from_element(30, 2, 1.0));
        let data = CvData { w: &d.w, x: &x, y: &d.y.values };
        let prior = EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.1 };
        let cfg = ChainConfig {
            iterations: 50,
            burn_in: 10,
            thinning: 1,
            seed: 0,
            chains: 1,
        };
        let err = cross_validate(
            data,
            CvMethod::BayesA(prior, BayesOptions::new(ResidualVariance::Fixed(1.0)), cfg),
            3,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 0, .. }), "{err}");
    }

    #[test]
    fn bayes_cv_runs() {
        let (d, vc) = simulate_matched(80, 20, (0.1, 0.5), 0.6, 4).unwrap();
        let x = FixedDesign::intercept(80);
        let data = CvData { w: &d.w, x: &x, y: &d.y.values };
        let prior = EffectPrior::ScaledInvChiSq { df: 4.012, scale: vc.sigma_u2 };
        let cfg = ChainConfig {
            iterations: 600,
            burn_in: 100,
            thinning: 2,
            seed: 0,
            chains: 1,
        };
        let r = cross_validate(
            data,
            CvMethod::BayesA(prior, BayesOptions::new(ResidualVariance::Fixed(vc.sigma_e2)), cfg),
            4,
            1,
        )
        .unwrap();
        assert!(r.pooled.correlation.unwrap() > 0.3, "{:?}", r.pooled);
    }
}
