//! Henderson's mixed-model equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, cholesky, dependent_columns};
use crate::model::{FixedDesign, IncidenceMatrix, Method, ModelFit};

/// Solves
///
/// ```text
/// [ X'X   X'Z              ] [c]   [X'y]
/// [ Z'X   Z'Z + K^-1 lambda] [u] = [Z'y]
/// ```
///
/// for the BLUEs `c` and BLUPs `u`. `kinv` is the inverse of the covariance
/// structure of `u` (identity for unrelated sires).
pub fn solve_mme(
    x: &FixedDesign,
    z: &IncidenceMatrix,
    y: &[f64],
    kinv: &DMatrix<f64>,
    lambda: f64,
) -> Result<ModelFit> {
    let n = y.len();
    let f = z.levels();
    let c = x.ncols();
    if z.nrows() != n {
        return Err(Error::Dimension {
            context: "incidence rows",
            expected: n,
            found: z.nrows(),
        });
    }
    if x.nrows() != n {
        return Err(Error::Dimension {
            context: "fixed design rows",
            expected: n,
            found: x.nrows(),
        });
    }
    if kinv.nrows() != f || kinv.ncols() != f {
        return Err(Error::Dimension {
            context: "inverse relationship matrix",
            expected: f,
            found: kinv.nrows(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_symmetric(kinv, 1e-10)?;
    let dep = dependent_columns(&x.x);
    if !dep.is_empty() {
        return Err(Error::RankDeficient { columns: dep });
    }

    let dim = c + f;
    let mut lhs = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    let xtx = x.x.transpose() * &x.x;
    lhs.view_mut((0, 0), (c, c)).copy_from(&xtx);
    let xty = x.x.transpose() * DVector::from_column_slice(y);
    rhs.rows_mut(0, c).copy_from(&xty);

    for (i, a) in z.assignment().iter().enumerate() {
        let Some(l) = *a else { continue };
        let col = c + l;
        lhs[(col, col)] += 1.0;
        rhs[col] += y[i];
        for k in 0..c {
            let v = x.x[(i, k)];
            lhs[(k, col)] += v;
            lhs[(col, k)] += v;
        }
    }
    for j in 0..f {
        for i in 0..f {
            lhs[(c + i, c + j)] += lambda * kinv[(i, j)];
        }
    }

    let chol = cholesky(lhs, "mixed-model coefficient matrix")?;
    let sol = chol.solve(&rhs);
    let ids = (1..=f).map(|l| format!("level{l}")).collect();
    Ok(ModelFit::new(
        Method::Mme,
        sol.rows(0, c).iter().copied().collect(),
        sol.rows(c, f).iter().copied().collect(),
        ids,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blup::family::{sire_blup_closed_form, FamilySummary};

    #[test]
    fn identity_kinv_matches_closed_form() {
        let y = [1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 0.25];
        let z = IncidenceMatrix::from_levels(3, &[0, 0, 1, 1, 1, 2, 0]).unwrap();
        let fit = solve_mme(&FixedDesign::none(7), &z, &y, &DMatrix::identity(3, 3), 2.5).unwrap();
        let closed = sire_blup_closed_form(&FamilySummary::from_incidence(&y, &z).unwrap(), 2.5).unwrap();
        for (a, b) in fit.random_estimates.iter().zip(&closed) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fit.fixed_estimates.is_empty());
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        // Z square and invertible with an intercept: [X Z] has full column
        // rank only after dropping one level, so test without fixed effects.
        let y = [3.0, -1.0, 2.0];
        let z = IncidenceMatrix::from_levels(3, &[0, 1, 2]).unwrap();
        let fit = solve_mme(&FixedDesign::none(3), &z, &y, &DMatrix::identity(3, 3), 0.0).unwrap();
        for (a, b) in fit.random_estimates.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_dense_joint_inverse() {
        // 30 records, intercept + covariate, 6 related levels
        let n = 30;
        let f = 6;
        let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { ((i * 7 % 11) as f64) / 3.0 - 1.5 });
        let levels: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % f).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 13 % 17) as f64) * 0.37 - 2.0).collect();
        let k = DMatrix::from_fn(f, f, |i, j| if i == j { 1.0 } else { 0.5f64.powi((i as i32 - j as i32).abs()) });
        let kinv = k.try_inverse().unwrap();
        let lambda = 1.7;

        let zd = IncidenceMatrix::from_levels(f, &levels).unwrap().to_dense();
        let mut big = DMatrix::<f64>::zeros(2 + f, 2 + f);
        let mut r = DVector::<f64>::zeros(2 + f);
        let yv = DVector::from_column_slice(&y);
        big.view_mut((0, 0), (2, 2)).copy_from(&(x.transpose() * &x));
        big.view_mut((0, 2), (2, f)).copy_from(&(x.transpose() * &zd));
        big.view_mut((2, 0), (f, 2)).copy_from(&(zd.transpose() * &x));
        big.view_mut((2, 2), (f, f)).copy_from(&(zd.transpose() * &zd + &kinv * lambda));
        r.rows_mut(0, 2).copy_from(&(x.transpose() * &yv));
        r.rows_mut(2, f).copy_from(&(zd.transpose() * &yv));
        let oracle = big.try_inverse().unwrap() * r;

        let fit = solve_mme(
            &FixedDesign::new(x),
            &IncidenceMatrix::from_levels(f, &levels).unwrap(),
            &y,
            &kinv,
            lambda,
        )
        .unwrap();
        let sol: Vec<f64> = fit.fixed_estimates.iter().chain(&fit.random_estimates).copied().collect();
        for (a, b) in sol.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_rank_deficient_and_asymmetric_inputs() {
        let y = [1.0, 2.0, 3.0];
        let z = IncidenceMatrix::from_levels(2, &[0, 1, 1]).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let err = solve_mme(&FixedDesign::new(x), &z, &y, &DMatrix::identity(2, 2), 1.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { columns } if columns == vec![1]));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        let err = solve_mme(&FixedDesign::none(3), &z, &y, &asym, 1.0).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
    }
}
