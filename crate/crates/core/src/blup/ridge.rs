//! SNP-BLUP (ridge regression on all markers) and GBLUP (animal model with a
//! genomic relationship matrix).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_symmetric, cholesky, psd_jitter, Absorber, CG_TOLERANCE, DIRECT_SOLVE_MAX_DIM};
use crate::model::{FixedDesign, GenotypeMatrix, Method, ModelFit, RelationshipMatrix, VarianceComponents};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverStrategy {
    /// Dense Cholesky when the smaller system dimension is at most 5,000,
    /// conjugate gradient above that.
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub strategy: SolverStrategy,
    pub cg_tolerance: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            strategy: SolverStrategy::Auto,
            cg_tolerance: CG_TOLERANCE,
            cg_max_iter: 10_000,
        }
    }
}

fn check_rows(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

fn is_monomorphic(w: &GenotypeMatrix, j: usize) -> bool {
    let mut first = None;
    (0..w.n()).filter_map(|i| w.get(i, j)).all(|c| *first.get_or_insert(c) == c)
}

/// Ridge solution of `(W'MW + I lambda) b = W'My`, `M` absorbing the fixed
/// effects and `lambda = sigma_e2 / sigma_b2`.
pub fn snp_blup(w: &GenotypeMatrix, x: &FixedDesign, y: &[f64], vc: &VarianceComponents) -> Result<ModelFit> {
    snp_blup_with(w, x, y, vc, &SolverOptions::default())
}

pub fn snp_blup_with(
    w: &GenotypeMatrix,
    x: &FixedDesign,
    y: &[f64],
    vc: &VarianceComponents,
    opts: &SolverOptions,
) -> Result<ModelFit> {
    let (n, p) = (w.n(), w.p());
    check_rows("phenotypes", n, y.len())?;
    check_rows("fixed design rows", n, x.nrows())?;
    let lambda = vc
        .lambda()
        .ok_or_else(|| Error::invalid("marker-effect variance is zero; shrinkage parameter undefined"))?;

    let mut wd = w.to_imputed()?;
    // Monomorphic markers carry no information and are held at zero.
    for j in 0..p {
        if is_monomorphic(w, j) {
            wd.column_mut(j).fill(0.0);
        }
    }
    let absorber = Absorber::new(&x.x)?;
    let yv = DVector::from_column_slice(y);
    let wt = absorber.apply_mat(&wd);
    let yt = absorber.apply_vec(&yv);

    let direct = match opts.strategy {
        SolverStrategy::Direct => true,
        SolverStrategy::ConjugateGradient => false,
        SolverStrategy::Auto => n.min(p) <= DIRECT_SOLVE_MAX_DIM,
    };

    let (b, sd) = if direct && p <= n {
        let mut lhs = wt.transpose() * &wt;
        for j in 0..p {
            lhs[(j, j)] += lambda;
        }
        let chol = cholesky(lhs, "SNP-BLUP coefficient matrix")?;
        let b = chol.solve(&(wt.transpose() * &yt));
        let inv = chol.inverse();
        let sd: Vec<f64> = (0..p).map(|j| (vc.sigma_e2 * inv[(j, j)]).max(0.0).sqrt()).collect();
        (b, Some(sd))
    } else if direct {
        // Dual form: b = W~' (W~ W~' + I lambda)^-1 y~.
        let mut k = &wt * wt.transpose();
        for i in 0..n {
            k[(i, i)] += lambda;
        }
        let chol = cholesky(k, "SNP-BLUP dual matrix")?;
        let b = wt.transpose() * chol.solve(&yt);
        // (W~'W~ + I lambda)^-1 = (I - W~' K^-1 W~) / lambda
        let half = chol
            .l()
            .solve_lower_triangular(&wt)
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        let sd: Vec<f64> = (0..p)
            .map(|j| {
                let q = half.column(j).norm_squared();
                (vc.sigma_e2 / lambda * (1.0 - q)).max(0.0).sqrt()
            })
            .collect();
        (b, Some(sd))
    } else {
        let mut diag = DVector::from_fn(p, |j, _| wt.column(j).norm_squared());
        diag.add_scalar_mut(lambda);
        let rhs = wt.transpose() * &yt;
        let b = linalg::pcg(
            |v| wt.transpose() * (&wt * v) + v * lambda,
            &diag,
            &rhs,
            opts.cg_tolerance,
            opts.cg_max_iter,
        )?;
        (b, None)
    };

    let g = &wd * &b;
    let c = linalg::ols(&x.x, &(&yv - &g))?;
    let mut fit = ModelFit::new(
        Method::SnpBlup,
        c.iter().copied().collect(),
        b.iter().copied().collect(),
        w.marker_ids().to_vec(),
    );
    fit.random_sd = sd;
    fit.genetic_values = Some(g.iter().copied().collect());
    fit.variance = Some(*vc);
    Ok(fit)
}

/// Animal-model BLUP of genetic values with covariance `G sigma_u2`:
/// `a = G sigma_u2 V^-1 (y - X c)`, `V = G sigma_u2 + I sigma_e2`, with `c` the
/// GLS estimate.
pub fn gblup(g: &RelationshipMatrix, x: &FixedDesign, y: &[f64], vc: &VarianceComponents) -> Result<ModelFit> {
    gblup_with(g, x, y, vc, &SolverOptions::default())
}

pub fn gblup_with(
    g: &RelationshipMatrix,
    x: &FixedDesign,
    y: &[f64],
    vc: &VarianceComponents,
    opts: &SolverOptions,
) -> Result<ModelFit> {
    gblup_parts(g, x, y, vc, opts).map(|(fit, _)| fit)
}

/// GBLUP predictions for individuals without phenotypes.
///
/// `g` covers all individuals; `train` indexes the phenotyped ones (in the
/// order of `y` and `x_train` rows) and `test` those to predict. The genetic
/// values of test individuals are `G[test, train] sigma_u2 P y`.
pub fn gblup_predict_new(
    g: &RelationshipMatrix,
    train: &[usize],
    test: &[usize],
    x_train: &FixedDesign,
    x_test: &FixedDesign,
    y: &[f64],
    vc: &VarianceComponents,
) -> Result<Vec<f64>> {
    check_rows("test fixed design rows", test.len(), x_test.nrows())?;
    if x_test.ncols() != x_train.ncols() {
        return Err(Error::Dimension {
            context: "test fixed design columns",
            expected: x_train.ncols(),
            found: x_test.ncols(),
        });
    }
    let dim = g.dim();
    if let Some(&bad) = train.iter().chain(test).find(|&&i| i >= dim) {
        return Err(Error::invalid(format!("individual index {bad} outside relationship matrix of size {dim}")));
    }
    let sub = RelationshipMatrix::new(g.k.select_rows(train).select_columns(train), g.kind)?;
    let (fit, py) = gblup_parts(&sub, x_train, y, vc, &SolverOptions::default())?;
    let cross = g.k.select_rows(test).select_columns(train);
    let a = cross * py * vc.sigma_u2;
    Ok((0..test.len())
        .map(|i| a[i] + (0..x_test.ncols()).map(|k| x_test.x[(i, k)] * fit.fixed_estimates[k]).sum::<f64>())
        .collect())
}

fn gblup_parts(
    g: &RelationshipMatrix,
    x: &FixedDesign,
    y: &[f64],
    vc: &VarianceComponents,
    opts: &SolverOptions,
) -> Result<(ModelFit, DVector<f64>)> {
    let n = g.dim();
    check_rows("phenotypes", n, y.len())?;
    check_rows("fixed design rows", n, x.nrows())?;
    check_symmetric(&g.k, 1e-10)?;
    psd_jitter(&g.k)?;
    let dep = linalg::dependent_columns(&x.x);
    if !dep.is_empty() {
        return Err(Error::RankDeficient { columns: dep });
    }

    let gs = &g.k * vc.sigma_u2;
    let mut v = gs.clone();
    for i in 0..n {
        v[(i, i)] += vc.sigma_e2;
    }
    let yv = DVector::from_column_slice(y);
    let c_cols = x.ncols();
    let direct = match opts.strategy {
        SolverStrategy::Direct => true,
        SolverStrategy::ConjugateGradient => false,
        SolverStrategy::Auto => n <= DIRECT_SOLVE_MAX_DIM,
    };

    // V^-1 applied to [X | y]
    let mut xy = DMatrix::<f64>::zeros(n, c_cols + 1);
    xy.view_mut((0, 0), (n, c_cols)).copy_from(&x.x);
    xy.set_column(c_cols, &yv);
    let chol = if direct { Some(cholesky(v.clone(), "phenotypic covariance V")?) } else { None };
    let vinv_xy = match &chol {
        Some(ch) => ch.solve(&xy),
        None => {
            let diag = v.diagonal();
            let mut out = DMatrix::zeros(n, c_cols + 1);
            for k in 0..=c_cols {
                let col = linalg::pcg(|u| &v * u, &diag, &xy.column(k).into_owned(), opts.cg_tolerance, opts.cg_max_iter)?;
                out.set_column(k, &col);
            }
            out
        }
    };
    let vinv_x = vinv_xy.columns(0, c_cols).into_owned();
    let vinv_y = vinv_xy.column(c_cols).into_owned();
    let (c, xvx_chol) = if c_cols > 0 {
        let xvx = x.x.transpose() * &vinv_x;
        let ch = cholesky(xvx, "X'V^-1X")?;
        (ch.solve(&(x.x.transpose() * &vinv_y)), Some(ch))
    } else {
        (DVector::zeros(0), None)
    };
    // P y = V^-1 (y - X c)
    let py = &vinv_y - &vinv_x * &c;
    let a = &gs * &py;

    let sd = match (&chol, vc.sigma_u2 > 0.0) {
        (Some(ch), true) => {
            // Var(a | y) = Gs - Gs P Gs
            let half = ch
                .l()
                .solve_lower_triangular(&gs)
                .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
            let fixed_term = xvx_chol.as_ref().map(|xc| {
                let b = vinv_x.transpose() * &gs;
                let sb = xc.solve(&b);
                (0..n).map(|i| b.column(i).dot(&sb.column(i))).collect::<Vec<f64>>()
            });
            Some(
                (0..n)
                    .map(|i| {
                        let mut var = gs[(i, i)] - half.column(i).norm_squared();
                        if let Some(ft) = &fixed_term {
                            var += ft[i];
                        }
                        var.max(0.0).sqrt()
                    })
                    .collect(),
            )
        }
        (Some(_), false) => Some(vec![0.0; n]),
        _ => None,
    };

    let mut fit = ModelFit::new(
        Method::Gblup,
        c.iter().copied().collect(),
        a.iter().copied().collect(),
        (1..=n).map(|i| format!("ind{i}")).collect(),
    );
    fit.random_sd = sd;
    fit.genetic_values = Some(fit.random_estimates.clone());
    fit.variance = Some(*vc);
    Ok((fit, py))
}
