//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter ceiling used when certifying positive semidefiniteness.
pub const PSD_JITTER_MAX: f64 = 1e-8;

/// Dimension up to which systems are solved by dense Cholesky.
pub const DIRECT_SOLVE_MAX_DIM: usize = 5_000;

/// Relative residual tolerance of the conjugate-gradient path.
pub const CG_TOLERANCE: f64 = 1e-10;

pub fn check_symmetric(k: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    let n = k.nrows();
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    if worst > rel_tol * scale {
        return Err(Error::NotSymmetric {
            max_asymmetry: worst,
        });
    }
    Ok(())
}

/// Smallest jitter on the ladder `0, 1e-14, ..., 1e-8` (times `trace / n`)
/// at which `k + jitter I` admits a Cholesky factor.
pub fn psd_jitter(k: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    let trace = k.trace();
    if trace <= 0.0 {
        return if k.iter().all(|&v| v == 0.0) {
            Ok(0.0)
        } else {
            Err(Error::NotPsd { jitter: 0.0 })
        };
    }
    let scale = trace / n as f64;
    let ladder = [0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, PSD_JITTER_MAX];
    for rel in ladder {
        let jitter = rel * scale;
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if Cholesky::new(m).is_some() {
            return Ok(jitter);
        }
    }
    Err(Error::NotPsd {
        jitter: PSD_JITTER_MAX * scale,
    })
}

pub fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Indices of columns of `x` that are linearly dependent on earlier columns
/// (modified Gram-Schmidt with a relative tolerance).
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let d = q.dot(&v);
            v.axpy(-d, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Orthogonal projection onto the complement of the column space of `X`,
/// i.e. `M = I - X (X'X)^-1 X'`, applied without forming `M`.
#[derive(Debug, Clone)]
pub struct Absorber {
    q: DMatrix<f64>,
}

impl Absorber {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let dep = dependent_columns(x);
        if !dep.is_empty() {
            return Err(Error::RankDeficient { columns: dep });
        }
        let q = if x.ncols() == 0 {
            DMatrix::zeros(x.nrows(), 0)
        } else {
            x.clone().qr().q()
        };
        Ok(Self { q })
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return v.clone();
        }
        v - &self.q * (self.q.transpose() * v)
    }

    pub fn apply_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.q.ncols() == 0 {
            return m.clone();
        }
        m - &self.q * (self.q.transpose() * m)
    }
}

/// Least-squares coefficients of `v` on the full-rank `x`.
pub fn ols(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let xtx = x.transpose() * x;
    let chol = cholesky(xtx, "X'X")?;
    Ok(chol.solve(&(x.transpose() * v)))
}

/// Jacobi-preconditioned conjugate gradient for a symmetric positive definite
/// operator. Stops when `|r| <= tol |b|`.
pub fn pcg<F>(apply: F, diag: &DVector<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag = diag.map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });
    let mut r = b.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
        z = r.component_mul(&inv_diag);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: r.norm() / bnorm,
    })
}
