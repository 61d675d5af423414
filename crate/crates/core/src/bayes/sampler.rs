use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{BayesOptions, ChainConfig, ChainTrace, ResidualVariance};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{FixedDesign, GenotypeMatrix};
use crate::rng::{domain, stream, StreamRng};

/// Residuals are rebuilt from scratch at this interval to stop rounding drift.
const RESIDUAL_REFRESH: usize = 100;

#[derive(Debug, Clone, Copy)]
pub(super) struct Slab {
    pub q: f64,
    pub df: f64,
    pub scale: f64,
    /// Bayes B update (mixture with a point mass at zero).
    pub spike: bool,
}

pub(super) struct Data {
    n: usize,
    /// Imputed marker columns.
    cols: Vec<Vec<f64>>,
    ww: Vec<f64>,
    /// Visiting order: column indices sorted by marker id. Position in this
    /// list is the locus stream index.
    order: Vec<usize>,
    x: DMatrix<f64>,
    /// Lower Cholesky factor of X'X.
    xtx_l: Option<DMatrix<f64>>,
    y: Vec<f64>,
}

impl Data {
    pub fn new(w: &GenotypeMatrix, x: &FixedDesign, y: &[f64]) -> Result<Self> {
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
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("phenotype {i} is not finite")));
        }
        let dense = w.to_imputed()?;
        let cols: Vec<Vec<f64>> = (0..w.p()).map(|j| dense.column(j).iter().copied().collect()).collect();
        let ww = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let ids = w.marker_ids();
        let mut order: Vec<usize> = (0..w.p()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        let xtx_l = if x.ncols() > 0 {
            Some(cholesky(x.x.transpose() * &x.x, "fixed-effect cross-product")?.l())
        } else {
            None
        };
        Ok(Self {
            n,
            cols,
            ww,
            order,
            x: x.x.clone(),
            xtx_l,
            y: y.to_vec(),
        })
    }

    fn residual(&self, b: &[f64], c: &DVector<f64>) -> Vec<f64> {
        let xc = &self.x * c;
        let mut r: Vec<f64> = self.y.iter().zip(xc.iter()).map(|(y, f)| y - f).collect();
        for (col, &bj) in self.cols.iter().zip(b) {
            if bj != 0.0 {
                axpy(-bj, col, &mut r);
            }
        }
        r
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn chisq(rng: &mut StreamRng, df: f64) -> f64 {
    ChiSquared::new(df).expect("df validated").sample(rng)
}

/// Log likelihood of locus variance `v` relative to `v = 0`, with the effect
/// integrated out.
fn log_marginal(v: f64, ww: f64, rhs: f64, se2: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    -0.5 * (1.0 + ww * v / se2).ln() + 0.5 * rhs * rhs * v / (se2 * (se2 + ww * v))
}

pub(super) fn run_chain(data: &Data, slab: Slab, opts: &BayesOptions, cfg: &ChainConfig, k: usize) -> Result<ChainTrace> {
    let seed = cfg.chain_seed(k);
    let p = data.cols.len();
    let mut locus_rngs: Vec<StreamRng> = (0..p).map(|t| stream(seed, domain::MCMC_LOCUS, t as u64)).collect();
    let mut global = stream(seed, domain::MCMC_GLOBAL, 0);

    let slab_mean = if slab.df > 2.0 {
        slab.df * slab.scale / (slab.df - 2.0)
    } else {
        slab.scale
    };
    let start_var = if opts.pin_locus_variance {
        slab.scale
    } else if slab.spike && slab.q == 0.0 {
        0.0
    } else {
        slab_mean
    };
    let mut b = vec![0.0; p];
    let mut var = vec![start_var; p];
    let mut c = DVector::zeros(data.x.ncols());
    let mut se2 = opts.residual.initial();
    let mut r = data.residual(&b, &c);

    let mut trace = ChainTrace {
        seed,
        iterations: Vec::with_capacity(cfg.retained()),
        effects: Vec::with_capacity(cfg.retained()),
        locus_variances: Vec::with_capacity(cfg.retained()),
        fixed: Vec::with_capacity(cfg.retained()),
        sigma_e2: Vec::with_capacity(cfg.retained()),
    };

    for it in 0..cfg.iterations {
        if it > 0 && it % RESIDUAL_REFRESH == 0 {
            r = data.residual(&b, &c);
        }

        // Fixed effects under a flat prior: N((X'X)^-1 X'(r + Xc), se2 (X'X)^-1).
        if let Some(l) = &data.xtx_l {
            let partial: DVector<f64> = DVector::from_column_slice(&r) + &data.x * &c;
            let rhs = data.x.transpose() * partial;
            let mean = l.transpose().solve_upper_triangular(&l.solve_lower_triangular(&rhs).expect("nonsingular"));
            let z = DVector::from_fn(c.len(), |_, _| normal(&mut global));
            let noise = l.transpose().solve_upper_triangular(&z).expect("nonsingular") * se2.sqrt();
            let new_c = mean.expect("nonsingular") + noise;
            let delta = &data.x * (&new_c - &c);
            for (ri, d) in r.iter_mut().zip(delta.iter()) {
                *ri -= d;
            }
            c = new_c;
        }

        for (t, &j) in data.order.iter().enumerate() {
            let ww = data.ww[j];
            if ww == 0.0 {
                continue;
            }
            let rng = &mut locus_rngs[t];
            let col = &data.cols[j];
            let old = b[j];
            let rhs = dot(col, &r) + ww * old;

            if slab.spike {
                let proposal = if rng.random::<f64>() < slab.q {
                    slab.df * slab.scale / chisq(rng, slab.df)
                } else {
                    0.0
                };
                let log_ratio = log_marginal(proposal, ww, rhs, se2) - log_marginal(var[j], ww, rhs, se2);
                let u: f64 = rng.random();
                if u.ln() < log_ratio {
                    var[j] = proposal;
                }
            }

            let new = if var[j] > 0.0 {
                let lhs = ww + se2 / var[j];
                rhs / lhs + (se2 / lhs).sqrt() * normal(rng)
            } else {
                0.0
            };
            if new != old {
                axpy(old - new, col, &mut r);
            }
            b[j] = new;

            if !opts.pin_locus_variance && var[j] > 0.0 {
                var[j] = (slab.df * slab.scale + new * new) / chisq(rng, slab.df + 1.0);
            }
            if !(b[j].is_finite() && var[j].is_finite()) {
                return Err(Error::Divergent {
                    chain: k,
                    iteration: it,
                    what: format!("locus {j}"),
                });
            }
        }

        if let ResidualVariance::Sampled { df, scale } = opts.residual {
            let rr = dot(&r, &r);
            se2 = (df * scale + rr) / chisq(&mut global, df + data.n as f64);
            if !(se2.is_finite() && se2 > 0.0) {
                return Err(Error::Divergent {
                    chain: k,
                    iteration: it,
                    what: "residual variance".into(),
                });
            }
        }

        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thinning) {
            trace.iterations.push(it);
            trace.effects.push(b.clone());
            trace.locus_variances.push(var.clone());
            trace.fixed.push(c.iter().copied().collect());
            trace.sigma_e2.push(se2);
        }
    }
    Ok(trace)
}
