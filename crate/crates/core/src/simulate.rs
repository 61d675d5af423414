//! Seeded generators for genotypes, marker effects, phenotypes, half-sib
//! families and the direct marker-scan model.
//!
//! Loci are independent (linkage equilibrium) and in Hardy-Weinberg
//! proportions. Each column, marker, individual or family draws from its own
//! stream (see [`crate::rng`]), so results are identical for any thread count.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{EffectPrior, FixedDesign, GenotypeMatrix, IncidenceMatrix, PhenotypeVector, VarianceComponents};
use crate::relationship::allele_frequencies;
use crate::rng::{derive_seed, domain, stream, StreamRng};

fn check_maf(maf_range: (f64, f64)) -> Result<()> {
    let (lo, hi) = maf_range;
    if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
        return Err(Error::invalid(format!(
            "allele-frequency range must satisfy 0 < low <= high <= 0.5, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be >= 0 and finite, got {v}")));
    }
    Ok(())
}

fn normal(rng: &mut StreamRng, var: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * var.sqrt()
}

/// Draws `n x p` genotypes. Marker `j` gets a frequency uniform on
/// `maf_range` and codes `Binomial(2, p_j)`.
pub fn simulate_genotypes(n: usize, p: usize, maf_range: (f64, f64), seed: u64) -> Result<GenotypeMatrix> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n and p must be >= 1"));
    }
    check_maf(maf_range)?;
    let columns: Vec<Vec<u8>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, domain::GENOTYPES, j as u64);
            let freq = if maf_range.0 == maf_range.1 {
                maf_range.0
            } else {
                rng.random_range(maf_range.0..=maf_range.1)
            };
            let binom = Binomial::new(2, freq).expect("frequency validated");
            (0..n).map(|_| binom.sample(&mut rng) as u8).collect()
        })
        .collect();
    GenotypeMatrix::from_col_major(n, p, columns.concat())
}

/// Per-locus effect variance drawn from a scaled inverse chi-square: `df * scale / chi2(df)`.
pub(crate) fn draw_scaled_inv_chisq(rng: &mut StreamRng, df: f64, scale: f64) -> f64 {
    let chi = ChiSquared::new(df).expect("df validated");
    df * scale / chi.sample(rng)
}

/// Draws `p` marker effects from `prior`.
pub fn simulate_effects(p: usize, prior: &EffectPrior, seed: u64) -> Result<Vec<f64>> {
    prior.validate()?;
    let prior = *prior;
    Ok((0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, domain::EFFECTS, j as u64);
            match prior {
                EffectPrior::Normal { sigma_b2 } => normal(&mut rng, sigma_b2),
                EffectPrior::ScaledInvChiSq { df, scale } => {
                    let var = draw_scaled_inv_chisq(&mut rng, df, scale);
                    normal(&mut rng, var)
                }
                EffectPrior::SpikeSlab { q, df, scale } => {
                    let u: f64 = rng.random();
                    if u < q {
                        let var = draw_scaled_inv_chisq(&mut rng, df, scale);
                        normal(&mut rng, var)
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect())
}

/// A simulated marker dataset with its generating truth.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub w: GenotypeMatrix,
    pub x: FixedDesign,
    pub c_true: Vec<f64>,
    pub b_true: Vec<f64>,
    pub y: PhenotypeVector,
    pub g_true: Vec<f64>,
    pub e: Vec<f64>,
}

/// `y = X c + W b + e` with `e ~ N(0, sigma_e2)` iid.
pub fn simulate_phenotypes(
    w: &GenotypeMatrix,
    b_true: &[f64],
    x: &FixedDesign,
    c: &[f64],
    sigma_e2: f64,
    seed: u64,
) -> Result<SimulatedDataset> {
    check_variance("sigma_e2", sigma_e2)?;
    let n = w.n();
    if x.nrows() != n {
        return Err(Error::Dimension {
            context: "fixed design rows",
            expected: n,
            found: x.nrows(),
        });
    }
    if c.len() != x.ncols() {
        return Err(Error::Dimension {
            context: "fixed effects",
            expected: x.ncols(),
            found: c.len(),
        });
    }
    let g_true = w.mul_vec(b_true)?;
    let e: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| normal(&mut stream(seed, domain::RESIDUALS, i as u64), sigma_e2))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let xc: f64 = (0..c.len()).map(|k| x.x[(i, k)] * c[k]).sum();
            xc + g_true[i] + e[i]
        })
        .collect();
    Ok(SimulatedDataset {
        w: w.clone(),
        x: x.clone(),
        c_true: c.to_vec(),
        b_true: b_true.to_vec(),
        y: PhenotypeVector::new(y, w.individual_ids().to_vec())?,
        g_true,
        e,
    })
}

/// Parameter bundle for a complete marker/phenotype simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecipe {
    pub n: usize,
    pub p: usize,
    pub maf_range: (f64, f64),
    pub prior: EffectPrior,
    pub sigma_e2: f64,
    /// True fixed effects; the first applies to an intercept column, the rest
    /// to standard-normal covariates. `None` means no fixed effects.
    pub fixed_effects: Option<Vec<f64>>,
    pub seed: u64,
}

impl SimulationRecipe {
    pub fn run(&self) -> Result<SimulatedDataset> {
        let w = simulate_genotypes(
            self.n,
            self.p,
            self.maf_range,
            derive_seed(self.seed, domain::GENOTYPES, 0),
        )?;
        let b = simulate_effects(self.p, &self.prior, derive_seed(self.seed, domain::EFFECTS, 0))?;
        let (x, c) = match &self.fixed_effects {
            None => (FixedDesign::none(self.n), Vec::new()),
            Some(c) if c.is_empty() => (FixedDesign::none(self.n), Vec::new()),
            Some(c) => {
                let mut x = DMatrix::from_element(self.n, c.len(), 1.0);
                for k in 1..c.len() {
                    let mut rng = stream(self.seed, domain::COVARIATES, k as u64);
                    for i in 0..self.n {
                        x[(i, k)] = normal(&mut rng, 1.0);
                    }
                }
                (FixedDesign::new(x), c.clone())
            }
        };
        simulate_phenotypes(&w, &b, &x, &c, self.sigma_e2, derive_seed(self.seed, domain::RESIDUALS, 0))
    }
}

/// Simulation whose normal effect prior is matched to a target heritability:
/// `sigma_b2 = h2 / sum 2p(1-p)` over realised frequencies and
/// `sigma_e2 = 1 - h2`, so the phenotypic variance is about 1. An intercept of
/// zero is included as the only fixed effect. Returns the dataset and the
/// variance components (`sigma_u2 = sigma_b2`) used to generate it.
pub fn simulate_matched(
    n: usize,
    p: usize,
    maf_range: (f64, f64),
    h2: f64,
    seed: u64,
) -> Result<(SimulatedDataset, VarianceComponents)> {
    if !(h2 > 0.0 && h2 < 1.0) {
        return Err(Error::invalid(format!("heritability must lie in (0, 1), got {h2}")));
    }
    let w = simulate_genotypes(n, p, maf_range, derive_seed(seed, domain::GENOTYPES, 0))?;
    let freqs = allele_frequencies(&w)?;
    let het: f64 = freqs.iter().map(|&f| 2.0 * f * (1.0 - f)).sum();
    if het <= 0.0 {
        return Err(Error::AllMonomorphic);
    }
    let vc = VarianceComponents::new(1.0 - h2, h2 / het)?;
    let b = simulate_effects(p, &EffectPrior::Normal { sigma_b2: vc.sigma_u2 }, derive_seed(seed, domain::EFFECTS, 0))?;
    let ds = simulate_phenotypes(
        &w,
        &b,
        &FixedDesign::intercept(n),
        &[0.0],
        vc.sigma_e2,
        derive_seed(seed, domain::RESIDUALS, 0),
    )?;
    Ok((ds, vc))
}

/// Half-sib records grouped by sire family.
#[derive(Debug, Clone, PartialEq)]
pub struct SireFamilies {
    pub s_true: Vec<f64>,
    pub records: Vec<Vec<f64>>,
}

impl SireFamilies {
    /// Flattened records with the incidence matrix allocating them to families.
    pub fn flatten(&self) -> Result<(Vec<f64>, IncidenceMatrix)> {
        let mut y = Vec::new();
        let mut levels = Vec::new();
        for (f, recs) in self.records.iter().enumerate() {
            y.extend_from_slice(recs);
            levels.extend(std::iter::repeat_n(f, recs.len()));
        }
        Ok((y, IncidenceMatrix::from_levels(self.records.len(), &levels)?))
    }
}

/// `f` families, sire effects `s ~ N(0, sigma_s2)` and records `s_i + e`.
pub fn simulate_sire_families(
    f: usize,
    family_sizes: &[usize],
    sigma_s2: f64,
    sigma_e2: f64,
    seed: u64,
) -> Result<SireFamilies> {
    if f == 0 {
        return Err(Error::invalid("need at least one family"));
    }
    if family_sizes.len() != f {
        return Err(Error::Dimension {
            context: "family sizes",
            expected: f,
            found: family_sizes.len(),
        });
    }
    check_variance("sigma_s2", sigma_s2)?;
    check_variance("sigma_e2", sigma_e2)?;
    let (s_true, records) = (0..f)
        .into_par_iter()
        .map(|i| {
            let s = normal(&mut stream(seed, domain::SIRE_EFFECTS, i as u64), sigma_s2);
            let mut rng = stream(seed, domain::FAMILY_RECORDS, i as u64);
            let recs: Vec<f64> = (0..family_sizes[i]).map(|_| s + normal(&mut rng, sigma_e2)).collect();
            (s, recs)
        })
        .unzip();
    Ok(SireFamilies { s_true, records })
}

/// Truth and unbiased-but-noisy estimates for the direct scan model
/// `b_tilde = b + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerScan {
    pub b_true: Vec<f64>,
    pub b_tilde: Vec<f64>,
}

const SCAN_BLOCK: usize = 4096;

/// Draws `b ~ N(0, sigma_b2)` and `b_tilde = b + N(0, sigma_err2)`. Markers are
/// generated in fixed blocks of 4096, each block on its own stream.
pub fn simulate_marker_scan(n_markers: usize, sigma_b2: f64, sigma_err2: f64, seed: u64) -> Result<MarkerScan> {
    if n_markers == 0 {
        return Err(Error::invalid("need at least one marker"));
    }
    check_variance("sigma_b2", sigma_b2)?;
    check_variance("sigma_err2", sigma_err2)?;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_markers.div_ceil(SCAN_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let start = blk * SCAN_BLOCK;
            let len = SCAN_BLOCK.min(n_markers - start);
            let mut eff = stream(seed, domain::SCAN_EFFECTS, blk as u64);
            let mut err = stream(seed, domain::SCAN_ERRORS, blk as u64);
            let b: Vec<f64> = (0..len).map(|_| normal(&mut eff, sigma_b2)).collect();
            let bt = b.iter().map(|&bj| bj + normal(&mut err, sigma_err2)).collect();
            (b, bt)
        })
        .collect();
    let mut b_true = Vec::with_capacity(n_markers);
    let mut b_tilde = Vec::with_capacity(n_markers);
    for (b, bt) in blocks {
        b_true.extend(b);
        b_tilde.extend(bt);
    }
    Ok(MarkerScan { b_true, b_tilde })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn genotype_column_means_at_half() {
        let n = 20_000;
        let w = simulate_genotypes(n, 3, (0.5, 0.5), 11).unwrap();
        for j in 0..3 {
            let codes: Vec<f64> = w.column_codes(j).iter().map(|&c| f64::from(c)).collect();
            let (m, _) = mean_var(&codes);
            // Binomial(2, 0.5) has variance 0.5
            let se = (0.5 / n as f64).sqrt();
            assert!((m - 1.0).abs() < 3.0 * se, "column {j} mean {m}");
        }
    }

    #[test]
    fn genotypes_are_deterministic() {
        let a = simulate_genotypes(30, 40, (0.05, 0.5), 99).unwrap();
        let b = simulate_genotypes(30, 40, (0.05, 0.5), 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_genotypes(30, 40, (0.05, 0.5), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn homozygote_fraction_at_low_frequency() {
        let n = 10_000;
        let w = simulate_genotypes(n, 1, (0.1, 0.1), 5).unwrap();
        let frac = w.column_codes(0).iter().filter(|&&c| c == 2).count() as f64 / n as f64;
        let se = (0.01 * 0.99 / n as f64).sqrt();
        assert!((frac - 0.01).abs() < 3.0 * se, "fraction {frac}");
    }

    #[test]
    fn rejects_bad_maf_range() {
        assert!(simulate_genotypes(2, 2, (0.3, 0.2), 1).is_err());
        assert!(simulate_genotypes(2, 2, (0.0, 0.2), 1).is_err());
        assert!(simulate_genotypes(2, 2, (0.1, 0.6), 1).is_err());
    }

    #[test]
    fn degenerate_priors_give_zero_effects() {
        let b = simulate_effects(100, &EffectPrior::Normal { sigma_b2: 0.0 }, 1).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        let b = simulate_effects(100, &EffectPrior::SpikeSlab { q: 0.0, df: 4.0, scale: 1.0 }, 1).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normal_effect_variance() {
        let p = 100_000;
        let b = simulate_effects(p, &EffectPrior::Normal { sigma_b2: 0.5 }, 3).unwrap();
        let (m, v) = mean_var(&b);
        assert!((v - 0.5).abs() < 0.005, "variance {v}");
        assert!(m.abs() < 3.0 * (0.5 / p as f64).sqrt());
    }

    #[test]
    fn spike_slab_zero_fraction() {
        let p = 20_000;
        let q = 0.2;
        let b = simulate_effects(p, &EffectPrior::SpikeSlab { q, df: 4.0, scale: 0.1 }, 8).unwrap();
        let zeros = b.iter().filter(|&&v| v == 0.0).count() as f64 / p as f64;
        let se = (q * (1.0 - q) / p as f64).sqrt();
        assert!((zeros - (1.0 - q)).abs() < 3.0 * se, "zero fraction {zeros}");
    }

    #[test]
    fn scaled_inverse_chisq_variance_mean() {
        // mean of df*scale/chi2(df) is scale*df/(df-2) = 2 * scale at df=4
        let mut rng = stream(1, 99, 0);
        let draws: Vec<f64> = (0..200_000).map(|_| draw_scaled_inv_chisq(&mut rng, 6.0, 0.5)).collect();
        let (m, _) = mean_var(&draws);
        assert!((m - 0.75).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn phenotype_invariants() {
        let w = simulate_genotypes(50, 10, (0.1, 0.5), 2).unwrap();
        let b = simulate_effects(10, &EffectPrior::Normal { sigma_b2: 0.1 }, 2).unwrap();
        let x = FixedDesign::intercept(50);
        let ds = simulate_phenotypes(&w, &b, &x, &[3.0], 0.0, 4).unwrap();
        let g = w.mul_vec(&b).unwrap();
        assert_eq!(ds.g_true, g);
        for i in 0..50 {
            assert_eq!(ds.y.values[i], 3.0 + g[i]);
        }
        let ds = simulate_phenotypes(&w, &b, &x, &[3.0], 1.0, 4).unwrap();
        for i in 0..50 {
            assert_eq!(ds.y.values[i], 3.0 + ds.g_true[i] + ds.e[i]);
        }
        assert!(simulate_phenotypes(&w, &b, &x, &[], 1.0, 4).is_err());
    }

    #[test]
    fn residual_only_phenotype_variance() {
        let n = 10_000;
        let w = simulate_genotypes(n, 1, (0.3, 0.3), 1).unwrap();
        let ds = simulate_phenotypes(&w, &[0.0], &FixedDesign::none(n), &[], 2.0, 6).unwrap();
        let (_, v) = mean_var(&ds.y.values);
        // SE of a sample variance is about sigma^2 sqrt(2/n)
        assert!((v - 2.0).abs() < 3.0 * 2.0 * (2.0 / n as f64).sqrt(), "variance {v}");
    }

    #[test]
    fn genetic_variance_matches_formula() {
        let (n, p) = (10_000, 1_000);
        let w = simulate_genotypes(n, p, (0.5, 0.5), 21).unwrap();
        let b = simulate_effects(p, &EffectPrior::Normal { sigma_b2: 0.001 }, 22).unwrap();
        let ds = simulate_phenotypes(&w, &b, &FixedDesign::none(n), &[], 1.0, 23).unwrap();
        let (_, v) = mean_var(&ds.g_true);
        assert!((v - 0.5).abs() < 0.025, "var(g) {v}");
    }

    #[test]
    fn sire_family_limits() {
        let fam = simulate_sire_families(5, &[4; 5], 1.0, 0.0, 3).unwrap();
        for (s, recs) in fam.s_true.iter().zip(&fam.records) {
            assert!(recs.iter().all(|r| r == s));
        }
        let fam = simulate_sire_families(5, &[4; 5], 0.0, 1.0, 3).unwrap();
        assert!(fam.s_true.iter().all(|&s| s == 0.0));
        let (y, z) = fam.flatten().unwrap();
        assert_eq!(y.len(), 20);
        assert_eq!(z.counts(), vec![4; 5]);
    }

    #[test]
    fn sire_family_intraclass_correlation() {
        let (f, k) = (2_000, 10);
        let fam = simulate_sire_families(f, &vec![k; f], 1.0, 1.0, 77).unwrap();
        // one-way ANOVA estimator of the intraclass correlation
        let grand: f64 = fam.records.iter().flatten().sum::<f64>() / (f * k) as f64;
        let mut ssb = 0.0;
        let mut ssw = 0.0;
        for recs in &fam.records {
            let m = recs.iter().sum::<f64>() / k as f64;
            ssb += k as f64 * (m - grand).powi(2);
            ssw += recs.iter().map(|r| (r - m).powi(2)).sum::<f64>();
        }
        let msb = ssb / (f - 1) as f64;
        let msw = ssw / (f * (k - 1)) as f64;
        let s2 = (msb - msw) / k as f64;
        let icc = s2 / (s2 + msw);
        assert!((icc - 0.5).abs() < 0.02, "icc {icc}");
    }

    #[test]
    fn marker_scan_moments() {
        let scan = simulate_marker_scan(100_000, 0.5, 0.5, 1).unwrap();
        let (_, v) = mean_var(&scan.b_tilde);
        assert!((v - 1.0).abs() < 0.02, "var {v}");
        let (mb, vb) = mean_var(&scan.b_true);
        let (mt, vt) = mean_var(&scan.b_tilde);
        let cov: f64 = scan
            .b_true
            .iter()
            .zip(&scan.b_tilde)
            .map(|(a, b)| (a - mb) * (b - mt))
            .sum::<f64>()
            / (scan.b_true.len() - 1) as f64;
        let r2 = cov * cov / (vb * vt);
        assert!((r2 - 0.5).abs() < 0.02, "r2 {r2}");

        let exact = simulate_marker_scan(1000, 0.5, 0.0, 1).unwrap();
        assert_eq!(exact.b_true, exact.b_tilde);
    }
}
