//! Posterior means of marker effects under Bayes A (scaled inverse
//! chi-square variance per locus) and Bayes B (the same slab mixed with a
//! point mass at zero), computed by MCMC.
//!
//! Bayes B updates each locus with a Metropolis-Hastings step on its variance
//! (proposed from the prior, so the acceptance ratio is the ratio of the
//! likelihoods with the effect integrated out), followed by a draw of the
//! effect from its full conditional and, inside the slab, a Gibbs draw of the
//! variance given the effect. The spike is an exact zero, so the chain has
//! fixed dimension.
//!
//! Loci are visited in the lexicographic order of their marker ids, and each
//! locus draws from a stream keyed by that rank. Permuting marker columns
//! therefore permutes the output without changing any value.

mod diagnostics;
mod sampler;

use rayon::prelude::*;

pub use diagnostics::{chain_summary, ScalarSummary, MIN_SAMPLES};

use crate::error::{Error, Result};
use crate::model::{EffectPrior, FixedDesign, GenotypeMatrix, Method, ModelFit, VarianceComponents};
use crate::rng::derive_seed;

/// Degrees of freedom used for the locus-variance prior when none is given.
pub const DEFAULT_PRIOR_DF: f64 = 4.012;
/// Degrees of freedom of the residual-variance prior.
pub const RESIDUAL_PRIOR_DF: f64 = 4.0;

const CHAIN_DOMAIN: u64 = 0xC4A1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub chains: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 1_000,
            thinning: 10,
            seed: 0,
            chains: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be >= 1"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }

    /// Seed of chain `k`. A single chain uses the configured seed directly.
    pub fn chain_seed(&self, k: usize) -> u64 {
        if self.chains == 1 {
            self.seed
        } else {
            derive_seed(self.seed, CHAIN_DOMAIN, k as u64)
        }
    }
}

/// Treatment of the residual variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualVariance {
    Fixed(f64),
    /// Scaled inverse chi-square prior `(df, scale)`; the chain starts at the
    /// prior mean.
    Sampled { df: f64, scale: f64 },
}

impl ResidualVariance {
    /// Prior with 4 degrees of freedom whose mean equals `guess`.
    pub fn sampled_from_guess(guess: f64) -> Self {
        let df = RESIDUAL_PRIOR_DF;
        ResidualVariance::Sampled {
            df,
            scale: guess * (df - 2.0) / df,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ResidualVariance::Fixed(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::invalid(format!("fixed residual variance must be > 0, got {v}")))
            }
            ResidualVariance::Sampled { df, scale } if !(df > 2.0 && scale > 0.0) => Err(Error::invalid(format!(
                "residual prior needs df > 2 and scale > 0 (df={df}, scale={scale})"
            ))),
            _ => Ok(()),
        }
    }

    fn initial(&self) -> f64 {
        match *self {
            ResidualVariance::Fixed(v) => v,
            ResidualVariance::Sampled { df, scale } => df * scale / (df - 2.0),
        }
    }
}

/// Scale of the locus-variance prior such that its mean equals
/// `genetic_variance / (q * sum 2p(1-p))`.
pub fn default_slab_scale(freqs: &[f64], genetic_variance: f64, q: f64, df: f64) -> Result<f64> {
    if !(df > 2.0) {
        return Err(Error::invalid(format!("prior mean needs df > 2, got {df}")));
    }
    let het: f64 = freqs.iter().map(|&p| 2.0 * p * (1.0 - p)).sum();
    if !(het > 0.0 && q > 0.0 && genetic_variance > 0.0) {
        return Err(Error::invalid(
            "default prior scale needs polymorphic markers, q > 0 and positive genetic variance",
        ));
    }
    let prior_mean = genetic_variance / (q * het);
    Ok(prior_mean * (df - 2.0) / df)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesOptions {
    pub residual: ResidualVariance,
    /// Holds every locus variance at the prior scale (the infinite-df limit
    /// of Bayes A), which turns the sampler into a Gibbs sampler for BLUP.
    pub pin_locus_variance: bool,
    pub keep_traces: bool,
}

impl BayesOptions {
    pub fn new(residual: ResidualVariance) -> Self {
        Self {
            residual,
            pin_locus_variance: false,
            keep_traces: true,
        }
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub seed: u64,
    /// Iteration index of each retained draw.
    pub iterations: Vec<usize>,
    /// `effects[s][j]` is draw `s` of marker `j` (column order of the input).
    pub effects: Vec<Vec<f64>>,
    pub locus_variances: Vec<Vec<f64>>,
    pub fixed: Vec<Vec<f64>>,
    pub sigma_e2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub method: Method,
    pub marker_ids: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub mcse: Vec<f64>,
    pub rhat: Vec<f64>,
    /// Posterior probability of a nonzero effect (Bayes B only).
    pub inclusion: Option<Vec<f64>>,
    pub locus_variance_mean: Vec<f64>,
    pub fixed_mean: Vec<f64>,
    pub sigma_e2: ScalarSummary,
    pub config: ChainConfig,
    /// Empty unless traces were requested.
    pub traces: Vec<ChainTrace>,
}

impl PosteriorSummary {
    pub fn to_model_fit(&self) -> ModelFit {
        let mut fit = ModelFit::new(
            self.method,
            self.fixed_mean.clone(),
            self.mean.clone(),
            self.marker_ids.clone(),
        );
        fit.random_sd = Some(self.sd.clone());
        fit.seed = Some(self.config.seed);
        fit
    }
}

/// Bayes A: `b_j ~ N(0, s2_j)`, `s2_j ~ scaled-inv-chi2(df, scale)`.
pub fn bayes_a(
    w: &GenotypeMatrix,
    x: &FixedDesign,
    y: &[f64],
    prior: &EffectPrior,
    opts: &BayesOptions,
    cfg: &ChainConfig,
) -> Result<PosteriorSummary> {
    let EffectPrior::ScaledInvChiSq { df, scale } = *prior else {
        return Err(Error::invalid("Bayes A needs a scaled inverse chi-square prior"));
    };
    run(w, x, y, sampler::Slab { q: 1.0, df, scale, spike: false }, opts, cfg, Method::BayesA)
}

/// Bayes B: with probability `1 - q` a locus has variance (and effect) zero,
/// otherwise as Bayes A.
pub fn bayes_b(
    w: &GenotypeMatrix,
    x: &FixedDesign,
    y: &[f64],
    prior: &EffectPrior,
    opts: &BayesOptions,
    cfg: &ChainConfig,
) -> Result<PosteriorSummary> {
    let EffectPrior::SpikeSlab { q, df, scale } = *prior else {
        return Err(Error::invalid("Bayes B needs a spike-and-slab prior"));
    };
    if opts.pin_locus_variance {
        return Err(Error::invalid("pinned locus variances are only defined for Bayes A"));
    }
    run(w, x, y, sampler::Slab { q, df, scale, spike: true }, opts, cfg, Method::BayesB)
}

fn run(
    w: &GenotypeMatrix,
    x: &FixedDesign,
    y: &[f64],
    slab: sampler::Slab,
    opts: &BayesOptions,
    cfg: &ChainConfig,
    method: Method,
) -> Result<PosteriorSummary> {
    cfg.validate()?;
    opts.residual.validate()?;
    EffectPrior::SpikeSlab {
        q: slab.q,
        df: slab.df,
        scale: slab.scale,
    }
    .validate()?;
    let data = sampler::Data::new(w, x, y)?;
    let traces: Vec<ChainTrace> = (0..cfg.chains)
        .into_par_iter()
        .map(|k| sampler::run_chain(&data, slab, opts, cfg, k))
        .collect::<Result<_>>()?;
    summarise(w, &traces, slab.spike, opts, cfg, method)
}

fn summarise(
    w: &GenotypeMatrix,
    traces: &[ChainTrace],
    spike: bool,
    opts: &BayesOptions,
    cfg: &ChainConfig,
    method: Method,
) -> Result<PosteriorSummary> {
    let p = w.p();
    let column = |sel: &dyn Fn(&ChainTrace) -> Vec<f64>| -> Vec<Vec<f64>> { traces.iter().map(sel).collect() };
    let mut mean = Vec::with_capacity(p);
    let mut sd = Vec::with_capacity(p);
    let mut mcse = Vec::with_capacity(p);
    let mut rhat = Vec::with_capacity(p);
    let mut var_mean = Vec::with_capacity(p);
    let mut inclusion = Vec::with_capacity(p);
    for j in 0..p {
        let series = column(&|t| t.effects.iter().map(|s| s[j]).collect());
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        let s = chain_summary(&refs)?;
        mean.push(s.mean);
        sd.push(s.sd);
        mcse.push(s.mcse);
        rhat.push(s.rhat);
        let vars = column(&|t| t.locus_variances.iter().map(|s| s[j]).collect());
        let total: usize = vars.iter().map(Vec::len).sum();
        var_mean.push(vars.iter().flatten().sum::<f64>() / total as f64);
        inclusion.push(vars.iter().flatten().filter(|&&v| v > 0.0).count() as f64 / total as f64);
    }
    let k = traces[0].fixed.first().map_or(0, Vec::len);
    let fixed_mean = (0..k)
        .map(|c| {
            let all: Vec<f64> = traces.iter().flat_map(|t| t.fixed.iter().map(move |s| s[c])).collect();
            all.iter().sum::<f64>() / all.len() as f64
        })
        .collect();
    let se_refs: Vec<&[f64]> = traces.iter().map(|t| t.sigma_e2.as_slice()).collect();
    let sigma_e2 = chain_summary(&se_refs)?;
    Ok(PosteriorSummary {
        method,
        marker_ids: w.marker_ids().to_vec(),
        mean,
        sd,
        mcse,
        rhat,
        inclusion: spike.then_some(inclusion),
        locus_variance_mean: var_mean,
        fixed_mean,
        sigma_e2,
        config: *cfg,
        traces: if opts.keep_traces { traces.to_vec() } else { Vec::new() },
    })
}

/// Variance components implied by a pinned Bayes A run, for comparison with
/// SNP-BLUP.
pub fn pinned_equivalent(prior: &EffectPrior, residual: &ResidualVariance) -> Result<VarianceComponents> {
    match (prior, residual) {
        (EffectPrior::ScaledInvChiSq { scale, .. }, ResidualVariance::Fixed(e)) => VarianceComponents::new(*e, *scale),
        _ => Err(Error::invalid("pinned equivalence needs a Bayes A prior and fixed residual variance")),
    }
}

#[cfg(test)]
mod tests;
