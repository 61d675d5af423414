//! Summaries of MCMC traces: mean, SD, batch-means Monte Carlo SE and the
//! split-chain potential scale reduction factor.

use crate::error::{Error, Result};

/// Minimum number of retained samples per chain accepted by [`chain_summary`].
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
    pub mcse: f64,
    pub rhat: f64,
    pub samples: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64], m: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Summarises one monitored scalar given one trace per chain. All chains
/// must have the same length.
pub fn chain_summary(chains: &[&[f64]]) -> Result<ScalarSummary> {
    let Some(first) = chains.first() else {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            found: 0,
        });
    };
    let len = first.len();
    if let Some(bad) = chains.iter().find(|c| c.len() != len) {
        return Err(Error::Dimension {
            context: "chain length",
            expected: len,
            found: bad.len(),
        });
    }
    if len < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            found: len,
        });
    }
    let total = len * chains.len();
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let m = mean(&all);
    let sd = sample_var(&all, m).sqrt();

    // Batch means with batches of floor(sqrt(len)) consecutive draws.
    let bsize = (len as f64).sqrt().floor() as usize;
    let nbatch = len / bsize;
    let batch_means: Vec<f64> = chains
        .iter()
        .flat_map(|c| (0..nbatch).map(move |k| mean(&c[k * bsize..(k + 1) * bsize])))
        .collect();
    let bm_mean = mean(&batch_means);
    let var_bm = sample_var(&batch_means, bm_mean) * bsize as f64;
    let mcse = (var_bm / total as f64).sqrt();

    Ok(ScalarSummary {
        mean: m,
        sd,
        mcse,
        rhat: split_rhat(chains),
        samples: total,
    })
}

fn split_rhat(chains: &[&[f64]]) -> f64 {
    let half = chains[0].len() / 2;
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let within = mean(&pieces.iter().zip(&means).map(|(p, &m)| sample_var(p, m)).collect::<Vec<_>>());
    let between = half as f64 * sample_var(&means, mean(&means));
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let n = half as f64;
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_trace() {
        let t = vec![2.5; 50];
        let s = chain_summary(&[&t]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.mcse, 0.0);
        assert_eq!(s.rhat, 1.0);
    }

    #[test]
    fn too_few_samples() {
        let t = vec![1.0; 9];
        assert!(matches!(chain_summary(&[&t]), Err(Error::TooFewSamples { .. })));
        assert!(chain_summary(&[]).is_err());
    }

    #[test]
    fn identical_chains_have_unit_rhat() {
        let mut rng = stream(3, 0, 0);
        let t: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = chain_summary(&[&t, &t]).unwrap();
        assert!((s.rhat - 1.0).abs() < 0.01, "rhat {}", s.rhat);
    }

    #[test]
    fn iid_standard_normal() {
        let mut rng = stream(5, 0, 0);
        let t: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = chain_summary(&[&t]).unwrap();
        assert!(s.mean.abs() < 0.03, "mean {}", s.mean);
        assert!((s.sd - 1.0).abs() < 0.03, "sd {}", s.sd);
        assert!((s.mcse - 0.01).abs() < 0.003, "mcse {}", s.mcse);
    }

    #[test]
    fn separated_chains_flag_nonconvergence() {
        let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64 * 0.1).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(chain_summary(&[&a, &b]).unwrap().rhat > 1.5);
    }
}
