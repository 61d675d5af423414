use super::*;
use crate::blup::snp_blup;
use crate::relationship::allele_frequencies;
use crate::simulate::{simulate_genotypes, SimulationRecipe};

fn cfg(iterations: usize, burn_in: usize, thinning: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        iterations,
        burn_in,
        thinning,
        seed,
        chains: 1,
    }
}

fn fixed(se2: f64) -> BayesOptions {
    BayesOptions::new(ResidualVariance::Fixed(se2))
}

fn dataset(n: usize, p: usize, prior: EffectPrior, se2: f64, seed: u64) -> crate::simulate::SimulatedDataset {
    SimulationRecipe {
        n,
        p,
        maf_range: (0.05, 0.5),
        prior,
        sigma_e2: se2,
        fixed_effects: Some(vec![1.0]),
        seed,
    }
    .run()
    .unwrap()
}

#[test]
fn config_validation() {
    assert!(cfg(10, 10, 1, 0).validate().is_err());
    assert!(cfg(10, 0, 0, 0).validate().is_err());
    assert!(ChainConfig { chains: 0, ..Default::default() }.validate().is_err());
    assert_eq!(ChainConfig::default().retained(), 900);
    assert_eq!(cfg(11, 0, 5, 0).retained(), 3);
}

#[test]
fn default_scale_matches_prior_mean() {
    let freqs = [0.5; 10];
    let df = DEFAULT_PRIOR_DF;
    let s = default_slab_scale(&freqs, 1.0, 0.5, df).unwrap();
    let prior_mean = df * s / (df - 2.0);
    assert!((prior_mean - 1.0 / (0.5 * 5.0)).abs() < 1e-12);
    assert!(default_slab_scale(&[0.0], 1.0, 1.0, df).is_err());
    match ResidualVariance::sampled_from_guess(2.0) {
        ResidualVariance::Sampled { df, scale } => assert!((df * scale / (df - 2.0) - 2.0).abs() < 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_phenotypes_give_zero_means() {
    let w = simulate_genotypes(40, 8, (0.1, 0.5), 1).unwrap();
    let prior = EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.1 };
    let s = bayes_a(&w, &FixedDesign::none(40), &[0.0; 40], &prior, &fixed(1.0), &cfg(3000, 200, 2, 9)).unwrap();
    for j in 0..8 {
        assert!(s.mean[j].abs() < 4.0 * s.mcse[j] + 1e-3, "marker {j}: {} (mcse {})", s.mean[j], s.mcse[j]);
    }
}

#[test]
fn pinned_bayes_a_reproduces_snp_blup() {
    let d = dataset(80, 12, EffectPrior::Normal { sigma_b2: 0.05 }, 1.0, 31);
    let prior = EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.05 };
    let mut opts = fixed(1.0);
    opts.pin_locus_variance = true;
    let s = bayes_a(&d.w, &d.x, &d.y.values, &prior, &opts, &cfg(10_000, 1000, 10, 5)).unwrap();
    let vc = pinned_equivalent(&prior, &opts.residual).unwrap();
    let blup = snp_blup(&d.w, &d.x, &d.y.values, &vc).unwrap();
    for j in 0..12 {
        let diff = (s.mean[j] - blup.random_estimates[j]).abs();
        assert!(diff < 3.0 * s.mcse[j], "marker {j}: diff {diff}, mcse {}", s.mcse[j]);
        let sd = blup.random_sd.as_ref().unwrap()[j];
        assert!((s.sd[j] / sd - 1.0).abs() < 0.15, "marker {j}: sd {} vs {sd}", s.sd[j]);
    }
    assert!((s.fixed_mean[0] - blup.fixed_estimates[0]).abs() < 0.1);
}

#[test]
fn bayes_b_with_full_inclusion_matches_bayes_a() {
    let d = dataset(60, 10, EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.05 }, 1.0, 41);
    let a = bayes_a(
        &d.w,
        &d.x,
        &d.y.values,
        &EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.05 },
        &fixed(1.0),
        &cfg(10_000, 1000, 10, 6),
    )
    .unwrap();
    let b = bayes_b(
        &d.w,
        &d.x,
        &d.y.values,
        &EffectPrior::SpikeSlab { q: 1.0, df: 4.0, scale: 0.05 },
        &fixed(1.0),
        &cfg(10_000, 1000, 10, 6),
    )
    .unwrap();
    for j in 0..10 {
        let se = a.mcse[j].hypot(b.mcse[j]);
        assert!((a.mean[j] - b.mean[j]).abs() < 3.0 * se, "marker {j}: {} vs {}", a.mean[j], b.mean[j]);
    }
    assert!(b.inclusion.as_ref().unwrap().iter().all(|&p| p == 1.0));
    assert!(a.inclusion.is_none());
}

#[test]
fn zero_inclusion_gives_zero_effects() {
    let d = dataset(50, 6, EffectPrior::Normal { sigma_b2: 0.2 }, 1.0, 2);
    let s = bayes_b(
        &d.w,
        &d.x,
        &d.y.values,
        &EffectPrior::SpikeSlab { q: 0.0, df: 4.0, scale: 0.1 },
        &BayesOptions::new(ResidualVariance::sampled_from_guess(1.0)),
        &cfg(500, 100, 1, 3),
    )
    .unwrap();
    assert!(s.mean.iter().all(|&m| m == 0.0));
    assert!(s.inclusion.unwrap().iter().all(|&p| p == 0.0));
}

#[test]
fn true_effects_have_higher_inclusion() {
    let (n, p) = (300, 500);
    let w = simulate_genotypes(n, p, (0.2, 0.5), 77).unwrap();
    let causal = [3usize, 97, 210, 333, 480];
    let mut b = vec![0.0; p];
    for (k, &j) in causal.iter().enumerate() {
        b[j] = if k % 2 == 0 { 1.0 } else { -1.0 };
    }
    let d = crate::simulate::simulate_phenotypes(&w, &b, &FixedDesign::intercept(n), &[0.0], 1.0, 78).unwrap();
    let freqs = allele_frequencies(&w).unwrap();
    let q = 0.01;
    let scale = default_slab_scale(&freqs, 2.5, q, DEFAULT_PRIOR_DF).unwrap();
    let s = bayes_b(
        &w,
        &d.x,
        &d.y.values,
        &EffectPrior::SpikeSlab { q, df: DEFAULT_PRIOR_DF, scale },
        &BayesOptions::new(ResidualVariance::sampled_from_guess(1.0)),
        &cfg(2000, 500, 5, 4),
    )
    .unwrap();
    let incl = s.inclusion.unwrap();
    let causal_mean = causal.iter().map(|&j| incl[j]).sum::<f64>() / 5.0;
    let null_mean = (0..p).filter(|j| !causal.contains(j)).map(|j| incl[j]).sum::<f64>() / (p - 5) as f64;
    assert!(causal_mean > 0.9, "causal {causal_mean}");
    assert!(causal_mean > null_mean + 0.5, "causal {causal_mean} null {null_mean}");
}

#[test]
fn shrinkage_grows_with_residual_variance() {
    // Same genotypes and signal-free phenotypes; increasing the assumed noise
    // moves every posterior mean towards zero.
    let d = dataset(60, 5, EffectPrior::Normal { sigma_b2: 0.0 }, 4.0, 12);
    let prior = EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.05 };
    let mut opts = fixed(1.0);
    opts.pin_locus_variance = true;
    let mut last = f64::INFINITY;
    for se2 in [1.0, 10.0, 100.0] {
        opts.residual = ResidualVariance::Fixed(se2);
        let s = bayes_a(&d.w, &d.x, &d.y.values, &prior, &opts, &cfg(6000, 500, 5, 8)).unwrap();
        let size = s.mean.iter().map(|m| m.abs()).sum::<f64>();
        assert!(size < last, "se2 {se2}: {size} !< {last}");
        last = size;
        // posterior SD approaches the prior SD
        if se2 == 100.0 {
            for sd in &s.sd {
                assert!((sd / 0.05f64.sqrt() - 1.0).abs() < 0.2, "sd {sd}");
            }
        }
    }
}

#[test]
fn single_chain_is_deterministic() {
    let d = dataset(40, 6, EffectPrior::Normal { sigma_b2: 0.1 }, 1.0, 3);
    let prior = EffectPrior::SpikeSlab { q: 0.5, df: 4.0, scale: 0.1 };
    let opts = BayesOptions::new(ResidualVariance::sampled_from_guess(1.0));
    let a = bayes_b(&d.w, &d.x, &d.y.values, &prior, &opts, &cfg(400, 100, 3, 21)).unwrap();
    let b = bayes_b(&d.w, &d.x, &d.y.values, &prior, &opts, &cfg(400, 100, 3, 21)).unwrap();
    assert_eq!(a.traces, b.traces);
    let c = bayes_b(&d.w, &d.x, &d.y.values, &prior, &opts, &cfg(400, 100, 3, 22)).unwrap();
    assert_ne!(a.traces, c.traces);
}

#[test]
fn column_permutation_permutes_output() {
    let d = dataset(40, 7, EffectPrior::Normal { sigma_b2: 0.1 }, 1.0, 4);
    let perm = [4usize, 0, 6, 2, 1, 5, 3];
    let wp = d.w.select_columns(&perm).unwrap();
    let prior = EffectPrior::SpikeSlab { q: 0.5, df: 4.0, scale: 0.1 };
    let opts = BayesOptions::new(ResidualVariance::sampled_from_guess(1.0));
    let c = cfg(300, 50, 1, 13);
    let a = bayes_b(&d.w, &d.x, &d.y.values, &prior, &opts, &c).unwrap();
    let b = bayes_b(&wp, &d.x, &d.y.values, &prior, &opts, &c).unwrap();
    for (k, &j) in perm.iter().enumerate() {
        assert_eq!(b.marker_ids[k], a.marker_ids[j]);
        assert_eq!(b.mean[k], a.mean[j]);
        assert_eq!(b.inclusion.as_ref().unwrap()[k], a.inclusion.as_ref().unwrap()[j]);
    }
    assert_eq!(a.sigma_e2.mean, b.sigma_e2.mean);
}

#[test]
fn multiple_chains_run_in_parallel_and_merge() {
    let d = dataset(40, 4, EffectPrior::Normal { sigma_b2: 0.1 }, 1.0, 5);
    let prior = EffectPrior::ScaledInvChiSq { df: 4.0, scale: 0.1 };
    let c = ChainConfig {
        chains: 3,
        ..cfg(1200, 200, 2, 1)
    };
    let s = bayes_a(&d.w, &d.x, &d.y.values, &prior, &fixed(1.0), &c).unwrap();
    assert_eq!(s.traces.len(), 3);
    assert_eq!(s.sigma_e2.samples, 3 * 500);
    assert!(s.rhat.iter().all(|r| (r - 1.0).abs() < 0.1), "{:?}", s.rhat);
    let seeds: Vec<u64> = s.traces.iter().map(|t| t.seed).collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
}

#[test]
fn posterior_means_are_calibrated() {
    // Effects drawn from the prior the sampler uses: regressing truth on the
    // posterior mean gives slope one.
    let prior = EffectPrior::ScaledInvChiSq { df: 4.012, scale: 0.02 };
    let (mut truth, mut est) = (Vec::new(), Vec::new());
    for rep in 0..20u64 {
        let d = dataset(200, 20, prior, 1.0, 1000 + rep);
        let s = bayes_a(&d.w, &d.x, &d.y.values, &prior, &fixed(1.0), &cfg(3000, 500, 5, rep)).unwrap();
        truth.extend_from_slice(&d.b_true);
        est.extend_from_slice(&s.mean);
    }
    let me = est.iter().sum::<f64>() / est.len() as f64;
    let mt = truth.iter().sum::<f64>() / truth.len() as f64;
    let sxy: f64 = est.iter().zip(&truth).map(|(e, t)| (e - me) * (t - mt)).sum();
    let sxx: f64 = est.iter().map(|e| (e - me).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn rejects_wrong_prior_family() {
    let w = simulate_genotypes(20, 3, (0.1, 0.5), 1).unwrap();
    let y = [0.0; 20];
    let x = FixedDesign::none(20);
    let c = cfg(100, 10, 1, 0);
    assert!(bayes_a(&w, &x, &y, &EffectPrior::Normal { sigma_b2: 1.0 }, &fixed(1.0), &c).is_err());
    assert!(bayes_b(&w, &x, &y, &EffectPrior::SpikeSlab { q: 1.5, df: 4.0, scale: 1.0 }, &fixed(1.0), &c).is_err());
    assert!(bayes_a(&w, &x, &y[..5], &EffectPrior::ScaledInvChiSq { df: 4.0, scale: 1.0 }, &fixed(1.0), &c).is_err());
}
