//! Command-line arguments and the matching config-file sections.
//!
//! Every subcommand's options live in one struct that is both a clap `Args`
//! and a serde table. A value given on the command line wins over the config
//! file, which wins over the built-in default. After resolution the struct is
//! written back out as the run's config echo, so feeding the echo to
//! `--config` reproduces the run.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gpred", version, about = "Genomic prediction with random marker effects")]
pub struct Cli {
    /// Seed from which all randomness is derived
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on this)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate genotypes, effects and phenotypes
    Simulate(SimulateArgs),
    /// Estimate marker or level effects
    Fit(FitArgs),
    /// Predict new individuals from a fitted effects file
    Predict(PredictArgs),
    /// Compare estimates with true values
    Evaluate(EvaluateArgs),
    /// Canned experiments
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Truncation of a single estimate at a significance threshold
    Fig1(Fig1Args),
    /// Selection of the largest effects from a genome-wide scan
    Fig2(Fig2Args),
    /// SNP-BLUP versus GBLUP with G = WW'
    Equivalence(EquivalenceArgs),
}

macro_rules! settings {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* pub $f:ident : Option<$t:ty>,)* }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* pub $f: Option<$t>,)*
        }

        impl $name {
            /// Fields set here take precedence over those in `file`.
            pub fn over(self, file: Self) -> Self {
                Self { $($f: self.$f.or(file.$f),)* }
            }
        }
    };
}

settings! {
    pub struct SimulateArgs {
        /// Output directory
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Individuals
        #[arg(long)]
        pub n: Option<usize>,
        /// Markers
        #[arg(long)]
        pub p: Option<usize>,
        #[arg(long)]
        pub maf_low: Option<f64>,
        #[arg(long)]
        pub maf_high: Option<f64>,
        /// Effect prior: normal, bayes-a or bayes-b
        #[arg(long)]
        pub prior: Option<String>,
        /// Heritability used to set default variances
        #[arg(long)]
        pub h2: Option<f64>,
        /// Marker-effect variance (normal prior); default h2 / sum 2p(1-p)
        #[arg(long)]
        pub sigma_b2: Option<f64>,
        /// Residual variance; default 1 - h2
        #[arg(long)]
        pub sigma_e2: Option<f64>,
        /// Proportion of nonzero effects (bayes-b)
        #[arg(long)]
        pub q: Option<f64>,
        /// Degrees of freedom of the locus-variance prior
        #[arg(long)]
        pub df: Option<f64>,
        /// Scale of the locus-variance prior; default matches h2
        #[arg(long)]
        pub scale: Option<f64>,
        /// True intercept
        #[arg(long, allow_negative_numbers = true)]
        pub intercept: Option<f64>,
    }
}

settings! {
    pub struct FitArgs {
        /// ls-scan, shrink, sire-blup, snp-blup, gblup, bayes-a or bayes-b
        #[arg(long)]
        pub method: Option<String>,
        #[arg(long)]
        pub genotypes: Option<PathBuf>,
        #[arg(long)]
        pub phenotypes: Option<PathBuf>,
        /// id,family file for sire-blup
        #[arg(long)]
        pub families: Option<PathBuf>,
        /// Pedigree of the family sires (sire-blup)
        #[arg(long)]
        pub pedigree: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Fit an intercept in addition to the phenotype-file covariates
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub intercept: Option<bool>,
        #[arg(long)]
        pub sigma_e2: Option<f64>,
        /// Random-effect variance (sire, marker or genetic, per method)
        #[arg(long)]
        pub sigma_u2: Option<f64>,
        /// Shrinkage ratio for `shrink`; default sigma_e2 / sigma_u2
        #[arg(long)]
        pub lambda: Option<f64>,
        /// G construction for gblup: centered or raw
        #[arg(long)]
        pub centering: Option<String>,
        #[arg(long)]
        pub q: Option<f64>,
        #[arg(long)]
        pub df: Option<f64>,
        /// Locus-variance prior scale; default from genetic_variance
        #[arg(long)]
        pub scale: Option<f64>,
        /// Total genetic variance used for the default prior scale
        #[arg(long)]
        pub genetic_variance: Option<f64>,
        /// Residual variance in Bayes fits: sampled or fixed
        #[arg(long)]
        pub residual: Option<String>,
        #[arg(long)]
        pub iterations: Option<usize>,
        #[arg(long)]
        pub burn_in: Option<usize>,
        #[arg(long)]
        pub thinning: Option<usize>,
        #[arg(long)]
        pub chains: Option<usize>,
        /// Write thinned traces (Bayes fits)
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub traces: Option<bool>,
    }
}

settings! {
    pub struct PredictArgs {
        /// Effects file written by `fit`
        #[arg(long)]
        pub effects: Option<PathBuf>,
        /// Genotypes of the new individuals (marker models)
        #[arg(long)]
        pub genotypes: Option<PathBuf>,
        /// id,family file of the new records (sire models)
        #[arg(long)]
        pub families: Option<PathBuf>,
        /// Covariates of the new individuals, when the fit used any
        #[arg(long)]
        pub phenotypes: Option<PathBuf>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

settings! {
    pub struct EvaluateArgs {
        /// id,value file of true values
        #[arg(long)]
        pub truth: Option<PathBuf>,
        /// Effects file or id,value file of estimates
        #[arg(long)]
        pub estimates: Option<PathBuf>,
        /// Optional id,value file of selection scores (default: the estimates)
        #[arg(long)]
        pub scores: Option<PathBuf>,
        /// Selection threshold for the selection-bias report
        #[arg(long)]
        pub threshold: Option<f64>,
        /// Select on score > threshold instead of |score| > threshold
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub one_sided: Option<bool>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

settings! {
    pub struct Fig1Args {
        /// True effect
        #[arg(long, allow_negative_numbers = true)]
        pub b: Option<f64>,
        /// Standard error of the estimate
        #[arg(long)]
        pub se: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        pub threshold: Option<f64>,
        #[arg(long)]
        pub replicates: Option<usize>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

settings! {
    pub struct Fig2Args {
        #[arg(long)]
        pub sigma_b2: Option<f64>,
        #[arg(long)]
        pub sigma_err2: Option<f64>,
        /// Markers per replicate
        #[arg(long)]
        pub markers: Option<usize>,
        #[arg(long)]
        pub threshold: Option<f64>,
        /// Replicates are added until this many markers are selected
        #[arg(long)]
        pub min_selected: Option<usize>,
        /// Shrinkage ratio; default sigma_err2 / sigma_b2
        #[arg(long)]
        pub lambda: Option<f64>,
        /// Thresholds of the calibration table (first replicate)
        #[arg(long, value_delimiter = ',')]
        pub calibration_thresholds: Option<Vec<f64>>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

settings! {
    pub struct EquivalenceArgs {
        #[arg(long)]
        pub n: Option<usize>,
        #[arg(long)]
        pub p: Option<usize>,
        #[arg(long)]
        pub h2: Option<f64>,
        #[arg(long)]
        pub tolerance: Option<f64>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateArgs>,
    pub fit: Option<FitArgs>,
    pub predict: Option<PredictArgs>,
    pub evaluate: Option<EvaluateArgs>,
    pub fig1: Option<Fig1Args>,
    pub fig2: Option<Fig2Args>,
    pub equivalence: Option<EquivalenceArgs>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.to_string().trim_end())))
    }
}

pub fn set<T>(slot: &mut Option<T>, default: T) {
    if slot.is_none() {
        *slot = Some(default);
    }
}

/// An invalid or missing setting, as opposed to a failure while running.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Reads a resolved field; resolution guarantees it is present unless the
/// option is mandatory.
pub fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| {
        invalid(format!(
            "missing required option '{name}' (flag --{} or config key)",
            name.replace('_', "-")
        ))
    })
}
