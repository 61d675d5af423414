//! Genomic prediction with marker effects treated as random effects.
//!
//! The crate covers simulation of marker and phenotype data, BLUP-family
//! estimators (sire BLUP, Henderson's mixed-model equations, SNP-BLUP,
//! GBLUP), Bayes A / Bayes B posterior means by MCMC, and the diagnostics
//! used to show that posterior-mean estimates stay calibrated after
//! selecting the largest effects while least-squares estimates do not.

// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod architecture;
pub mod bayes;
pub mod blup;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod linalg;
pub mod model;
pub mod relationship;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{
    EffectPrior, FixedDesign, GenotypeMatrix, IncidenceMatrix, Method, ModelFit, Pedigree, PedigreeRecord,
    PhenotypeVector, RelationshipKind, RelationshipMatrix, VarianceComponents,
};
