//! Allele frequencies and relationship matrices (genomic and pedigree).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{GenotypeMatrix, Pedigree, RelationshipKind, RelationshipMatrix};

/// Reference-allele frequency per marker over non-missing calls.
pub fn allele_frequencies(w: &GenotypeMatrix) -> Result<Vec<f64>> {
    (0..w.p())
        .map(|j| {
            let codes = w.column_codes(j);
            let (sum, count) = match w.column_missing(j) {
                None => (codes.iter().map(|&c| u64::from(c)).sum::<u64>(), codes.len()),
                Some(miss) => codes
                    .iter()
                    .zip(miss)
                    .filter(|(_, &m)| !m)
                    .fold((0u64, 0usize), |(s, c), (&v, _)| (s + u64::from(v), c + 1)),
            };
            if count == 0 {
                return Err(Error::AllMissingColumn {
                    index: j,
                    id: w.marker_ids()[j].clone(),
                });
            }
            Ok(sum as f64 / (2.0 * count as f64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// `G = W W'` on the raw 0/1/2 codes.
    Raw,
    /// `G = (W - 2p)(W - 2p)' / sum 2p(1-p)`.
    #[default]
    Centered,
}

/// Genomic relationship matrix from marker genotypes. Missing calls are
/// imputed with the column mean before the product.
pub fn genomic_relationship(w: &GenotypeMatrix, centering: Centering) -> Result<RelationshipMatrix> {
    let mut z = w.to_imputed()?;
    match centering {
        Centering::Raw => {
            let g = &z * z.transpose();
            RelationshipMatrix::new(g, RelationshipKind::GenomicRaw)
        }
        Centering::Centered => {
            let freqs = allele_frequencies(w)?;
            let denom: f64 = freqs.iter().map(|&f| 2.0 * f * (1.0 - f)).sum();
            if denom <= 0.0 {
                return Err(Error::AllMonomorphic);
            }
            for (j, f) in freqs.iter().enumerate() {
                z.column_mut(j).add_scalar_mut(-2.0 * f);
            }
            let g = (&z * z.transpose()) / denom;
            RelationshipMatrix::new(g, RelationshipKind::GenomicCentered)
        }
    }
}

/// Numerator relationship matrix `A` (twice the kinship) by the tabular
/// recursion over a pedigree whose parents precede offspring.
pub fn pedigree_numerator_matrix(ped: &Pedigree) -> Result<RelationshipMatrix> {
    let n = ped.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, rec) in ped.records().iter().enumerate() {
        for p in [rec.sire, rec.dam].into_iter().flatten() {
            if p >= i {
                return Err(Error::Pedigree {
                    id: rec.id.clone(),
                    reason: "parent does not precede offspring".into(),
                });
            }
        }
        for j in 0..i {
            let v = 0.5 * (rec.sire.map_or(0.0, |s| a[(j, s)]) + rec.dam.map_or(0.0, |d| a[(j, d)]));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(i, i)] = 1.0
            + match (rec.sire, rec.dam) {
                (Some(s), Some(d)) => 0.5 * a[(s, d)],
                _ => 0.0,
            };
    }
    RelationshipMatrix::new(a, RelationshipKind::PedigreeA)
}
