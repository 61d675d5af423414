//! Domain types shared by every estimator.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Marker genotypes for `n` individuals at `p` biallelic loci, coded as the
/// number of copies (0, 1 or 2) of the reference allele.
///
/// Codes are stored column-major so that per-marker operations touch a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    n: usize,
    p: usize,
    codes: Vec<u8>,
    missing: Option<Vec<bool>>,
    individual_ids: Vec<String>,
    marker_ids: Vec<String>,
}

impl GenotypeMatrix {
    /// Builds a complete (no missing entries) matrix from column-major codes.
    pub fn from_col_major(n: usize, p: usize, codes: Vec<u8>) -> Result<Self> {
        Self::build(n, p, codes, None)
    }

    /// Builds a complete matrix from row-major codes (one row per individual).
    pub fn from_row_major(n: usize, p: usize, codes: &[u8]) -> Result<Self> {
        if codes.len() != n * p {
            return Err(Error::Dimension {
                context: "genotype codes",
                expected: n * p,
                found: codes.len(),
            });
        }
        let mut col = vec![0u8; n * p];
        for i in 0..n {
            for j in 0..p {
                col[j * n + i] = codes[i * p + j];
            }
        }
        Self::build(n, p, col, None)
    }

    /// Builds a matrix from row-major optional codes; `None` marks a missing call.
    pub fn from_rows_with_missing(rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut codes = vec![0u8; n * p];
        let mut missing = vec![false; n * p];
        let mut any_missing = false;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension {
                    context: "genotype row length",
                    expected: p,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                match v {
                    Some(c) => codes[j * n + i] = *c,
                    None => {
                        missing[j * n + i] = true;
                        any_missing = true;
                    }
                }
            }
        }
        Self::build(n, p, codes, any_missing.then_some(missing))
    }

    fn build(n: usize, p: usize, codes: Vec<u8>, missing: Option<Vec<bool>>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::invalid(format!(
                "genotype matrix must have n >= 1 and p >= 1 (got {n}x{p})"
            )));
        }
        if codes.len() != n * p {
            return Err(Error::Dimension {
                context: "genotype codes",
                expected: n * p,
                found: codes.len(),
            });
        }
        for (k, &c) in codes.iter().enumerate() {
            let is_missing = missing.as_ref().is_some_and(|m| m[k]);
            if !is_missing && c > 2 {
                return Err(Error::invalid(format!(
                    "genotype code {c} at individual {}, marker {} is not in {{0,1,2}}",
                    k % n,
                    k / n
                )));
            }
        }
        Ok(Self {
            n,
            p,
            codes,
            missing,
            individual_ids: (1..=n).map(|i| format!("ind{i}")).collect(),
            marker_ids: (1..=p).map(|j| format!("snp{j}")).collect(),
        })
    }

    pub fn with_ids(mut self, individual_ids: Vec<String>, marker_ids: Vec<String>) -> Result<Self> {
        if individual_ids.len() != self.n {
            return Err(Error::Dimension {
                context: "individual ids",
                expected: self.n,
                found: individual_ids.len(),
            });
        }
        if marker_ids.len() != self.p {
            return Err(Error::Dimension {
                context: "marker ids",
                expected: self.p,
                found: marker_ids.len(),
            });
        }
        self.individual_ids = individual_ids;
        self.marker_ids = marker_ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn marker_ids(&self) -> &[String] {
        &self.marker_ids
    }

    pub fn has_missing(&self) -> bool {
        self.missing.is_some()
    }

    /// Genotype of individual `i` at marker `j`, `None` when missing.
    pub fn get(&self, i: usize, j: usize) -> Option<u8> {
        let k = j * self.n + i;
        if self.missing.as_ref().is_some_and(|m| m[k]) {
            None
        } else {
            Some(self.codes[k])
        }
    }

    /// Raw codes of marker `j`. Entries flagged missing hold an arbitrary value.
    pub fn column_codes(&self, j: usize) -> &[u8] {
        &self.codes[j * self.n..(j + 1) * self.n]
    }

    pub(crate) fn column_missing(&self, j: usize) -> Option<&[bool]> {
        self.missing
            .as_ref()
            .map(|m| &m[j * self.n..(j + 1) * self.n])
    }

    /// Dense real-valued copy with missing calls replaced by the column mean `2p`.
    pub fn to_imputed(&self) -> Result<DMatrix<f64>> {
        let freqs = crate::relationship::allele_frequencies(self)?;
        let mut out = DMatrix::<f64>::zeros(self.n, self.p);
        for j in 0..self.p {
            let fill = 2.0 * freqs[j];
            let codes = self.column_codes(j);
            let miss = self.column_missing(j);
            let mut col = out.column_mut(j);
            for i in 0..self.n {
                col[i] = match miss {
                    Some(m) if m[i] => fill,
                    _ => f64::from(codes[i]),
                };
            }
        }
        Ok(out)
    }

    /// `W b`, with missing calls imputed by the column mean.
    pub fn mul_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.p {
            return Err(Error::Dimension {
                context: "effect vector",
                expected: self.p,
                found: b.len(),
            });
        }
        let freqs = if self.missing.is_some() {
            Some(crate::relationship::allele_frequencies(self)?)
        } else {
            None
        };
        let mut out = vec![0.0; self.n];
        for (j, &bj) in b.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            let codes = self.column_codes(j);
            match (self.column_missing(j), &freqs) {
                (Some(miss), Some(f)) => {
                    let fill = 2.0 * f[j];
                    for i in 0..self.n {
                        let v = if miss[i] { fill } else { f64::from(codes[i]) };
                        out[i] += v * bj;
                    }
                }
                _ => {
                    for (o, &c) in out.iter_mut().zip(codes) {
                        *o += f64::from(c) * bj;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Subset of individuals, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let m = rows.len();
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n) {
            return Err(Error::invalid(format!("row index {bad} out of range")));
        }
        let mut codes = Vec::with_capacity(m * self.p);
        let mut missing = self.missing.as_ref().map(|_| Vec::with_capacity(m * self.p));
        for j in 0..self.p {
            let col = self.column_codes(j);
            codes.extend(rows.iter().map(|&r| col[r]));
            if let (Some(out), Some(src)) = (missing.as_mut(), self.column_missing(j)) {
                out.extend(rows.iter().map(|&r| src[r]));
            }
        }
        let missing = missing.filter(|m: &Vec<bool>| m.iter().any(|&b| b));
        let ids = rows.iter().map(|&r| self.individual_ids[r].clone()).collect();
        Self::build(m, self.p, codes, missing)?.with_ids(ids, self.marker_ids.clone())
    }

    /// Subset of markers, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(Error::invalid(format!("marker index {bad} out of range")));
        }
        let mut codes = Vec::with_capacity(self.n * cols.len());
        let mut missing = self.missing.as_ref().map(|_| Vec::new());
        for &c in cols {
            codes.extend_from_slice(self.column_codes(c));
            if let (Some(out), Some(src)) = (missing.as_mut(), self.column_missing(c)) {
                out.extend_from_slice(src);
            }
        }
        let missing = missing.filter(|m: &Vec<bool>| m.iter().any(|&b| b));
        let ids = cols.iter().map(|&c| self.marker_ids[c].clone()).collect();
        Self::build(self.n, cols.len(), codes, missing)?.with_ids(self.individual_ids.clone(), ids)
    }
}

/// Observed trait values, one per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeVector {
    pub values: Vec<f64>,
    pub ids: Vec<String>,
}

impl PhenotypeVector {
    pub fn new(values: Vec<f64>, ids: Vec<String>) -> Result<Self> {
        if values.len() != ids.len() {
            return Err(Error::Dimension {
                context: "phenotype ids",
                expected: values.len(),
                found: ids.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "phenotype for '{}' is not finite",
                ids[i]
            )));
        }
        Ok(Self { values, ids })
    }

    /// Phenotypes with generated ids `ind1..indN`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let ids = (1..=values.len()).map(|i| format!("ind{i}")).collect();
        Self::new(values, ids)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fixed-effect design `X` (n x c). Zero columns means no fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDesign {
    pub x: DMatrix<f64>,
}

impl FixedDesign {
    pub fn new(x: DMatrix<f64>) -> Self {
        Self { x }
    }

    pub fn none(n: usize) -> Self {
        Self {
            x: DMatrix::zeros(n, 0),
        }
    }

    pub fn intercept(n: usize) -> Self {
        Self {
            x: DMatrix::from_element(n, 1, 1.0),
        }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
        }
    }
}

/// Sparse 0/1 matrix allocating records to random-effect levels. Each record
/// maps to at most one level.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    levels: usize,
    assignment: Vec<Option<usize>>,
}

impl IncidenceMatrix {
    pub fn new(levels: usize, assignment: Vec<Option<usize>>) -> Result<Self> {
        if let Some(&Some(l)) = assignment.iter().find(|a| a.is_some_and(|l| l >= levels)) {
            return Err(Error::invalid(format!(
                "incidence level {l} out of range for {levels} levels"
            )));
        }
        Ok(Self { levels, assignment })
    }

    /// Every record assigned to exactly one level (sire model).
    pub fn from_levels(levels: usize, assignment: &[usize]) -> Result<Self> {
        Self::new(levels, assignment.iter().map(|&l| Some(l)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.assignment.len()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.assignment.len(), self.levels);
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(l) = a {
                z[(i, *l)] = 1.0;
            }
        }
        z
    }

    /// Record count per level (diagonal of Z'Z).
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.levels];
        for l in self.assignment.iter().flatten() {
            c[*l] += 1;
        }
        c
    }
}

/// Residual variance plus one random-effect variance. The meaning of
/// `sigma_u2` depends on the model: sire variance, additive genetic variance,
/// or per-marker effect variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub sigma_e2: f64,
    pub sigma_u2: f64,
}

impl VarianceComponents {
    pub fn new(sigma_e2: f64, sigma_u2: f64) -> Result<Self> {
        if !(sigma_e2 > 0.0 && sigma_e2.is_finite()) {
            return Err(Error::invalid(format!(
                "residual variance must be positive and finite, got {sigma_e2}"
            )));
        }
        if !(sigma_u2 >= 0.0 && sigma_u2.is_finite()) {
            return Err(Error::invalid(format!(
                "random-effect variance must be non-negative and finite, got {sigma_u2}"
            )));
        }
        Ok(Self { sigma_e2, sigma_u2 })
    }

    /// `sigma_e2 / sigma_u2`; `None` when the random-effect variance is zero.
    pub fn lambda(&self) -> Option<f64> {
        (self.sigma_u2 > 0.0).then(|| self.sigma_e2 / self.sigma_u2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationshipKind {
    PedigreeA,
    GenomicRaw,
    GenomicCentered,
}

/// Symmetric n x n covariance structure among individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipMatrix {
    pub k: DMatrix<f64>,
    pub kind: RelationshipKind,
}

impl RelationshipMatrix {
    pub fn new(k: DMatrix<f64>, kind: RelationshipKind) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::invalid(format!(
                "relationship matrix must be square, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        Ok(Self { k, kind })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    /// Dense inverse via Cholesky; fails for singular matrices.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        crate::linalg::cholesky(self.k.clone(), "relationship matrix").map(|c| c.inverse())
    }

    /// Symmetry plus a jittered Cholesky; returns the jitter that was needed.
    pub fn verify_psd(&self) -> Result<f64> {
        crate::linalg::check_symmetric(&self.k, 1e-10)?;
        crate::linalg::psd_jitter(&self.k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PedigreeRecord {
    pub id: String,
    pub sire: Option<usize>,
    pub dam: Option<usize>,
}

/// Pedigree with parents stored as indices of earlier records.
#[derive(Debug, Clone, PartialEq)]
pub struct Pedigree {
    records: Vec<PedigreeRecord>,
}

impl Pedigree {
    /// Builds a pedigree from `(id, sire, dam)` triples where parents are
    /// referenced by id. Parents must appear before their offspring.
    pub fn from_named<S: AsRef<str>>(rows: &[(S, Option<S>, Option<S>)]) -> Result<Self> {
        use std::collections::HashMap;
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut records = Vec::with_capacity(rows.len());
        for (i, (id, sire, dam)) in rows.iter().enumerate() {
            let id = id.as_ref();
            if index.contains_key(id) {
                return Err(Error::Pedigree {
                    id: id.to_string(),
                    reason: "duplicate individual".into(),
                });
            }
            let resolve = |parent: &Option<S>, role: &str| -> Result<Option<usize>> {
                match parent {
                    None => Ok(None),
                    Some(p) if p.as_ref() == id => Err(Error::Pedigree {
                        id: id.to_string(),
                        reason: format!("listed as its own {role}"),
                    }),
                    Some(p) => match index.get(p.as_ref()) {
                        Some(&k) => Ok(Some(k)),
                        None if rows.iter().any(|r| r.0.as_ref() == p.as_ref()) => {
                            Err(Error::Pedigree {
                                id: id.to_string(),
                                reason: format!(
                                    "{role} '{}' appears after its offspring (forward reference or cycle)",
                                    p.as_ref()
                                ),
                            })
                        }
                        // Parents without their own record are treated as founders.
                        None => Ok(None),
                    },
                }
            };
            let sire = resolve(sire, "sire")?;
            let dam = resolve(dam, "dam")?;
            index.insert(id, i);
            records.push(PedigreeRecord {
                id: id.to_string(),
                sire,
                dam,
            });
        }
        Ok(Self { records })
    }

    /// Builds from index-based records, checking that parents precede offspring.
    pub fn from_records(records: Vec<PedigreeRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            for p in [r.sire, r.dam].into_iter().flatten() {
                if p >= i {
                    return Err(Error::Pedigree {
                        id: r.id.clone(),
                        reason: format!(
                            "parent index {p} does not precede offspring index {i} (forward reference or cycle)"
                        ),
                    });
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[PedigreeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Distribution of marker effects.
///
/// The scaled inverse chi-square with `df` r and `scale` s is the law of
/// `s * r / X` with `X ~ chi2(r)`; its mean is `s r / (r - 2)` for r > 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectPrior {
    Normal { sigma_b2: f64 },
    ScaledInvChiSq { df: f64, scale: f64 },
    SpikeSlab { q: f64, df: f64, scale: f64 },
}

impl EffectPrior {
    pub fn validate(&self) -> Result<()> {
        let check_slab = |df: f64, scale: f64| -> Result<()> {
            if !(df > 0.0) {
                return Err(Error::invalid(format!("prior df must be > 0, got {df}")));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::invalid(format!("prior scale must be > 0, got {scale}")));
            }
            Ok(())
        };
        match *self {
            EffectPrior::Normal { sigma_b2 } => {
                if !(sigma_b2 >= 0.0 && sigma_b2.is_finite()) {
                    return Err(Error::invalid(format!(
                        "sigma_b2 must be >= 0, got {sigma_b2}"
                    )));
                }
                Ok(())
            }
            EffectPrior::ScaledInvChiSq { df, scale } => check_slab(df, scale),
            EffectPrior::SpikeSlab { q, df, scale } => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::invalid(format!(
                        "mixing proportion q must lie in [0, 1], got {q}"
                    )));
                }
                check_slab(df, scale)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    LsScan,
    Shrink,
    SireBlup,
    Mme,
    SnpBlup,
    Gblup,
    BayesA,
    BayesB,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::LsScan => "ls-scan",
            Method::Shrink => "shrink",
            Method::SireBlup => "sire-blup",
            Method::Mme => "mme",
            Method::SnpBlup => "snp-blup",
            Method::Gblup => "gblup",
            Method::BayesA => "bayes-a",
            Method::BayesB => "bayes-b",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ls-scan" => Method::LsScan,
            "shrink" => Method::Shrink,
            "sire-blup" => Method::SireBlup,
            "mme" => Method::Mme,
            "snp-blup" => Method::SnpBlup,
            "gblup" => Method::Gblup,
            "bayes-a" => Method::BayesA,
            "bayes-b" => Method::BayesB,
            other => return Err(Error::invalid(format!("unknown method '{other}'"))),
        })
    }
}

/// Result of fitting a model: BLUEs of fixed effects and predictions (or
/// posterior means) of the random effects.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub method: Method,
    pub fixed_estimates: Vec<f64>,
    pub random_estimates: Vec<f64>,
    /// Identifier of each random effect (marker, level or individual).
    pub random_ids: Vec<String>,
    /// Posterior / prediction-error SD per random effect, when available.
    pub random_sd: Option<Vec<f64>>,
    /// Fitted genetic values of the training individuals (`W b` or `a`).
    pub genetic_values: Option<Vec<f64>>,
    pub variance: Option<VarianceComponents>,
    pub seed: Option<u64>,
}

impl ModelFit {
    pub fn new(method: Method, fixed: Vec<f64>, random: Vec<f64>, random_ids: Vec<String>) -> Self {
        Self {
            method,
            fixed_estimates: fixed,
            random_estimates: random,
            random_ids,
            random_sd: None,
            genetic_values: None,
            variance: None,
            seed: None,
        }
    }
}
