//! Comma-separated text formats for genotypes, pedigrees, phenotypes,
//! effect estimates and plain `id,value` vectors.
//!
//! Reals are written with 17 significant digits in scientific notation, so
//! every file read back reproduces the written values bit for bit. Parse
//! errors carry `path:line:column` (1-based; column counts fields).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{GenotypeMatrix, Method, ModelFit, Pedigree, PhenotypeVector};

pub const MISSING: &str = "NA";

/// Locale-independent round-trip formatting of a real.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

struct Table {
    header: StringRecord,
    rows: Vec<(u64, StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .clone();
    if header.is_empty() {
        return Err(parse_err(path, 1, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(Table { header, rows })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_err(
            path,
            line,
            (len as usize).min(expected_len as usize) + 1,
            format!("expected {expected_len} fields, found {len}"),
        ),
        other => parse_err(path, line, 1, format!("{other:?}")),
    }
}

fn expect_header(path: &Path, header: &StringRecord, names: &[&str]) -> Result<()> {
    for (k, name) in names.iter().enumerate() {
        match header.get(k) {
            Some(h) if h.eq_ignore_ascii_case(name) => {}
            other => {
                return Err(parse_err(
                    path,
                    1,
                    k + 1,
                    format!("expected column '{name}', found '{}'", other.unwrap_or("")),
                ))
            }
        }
    }
    Ok(())
}

fn parse_real(path: &Path, line: u64, column: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(path, line, column, format!("'{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, column, format!("'{s}' is not finite")));
    }
    Ok(v)
}

fn parse_optional_real(path: &Path, line: u64, column: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() || s == MISSING {
        Ok(None)
    } else {
        parse_real(path, line, column, s).map(Some)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| io_err(path, e))
}

/// Header `id,<marker ids>`; one row per individual with codes 0/1/2 or `NA`.
pub fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let t = read_table(path)?;
    let p = t.header.len() - 1;
    if p == 0 {
        return Err(parse_err(path, 1, 2, "no marker columns"));
    }
    let marker_ids: Vec<String> = t.header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        ids.push(rec[0].to_owned());
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, s)| match s {
                MISSING => Ok(None),
                "0" => Ok(Some(0)),
                "1" => Ok(Some(1)),
                "2" => Ok(Some(2)),
                other => Err(parse_err(path, *line, j + 2, format!("genotype '{other}' is not 0, 1, 2 or NA"))),
            })
            .collect::<Result<Vec<Option<u8>>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 2, 1, "no individuals"));
    }
    GenotypeMatrix::from_rows_with_missing(&rows)?.with_ids(ids, marker_ids)
}

pub fn write_genotypes(path: &Path, w: &GenotypeMatrix) -> Result<()> {
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    write!(out, "id").map_err(e)?;
    for m in w.marker_ids() {
        write!(out, ",{m}").map_err(e)?;
    }
    writeln!(out).map_err(e)?;
    for i in 0..w.n() {
        write!(out, "{}", w.individual_ids()[i]).map_err(e)?;
        for j in 0..w.p() {
            match w.get(i, j) {
                Some(c) => write!(out, ",{c}"),
                None => write!(out, ",{MISSING}"),
            }
            .map_err(e)?;
        }
        writeln!(out).map_err(e)?;
    }
    finish(path, out)
}

/// Header `id,sire,dam`; `0` marks an unknown parent. Parents must appear
/// before their offspring unless they are founders without a row.
pub fn read_pedigree(path: &Path) -> Result<Pedigree> {
    let t = read_table(path)?;
    expect_header(path, &t.header, &["id", "sire", "dam"])?;
    if t.header.len() != 3 {
        return Err(parse_err(path, 1, 4, "pedigree has exactly three columns"));
    }
    let parent = |s: &str| (s != "0" && !s.is_empty()).then(|| s.to_owned());
    let rows: Vec<(String, Option<String>, Option<String>)> = t
        .rows
        .iter()
        .map(|(_, r)| (r[0].to_owned(), parent(&r[1]), parent(&r[2])))
        .collect();
    Pedigree::from_named(&rows).map_err(|err| match &err {
        Error::Pedigree { id, .. } => {
            let line = t.rows.iter().find(|(_, r)| &r[0] == id).map_or(0, |(l, _)| *l);
            parse_err(path, line, 1, err.to_string())
        }
        _ => err,
    })
}

pub fn write_pedigree(path: &Path, ped: &Pedigree) -> Result<()> {
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    writeln!(out, "id,sire,dam").map_err(e)?;
    let recs = ped.records();
    let name = |p: Option<usize>| p.map_or_else(|| "0".to_owned(), |k| recs[k].id.clone());
    for r in recs {
        writeln!(out, "{},{},{}", r.id, name(r.sire), name(r.dam)).map_err(e)?;
    }
    finish(path, out)
}

/// Phenotypes plus optional covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenotypeTable {
    pub trait_name: String,
    pub phenotypes: PhenotypeVector,
    pub covariate_names: Vec<String>,
    /// `n x k` covariates (no intercept).
    pub covariates: DMatrix<f64>,
}

/// Header `id,<trait>[,<covariates>...]`.
pub fn read_phenotypes(path: &Path) -> Result<PhenotypeTable> {
    let t = read_table(path)?;
    expect_header(path, &t.header, &["id"])?;
    if t.header.len() < 2 {
        return Err(parse_err(path, 1, 2, "missing trait column"));
    }
    let k = t.header.len() - 2;
    let n = t.rows.len();
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut cov = DMatrix::zeros(n, k);
    for (i, (line, rec)) in t.rows.iter().enumerate() {
        ids.push(rec[0].to_owned());
        values.push(parse_real(path, *line, 2, &rec[1])?);
        for c in 0..k {
            cov[(i, c)] = parse_real(path, *line, c + 3, &rec[c + 2])?;
        }
    }
    Ok(PhenotypeTable {
        trait_name: t.header[1].to_owned(),
        phenotypes: PhenotypeVector::new(values, ids)?,
        covariate_names: t.header.iter().skip(2).map(str::to_owned).collect(),
        covariates: cov,
    })
}

pub fn write_phenotypes(path: &Path, table: &PhenotypeTable) -> Result<()> {
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    write!(out, "id,{}", table.trait_name).map_err(e)?;
    for c in &table.covariate_names {
        write!(out, ",{c}").map_err(e)?;
    }
    writeln!(out).map_err(e)?;
    let ph = &table.phenotypes;
    for i in 0..ph.len() {
        write!(out, "{},{}", ph.ids[i], fmt_real(ph.values[i])).map_err(e)?;
        for c in 0..table.covariates.ncols() {
            write!(out, ",{}", fmt_real(table.covariates[(i, c)])).map_err(e)?;
        }
        writeln!(out).map_err(e)?;
    }
    finish(path, out)
}

/// Header `id,<name>`; one real per row.
pub fn read_values(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let t = read_table(path)?;
    if t.header.len() != 2 {
        return Err(parse_err(path, 1, 1, "expected two columns: id,value"));
    }
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut vals = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        ids.push(rec[0].to_owned());
        vals.push(parse_real(path, *line, 2, &rec[1])?);
    }
    Ok((ids, vals))
}

/// Header `id,<name>`; one text label per row (e.g. family membership).
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let t = read_table(path)?;
    if t.header.len() != 2 {
        return Err(parse_err(path, 1, 1, "expected two columns: id,label"));
    }
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut labels = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        if rec[1].is_empty() {
            return Err(parse_err(path, *line, 2, "empty label"));
        }
        ids.push(rec[0].to_owned());
        labels.push(rec[1].to_owned());
    }
    Ok((ids, labels))
}

pub fn write_labels(path: &Path, label_name: &str, ids: &[String], labels: &[String]) -> Result<()> {
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    writeln!(out, "id,{label_name}").map_err(e)?;
    for (id, l) in ids.iter().zip(labels) {
        writeln!(out, "{id},{l}").map_err(e)?;
    }
    finish(path, out)
}

pub fn write_values(path: &Path, value_name: &str, ids: &[String], values: &[f64]) -> Result<()> {
    if ids.len() != values.len() {
        return Err(Error::Dimension {
            context: "ids for values",
            expected: values.len(),
            found: ids.len(),
        });
    }
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    writeln!(out, "id,{value_name}").map_err(e)?;
    for (id, v) in ids.iter().zip(values) {
        writeln!(out, "{id},{}", fmt_real(*v)).map_err(e)?;
    }
    finish(path, out)
}

/// Fitted effects: header `kind,id,estimate,sd,inclusion` with `kind` either
/// `fixed` or `random`; `sd` and `inclusion` are `NA` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectsTable {
    pub fixed_ids: Vec<String>,
    pub fixed: Vec<f64>,
    pub random_ids: Vec<String>,
    pub random: Vec<f64>,
    pub random_sd: Option<Vec<f64>>,
    pub inclusion: Option<Vec<f64>>,
}

impl EffectsTable {
    pub fn from_fit(fit: &ModelFit, fixed_ids: Vec<String>, inclusion: Option<Vec<f64>>) -> Result<Self> {
        if fixed_ids.len() != fit.fixed_estimates.len() {
            return Err(Error::Dimension {
                context: "fixed-effect names",
                expected: fit.fixed_estimates.len(),
                found: fixed_ids.len(),
            });
        }
        Ok(Self {
            fixed_ids,
            fixed: fit.fixed_estimates.clone(),
            random_ids: fit.random_ids.clone(),
            random: fit.random_estimates.clone(),
            random_sd: fit.random_sd.clone(),
            inclusion,
        })
    }

    pub fn to_fit(&self, method: Method) -> ModelFit {
        let mut fit = ModelFit::new(method, self.fixed.clone(), self.random.clone(), self.random_ids.clone());
        fit.random_sd = self.random_sd.clone();
        fit
    }
}

pub fn write_effects(path: &Path, t: &EffectsTable) -> Result<()> {
    let mut out = create(path)?;
    let e = |err| io_err(path, err);
    writeln!(out, "kind,id,estimate,sd,inclusion").map_err(e)?;
    for (id, v) in t.fixed_ids.iter().zip(&t.fixed) {
        writeln!(out, "fixed,{id},{},{MISSING},{MISSING}", fmt_real(*v)).map_err(e)?;
    }
    let opt = |v: Option<&Vec<f64>>, j: usize| v.map_or_else(|| MISSING.to_owned(), |v| fmt_real(v[j]));
    for (j, (id, v)) in t.random_ids.iter().zip(&t.random).enumerate() {
        writeln!(
            out,
            "random,{id},{},{},{}",
            fmt_real(*v),
            opt(t.random_sd.as_ref(), j),
            opt(t.inclusion.as_ref(), j)
        )
        .map_err(e)?;
    }
    finish(path, out)
}

pub fn read_effects(path: &Path) -> Result<EffectsTable> {
    let t = read_table(path)?;
    expect_header(path, &t.header, &["kind", "id", "estimate", "sd", "inclusion"])?;
    let mut table = EffectsTable {
        fixed_ids: Vec::new(),
        fixed: Vec::new(),
        random_ids: Vec::new(),
        random: Vec::new(),
        random_sd: None,
        inclusion: None,
    };
    let (mut sds, mut incl) = (Vec::new(), Vec::new());
    for (line, rec) in &t.rows {
        let est = parse_real(path, *line, 3, &rec[2])?;
        match &rec[0] {
            "fixed" => {
                table.fixed_ids.push(rec[1].to_owned());
                table.fixed.push(est);
            }
            "random" => {
                table.random_ids.push(rec[1].to_owned());
                table.random.push(est);
                sds.push(parse_optional_real(path, *line, 4, &rec[3])?);
                incl.push(parse_optional_real(path, *line, 5, &rec[4])?);
            }
            other => return Err(parse_err(path, *line, 1, format!("kind '{other}' is neither fixed nor random"))),
        }
    }
    let all = |v: Vec<Option<f64>>| -> Option<Vec<f64>> { v.into_iter().collect() };
    table.random_sd = all(sds).filter(|v| !v.is_empty());
    table.inclusion = all(incl).filter(|v| !v.is_empty());
    Ok(table)
}
