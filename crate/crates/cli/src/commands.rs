use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gpred::bayes::{
    bayes_a, bayes_b, default_slab_scale, BayesOptions, ChainConfig, PosteriorSummary, ResidualVariance,
    DEFAULT_PRIOR_DF,
};
use gpred::blup::{gblup, ls_scan, predict, shrink_ls, snp_blup, solve_mme, PredictDesign};
use gpred::evaluate::{
    accuracy_report, calibration_by_threshold, equivalence_experiment, selection_bias_report_by, truncation_experiment,
    ScanSelectionExperiment, SelectionBiasReport,
};
use gpred::io::{self, fmt_real, EffectsTable, PhenotypeTable, MISSING};
use gpred::relationship::{allele_frequencies, genomic_relationship, pedigree_numerator_matrix, Centering};
use gpred::rng::{derive_seed, domain};
use gpred::simulate::{simulate_effects, simulate_genotypes, simulate_phenotypes};
use gpred::{EffectPrior, FixedDesign, GenotypeMatrix, IncidenceMatrix, Method, ModelFit, VarianceComponents};
use nalgebra::DMatrix;

use crate::args::{
    invalid, need, set, ConfigFile, EquivalenceArgs, EvaluateArgs, Fig1Args, Fig2Args, FitArgs, PredictArgs, SimulateArgs,
};

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Global {
    pub seed: u64,
    pub threads: Option<usize>,
}

fn log(msg: impl AsRef<str>) {
    eprintln!("gpred: {}", msg.as_ref());
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = need(out, "out")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write_echo(dir: &Path, g: &Global, fill: impl FnOnce(&mut ConfigFile)) -> Result<()> {
    let mut cfg = ConfigFile {
        seed: Some(g.seed),
        threads: g.threads,
        ..Default::default()
    };
    fill(&mut cfg);
    let text = toml::to_string(&cfg).context("serialising resolved config")?;
    let path = dir.join("resolved_config.toml");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_owned(), fmt_real)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn metrics_csv(rows: &[(&str, String)]) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

// ---------------------------------------------------------------- simulate

pub fn simulate(g: &Global, mut a: SimulateArgs) -> Result<()> {
    set(&mut a.n, 1000);
    set(&mut a.p, 2000);
    set(&mut a.maf_low, 0.05);
    set(&mut a.maf_high, 0.5);
    set(&mut a.prior, "normal".to_owned());
    set(&mut a.h2, 0.5);
    set(&mut a.df, DEFAULT_PRIOR_DF);
    set(&mut a.intercept, 0.0);
    let dir = out_dir(&a.out)?;
    let (n, p, h2) = (need(&a.n, "n")?, need(&a.p, "p")?, need(&a.h2, "h2")?);
    if !(h2 > 0.0 && h2 < 1.0) {
        return Err(invalid(format!("h2 must lie in (0, 1), got {h2}")));
    }
    set(&mut a.sigma_e2, 1.0 - h2);

    let w = simulate_genotypes(n, p, (need(&a.maf_low, "maf_low")?, need(&a.maf_high, "maf_high")?), derive_seed(g.seed, domain::GENOTYPES, 0))?;
    let freqs = allele_frequencies(&w)?;
    let het: f64 = freqs.iter().map(|f| 2.0 * f * (1.0 - f)).sum();
    let df = need(&a.df, "df")?;
    let prior = match need(&a.prior, "prior")?.as_str() {
        "normal" => {
            if het == 0.0 && a.sigma_b2.is_none() {
                return Err(invalid("all simulated markers are monomorphic; set sigma_b2 explicitly"));
            }
            set(&mut a.sigma_b2, h2 / het);
            EffectPrior::Normal {
                sigma_b2: need(&a.sigma_b2, "sigma_b2")?,
            }
        }
        "bayes-a" => {
            if a.scale.is_none() {
                a.scale = Some(default_slab_scale(&freqs, h2, 1.0, df)?);
            }
            EffectPrior::ScaledInvChiSq {
                df,
                scale: need(&a.scale, "scale")?,
            }
        }
        "bayes-b" => {
            set(&mut a.q, 0.05);
            let q = need(&a.q, "q")?;
            if a.scale.is_none() {
                a.scale = Some(default_slab_scale(&freqs, h2, q, df)?);
            }
            EffectPrior::SpikeSlab {
                q,
                df,
                scale: need(&a.scale, "scale")?,
            }
        }
        other => return Err(invalid(format!("unknown prior '{other}' (expected normal, bayes-a or bayes-b)"))),
    };
    prior.validate()?;
    let b = simulate_effects(p, &prior, derive_seed(g.seed, domain::EFFECTS, 0))?;
    let intercept = need(&a.intercept, "intercept")?;
    let d = simulate_phenotypes(
        &w,
        &b,
        &FixedDesign::intercept(n),
        &[intercept],
        need(&a.sigma_e2, "sigma_e2")?,
        derive_seed(g.seed, domain::RESIDUALS, 0),
    )?;

    io::write_genotypes(&dir.join("genotypes.csv"), &w)?;
    io::write_phenotypes(
        &dir.join("phenotypes.csv"),
        &PhenotypeTable {
            trait_name: "y".into(),
            phenotypes: d.y.clone(),
            covariate_names: Vec::new(),
            covariates: DMatrix::zeros(n, 0),
        },
    )?;
    io::write_values(&dir.join("true_effects.csv"), "b", w.marker_ids(), &b)?;
    io::write_values(&dir.join("true_genetic_values.csv"), "g", w.individual_ids(), &d.g_true)?;
    write_echo(&dir, g, |c| c.simulate = Some(a))?;
    log(format!("simulate: {n} individuals x {p} markers written to {}", dir.display()));
    Ok(())
}

// --------------------------------------------------------------------- fit

struct Design {
    names: Vec<String>,
    x: FixedDesign,
}

fn fixed_design(table: &PhenotypeTable, rows: &[usize], intercept: bool) -> Design {
    let n = rows.len();
    let k = table.covariates.ncols();
    let off = usize::from(intercept);
    let mut names = Vec::with_capacity(k + off);
    if intercept {
        names.push("intercept".to_owned());
    }
    names.extend(table.covariate_names.iter().cloned());
    let x = FixedDesign::new(DMatrix::from_fn(n, k + off, |i, c| {
        if intercept && c == 0 {
            1.0
        } else {
            table.covariates[(rows[i], c - off)]
        }
    }));
    Design { names, x }
}


/// Row of each `target` id in `ids`; names the first missing id.
fn align(ids: &[String], targets: &[String], what: &str, source: &str) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if index.len() != ids.len() {
        bail!("duplicate ids in {source}");
    }
    targets
        .iter()
        .map(|t| {
            index
                .get(t.as_str())
                .copied()
                .ok_or_else(|| anyhow!("individual '{t}' in {what} has no record in {source}"))
        })
        .collect()
}

/// Phenotype rows in genotype order; every genotyped individual needs a
/// phenotype and vice versa.
fn align_to_genotypes(w: &GenotypeMatrix, table: &PhenotypeTable) -> Result<Vec<usize>> {
    let rows = align(&table.phenotypes.ids, w.individual_ids(), "genotypes", "phenotypes")?;
    if table.phenotypes.len() != w.n() {
        align(w.individual_ids(), &table.phenotypes.ids, "phenotypes", "genotypes")?;
    }
    Ok(rows)
}

fn variance(a: &FitArgs) -> Result<VarianceComponents> {
    Ok(VarianceComponents::new(need(&a.sigma_e2, "sigma_e2")?, need(&a.sigma_u2, "sigma_u2")?)?)
}

pub fn fit(g: &Global, mut a: FitArgs) -> Result<()> {
    let method: Method = need(&a.method, "method")?
        .parse()
        .map_err(|e: gpred::Error| invalid(e.to_string()))?;
    set(&mut a.intercept, true);
    let dir = out_dir(&a.out)?;
    let table = io::read_phenotypes(&need(&a.phenotypes, "phenotypes")?)?;
    let intercept = need(&a.intercept, "intercept")?;
    match method {
        Method::SireBlup | Method::Mme => fit_sire(g, a, &dir, &table, intercept),
        Method::LsScan | Method::Shrink => fit_scan(g, a, &dir, &table, intercept, method),
        Method::SnpBlup | Method::Gblup => fit_blup(g, a, &dir, &table, intercept, method),
        Method::BayesA | Method::BayesB => fit_bayes(g, a, &dir, &table, intercept, method),
    }
}

fn read_genotypes_for(a: &FitArgs, table: &PhenotypeTable, intercept: bool) -> Result<(GenotypeMatrix, Design, Vec<f64>)> {
    let w = io::read_genotypes(&need(&a.genotypes, "genotypes")?)?;
    let rows = align_to_genotypes(&w, table)?;
    let design = fixed_design(table, &rows, intercept);
    let y = rows.iter().map(|&i| table.phenotypes.values[i]).collect();
    Ok((w, design, y))
}

fn fit_scan(g: &Global, mut a: FitArgs, dir: &Path, table: &PhenotypeTable, intercept: bool, method: Method) -> Result<()> {
    let (w, design, y) = read_genotypes_for(&a, table, intercept)?;
    let scan = ls_scan(&w, &design.x, &y)?;
    let shrunk = if method == Method::Shrink {
        if a.lambda.is_none() {
            a.lambda = Some(variance(&a)?.lambda().ok_or_else(|| anyhow!("lambda undefined for sigma_u2 = 0"))?);
        }
        let lambda = need(&a.lambda, "lambda")?;
        let b: Vec<f64> = scan.estimate.iter().map(|e| e.unwrap_or(0.0)).collect();
        Some(shrink_ls(&b, lambda)?)
    } else {
        None
    };
    let mut s = String::from("id,estimate,se,statistic");
    s.push_str(if shrunk.is_some() { ",shrunk\n" } else { "\n" });
    for j in 0..scan.len() {
        let _ = write!(
            s,
            "{},{},{},{}",
            scan.marker_ids[j],
            opt(scan.estimate[j]),
            opt(scan.se[j]),
            opt(scan.statistic[j])
        );
        if let Some(sh) = &shrunk {
            let _ = write!(s, ",{}", opt(scan.estimate[j].map(|_| sh[j])));
        }
        s.push('\n');
    }
    write_text(&dir.join("scan.csv"), &s)?;
    write_echo(dir, g, |c| c.fit = Some(a))?;
    log(format!("fit: {method} over {} markers, {} without an estimate", scan.len(), scan.flagged().len()));
    Ok(())
}

fn write_fit(dir: &Path, fit: &ModelFit, fixed_names: Vec<String>, inclusion: Option<Vec<f64>>, individuals: &[String]) -> Result<()> {
    io::write_effects(&dir.join("effects.csv"), &EffectsTable::from_fit(fit, fixed_names, inclusion)?)?;
    if let Some(gv) = &fit.genetic_values {
        io::write_values(&dir.join("genetic_values.csv"), "g", individuals, gv)?;
    }
    Ok(())
}

fn fit_blup(g: &Global, mut a: FitArgs, dir: &Path, table: &PhenotypeTable, intercept: bool, method: Method) -> Result<()> {
    let (w, design, y) = read_genotypes_for(&a, table, intercept)?;
    let vc = variance(&a)?;
    let mut fit = if method == Method::SnpBlup {
        snp_blup(&w, &design.x, &y, &vc)?
    } else {
        set(&mut a.centering, "centered".to_owned());
        let centering = match need(&a.centering, "centering")?.as_str() {
            "centered" => Centering::Centered,
            "raw" => Centering::Raw,
            other => return Err(invalid(format!("unknown centering '{other}' (expected centered or raw)"))),
        };
        let rel = genomic_relationship(&w, centering)?;
        let mut f = gblup(&rel, &design.x, &y, &vc)?;
        f.random_ids = w.individual_ids().to_vec();
        f
    };
    fit.seed = None;
    write_fit(dir, &fit, design.names, None, w.individual_ids())?;
    write_echo(dir, g, |c| c.fit = Some(a))?;
    log(format!("fit: {method} on {} individuals x {} markers", w.n(), w.p()));
    Ok(())
}

fn fit_sire(g: &Global, a: FitArgs, dir: &Path, table: &PhenotypeTable, intercept: bool) -> Result<()> {
    let (ids, fams) = io::read_labels(&need(&a.families, "families")?)?;
    let rows = align(&table.phenotypes.ids, &ids, "families", "phenotypes")?;
    let mut levels: Vec<String> = Vec::new();
    let mut level_of: HashMap<&str, usize> = HashMap::new();
    for f in &fams {
        if !level_of.contains_key(f.as_str()) {
            level_of.insert(f, levels.len());
            levels.push(f.clone());
        }
    }
    let z = IncidenceMatrix::from_levels(levels.len(), &fams.iter().map(|f| level_of[f.as_str()]).collect::<Vec<_>>())?;
    let design = fixed_design(table, &rows, intercept);
    let y: Vec<f64> = rows.iter().map(|&i| table.phenotypes.values[i]).collect();
    let vc = variance(&a)?;
    let lambda = vc.lambda().ok_or_else(|| anyhow!("sire-blup needs sigma_u2 > 0"))?;
    let kinv = match &a.pedigree {
        None => DMatrix::identity(levels.len(), levels.len()),
        Some(path) => {
            let ped = io::read_pedigree(path)?;
            let ped_ids: Vec<String> = ped.records().iter().map(|r| r.id.clone()).collect();
            let idx = align(&ped_ids, &levels, "families", "pedigree")?;
            let full = pedigree_numerator_matrix(&ped)?;
            let sub = gpred::RelationshipMatrix::new(full.k.select_rows(&idx).select_columns(&idx), full.kind)?;
            sub.inverse()?
        }
    };
    let mut fit = solve_mme(&design.x, &z, &y, &kinv, lambda)?;
    fit.method = Method::SireBlup;
    fit.random_ids = levels;
    fit.variance = Some(vc);
    write_fit(dir, &fit, design.names, None, &ids)?;
    write_echo(dir, g, |c| c.fit = Some(a))?;
    log(format!("fit: sire-blup with {} families over {} records", z.levels(), y.len()));
    Ok(())
}

fn fit_bayes(g: &Global, mut a: FitArgs, dir: &Path, table: &PhenotypeTable, intercept: bool, method: Method) -> Result<()> {
    let (w, design, y) = read_genotypes_for(&a, table, intercept)?;
    set(&mut a.df, DEFAULT_PRIOR_DF);
    set(&mut a.residual, "sampled".to_owned());
    set(&mut a.iterations, 10_000);
    set(&mut a.burn_in, 1_000);
    set(&mut a.thinning, 10);
    set(&mut a.chains, 1);
    set(&mut a.traces, false);
    if method == Method::BayesB {
        set(&mut a.q, 0.05);
    }
    let q = if method == Method::BayesB { need(&a.q, "q")? } else { 1.0 };
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("q must lie in [0, 1], got {q}")));
    }
    let df = need(&a.df, "df")?;
    if a.scale.is_none() {
        let freqs = allele_frequencies(&w)?;
        let gv = a
            .genetic_variance
            .ok_or_else(|| invalid("set either 'scale' or 'genetic_variance' for the locus-variance prior"))?;
        a.scale = Some(default_slab_scale(&freqs, gv, q.max(f64::MIN_POSITIVE), df)?);
    }
    let scale = need(&a.scale, "scale")?;
    let treatment = need(&a.residual, "residual")?;
    if treatment == "sampled" {
        // Only the starting value and prior scale; half the phenotypic variance.
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let vy = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() as f64 - 1.0).max(1.0);
        set(&mut a.sigma_e2, if vy > 0.0 { vy / 2.0 } else { 1.0 });
    }
    let se2 = need(&a.sigma_e2, "sigma_e2")?;
    let residual = match treatment.as_str() {
        "sampled" => ResidualVariance::sampled_from_guess(se2),
        "fixed" => ResidualVariance::Fixed(se2),
        other => return Err(invalid(format!("unknown residual treatment '{other}' (expected sampled or fixed)"))),
    };
    let cfg = ChainConfig {
        iterations: need(&a.iterations, "iterations")?,
        burn_in: need(&a.burn_in, "burn_in")?,
        thinning: need(&a.thinning, "thinning")?,
        seed: g.seed,
        chains: need(&a.chains, "chains")?,
    };
    let traces = need(&a.traces, "traces")?;
    let opts = BayesOptions {
        residual,
        pin_locus_variance: false,
        keep_traces: traces,
    };
    let summary = if method == Method::BayesA {
        bayes_a(&w, &design.x, &y, &EffectPrior::ScaledInvChiSq { df, scale }, &opts, &cfg)?
    } else {
        bayes_b(&w, &design.x, &y, &EffectPrior::SpikeSlab { q, df, scale }, &opts, &cfg)?
    };
    let mut fit = summary.to_model_fit();
    fit.genetic_values = Some(w.mul_vec(&summary.mean)?);
    write_fit(dir, &fit, design.names, summary.inclusion.clone(), w.individual_ids())?;
    write_text(&dir.join("chain_summary.csv"), &chain_summary_csv(&summary))?;
    if traces {
        write_text(&dir.join("traces.csv"), &traces_csv(&summary))?;
    }
    write_echo(dir, g, |c| c.fit = Some(a))?;
    let max_rhat = summary.rhat.iter().copied().fold(f64::NAN, f64::max);
    log(format!(
        "fit: {method} on {} individuals x {} markers, {} chain(s), max R-hat {max_rhat:.3}",
        w.n(),
        w.p(),
        cfg.chains
    ));
    Ok(())
}

fn chain_summary_csv(s: &PosteriorSummary) -> String {
    let mut out = String::from("id,mean,sd,mcse,rhat,locus_variance_mean\n");
    for j in 0..s.mean.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.marker_ids[j],
            fmt_real(s.mean[j]),
            fmt_real(s.sd[j]),
            fmt_real(s.mcse[j]),
            fmt_real(s.rhat[j]),
            fmt_real(s.locus_variance_mean[j])
        );
    }
    let e = &s.sigma_e2;
    let _ = writeln!(
        out,
        "sigma_e2,{},{},{},{},{MISSING}",
        fmt_real(e.mean),
        fmt_real(e.sd),
        fmt_real(e.mcse),
        fmt_real(e.rhat)
    );
    out
}

fn traces_csv(s: &PosteriorSummary) -> String {
    let mut out = String::from("chain,iteration,sigma_e2");
    for id in &s.marker_ids {
        let _ = write!(out, ",{id}");
    }
    out.push('\n');
    for (k, t) in s.traces.iter().enumerate() {
        for (r, it) in t.iterations.iter().enumerate() {
            let _ = write!(out, "{k},{it},{}", fmt_real(t.sigma_e2[r]));
            for v in &t.effects[r] {
                let _ = write!(out, ",{}", fmt_real(*v));
            }
            out.push('\n');
        }
    }
    out
}

// ----------------------------------------------------------------- predict

pub fn predict_cmd(g: &Global, a: PredictArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let effects = io::read_effects(&need(&a.effects, "effects")?)?;
    let fit = effects.to_fit(Method::SnpBlup);

    enum Target {
        Markers(GenotypeMatrix),
        Levels(IncidenceMatrix),
    }
    let (ids, target) = match (&a.genotypes, &a.families) {
        (Some(path), None) => {
            let w = io::read_genotypes(path)?;
            (w.individual_ids().to_vec(), Target::Markers(w))
        }
        (None, Some(path)) => {
            let (ids, fams) = io::read_labels(path)?;
            let index: HashMap<&str, usize> = fit.random_ids.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
            let assignment = fams
                .iter()
                .map(|f| {
                    index
                        .get(f.as_str())
                        .map(|&k| Some(k))
                        .ok_or_else(|| anyhow!("family '{f}' has no fitted effect"))
                })
                .collect::<Result<Vec<_>>>()?;
            (ids, Target::Levels(IncidenceMatrix::new(fit.random_ids.len(), assignment)?))
        }
        _ => return Err(invalid("predict needs exactly one of --genotypes or --families")),
    };

    // Fixed-effect columns by name: the intercept, or covariates of the new individuals.
    let covariates = match &a.phenotypes {
        Some(path) => {
            let t = io::read_phenotypes(path)?;
            let rows = align(&t.phenotypes.ids, &ids, "prediction targets", "phenotypes")?;
            Some((t, rows))
        }
        None => None,
    };
    let x = DMatrix::from_fn(ids.len(), effects.fixed_ids.len(), |_, _| 0.0);
    let mut x = x;
    for (c, name) in effects.fixed_ids.iter().enumerate() {
        if name == "intercept" {
            for i in 0..ids.len() {
                x[(i, c)] = 1.0;
            }
            continue;
        }
        let (t, rows) = covariates
            .as_ref()
            .ok_or_else(|| anyhow!("fit uses covariate '{name}'; supply --phenotypes with that column"))?;
        let k = t
            .covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| anyhow!("covariate '{name}' not found in phenotype file"))?;
        for (i, &r) in rows.iter().enumerate() {
            x[(i, c)] = t.covariates[(r, k)];
        }
    }
    let x = FixedDesign::new(x);
    let yhat = match &target {
        Target::Markers(w) => predict(&fit, PredictDesign::Genotypes(w), &x)?,
        Target::Levels(z) => predict(&fit, PredictDesign::Incidence(z), &x)?,
    };
    io::write_values(&dir.join("predictions.csv"), "prediction", &ids, &yhat)?;
    write_echo(&dir, g, |c| c.predict = Some(a))?;
    log(format!("predict: {} individuals", ids.len()));
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn read_estimates(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let head = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if head.starts_with("kind,") {
        let t = io::read_effects(path)?;
        Ok((t.random_ids, t.random))
    } else {
        Ok(io::read_values(path)?)
    }
}

fn selection_rows(r: &SelectionBiasReport) -> Vec<(&'static str, String)> {
    vec![
        ("threshold", fmt_real(r.threshold)),
        ("two_sided", r.two_sided.to_string()),
        ("total", r.total.to_string()),
        ("selected", r.selected.to_string()),
        ("mean_estimate", opt(r.mean_estimate)),
        ("mean_truth", opt(r.mean_truth)),
        ("mean_abs_estimate", opt(r.mean_abs_estimate)),
        ("mean_abs_truth", opt(r.mean_abs_truth)),
        ("abs_diff_se", opt(r.abs_diff_se)),
        ("slope", opt(r.slope)),
        ("slope_se", opt(r.slope_se)),
    ]
}

pub fn evaluate(g: &Global, mut a: EvaluateArgs) -> Result<()> {
    set(&mut a.one_sided, false);
    let dir = out_dir(&a.out)?;
    let (tid, truth) = io::read_values(&need(&a.truth, "truth")?)?;
    let (eid, est) = read_estimates(&need(&a.estimates, "estimates")?)?;
    let rows = align(&eid, &tid, "truth", "estimates")?;
    if eid.len() != tid.len() {
        align(&tid, &eid, "estimates", "truth")?;
    }
    let est: Vec<f64> = rows.iter().map(|&i| est[i]).collect();
    let acc = accuracy_report(&truth, &est)?;
    write_text(
        &dir.join("accuracy.csv"),
        &metrics_csv(&[
            ("n", acc.n.to_string()),
            ("correlation", opt(acc.correlation)),
            ("correlation_se", opt(acc.correlation_se)),
            ("slope", opt(acc.slope)),
            ("slope_se", opt(acc.slope_se)),
            ("intercept", opt(acc.intercept)),
            ("mse", fmt_real(acc.mse)),
        ]),
    )?;
    if let Some(t) = a.threshold {
        let scores = match &a.scores {
            Some(path) => {
                let (sid, sv) = read_estimates(path)?;
                let r = align(&sid, &tid, "truth", "scores")?;
                r.iter().map(|&i| sv[i]).collect()
            }
            None => est.clone(),
        };
        let rep = selection_bias_report_by(&truth, &est, &scores, t, !need(&a.one_sided, "one_sided")?)?;
        write_text(&dir.join("selection.csv"), &metrics_csv(&selection_rows(&rep)))?;
    }
    write_echo(&dir, g, |c| c.evaluate = Some(a))?;
    log(format!(
        "evaluate: n = {}, correlation {}, slope {}",
        acc.n,
        acc.correlation.map_or("NA".into(), |v| format!("{v:.4}")),
        acc.slope.map_or("NA".into(), |v| format!("{v:.4}"))
    ));
    Ok(())
}

// ------------------------------------------------------------- experiments

pub fn fig1(g: &Global, mut a: Fig1Args) -> Result<()> {
    set(&mut a.b, 1.0);
    set(&mut a.se, 1.0);
    set(&mut a.threshold, 2.0);
    set(&mut a.replicates, 1_000_000);
    let dir = out_dir(&a.out)?;
    let r = truncation_experiment(
        need(&a.b, "b")?,
        need(&a.se, "se")?,
        need(&a.threshold, "threshold")?,
        need(&a.replicates, "replicates")?,
        g.seed,
    )?;
    write_text(
        &dir.join("fig1_summary.csv"),
        &metrics_csv(&[
            ("b", fmt_real(r.b)),
            ("se", fmt_real(r.se)),
            ("threshold", fmt_real(r.threshold)),
            ("replicates", r.replicates.to_string()),
            ("selected", r.selected.to_string()),
            ("selected_mean", opt(r.selected_mean)),
            ("selected_mean_se", opt(r.selected_mean_se)),
            ("analytic_mean", fmt_real(r.analytic_mean)),
        ]),
    )?;
    let mut h = String::from("lower,upper,count,selected\n");
    for bin in &r.histogram {
        let _ = writeln!(h, "{},{},{},{}", fmt_real(bin.lower), fmt_real(bin.upper), bin.count, bin.selected);
    }
    write_text(&dir.join("fig1_histogram.csv"), &h)?;
    write_echo(&dir, g, |c| c.fig1 = Some(a))?;
    println!(
        "fig1: mean significant estimate {} over {} of {} replicates (truncated-normal mean {:.6})",
        r.selected_mean.map_or("NA".into(), |m| format!("{m:.6}")),
        r.selected,
        r.replicates,
        r.analytic_mean
    );
    Ok(())
}

fn report_line(label: &str, r: &SelectionBiasReport) -> String {
    format!(
        "{label},{},{},{},{},{},{},{}",
        fmt_real(r.threshold),
        r.selected,
        opt(r.slope),
        opt(r.slope_se),
        opt(r.mean_abs_estimate),
        opt(r.mean_abs_truth),
        opt(r.abs_diff_se)
    )
}

pub fn fig2(g: &Global, mut a: Fig2Args) -> Result<()> {
    set(&mut a.sigma_b2, 0.5);
    set(&mut a.sigma_err2, 0.5);
    set(&mut a.markers, 100_000);
    set(&mut a.threshold, 2.5);
    set(&mut a.min_selected, 200);
    set(&mut a.calibration_thresholds, vec![0.0, 1.0, 2.0, 3.0]);
    let dir = out_dir(&a.out)?;
    let (sb, se) = (need(&a.sigma_b2, "sigma_b2")?, need(&a.sigma_err2, "sigma_err2")?);
    if a.lambda.is_none() {
        if sb <= 0.0 {
            return Err(invalid("lambda undefined for sigma_b2 = 0"));
        }
        a.lambda = Some(se / sb);
    }
    let exp = ScanSelectionExperiment {
        sigma_b2: sb,
        sigma_err2: se,
        markers: need(&a.markers, "markers")?,
        threshold: need(&a.threshold, "threshold")?,
        min_selected: need(&a.min_selected, "min_selected")?,
        lambda: a.lambda,
        max_replicates: 10_000,
        seed: g.seed,
    };
    let r = exp.run()?;
    let header = "estimator,threshold,selected,slope,slope_se,mean_abs_estimate,mean_abs_truth,abs_diff_se\n";
    write_text(
        &dir.join("fig2_summary.csv"),
        &format!("{header}{}\n{}\n", report_line("ls", &r.ls), report_line("shrunk", &r.shrunk)),
    )?;
    let mut sc = String::from("truth,ls,shrunk\n");
    for p in &r.scatter {
        let _ = writeln!(sc, "{},{},{}", fmt_real(p.truth), fmt_real(p.ls), fmt_real(p.shrunk));
    }
    write_text(&dir.join("fig2_scatter.csv"), &sc)?;

    let first = exp.replicate(0)?;
    let shrunk = shrink_ls(&first.b_tilde, r.lambda)?;
    let thresholds = need(&a.calibration_thresholds, "calibration_thresholds")?;
    let cal = calibration_by_threshold(&first.b_true, &first.b_tilde, &shrunk, &thresholds)?;
    let mut c = String::from(header);
    for rep in &cal {
        let _ = writeln!(c, "{}", report_line("shrunk", rep));
    }
    write_text(&dir.join("fig2_calibration.csv"), &c)?;
    write_echo(&dir, g, |cfg| cfg.fig2 = Some(a))?;
    println!(
        "fig2: {} replicates, {} selected; slope LS {}, slope shrunk {}",
        r.replicates,
        r.ls.selected,
        opt(r.ls.slope),
        opt(r.shrunk.slope)
    );
    Ok(())
}

pub fn equivalence(g: &Global, mut a: EquivalenceArgs) -> Result<()> {
    set(&mut a.n, 50);
    set(&mut a.p, 200);
    set(&mut a.h2, 0.5);
    set(&mut a.tolerance, 1e-8);
    let dir = out_dir(&a.out)?;
    let e = equivalence_experiment(
        need(&a.n, "n")?,
        need(&a.p, "p")?,
        need(&a.h2, "h2")?,
        need(&a.tolerance, "tolerance")?,
        g.seed,
    )?;
    let mut s = String::from("comparison,max_abs_diff,mean_abs_diff,tolerance,pass\n");
    for (label, r) in &e.comparisons {
        let _ = writeln!(
            s,
            "{label},{},{},{},{}",
            fmt_real(r.max_abs_diff),
            fmt_real(r.mean_abs_diff),
            fmt_real(r.tolerance),
            r.pass
        );
    }
    write_text(&dir.join("equivalence.csv"), &s)?;
    write_echo(&dir, g, |c| c.equivalence = Some(a))?;
    println!("equivalence: {}", if e.pass() { "pass" } else { "FAIL" });
    if !e.pass() {
        bail!("estimators disagree beyond tolerance; see equivalence.csv");
    }
    Ok(())
}
