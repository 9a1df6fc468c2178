//! Transcriptome-wide multivariable MR.
//!
//! Joint causal effects of `k` genes are estimated by generalized least
//! squares of the outcome effects `gamma` on the eQTL effect matrix `E`
//! under LD covariance `C`:
//!
//! ```text
//! alpha = (E' C^-1 E)^-1 E' C^-1 gamma
//! ```
//!
//! Standardized effects are assumed, so `gamma` has sampling covariance
//! `C / n_gwas` and each column of `E` has covariance `C / n_qtl`. The
//! covariance of `alpha` is the first-order delta-method expansion over
//! both sources of error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::ld::{clump, index_snps, parse_ld_file, ClumpParams, LdMatrix, LdScale};
use crate::stats::normal_p;
use crate::sumstats::{
    harmonize, parse_matrix_file, AssocTable, EffectMatrix, PalindromePolicy, SnpRecord,
};

/// LD matrices whose smallest eigenvalue falls below this are regularized.
pub const MIN_LD_EIGENVALUE: f64 = 1e-8;
/// Ridge added to the LD diagonal when regularizing.
pub const LD_RIDGE: f64 = 1e-6;
/// Condition number of `E' C^-1 E` above which the design counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Header of the `.alpha` output.
pub const ALPHA_HEADER: [&str; 6] = ["gene", "alpha", "SE", "P", "Nsnps", "Ngene"];

#[derive(Clone, Debug)]
pub struct TwmrInput {
    pub effects: EffectMatrix,
    pub ld: LdMatrix,
    pub n_gwas: f64,
    pub n_qtl: f64,
}

impl TwmrInput {
    pub fn new(effects: EffectMatrix, ld: LdMatrix, n_gwas: f64, n_qtl: f64) -> Result<Self> {
        if effects.snps.as_slice() != ld.snps() {
            return Err(Error::DimensionMismatch(format!(
                "effect matrix has {} SNPs, LD matrix {}; both must list the same SNPs in the same order",
                effects.n_snps(),
                ld.len()
            )));
        }
        if !(n_gwas > 0.0 && n_gwas.is_finite()) {
            return Err(Error::param("n_gwas", "sample size must be > 0"));
        }
        if !(n_qtl > 0.0 && n_qtl.is_finite()) {
            return Err(Error::param("n_qtl", "sample size must be > 0"));
        }
        ld.signed_r()?;
        Ok(TwmrInput {
            effects,
            ld,
            n_gwas,
            n_qtl,
        })
    }
}

/// One row of the `.alpha` output.
#[derive(Clone, Debug, PartialEq)]
pub struct TwmrResult {
    pub gene: String,
    pub alpha: f64,
    pub se: f64,
    pub p: f64,
    pub nsnps: usize,
    pub ngene: usize,
}

/// Full estimator output.
#[derive(Clone, Debug)]
pub struct TwmrFit {
    pub results: Vec<TwmrResult>,
    pub alpha: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Ridge added to the LD diagonal (0 when none was needed).
    pub ridge: f64,
    /// Condition number of `E' C^-1 E`.
    pub condition: f64,
}

/// LD matrix prepared for GLS: possibly regularized, with its Cholesky factor.
pub struct LdSolver {
    c: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ridge: f64,
}

impl LdSolver {
    pub fn new(c: &DMatrix<f64>) -> Result<Self> {
        let min_eig = SymmetricEigen::new(c.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let (c, ridge) = if min_eig < MIN_LD_EIGENVALUE {
            let n = c.nrows();
            (c + DMatrix::identity(n, n) * LD_RIDGE, LD_RIDGE)
        } else {
            (c.clone(), 0.0)
        };
        let chol = c.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(LdSolver { c, chol, ridge })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

struct Gls {
    alpha: DVector<f64>,
    a_inv: DMatrix<f64>,
    cinv_e: DMatrix<f64>,
    cinv_resid: DVector<f64>,
    condition: f64,
}

fn gls(e: &DMatrix<f64>, gamma: &DVector<f64>, ld: &LdSolver) -> Result<Gls> {
    let (n, k) = e.shape();
    if k == 0 || gamma.len() != n || ld.c.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "E is {n}x{k}, gamma has {} entries, C is {}x{}",
            gamma.len(),
            ld.c.nrows(),
            ld.c.ncols()
        )));
    }
    let cinv_e = ld.solve(e);
    let a = e.transpose() * &cinv_e;
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if k > n || condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::SingularDesign { condition });
    }
    let a_inv = a
        .cholesky()
        .ok_or(Error::SingularDesign { condition })?
        .inverse();
    let alpha = &a_inv * (cinv_e.transpose() * gamma);
    let resid = gamma - e * &alpha;
    let cinv_resid = ld.solve_vec(&resid);
    Ok(Gls {
        alpha,
        a_inv,
        cinv_e,
        cinv_resid,
        condition,
    })
}

/// Point estimate only.
pub fn gls_alpha(e: &DMatrix<f64>, gamma: &DVector<f64>, ld: &LdSolver) -> Result<DVector<f64>> {
    Ok(gls(e, gamma, ld)?.alpha)
}

/// `d alpha / d E[., m]` for every gene `m`, each a `k x n` matrix.
///
/// `J_m = A^-1 (e_m (C^-1 r)' - alpha_m E' C^-1)` with `A = E' C^-1 E` and
/// residual `r = gamma - E alpha`.
pub fn alpha_jacobians(
    e: &DMatrix<f64>,
    gamma: &DVector<f64>,
    ld: &LdSolver,
) -> Result<Vec<DMatrix<f64>>> {
    let fit = gls(e, gamma, ld)?;
    Ok(jacobians_from(&fit))
}

fn jacobians_from(fit: &Gls) -> Vec<DMatrix<f64>> {
    let k = fit.alpha.len();
    let cinv_e_t = fit.cinv_e.transpose();
    (0..k)
        .map(|m| {
            let mut inner = &cinv_e_t * -fit.alpha[m];
            let mut row = inner.row_mut(m);
            row += fit.cinv_resid.transpose();
            &fit.a_inv * inner
        })
        .collect()
}

/// Runs the estimator and delta-method variance on prepared input.
pub fn twmr_fit(input: &TwmrInput) -> Result<TwmrFit> {
    let c = input.ld.signed_r()?;
    let ld = LdSolver::new(c)?;
    let e = &input.effects.beta;
    let gamma = &input.effects.outcome_beta;
    let fit = gls(e, gamma, &ld)?;

    let mut cov = &fit.a_inv / input.n_gwas;
    for j in jacobians_from(&fit) {
        cov += &j * ld.matrix() * j.transpose() / input.n_qtl;
    }
    let cov = (&cov + cov.transpose()) * 0.5;

    let (n, k) = e.shape();
    let results = input
        .effects
        .traits
        .iter()
        .enumerate()
        .map(|(m, gene)| {
            let se = cov[(m, m)].max(0.0).sqrt();
            TwmrResult {
                gene: gene.clone(),
                alpha: fit.alpha[m],
                se,
                p: normal_p(fit.alpha[m], se),
                nsnps: n,
                ngene: k,
            }
        })
        .collect();
    Ok(TwmrFit {
        results,
        alpha: fit.alpha,
        covariance: cov,
        ridge: ld.ridge(),
        condition: fit.condition,
    })
}

pub fn twmr_estimate(input: &TwmrInput) -> Result<Vec<TwmrResult>> {
    Ok(twmr_fit(input)?.results)
}

pub fn write_alpha<W: Write>(w: &mut W, results: &[TwmrResult]) -> std::io::Result<()> {
    writeln!(w, "{}", ALPHA_HEADER.join("\t"))?;
    for r in results {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.gene, r.alpha, r.se, r.p, r.nsnps, r.ngene
        )?;
    }
    Ok(())
}

pub fn write_alpha_file(path: impl AsRef<Path>, results: &[TwmrResult]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_alpha(&mut w, results).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_alpha_file(path: impl AsRef<Path>) -> Result<Vec<TwmrResult>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, message: &str| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if i == 0 {
            if tok != ALPHA_HEADER {
                return Err(malformed(1, "unexpected .alpha header"));
            }
            continue;
        }
        if tok.is_empty() {
            continue;
        }
        if tok.len() != 6 {
            return Err(malformed(i + 1, "expected 6 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| malformed(i + 1, "bad number"));
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| malformed(i + 1, "bad count"))
        };
        out.push(TwmrResult {
            gene: tok[0].to_string(),
            alpha: num(tok[1])?,
            se: num(tok[2])?,
            p: num(tok[3])?,
            nsnps: int(tok[4])?,
            ngene: int(tok[5])?,
        });
    }
    Ok(out)
}

/// The `.matrix` / `.ld` / `.alpha` paths for a stem.
#[derive(Clone, Debug)]
pub struct StemPaths {
    pub matrix: PathBuf,
    pub ld: PathBuf,
    pub alpha: PathBuf,
}

impl StemPaths {
    pub fn new(stem: impl AsRef<Path>) -> Self {
        let stem = stem.as_ref().as_os_str();
        let with = |suffix: &str| {
            let mut s = stem.to_os_string();
            s.push(suffix);
            PathBuf::from(s)
        };
        StemPaths {
            matrix: with(".matrix"),
            ld: with(".ld"),
            alpha: with(".alpha"),
        }
    }
}

/// Reads `stem.matrix` and `stem.ld`, validating that they pair up.
pub fn load_stem(
    stem: impl AsRef<Path>,
    n_gwas: f64,
    n_qtl: f64,
    scale: LdScale,
) -> Result<TwmrInput> {
    let paths = StemPaths::new(stem);
    let effects = parse_matrix_file(&paths.matrix)?;
    let ld = parse_ld_file(&paths.ld, &effects.snps, scale).map_err(|e| match e {
        Error::DimensionMismatch(detail) => Error::DimensionMismatch(format!(
            "{} lists {} SNPs but {} does not have {} rows and columns ({detail}); \
             the number of SNPs in the .matrix file must equal the dimension of the .ld file",
            paths.matrix.display(),
            effects.n_snps(),
            paths.ld.display(),
            effects.n_snps()
        )),
        other => other,
    })?;
    TwmrInput::new(effects, ld, n_gwas, n_qtl)
}

/// Reads `stem.matrix` and `stem.ld`, estimates, and writes `stem.alpha`.
///
/// Nothing is written unless estimation succeeds.
pub fn twmr_run_files(
    stem: impl AsRef<Path>,
    n_gwas: f64,
    n_qtl: f64,
    scale: LdScale,
) -> Result<TwmrFit> {
    let input = load_stem(&stem, n_gwas, n_qtl, scale)?;
    let fit = twmr_fit(&input)?;
    write_alpha_file(StemPaths::new(&stem).alpha, &fit.results)?;
    Ok(fit)
}

/// SNPs whose effects on every exposure are zero, i.e. rows that carry no
/// instrument strength for the multivariable fit.
pub fn irrelevant_snps(effects: &EffectMatrix) -> Vec<String> {
    (0..effects.n_snps())
        .filter(|&i| effects.beta.row(i).iter().all(|&b| b == 0.0))
        .map(|i| effects.snps[i].clone())
        .collect()
}

/// How Step 4 of instrument selection reads "eQTLs only for the selected genes".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExclusivityRule {
    /// The SNP's eQTL genes form a non-empty subset of the selected genes.
    #[default]
    Subset,
    /// The SNP is an eQTL for exactly one gene, which is selected.
    SingleGene,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionParams {
    /// Clumping thresholds; `clump.p1` also defines eQTL significance.
    pub clump: ClumpParams,
    pub exclusivity: ExclusivityRule,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            clump: ClumpParams::default(),
            exclusivity: ExclusivityRule::Subset,
        }
    }
}

/// Selection step that admitted a gene or SNP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SelectionStep {
    /// The chosen gene.
    Seed,
    /// Clumped significant eQTL of the seed gene.
    SeedEqtl,
    /// Gene for which a seed eQTL is also an eQTL.
    SharedEqtl,
    /// SNP that is an eQTL only for selected genes.
    ExclusiveEqtl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnpAudit {
    pub admitted: SelectionStep,
    /// Survived the final clumping.
    pub retained: bool,
}

/// SNP and gene sets for one TWMR locus, with an audit trail.
#[derive(Clone, Debug, PartialEq)]
pub struct TwmrSelection {
    pub seed_gene: String,
    pub genes: Vec<String>,
    pub snps: Vec<String>,
    pub gene_audit: BTreeMap<String, SelectionStep>,
    pub snp_audit: BTreeMap<String, SnpAudit>,
    /// Selected genes left without any eQTL among the final SNPs.
    pub dropped_genes: Vec<String>,
}

fn is_eqtl(table: &AssocTable, rsid: &str, threshold: f64) -> bool {
    table.get(rsid).is_some_and(|r| r.pvalue <= threshold)
}

/// Chooses SNPs and genes around `seed_gene`:
///
/// 1. take the seed gene;
/// 2. clump its significant eQTLs;
/// 3. add every gene for which one of those SNPs is an eQTL;
/// 4. add every SNP that is an eQTL only for genes from step 3;
/// 5. clump the step-4 SNPs to an independent set.
pub fn select_instruments_twmr(
    seed_gene: &str,
    eqtl: &BTreeMap<String, AssocTable>,
    ld: &LdMatrix,
    params: &SelectionParams,
) -> Result<TwmrSelection> {
    let threshold = params.clump.p1;
    let seed_table = eqtl
        .get(seed_gene)
        .ok_or_else(|| Error::NoSignificantEqtls {
            gene: seed_gene.to_string(),
        })?;

    // Step 2
    let step2 = index_snps(&clump(seed_table, ld, &params.clump)?);
    if step2.is_empty() {
        return Err(Error::NoSignificantEqtls {
            gene: seed_gene.to_string(),
        });
    }

    // Step 3
    let mut gene_audit = BTreeMap::from([(seed_gene.to_string(), SelectionStep::Seed)]);
    for (gene, table) in eqtl {
        if gene != seed_gene && step2.iter().any(|s| is_eqtl(table, s, threshold)) {
            gene_audit.insert(gene.clone(), SelectionStep::SharedEqtl);
        }
    }
    let mut genes: Vec<String> = vec![seed_gene.to_string()];
    genes.extend(gene_audit.keys().filter(|g| *g != seed_gene).cloned());

    // Step 4
    let universe: BTreeSet<&str> = eqtl
        .values()
        .flat_map(|t| t.records().iter())
        .filter(|r| r.pvalue <= threshold)
        .map(|r| r.rsid.as_str())
        .collect();
    let mut snp_audit: BTreeMap<String, SnpAudit> = step2
        .iter()
        .map(|s| {
            (
                s.clone(),
                SnpAudit {
                    admitted: SelectionStep::SeedEqtl,
                    retained: false,
                },
            )
        })
        .collect();
    for &rsid in &universe {
        if snp_audit.contains_key(rsid) {
            continue;
        }
        let hits: Vec<&String> = eqtl
            .iter()
            .filter(|(_, t)| is_eqtl(t, rsid, threshold))
            .map(|(g, _)| g)
            .collect();
        let inside = hits.iter().all(|g| gene_audit.contains_key(*g));
        let admit = match params.exclusivity {
            ExclusivityRule::Subset => !hits.is_empty() && inside,
            ExclusivityRule::SingleGene => hits.len() == 1 && inside,
        };
        if admit {
            snp_audit.insert(
                rsid.to_string(),
                SnpAudit {
                    admitted: SelectionStep::ExclusiveEqtl,
                    retained: false,
                },
            );
        }
    }

    // Step 5: clump on each SNP's strongest association among selected genes.
    let mut pooled: Vec<SnpRecord> = Vec::with_capacity(snp_audit.len());
    for rsid in snp_audit.keys() {
        let best = genes
            .iter()
            .filter_map(|g| eqtl[g].get(rsid))
            .min_by(|a, b| a.pvalue.total_cmp(&b.pvalue))
            .expect("admitted SNPs are eQTLs of a selected gene");
        pooled.push(best.clone());
    }
    let pooled = AssocTable::new(seed_gene, seed_table.trait_kind, pooled)?;
    let final_snps = index_snps(&clump(&pooled, ld, &params.clump)?);
    for s in &final_snps {
        snp_audit
            .get_mut(s)
            .expect("clumped from audit set")
            .retained = true;
    }

    let (kept, dropped): (Vec<String>, Vec<String>) = genes
        .into_iter()
        .partition(|g| final_snps.iter().any(|s| is_eqtl(&eqtl[g], s, threshold)));
    Ok(TwmrSelection {
        seed_gene: seed_gene.to_string(),
        genes: kept,
        snps: final_snps,
        gene_audit,
        snp_audit,
        dropped_genes: dropped,
    })
}

/// Assembles the effect matrix for a selection, with every effect aligned
/// to the outcome study's effect allele.
///
/// Entries where the SNP is not a significant eQTL for the gene are zero.
/// SNPs absent from the outcome, or that cannot be aligned for a gene they
/// affect, are dropped.
pub fn build_effect_matrix(
    selection: &TwmrSelection,
    eqtl: &BTreeMap<String, AssocTable>,
    outcome: &AssocTable,
    threshold: f64,
    policy: PalindromePolicy,
) -> Result<EffectMatrix> {
    let mut rows: Vec<(String, Vec<f64>, f64)> = Vec::new();
    'snp: for rsid in &selection.snps {
        let Some(out) = outcome.get(rsid) else {
            continue;
        };
        let reference = AssocTable::new("outcome", outcome.trait_kind, vec![out.clone()])?;
        let mut betas = Vec::with_capacity(selection.genes.len());
        for gene in &selection.genes {
            let table = &eqtl[gene];
            match table.get(rsid) {
                Some(r) if r.pvalue <= threshold => {
                    let single = AssocTable::new(gene.clone(), table.trait_kind, vec![r.clone()])?;
                    let pair = harmonize(&reference, &single, policy)?.remove(0);
                    if !pair.is_usable() {
                        continue 'snp;
                    }
                    betas.push(pair.beta_outcome);
                }
                _ => betas.push(0.0),
            }
        }
        rows.push((rsid.clone(), betas, out.beta));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInstrumentSet);
    }
    let k = selection.genes.len();
    let beta = DMatrix::from_fn(rows.len(), k, |i, j| rows[i].1[j]);
    let gamma = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2));
    EffectMatrix::new(
        rows.into_iter().map(|r| r.0).collect(),
        selection.genes.clone(),
        beta,
        gamma,
    )
}
