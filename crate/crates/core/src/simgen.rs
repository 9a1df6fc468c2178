//! Synthetic summary statistics with known causal effects.
//!
//! SNPs follow an AR(1) LD structure `C_ij = rho^|i-j|`. True exposure
//! effects are standard normal; observed exposure and outcome effects add
//! noise with covariance `C / n_qtl` and `C / n_gwas` respectively.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::ld::{write_ld_file, LdMatrix, LdScale};
use crate::stats::normal_p;
use crate::sumstats::{
    write_assoc_table, write_matrix_file, AssocTable, EffectMatrix, Locus, SnpRecord, TraitKind,
};

/// Spacing between simulated SNP positions.
pub const SNP_SPACING_BP: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub n_snps: usize,
    pub k_exposures: usize,
    pub true_alpha: Vec<f64>,
    pub ld_rho: f64,
    pub n_gwas: f64,
    pub n_qtl: f64,
    /// SD of direct SNP effects on the outcome.
    pub pleiotropy_sd: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_snps == 0 || self.k_exposures == 0 {
            return Err(Error::param(
                "n_snps",
                "need at least one SNP and one exposure",
            ));
        }
        if self.true_alpha.len() != self.k_exposures {
            return Err(Error::DimensionMismatch(format!(
                "true_alpha has {} entries for {} exposures",
                self.true_alpha.len(),
                self.k_exposures
            )));
        }
        if self.ld_rho.is_nan() || self.ld_rho.abs() >= 1.0 {
            return Err(Error::param("ld_rho", "must satisfy |rho| < 1"));
        }
        if !(self.n_gwas > 0.0 && self.n_qtl > 0.0) {
            return Err(Error::param("n_gwas", "sample sizes must be > 0"));
        }
        if self.pleiotropy_sd.is_nan() || self.pleiotropy_sd < 0.0 {
            return Err(Error::param("pleiotropy_sd", "must be >= 0"));
        }
        Ok(())
    }

    pub fn snp_names(&self) -> Vec<String> {
        (1..=self.n_snps).map(|i| format!("rs{i}")).collect()
    }

    pub fn exposure_names(&self) -> Vec<String> {
        (1..=self.k_exposures).map(|j| format!("gene{j}")).collect()
    }
}

/// `C_ij = rho^|i-j|`.
pub fn ar1_ld(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// A draw from `N(0, scale^2 C)` for the AR(1) matrix `C`, by the recursion
/// `x_i = rho x_{i-1} + sqrt(1 - rho^2) z_i`.
pub fn ar1_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, rho: f64, scale: f64) -> DVector<f64> {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut out = DVector::zeros(n);
    let mut prev = 0.0;
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        prev = if i == 0 {
            z
        } else {
            rho * prev + innovation * z
        };
        out[i] = scale * prev;
    }
    out
}

/// The fixed part of a simulation: true exposure and pleiotropic effects.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTruth {
    /// `n_snps x k` true SNP-exposure effects.
    pub exposure: DMatrix<f64>,
    pub pleiotropy: DVector<f64>,
    pub alpha: DVector<f64>,
}

impl SimTruth {
    /// Noise-free outcome effects `E alpha + pleiotropy`.
    pub fn outcome_mean(&self) -> DVector<f64> {
        &self.exposure * &self.alpha + &self.pleiotropy
    }
}

pub fn draw_truth<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<SimTruth> {
    spec.validate()?;
    let exposure = DMatrix::from_fn(spec.n_snps, spec.k_exposures, |_, _| {
        rng.sample(StandardNormal)
    });
    let pleiotropy = if spec.pleiotropy_sd > 0.0 {
        let d = Normal::new(0.0, spec.pleiotropy_sd)
            .map_err(|e| Error::param("pleiotropy_sd", e.to_string()))?;
        DVector::from_fn(spec.n_snps, |_, _| rng.sample(d))
    } else {
        DVector::zeros(spec.n_snps)
    };
    Ok(SimTruth {
        exposure,
        pleiotropy,
        alpha: DVector::from_column_slice(&spec.true_alpha),
    })
}

/// One simulated data set.
#[derive(Clone, Debug)]
pub struct SimData {
    pub effects: EffectMatrix,
    pub ld: LdMatrix,
    pub truth: SimTruth,
    /// One table per exposure, in exposure order.
    pub exposure_tables: Vec<AssocTable>,
    pub outcome_table: AssocTable,
}

fn table(
    name: &str,
    kind: TraitKind,
    snps: &[String],
    beta: impl Iterator<Item = f64>,
    n: f64,
) -> Result<AssocTable> {
    let se = 1.0 / n.sqrt();
    let records = snps
        .iter()
        .zip(beta)
        .enumerate()
        .map(|(i, (rsid, b))| {
            let locus = Locus::new("1", i as u64 * SNP_SPACING_BP + 1)?;
            SnpRecord::new(rsid, Some(locus), "A", "G", b, se, normal_p(b, se))?
                .with_n(n.round() as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    AssocTable::new(name, kind, records)
}

/// Adds sampling noise to `truth`.
pub fn observe<R: Rng + ?Sized>(spec: &SimSpec, truth: &SimTruth, rng: &mut R) -> Result<SimData> {
    spec.validate()?;
    let (n, k) = (spec.n_snps, spec.k_exposures);
    let mut observed = truth.exposure.clone();
    let qtl_scale = 1.0 / spec.n_qtl.sqrt();
    for j in 0..k {
        let noise = ar1_noise(rng, n, spec.ld_rho, qtl_scale);
        let mut col = observed.column_mut(j);
        col += noise;
    }
    let gamma = truth.outcome_mean() + ar1_noise(rng, n, spec.ld_rho, 1.0 / spec.n_gwas.sqrt());

    let snps = spec.snp_names();
    let exposures = spec.exposure_names();
    let ld = LdMatrix::new(snps.clone(), ar1_ld(n, spec.ld_rho), LdScale::SignedR)?;
    let exposure_tables = exposures
        .iter()
        .enumerate()
        .map(|(j, name)| {
            table(
                name,
                TraitKind::Exposure,
                &snps,
                observed.column(j).iter().copied(),
                spec.n_qtl,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome_table = table(
        "outcome",
        TraitKind::GwasOutcome,
        &snps,
        gamma.iter().copied(),
        spec.n_gwas,
    )?;
    let effects = EffectMatrix::new(snps, exposures, observed, gamma)?;
    Ok(SimData {
        effects,
        ld,
        truth: truth.clone(),
        exposure_tables,
        outcome_table,
    })
}

/// RNG for replicate `replicate` of a seeded run. Replicates use separate
/// ChaCha streams of the same seed.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Draws truth and observations for replicate `replicate`.
pub fn generate_replicate(spec: &SimSpec, replicate: u64) -> Result<SimData> {
    let mut rng = replicate_rng(spec.seed, replicate);
    let truth = draw_truth(spec, &mut rng)?;
    observe(spec, &truth, &mut rng)
}

pub fn generate(spec: &SimSpec) -> Result<SimData> {
    generate_replicate(spec, 0)
}

/// Files written by [`write_sim`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimFiles {
    pub matrix: PathBuf,
    pub ld: PathBuf,
    pub exposures: Vec<PathBuf>,
    pub outcome: PathBuf,
}

/// Writes `<stem>.matrix`, `<stem>.ld`, `<stem>.<exposure>.tsv` and
/// `<stem>.outcome.tsv`.
pub fn write_sim(
    stem: impl AsRef<Path>,
    data: &SimData,
    precision: Option<usize>,
) -> Result<SimFiles> {
    let stem = stem.as_ref().as_os_str().to_owned();
    let with = |suffix: &str| {
        let mut s = stem.clone();
        s.push(suffix);
        PathBuf::from(s)
    };
    let files = SimFiles {
        matrix: with(".matrix"),
        ld: with(".ld"),
        exposures: data
            .exposure_tables
            .iter()
            .map(|t| with(&format!(".{}.tsv", t.trait_name)))
            .collect(),
        outcome: with(".outcome.tsv"),
    };
    write_matrix_file(&files.matrix, &data.effects, precision)?;
    write_ld_file(&files.ld, &data.ld)?;
    for (t, p) in data.exposure_tables.iter().zip(&files.exposures) {
        write_assoc_table(p, t)?;
    }
    write_assoc_table(&files.outcome, &data.outcome_table)?;
    Ok(files)
}
