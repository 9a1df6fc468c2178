//! Mendelian randomization for multi-omics summary statistics.
//!
//! The crate covers four workflows: univariable two-sample MR
//! ([`uni_mr`]), multivariable transcriptome-wide MR over an eQTL effect
//! matrix with LD ([`twmr`]), Bayesian model averaging over correlated
//! exposures ([`mrbma`]), and the proteomics / two-step epigenetic
//! mediation pipelines ([`pipelines`]). Instrument selection lives in
//! [`ld`] (clumping) and [`pipelines`] (pQTL filters), data ingestion in
//! [`sumstats`], and [`simgen`] produces synthetic data with known truth.

pub mod error;
pub mod ld;
pub mod mrbma;
pub mod pipelines;
pub mod simgen;
pub mod stats;
pub mod sumstats;
pub mod twmr;
pub mod uni_mr;

pub use error::{Error, ErrorClass, Result};
pub use ld::{clump, Clump, ClumpParams, LdMatrix, LdScale};
pub use mrbma::{search, weight_input, BmaInput, BmaParams, BmaReport, ModelScore};
pub use pipelines::{
    classify_cis_trans, direction_consistency, mhc_filter, pleiotropy_filter, protein_mr,
    two_step_mediation, Annotation, GeneAnnotation, InstrumentMode, InstrumentSet, MediationResult,
    PathwayGroups,
};
pub use simgen::{generate, SimData, SimSpec};
pub use sumstats::{
    harmonize, AssocTable, ColumnMap, EffectMatrix, HarmonizeAction, HarmonizedPair, Locus,
    PalindromePolicy, SnpRecord, TraitKind,
};
pub use twmr::{
    select_instruments_twmr, twmr_estimate, twmr_fit, twmr_run_files, TwmrInput, TwmrResult,
};
pub use uni_mr::{egger, ivw, wald_ratio, weighted_median, MrEstimate, MrMethod};
