use std::path::PathBuf;

use clap::Args;
use xmr_core::pipelines::{mediation_alpha, mediation_inputs, write_mediation_report};
use xmr_core::sumstats::{parse_assoc_groups, parse_assoc_table, ColumnMap};
use xmr_core::{two_step_mediation, AssocTable, Error, ErrorClass, TraitKind};

use crate::config::ConfigError;
use crate::output::{emit, meta_lines, PalindromeArg};
use crate::Context;

#[derive(Args, Debug)]
pub struct MediateArgs {
    /// Exposure summary statistics.
    #[arg(long)]
    exposure: PathBuf,
    #[arg(long, default_value = "exposure")]
    exposure_name: String,
    /// Long-format mQTL / methylation summary statistics for all CpG sites.
    #[arg(long)]
    methylation: PathBuf,
    /// Column of --methylation naming the CpG site.
    #[arg(long, default_value = "CPG")]
    cpg_column: String,
    /// Outcome summary statistics.
    #[arg(long)]
    outcome: PathBuf,
    #[arg(long, default_value = "outcome")]
    outcome_name: String,
    /// Joint-significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Divide --alpha by the number of CpG sites tested.
    #[arg(long)]
    bonferroni: bool,
    /// Instrument threshold in each step's exposure.
    #[arg(long, default_value_t = 5e-8)]
    instrument_p: f64,
    #[arg(long, value_enum, default_value = "infer")]
    palindromes: PalindromeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: MediateArgs) -> anyhow::Result<()> {
    if !(args.alpha > 0.0 && args.alpha <= 1.0) {
        return Err(ConfigError("--alpha must lie in (0, 1]".into()).into());
    }
    if !(args.instrument_p > 0.0 && args.instrument_p <= 1.0) {
        return Err(ConfigError("--instrument-p must lie in (0, 1]".into()).into());
    }
    let columns = ColumnMap::default();
    let exposure = parse_assoc_table(
        &args.exposure,
        &args.exposure_name,
        TraitKind::Exposure,
        &columns,
    )?;
    let sites = parse_assoc_groups(
        &args.methylation,
        &args.cpg_column,
        TraitKind::Methylation,
        &columns,
    )?;
    let outcome = parse_assoc_table(
        &args.outcome,
        &args.outcome_name,
        TraitKind::GwasOutcome,
        &columns,
    )?;
    let alpha = mediation_alpha(args.alpha, sites.len(), args.bonferroni);

    let tables: Vec<(&String, &AssocTable)> = sites.iter().collect();
    let results = ctx.par_map(&tables, |_, (cpg, table)| {
        let (s1, s2) = mediation_inputs(
            &exposure,
            table,
            &outcome,
            args.instrument_p,
            args.palindromes.into(),
        )?;
        two_step_mediation(
            &args.exposure_name,
            cpg,
            &args.outcome_name,
            &s1,
            &s2,
            alpha,
        )
    });
    let mut rows = Vec::new();
    for ((cpg, _), res) in tables.iter().zip(results) {
        match res {
            Ok(r) => {
                if r.instruments_overlap() {
                    log::warn!(
                        "{cpg}: instruments shared by both steps: {}",
                        r.shared_instruments.join(",")
                    );
                }
                rows.push(r);
            }
            Err(e)
                if e.class() == ErrorClass::InsufficientInstruments
                    || matches!(e, Error::NoOverlap) =>
            {
                log::warn!("{cpg}: skipped: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut body = meta_lines(ctx, &[("alpha_per_site", alpha.to_string())]).into_bytes();
    write_mediation_report(&mut body, &rows)?;
    emit(args.out.as_deref(), &body)
}
