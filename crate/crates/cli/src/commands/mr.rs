use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use xmr_core::simgen::replicate_rng;
use xmr_core::sumstats::{parse_assoc_groups, parse_assoc_table, usable_pairs, ColumnMap};
use xmr_core::uni_mr::{MethodChoice, DEFAULT_BOOTSTRAP};
use xmr_core::{
    egger, harmonize, ivw, wald_ratio, weighted_median, AssocTable, Error, MrEstimate, TraitKind,
};

use crate::config::ConfigError;
use crate::output::{emit, meta_lines, PalindromeArg};
use crate::Context;

#[derive(Args, Debug)]
pub struct MrArgs {
    /// Print the selectable methods and exit.
    #[arg(long)]
    list_methods: bool,
    /// Exposure summary statistics.
    #[arg(long, required_unless_present = "list_methods")]
    exposure: Option<PathBuf>,
    /// Column naming the exposure, for files holding several exposures.
    #[arg(long)]
    exposure_column: Option<String>,
    /// Outcome summary statistics.
    #[arg(long, required_unless_present = "list_methods")]
    outcome: Option<PathBuf>,
    /// Comma-separated methods (see --list-methods). Defaults to all.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Exposure SNPs with p at or below this are instruments.
    #[arg(long, default_value_t = 5e-8)]
    instrument_p: f64,
    #[arg(long, value_enum, default_value = "infer")]
    palindromes: PalindromeArg,
    /// Bootstrap draws for the weighted median SE.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn list_methods() -> String {
    let mut s = String::from("method\tdescription\n");
    for m in MethodChoice::ALL {
        s.push_str(&format!("{}\t{}\n", m.name(), m.description()));
    }
    s
}

fn estimate(
    exposure: &AssocTable,
    outcome: &AssocTable,
    methods: &[MethodChoice],
    args: &MrArgs,
    seed: u64,
    index: usize,
) -> xmr_core::Result<Vec<MrEstimate>> {
    let instruments = exposure.filtered(|r| r.pvalue <= args.instrument_p);
    if instruments.is_empty() {
        return Err(Error::EmptyInstrumentSet);
    }
    let pairs = usable_pairs(&harmonize(&instruments, outcome, args.palindromes.into())?);
    let n = pairs.len();
    let mut rng = replicate_rng(seed, index as u64);
    let mut rows = Vec::new();
    for &m in methods {
        if n < m.min_instruments() || (m == MethodChoice::WaldRatio && n != 1) {
            log::warn!(
                "{}: {} skipped with {n} instrument(s)",
                exposure.trait_name,
                m.name()
            );
            continue;
        }
        match m {
            MethodChoice::WaldRatio => rows.push(wald_ratio(&pairs[0])?),
            MethodChoice::Ivw => rows.push(ivw(&pairs)?),
            MethodChoice::Egger => {
                let fit = egger(&pairs)?;
                rows.push(fit.slope);
                rows.push(fit.intercept);
            }
            MethodChoice::WeightedMedian => {
                rows.push(weighted_median(&pairs, args.bootstrap, &mut rng)?)
            }
        }
    }
    Ok(rows)
}

pub fn run(ctx: &Context, args: MrArgs) -> anyhow::Result<()> {
    if args.list_methods {
        return emit(None, list_methods().as_bytes());
    }
    let methods: Vec<MethodChoice> = if args.methods.is_empty() {
        MethodChoice::ALL.to_vec()
    } else {
        args.methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, Error>>()?
    };
    if !(args.instrument_p > 0.0 && args.instrument_p <= 1.0) {
        return Err(ConfigError("--instrument-p must lie in (0, 1]".into()).into());
    }
    if args.bootstrap < 2 {
        return Err(ConfigError("--bootstrap must be at least 2".into()).into());
    }
    let columns = ColumnMap::default();
    let (exposure_path, outcome_path) = (
        args.exposure.as_ref().unwrap(),
        args.outcome.as_ref().unwrap(),
    );
    let exposures: BTreeMap<String, AssocTable> = match &args.exposure_column {
        Some(col) => parse_assoc_groups(exposure_path, col, TraitKind::Exposure, &columns)?,
        None => {
            let t = parse_assoc_table(exposure_path, "exposure", TraitKind::Exposure, &columns)?;
            BTreeMap::from([("exposure".to_string(), t)])
        }
    };
    let outcome = parse_assoc_table(outcome_path, "outcome", TraitKind::GwasOutcome, &columns)?;
    let tables: Vec<&AssocTable> = exposures.values().collect();
    let results = ctx.par_map(&tables, |i, t| {
        estimate(t, &outcome, &methods, &args, ctx.seed, i)
    });

    let mut body = meta_lines(ctx, &[]);
    body.push_str("exposure\toutcome\tmethod\testimate\tse\tp\tn_snps\n");
    let mut first_err = None;
    for (t, res) in tables.iter().zip(results) {
        match res {
            Ok(rows) => {
                for e in rows {
                    body.push_str(&format!(
                        "{}\toutcome\t{}\t{}\t{}\t{}\t{}\n",
                        t.trait_name, e.method, e.estimate, e.se, e.pvalue, e.n_snps
                    ));
                }
            }
            Err(e) if tables.len() > 1 => log::warn!("{}: {e}", t.trait_name),
            Err(e) => first_err = Some(e),
        }
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }
    emit(args.out.as_deref(), body.as_bytes())
}
