use std::path::PathBuf;

use clap::Args;
use xmr_core::mrbma::{
    parse_bma_combined, parse_bma_pair, write_mip_tsv, write_models_tsv, RECOMMENDED_MIN_ITER,
};
use xmr_core::{search, weight_input, BmaParams};

use crate::config::ConfigError;
use crate::output::{emit, meta_lines, with_suffix};
use crate::Context;

#[derive(Args, Debug)]
pub struct BmaArgs {
    /// One file: SNP, one column per exposure, then outcome beta and se.
    #[arg(long, conflicts_with_all = ["beta_x", "beta_y"])]
    input: Option<PathBuf>,
    /// SNP and one column per exposure.
    #[arg(long, requires = "beta_y")]
    beta_x: Option<PathBuf>,
    /// SNP, outcome beta, outcome se.
    #[arg(long, requires = "beta_x")]
    beta_y: Option<PathBuf>,
    #[arg(long, default_value = "outcome")]
    outcome_name: String,
    /// Smallest model size; equal to --kmax for exhaustive enumeration.
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long, default_value_t = 12)]
    kmax: usize,
    /// Prior inclusion probability per exposure.
    #[arg(long, default_value_t = 0.1)]
    prior_prob: f64,
    /// Prior SD of causal effects.
    #[arg(long, default_value_t = 0.5)]
    prior_sigma: f64,
    #[arg(long, default_value_t = RECOMMENDED_MIN_ITER)]
    max_iter: usize,
    /// Models listed in the models table.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Use raw effects instead of dividing by the outcome SE.
    #[arg(long)]
    unweighted: bool,
    /// Writes <prefix>.models.tsv and <prefix>.mip.tsv.
    #[arg(long)]
    out_prefix: PathBuf,
}

pub fn run(ctx: &Context, args: BmaArgs) -> anyhow::Result<()> {
    let params = BmaParams {
        kmin: args.kmin,
        kmax: args.kmax,
        prior_prob: args.prior_prob,
        prior_sigma: args.prior_sigma,
        max_iter: args.max_iter,
        seed: ctx.seed,
    };
    if args.top == 0 {
        return Err(ConfigError("--top must be at least 1".into()).into());
    }
    // Everything except the bound against the exposure count, which needs the input.
    params.validate(params.kmax)?;
    let warnings = params.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    let input = match (&args.input, &args.beta_x, &args.beta_y) {
        (Some(p), _, _) => parse_bma_combined(p, &args.outcome_name)?,
        (None, Some(x), Some(y)) => parse_bma_pair(x, y, &args.outcome_name)?,
        _ => return Err(ConfigError("give --input, or --beta-x with --beta-y".into()).into()),
    };
    params.validate(input.n_exposures())?;
    let design = weight_input(&input, !args.unweighted);
    let report = search(&design, &params)?;

    let mut extra = vec![
        ("mode", report.mode.as_str().to_string()),
        ("kmin", params.kmin.to_string()),
        ("kmax", params.kmax.to_string()),
        ("prior_prob", params.prior_prob.to_string()),
        ("prior_sigma", params.prior_sigma.to_string()),
        ("max_iter", params.max_iter.to_string()),
        (
            "prior_expected_size",
            params.expected_model_size(input.n_exposures()).to_string(),
        ),
        ("models_scored", report.n_scored.to_string()),
    ];
    extra.extend(warnings.iter().map(|w| ("warning", w.clone())));
    let meta = meta_lines(ctx, &extra);

    let mut models = meta.clone().into_bytes();
    write_models_tsv(&mut models, &report, args.top)?;
    let mut mip = meta.into_bytes();
    write_mip_tsv(&mut mip, &report)?;
    emit(Some(&with_suffix(&args.out_prefix, ".models.tsv")), &models)?;
    emit(Some(&with_suffix(&args.out_prefix, ".mip.tsv")), &mip)
}
