use std::path::PathBuf;

use clap::Args;
use xmr_core::simgen::{generate_replicate, write_sim};
use xmr_core::SimSpec;

use crate::output::{emit, meta_lines, with_suffix};
use crate::Context;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output stem; replicates beyond one get `.r<i>` appended.
    #[arg(long)]
    out_stem: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_snps: usize,
    /// Causal effects, one per exposure (comma-separated).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.3,-0.2,0.1",
        allow_hyphen_values = true
    )]
    alpha: Vec<f64>,
    /// AR(1) LD correlation between neighbouring SNPs.
    #[arg(long, default_value_t = 0.3)]
    ld_rho: f64,
    #[arg(long, default_value_t = 1e5)]
    n_gwas: f64,
    #[arg(long, default_value_t = 1e5)]
    n_qtl: f64,
    /// SD of direct SNP effects on the outcome.
    #[arg(long, default_value_t = 0.0)]
    pleiotropy_sd: f64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    /// Significant digits after the point in the .matrix file; shortest exact form when omitted.
    #[arg(long)]
    precision: Option<usize>,
}

pub fn run(ctx: &Context, args: SimulateArgs) -> anyhow::Result<()> {
    let spec = SimSpec {
        n_snps: args.n_snps,
        k_exposures: args.alpha.len(),
        true_alpha: args.alpha.clone(),
        ld_rho: args.ld_rho,
        n_gwas: args.n_gwas,
        n_qtl: args.n_qtl,
        pleiotropy_sd: args.pleiotropy_sd,
        seed: ctx.seed,
    };
    spec.validate()?;
    if args.replicates == 0 {
        return Err(crate::config::ConfigError("--replicates must be at least 1".into()).into());
    }
    let reps: Vec<u64> = (0..args.replicates).collect();
    let written = ctx.par_map(&reps, |_, &r| -> xmr_core::Result<PathBuf> {
        let stem = if args.replicates == 1 {
            args.out_stem.clone()
        } else {
            with_suffix(&args.out_stem, &format!(".r{r}"))
        };
        let data = generate_replicate(&spec, r)?;
        write_sim(&stem, &data, args.precision)?;
        Ok(stem)
    });
    let mut truth = meta_lines(ctx, &[("replicates", args.replicates.to_string())]);
    truth.push_str("gene\talpha\n");
    for (name, a) in spec.exposure_names().iter().zip(&spec.true_alpha) {
        truth.push_str(&format!("{name}\t{a}\n"));
    }
    for w in written {
        w?;
    }
    emit(
        Some(&with_suffix(&args.out_stem, ".truth.tsv")),
        truth.as_bytes(),
    )
}
