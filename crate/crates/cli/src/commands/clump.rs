use std::path::PathBuf;

use clap::Args;
use xmr_core::ld::parse_ld_file;
use xmr_core::sumstats::{parse_assoc_table, ColumnMap};
use xmr_core::{clump, ClumpParams, TraitKind};

use crate::output::{emit, meta_lines, read_snp_list, LdScaleArg};
use crate::Context;

#[derive(Args, Debug)]
pub struct ClumpArgs {
    /// Summary statistics to clump.
    #[arg(long)]
    assoc: PathBuf,
    /// LD matrix.
    #[arg(long)]
    ld: PathBuf,
    /// SNP ids labelling the LD rows; defaults to the order of --assoc.
    #[arg(long)]
    ld_snps: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "r")]
    ld_scale: LdScaleArg,
    /// Index SNP threshold.
    #[arg(long, default_value_t = 5e-8)]
    p1: f64,
    /// Clumped SNP threshold.
    #[arg(long, default_value_t = 5e-8)]
    p2: f64,
    #[arg(long, default_value_t = 0.01)]
    r2: f64,
    /// Window half-width in kb.
    #[arg(long, default_value_t = 1000.0)]
    kb: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: ClumpArgs) -> anyhow::Result<()> {
    let params = ClumpParams {
        p1: args.p1,
        p2: args.p2,
        r2: args.r2,
        kb: args.kb,
    };
    params.validate()?;
    let assoc = parse_assoc_table(
        &args.assoc,
        "trait",
        TraitKind::Exposure,
        &ColumnMap::default(),
    )?;
    let snps = match &args.ld_snps {
        Some(p) => read_snp_list(p)?,
        None => assoc.records().iter().map(|r| r.rsid.clone()).collect(),
    };
    let ld = parse_ld_file(&args.ld, &snps, args.ld_scale.into())?;
    let clumps = clump(&assoc, &ld, &params)?;

    let mut body = meta_lines(ctx, &[]);
    body.push_str("index\tchrom\tpos\tp\tn_members\tmembers\n");
    for c in &clumps {
        let r = assoc.get(&c.index).expect("index from table");
        let members = if c.members.is_empty() {
            "-".to_string()
        } else {
            c.members.join(",")
        };
        body.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            c.index,
            r.chrom().unwrap_or("NA"),
            r.pos().map_or("NA".to_string(), |p| p.to_string()),
            r.pvalue,
            c.members.len(),
            members
        ));
    }
    emit(args.out.as_deref(), body.as_bytes())
}
