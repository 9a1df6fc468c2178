use std::path::PathBuf;

use clap::{Args, ValueEnum};
use xmr_core::ld::parse_ld_file;
use xmr_core::pipelines::{
    build_instrument_sets, parse_annotation, parse_groups, run_protein, write_pipeline_report,
    GroupRule, PqtlParams, WindowAnchor,
};
use xmr_core::simgen::replicate_rng;
use xmr_core::sumstats::{parse_assoc_groups, parse_assoc_table, ColumnMap};
use xmr_core::uni_mr::DEFAULT_BOOTSTRAP;
use xmr_core::{ClumpParams, PathwayGroups, TraitKind};

use crate::output::{emit, meta_lines, read_snp_list, LdScaleArg, PalindromeArg};
use crate::Context;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GroupRuleArg {
    All,
    Majority,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AnchorArg {
    /// Transcription start site of the encoding gene.
    Tss,
    /// Most significant pQTL on the encoding gene's chromosome.
    Lead,
}

#[derive(Args, Debug)]
pub struct PqtlArgs {
    /// Long-format pQTL summary statistics for all proteins.
    #[arg(long)]
    pqtl: PathBuf,
    /// Column of --pqtl naming the protein.
    #[arg(long, default_value = "PROTEIN")]
    protein_column: String,
    /// Outcome GWAS summary statistics.
    #[arg(long)]
    outcome: PathBuf,
    /// gene, chrom, tss, protein table.
    #[arg(long)]
    annotation: PathBuf,
    /// Pathway / interaction groups: name<TAB>protein1,protein2,...
    #[arg(long)]
    groups: Option<PathBuf>,
    /// LD matrix for clumping; SNPs are treated as independent without it.
    #[arg(long, requires = "ld_snps")]
    ld: Option<PathBuf>,
    #[arg(long, requires = "ld")]
    ld_snps: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "r")]
    ld_scale: LdScaleArg,
    #[arg(long, default_value_t = 0.05)]
    bonferroni_alpha: f64,
    /// Bonferroni denominator; defaults to the number of SNP-protein pairs.
    #[arg(long)]
    bonferroni_tests: Option<usize>,
    /// Keep SNPs in the MHC region.
    #[arg(long)]
    keep_mhc: bool,
    #[arg(long, value_enum, default_value = "all")]
    group_rule: GroupRuleArg,
    #[arg(long, value_enum, default_value = "tss")]
    anchor: AnchorArg,
    /// Cis window half-width in kb.
    #[arg(long, default_value_t = 500)]
    window_kb: u64,
    #[arg(long, default_value_t = 0.01)]
    clump_r2: f64,
    #[arg(long, default_value_t = 1000.0)]
    clump_kb: f64,
    #[arg(long, value_enum, default_value = "infer")]
    palindromes: PalindromeArg,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    /// MR report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-instrument table (protein, SNP, cis/trans label, pleiotropy decision).
    #[arg(long)]
    instruments_out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: PqtlArgs) -> anyhow::Result<()> {
    let params = PqtlParams {
        bonferroni_alpha: args.bonferroni_alpha,
        bonferroni_tests: args.bonferroni_tests,
        exclude_mhc: !args.keep_mhc,
        group_rule: match args.group_rule {
            GroupRuleArg::All => GroupRule::All,
            GroupRuleArg::Majority => GroupRule::Majority,
        },
        clump: ClumpParams {
            p1: 1.0,
            p2: 1.0,
            r2: args.clump_r2,
            kb: args.clump_kb,
        },
        window_bp: args.window_kb * 1000,
        anchor: match args.anchor {
            AnchorArg::Tss => WindowAnchor::Tss,
            AnchorArg::Lead => WindowAnchor::LeadPqtl,
        },
        policy: args.palindromes.into(),
        n_boot: args.bootstrap,
    };
    params.validate()?;
    if params.n_boot < 2 {
        return Err(crate::config::ConfigError("--bootstrap must be at least 2".into()).into());
    }
    let columns = ColumnMap::default();
    let panel = parse_assoc_groups(&args.pqtl, &args.protein_column, TraitKind::Pqtl, &columns)?;
    let outcome = parse_assoc_table(&args.outcome, "outcome", TraitKind::GwasOutcome, &columns)?;
    let ann = parse_annotation(&args.annotation)?;
    let groups = match &args.groups {
        Some(p) => parse_groups(p)?,
        None => PathwayGroups::default(),
    };
    let ld = match (&args.ld, &args.ld_snps) {
        (Some(l), Some(s)) => Some(parse_ld_file(l, &read_snp_list(s)?, args.ld_scale.into())?),
        _ => None,
    };
    let (sets, audit) = build_instrument_sets(&panel, &ann, &groups, ld.as_ref(), &params)?;

    let reports = ctx.par_map(&sets, |i, set| {
        let mut rng = replicate_rng(ctx.seed, i as u64);
        run_protein(set, &outcome, &params, &mut rng)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        for (mode, reason) in &r.skipped {
            log::info!("{} {mode}: {reason}", r.protein);
        }
    }

    let meta = meta_lines(
        ctx,
        &[
            (
                "bonferroni_threshold",
                audit.bonferroni_threshold.to_string(),
            ),
            ("mhc_excluded", audit.mhc_excluded.len().to_string()),
            (
                "pleiotropy_excluded",
                audit
                    .pleiotropy
                    .iter()
                    .filter(|a| !a.decision.retained())
                    .count()
                    .to_string(),
            ),
        ],
    );
    let mut body = meta.clone().into_bytes();
    write_pipeline_report(&mut body, &reports)?;

    if let Some(path) = &args.instruments_out {
        let mut s = meta;
        s.push_str("protein\tsnp\tchrom\tpos\tlabel\tpleiotropy\n");
        for set in &sets {
            for i in &set.instruments {
                s.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    set.protein,
                    i.record.rsid,
                    i.record.chrom().unwrap_or("NA"),
                    i.record.pos().map_or("NA".to_string(), |p| p.to_string()),
                    i.label.as_str(),
                    i.pleiotropy
                ));
            }
        }
        for (protein, snp) in &audit.mhc_excluded {
            s.push_str(&format!("{protein}\t{snp}\tNA\tNA\tNA\texcluded:mhc\n"));
        }
        emit(Some(path), s.as_bytes())?;
    }
    emit(args.out.as_deref(), &body)
}
