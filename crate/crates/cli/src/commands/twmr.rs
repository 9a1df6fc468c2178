use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use xmr_core::ld::{parse_ld_file, write_ld_file};
use xmr_core::sumstats::{parse_assoc_groups, parse_assoc_table, write_matrix_file, ColumnMap};
use xmr_core::twmr::{
    build_effect_matrix, twmr_fit, write_alpha, ExclusivityRule, SelectionParams, StemPaths,
};
use xmr_core::{
    select_instruments_twmr, twmr_run_files, ClumpParams, Error, ErrorClass, TraitKind, TwmrInput,
};

use crate::output::{emit, meta_lines, read_snp_list, with_suffix, LdScaleArg, PalindromeArg};
use crate::Context;

#[derive(Args, Debug)]
pub struct TwmrArgs {
    /// File stems; each needs <stem>.matrix and <stem>.ld and gets <stem>.alpha.
    #[arg(required = true)]
    stems: Vec<PathBuf>,
    /// Outcome GWAS sample size.
    #[arg(long)]
    n_gwas: f64,
    /// eQTL study sample size.
    #[arg(long)]
    n_qtl: f64,
    #[arg(long, value_enum, default_value = "r")]
    ld_scale: LdScaleArg,
}

fn check_sizes(n_gwas: f64, n_qtl: f64) -> anyhow::Result<()> {
    for (name, v) in [("n_gwas", n_gwas), ("n_qtl", n_qtl)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: name.into(),
                reason: "sample size must be > 0".into(),
            }
            .into());
        }
    }
    Ok(())
}

pub fn run(ctx: &Context, args: TwmrArgs) -> anyhow::Result<()> {
    check_sizes(args.n_gwas, args.n_qtl)?;
    let scale = args.ld_scale.into();
    let results = ctx.par_map(&args.stems, |_, stem| {
        twmr_run_files(stem, args.n_gwas, args.n_qtl, scale)
    });
    let mut first_err = None;
    for (stem, res) in args.stems.iter().zip(results) {
        match res {
            Ok(fit) => {
                let alpha = StemPaths::new(stem).alpha;
                let extra = [
                    ("ridge", fit.ridge.to_string()),
                    ("condition", fit.condition.to_string()),
                ];
                emit(
                    Some(&with_suffix(&alpha, ".meta")),
                    meta_lines(ctx, &extra).as_bytes(),
                )?;
                log::info!("{}: wrote {}", stem.display(), alpha.display());
            }
            Err(e) => {
                if args.stems.len() > 1 {
                    eprintln!("error: {}: {e}", stem.display());
                }
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExclusivityArg {
    /// A SNP's eQTL genes must all be selected.
    Subset,
    /// A SNP must be an eQTL of exactly one selected gene.
    Single,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Long-format eQTL summary statistics for all genes.
    #[arg(long)]
    eqtl: PathBuf,
    /// Column of --eqtl naming the gene.
    #[arg(long, default_value = "GENE")]
    gene_column: String,
    /// Outcome GWAS summary statistics.
    #[arg(long)]
    outcome: PathBuf,
    /// LD matrix over the SNPs in --ld-snps.
    #[arg(long)]
    ld: PathBuf,
    /// SNP ids labelling the LD rows, one per line.
    #[arg(long)]
    ld_snps: PathBuf,
    #[arg(long, value_enum, default_value = "r")]
    ld_scale: LdScaleArg,
    /// Seed genes (comma-separated). Defaults to every gene in the panel.
    #[arg(long, value_delimiter = ',')]
    genes: Vec<String>,
    /// eQTL significance and index threshold.
    #[arg(long, default_value_t = 5e-8)]
    p_eqtl: f64,
    #[arg(long, default_value_t = 0.01)]
    clump_r2: f64,
    #[arg(long, default_value_t = 1000.0)]
    clump_kb: f64,
    #[arg(long, value_enum, default_value = "subset")]
    exclusivity: ExclusivityArg,
    #[arg(long, value_enum, default_value = "infer")]
    palindromes: PalindromeArg,
    /// Directory receiving <gene>.matrix, <gene>.ld and the selection audit.
    #[arg(long)]
    out_dir: PathBuf,
    /// With --n-qtl, also estimate and write <gene>.alpha.
    #[arg(long, requires = "n_qtl")]
    n_gwas: Option<f64>,
    #[arg(long, requires = "n_gwas")]
    n_qtl: Option<f64>,
}

enum Selected {
    Written {
        n_snps: usize,
        n_genes: usize,
        dropped: Vec<String>,
    },
    Skipped(String),
}

/// Audit bytes, outcome, and the gene's TWMR inputs when it was kept.
type GeneSelection = (
    Vec<u8>,
    Selected,
    Option<(xmr_core::EffectMatrix, xmr_core::LdMatrix)>,
);

fn select_one(
    gene: &str,
    args: &SelectArgs,
    eqtl: &BTreeMap<String, xmr_core::AssocTable>,
    outcome: &xmr_core::AssocTable,
    ld: &xmr_core::LdMatrix,
    params: &SelectionParams,
) -> xmr_core::Result<GeneSelection> {
    let selection = match select_instruments_twmr(gene, eqtl, ld, params) {
        Ok(s) => s,
        Err(e) if e.class() == ErrorClass::InsufficientInstruments => {
            return Ok((Vec::new(), Selected::Skipped(e.to_string()), None))
        }
        Err(e) => return Err(e),
    };
    let mut audit = String::from("kind\tid\tstep\tretained\n");
    for (g, step) in &selection.gene_audit {
        let kept = selection.genes.contains(g);
        audit.push_str(&format!("gene\t{g}\t{step:?}\t{kept}\n"));
    }
    for (s, a) in &selection.snp_audit {
        audit.push_str(&format!("snp\t{s}\t{:?}\t{}\n", a.admitted, a.retained));
    }
    let effects = match build_effect_matrix(
        &selection,
        eqtl,
        outcome,
        params.clump.p1,
        args.palindromes.into(),
    ) {
        Ok(m) => m,
        Err(e) if e.class() == ErrorClass::InsufficientInstruments => {
            return Ok((audit.into_bytes(), Selected::Skipped(e.to_string()), None))
        }
        Err(e) => return Err(e),
    };
    let sub_ld = ld.subset(&effects.snps)?;
    let status = Selected::Written {
        n_snps: effects.n_snps(),
        n_genes: effects.n_traits(),
        dropped: selection.dropped_genes.clone(),
    };
    Ok((audit.into_bytes(), status, Some((effects, sub_ld))))
}

fn file_in(dir: &Path, gene: &str, ext: &str) -> PathBuf {
    dir.join(format!("{gene}{ext}"))
}

pub fn run_select(ctx: &Context, args: SelectArgs) -> anyhow::Result<()> {
    let clump = ClumpParams {
        p1: args.p_eqtl,
        p2: args.p_eqtl,
        r2: args.clump_r2,
        kb: args.clump_kb,
    };
    clump.validate()?;
    if let (Some(g), Some(q)) = (args.n_gwas, args.n_qtl) {
        check_sizes(g, q)?;
    }
    let params = SelectionParams {
        clump,
        exclusivity: match args.exclusivity {
            ExclusivityArg::Subset => ExclusivityRule::Subset,
            ExclusivityArg::Single => ExclusivityRule::SingleGene,
        },
    };
    let columns = ColumnMap::default();
    let eqtl = parse_assoc_groups(&args.eqtl, &args.gene_column, TraitKind::Eqtl, &columns)?;
    let outcome = parse_assoc_table(&args.outcome, "outcome", TraitKind::GwasOutcome, &columns)?;
    let snps = read_snp_list(&args.ld_snps)?;
    let ld = parse_ld_file(&args.ld, &snps, args.ld_scale.into())?;
    let genes: Vec<String> = if args.genes.is_empty() {
        eqtl.keys().cloned().collect()
    } else {
        args.genes.clone()
    };

    let results = ctx.par_map(&genes, |_, gene| {
        select_one(gene, &args, &eqtl, &outcome, &ld, &params).and_then(|(audit, status, data)| {
            let alpha = match (&data, args.n_gwas, args.n_qtl) {
                (Some((m, l)), Some(g), Some(q)) => {
                    let fit = twmr_fit(&TwmrInput::new(m.clone(), l.clone(), g, q)?)?;
                    let mut buf = Vec::new();
                    write_alpha(&mut buf, &fit.results).expect("in-memory write");
                    Some(buf)
                }
                _ => None,
            };
            Ok((audit, status, data, alpha))
        })
    });

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let mut summary = meta_lines(ctx, &[]);
    summary.push_str("gene\tstatus\tn_snps\tn_genes\tdropped_genes\n");
    for (gene, res) in genes.iter().zip(results) {
        let (audit, status, data, alpha) = res?;
        if !audit.is_empty() {
            emit(
                Some(&file_in(&args.out_dir, gene, ".selection.tsv")),
                &audit,
            )?;
        }
        if let Some((m, l)) = &data {
            write_matrix_file(file_in(&args.out_dir, gene, ".matrix"), m, None)?;
            write_ld_file(file_in(&args.out_dir, gene, ".ld"), l)?;
        }
        if let Some(a) = alpha {
            emit(Some(&file_in(&args.out_dir, gene, ".alpha")), &a)?;
        }
        match status {
            Selected::Written {
                n_snps,
                n_genes,
                dropped,
            } => {
                let dropped = if dropped.is_empty() {
                    "-".to_string()
                } else {
                    dropped.join(",")
                };
                summary.push_str(&format!(
                    "{gene}\tselected\t{n_snps}\t{n_genes}\t{dropped}\n"
                ));
            }
            Selected::Skipped(reason) => {
                log::warn!("{gene}: {reason}");
                summary.push_str(&format!("{gene}\tskipped\t0\t0\t-\n"));
            }
        }
    }
    emit(
        Some(&args.out_dir.join("selection_summary.tsv")),
        summary.as_bytes(),
    )
}
