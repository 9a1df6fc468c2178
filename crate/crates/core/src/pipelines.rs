//! Proteomics and epigenetic mediation workflows built on the univariable
//! estimators.
//!
//! The pQTL workflow keeps Bonferroni-significant associations, drops the
//! MHC region and horizontally pleiotropic SNPs, clumps per protein, labels
//! each instrument cis or trans, and runs MR per protein for cis-only,
//! cis + trans and trans-only instrument sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ld::{clump, ClumpParams, LdMatrix};
use crate::sumstats::{
    harmonize, normalize_chrom, AssocTable, HarmonizedPair, PalindromePolicy, SnpRecord,
};
use crate::uni_mr::{egger, primary_estimate, weighted_median, MrEstimate, DEFAULT_BOOTSTRAP};

/// Half-width of the cis window around the anchor.
pub const CIS_WINDOW_BP: u64 = 500_000;
pub const MHC_CHROM: &str = "6";
pub const MHC_START: u64 = 26_000_000;
pub const MHC_END: u64 = 34_000_000;
/// SNPs associated with this many proteins or more are pleiotropy suspects.
pub const PLEIOTROPY_PROTEIN_LIMIT: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneAnnotation {
    pub gene: String,
    pub chrom: String,
    pub tss: u64,
    pub protein: String,
}

impl GeneAnnotation {
    pub fn new(gene: &str, chrom: &str, tss: u64, protein: &str) -> Result<Self> {
        if tss == 0 {
            return Err(Error::param("tss", "positions are 1-based"));
        }
        let chrom = normalize_chrom(chrom)
            .ok_or_else(|| Error::param("chrom", format!("unknown chromosome {chrom:?}")))?;
        Ok(GeneAnnotation {
            gene: gene.to_string(),
            chrom,
            tss,
            protein: protein.to_string(),
        })
    }
}

/// Gene annotations keyed by encoded protein.
#[derive(Clone, Debug, Default)]
pub struct Annotation {
    by_protein: BTreeMap<String, GeneAnnotation>,
}

impl Annotation {
    pub fn new(entries: impl IntoIterator<Item = GeneAnnotation>) -> Self {
        Annotation {
            by_protein: entries
                .into_iter()
                .map(|a| (a.protein.clone(), a))
                .collect(),
        }
    }

    pub fn get(&self, protein: &str) -> Result<&GeneAnnotation> {
        self.by_protein
            .get(protein)
            .ok_or_else(|| Error::UnknownProtein {
                protein: protein.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.by_protein.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_protein.is_empty()
    }
}

/// Reads `gene chrom tss protein` rows. A header line is optional.
pub fn parse_annotation(path: impl AsRef<Path>) -> Result<Annotation> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let tok: Vec<&str> = t.split('\t').map(str::trim).collect();
        if tok.len() != 4 {
            return Err(Error::RowWidthMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                expected: 4,
                found: tok.len(),
            });
        }
        if entries.is_empty() && tok[2].eq_ignore_ascii_case("tss") {
            continue;
        }
        let tss: u64 = tok[2].parse().map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("tss {:?} is not a position", tok[2]),
        })?;
        let ann =
            GeneAnnotation::new(tok[0], tok[1], tss, tok[3]).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        entries.push(ann);
    }
    Ok(Annotation::new(entries))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CisTrans {
    Cis,
    Trans,
}

impl CisTrans {
    pub fn as_str(self) -> &'static str {
        match self {
            CisTrans::Cis => "cis",
            CisTrans::Trans => "trans",
        }
    }
}

/// Cis when on `chrom` within `window` bp of `anchor` (boundary included).
pub fn classify_at(snp: &SnpRecord, chrom: &str, anchor: u64, window: u64) -> CisTrans {
    match &snp.locus {
        Some(l) if l.chrom == chrom && l.pos.abs_diff(anchor) <= window => CisTrans::Cis,
        _ => CisTrans::Trans,
    }
}

/// Cis / trans label relative to the TSS of the gene encoding `protein`.
pub fn classify_cis_trans(snp: &SnpRecord, protein: &str, ann: &Annotation) -> Result<CisTrans> {
    let gene = ann.get(protein)?;
    Ok(classify_at(snp, &gene.chrom, gene.tss, CIS_WINDOW_BP))
}

pub fn in_mhc(snp: &SnpRecord) -> bool {
    match &snp.locus {
        Some(l) => l.chrom == MHC_CHROM && (MHC_START..=MHC_END).contains(&l.pos),
        None => false,
    }
}

/// Drops SNPs inside chr6:26,000,000-34,000,000 (inclusive).
pub fn mhc_filter(snps: &[SnpRecord]) -> Vec<SnpRecord> {
    snps.iter().filter(|s| !in_mhc(s)).cloned().collect()
}

pub fn bonferroni_threshold(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}

/// Keeps associations with `p <= alpha / m`, where `m` defaults to the
/// total number of SNP-protein pairs in the panel.
pub fn bonferroni_select(
    panel: &BTreeMap<String, AssocTable>,
    alpha: f64,
    tests: Option<usize>,
) -> BTreeMap<String, AssocTable> {
    let m = tests.unwrap_or_else(|| panel.values().map(AssocTable::len).sum());
    let threshold = bonferroni_threshold(alpha, m);
    panel
        .iter()
        .map(|(p, t)| (p.clone(), t.filtered(|r| r.pvalue <= threshold)))
        .collect()
}

/// Named protein sets, such as pathways or interaction networks.
#[derive(Clone, Debug, Default)]
pub struct PathwayGroups {
    pub groups: Vec<(String, BTreeSet<String>)>,
}

impl PathwayGroups {
    pub fn new(groups: impl IntoIterator<Item = (String, BTreeSet<String>)>) -> Self {
        PathwayGroups {
            groups: groups.into_iter().collect(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, proteins: impl IntoIterator<Item = String>) {
        self.groups
            .push((name.into(), proteins.into_iter().collect()));
    }
}

/// Reads `name<TAB>protein1,protein2,...` lines.
pub fn parse_groups(path: impl AsRef<Path>) -> Result<PathwayGroups> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut groups = PathwayGroups::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((name, members)) = t.split_once('\t') else {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected name<TAB>protein list".into(),
            });
        };
        groups.push(
            name.trim(),
            members
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string),
        );
    }
    Ok(groups)
}

/// How many of a SNP's proteins must share a group for it to count as
/// vertical pleiotropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GroupRule {
    #[default]
    All,
    /// More than half.
    Majority,
}

impl FromStr for GroupRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(GroupRule::All),
            "majority" => Ok(GroupRule::Majority),
            _ => Err(Error::param(
                "group_rule",
                format!("expected all or majority, got {s:?}"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PleiotropyDecision {
    /// Fewer proteins than the limit.
    BelowLimit,
    /// At or above the limit but covered by a group.
    Vertical { group: String },
    /// At or above the limit with no covering group.
    Horizontal,
}

impl PleiotropyDecision {
    pub fn retained(&self) -> bool {
        !matches!(self, PleiotropyDecision::Horizontal)
    }
}

impl fmt::Display for PleiotropyDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PleiotropyDecision::BelowLimit => f.write_str("retained:below_limit"),
            PleiotropyDecision::Vertical { group } => write!(f, "retained:vertical:{group}"),
            PleiotropyDecision::Horizontal => f.write_str("excluded:horizontal"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PleiotropyAudit {
    pub snp: String,
    pub n_proteins: usize,
    pub decision: PleiotropyDecision,
}

/// Maps each SNP to the proteins it is associated with.
pub fn pqtl_map(panel: &BTreeMap<String, AssocTable>) -> BTreeMap<String, BTreeSet<String>> {
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (protein, table) in panel {
        for r in table.records() {
            map.entry(r.rsid.clone())
                .or_default()
                .insert(protein.clone());
        }
    }
    map
}

fn covering_group<'g>(
    proteins: &BTreeSet<String>,
    groups: &'g PathwayGroups,
    rule: GroupRule,
) -> Option<&'g str> {
    groups.groups.iter().find_map(|(name, members)| {
        let inside = proteins.iter().filter(|p| members.contains(*p)).count();
        let covered = match rule {
            GroupRule::All => inside == proteins.len(),
            GroupRule::Majority => 2 * inside > proteins.len(),
        };
        covered.then_some(name.as_str())
    })
}

/// Decides every SNP in `map`, in SNP order.
pub fn pleiotropy_filter(
    map: &BTreeMap<String, BTreeSet<String>>,
    groups: &PathwayGroups,
    rule: GroupRule,
) -> Vec<PleiotropyAudit> {
    map.iter()
        .map(|(snp, proteins)| {
            let decision = if proteins.len() < PLEIOTROPY_PROTEIN_LIMIT {
                PleiotropyDecision::BelowLimit
            } else {
                match covering_group(proteins, groups, rule) {
                    Some(g) => PleiotropyDecision::Vertical {
                        group: g.to_string(),
                    },
                    None => PleiotropyDecision::Horizontal,
                }
            };
            PleiotropyAudit {
                snp: snp.clone(),
                n_proteins: proteins.len(),
                decision,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    pub record: SnpRecord,
    pub label: CisTrans,
    pub pleiotropy: PleiotropyDecision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentSet {
    pub protein: String,
    pub instruments: Vec<Instrument>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstrumentMode {
    CisOnly,
    CisPlusTrans,
    TransOnly,
}

impl InstrumentMode {
    pub const ALL: [InstrumentMode; 3] = [
        InstrumentMode::CisOnly,
        InstrumentMode::CisPlusTrans,
        InstrumentMode::TransOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentMode::CisOnly => "cis_only",
            InstrumentMode::CisPlusTrans => "cis_plus_trans",
            InstrumentMode::TransOnly => "trans_only",
        }
    }

    fn admits(self, label: CisTrans) -> bool {
        match self {
            InstrumentMode::CisOnly => label == CisTrans::Cis,
            InstrumentMode::CisPlusTrans => true,
            InstrumentMode::TransOnly => label == CisTrans::Trans,
        }
    }
}

impl fmt::Display for InstrumentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl InstrumentSet {
    /// The instrument table for one analysis mode, in instrument order.
    pub fn select(&self, mode: InstrumentMode) -> AssocTable {
        let records = self
            .instruments
            .iter()
            .filter(|i| mode.admits(i.label))
            .map(|i| i.record.clone())
            .collect();
        AssocTable::new(&self.protein, crate::sumstats::TraitKind::Pqtl, records)
            .expect("instrument rsids are unique")
    }
}

/// Per-protein MR: Wald ratio for one instrument, IVW for two or more, plus
/// Egger (slope and intercept) and weighted median from three.
pub fn protein_mr<R: Rng + ?Sized>(
    instruments: &InstrumentSet,
    outcome: &AssocTable,
    mode: InstrumentMode,
    policy: PalindromePolicy,
    n_boot: usize,
    rng: &mut R,
) -> Result<Vec<MrEstimate>> {
    let no_instruments = || Error::NoInstruments {
        protein: instruments.protein.clone(),
        mode: mode.as_str().to_string(),
    };
    let exposure = instruments.select(mode);
    if exposure.is_empty() {
        return Err(no_instruments());
    }
    let pairs = match harmonize(&exposure, outcome, policy) {
        Ok(p) => p,
        Err(Error::NoOverlap) => return Err(no_instruments()),
        Err(e) => return Err(e),
    };
    let usable: Vec<HarmonizedPair> = pairs.into_iter().filter(|p| p.is_usable()).collect();
    if usable.is_empty() {
        return Err(no_instruments());
    }
    let mut rows = vec![primary_estimate(&usable)?];
    if usable.len() >= 3 {
        let fit = egger(&usable)?;
        rows.push(fit.slope);
        rows.push(fit.intercept);
        rows.push(weighted_median(&usable, n_boot, rng)?);
    }
    Ok(rows)
}

/// True when all estimates share a strict sign; `None` with fewer than two.
pub fn direction_consistency(estimates: &[f64]) -> Option<bool> {
    if estimates.len() < 2 {
        return None;
    }
    Some(estimates.iter().all(|&e| e > 0.0) || estimates.iter().all(|&e| e < 0.0))
}

/// Position the cis window is centred on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WindowAnchor {
    #[default]
    Tss,
    /// The protein's most significant pQTL on the encoding gene's chromosome.
    LeadPqtl,
}

impl FromStr for WindowAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tss" => Ok(WindowAnchor::Tss),
            "lead" | "lead_pqtl" => Ok(WindowAnchor::LeadPqtl),
            _ => Err(Error::param(
                "anchor",
                format!("expected tss or lead, got {s:?}"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqtlParams {
    pub bonferroni_alpha: f64,
    /// Bonferroni denominator; the number of panel associations if unset.
    pub bonferroni_tests: Option<usize>,
    pub exclude_mhc: bool,
    pub group_rule: GroupRule,
    pub clump: ClumpParams,
    pub window_bp: u64,
    pub anchor: WindowAnchor,
    pub policy: PalindromePolicy,
    pub n_boot: usize,
}

impl Default for PqtlParams {
    fn default() -> Self {
        PqtlParams {
            bonferroni_alpha: 0.05,
            bonferroni_tests: None,
            exclude_mhc: true,
            group_rule: GroupRule::All,
            clump: ClumpParams {
                p1: 1.0,
                p2: 1.0,
                ..ClumpParams::default()
            },
            window_bp: CIS_WINDOW_BP,
            anchor: WindowAnchor::Tss,
            policy: PalindromePolicy::default(),
            n_boot: DEFAULT_BOOTSTRAP,
        }
    }
}

impl PqtlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bonferroni_alpha > 0.0 && self.bonferroni_alpha <= 1.0) {
            return Err(Error::param("bonferroni_alpha", "must lie in (0, 1]"));
        }
        if self.bonferroni_tests == Some(0) {
            return Err(Error::param("bonferroni_tests", "must be >= 1"));
        }
        self.clump.validate()
    }
}

/// What happened to the panel before MR.
#[derive(Clone, Debug, Default)]
pub struct PqtlAudit {
    pub bonferroni_threshold: f64,
    pub mhc_excluded: Vec<(String, String)>,
    pub pleiotropy: Vec<PleiotropyAudit>,
}

/// Builds per-protein instrument sets from a pQTL panel. Without an LD
/// matrix SNPs are treated as uncorrelated.
pub fn build_instrument_sets(
    panel: &BTreeMap<String, AssocTable>,
    ann: &Annotation,
    groups: &PathwayGroups,
    ld: Option<&LdMatrix>,
    params: &PqtlParams,
) -> Result<(Vec<InstrumentSet>, PqtlAudit)> {
    params.validate()?;
    let m = params
        .bonferroni_tests
        .unwrap_or_else(|| panel.values().map(AssocTable::len).sum());
    let threshold = bonferroni_threshold(params.bonferroni_alpha, m);
    let significant = bonferroni_select(panel, params.bonferroni_alpha, Some(m));

    let mut audit = PqtlAudit {
        bonferroni_threshold: threshold,
        ..Default::default()
    };
    let mut after_mhc = BTreeMap::new();
    for (protein, table) in &significant {
        if params.exclude_mhc {
            for r in table.records().iter().filter(|r| in_mhc(r)) {
                audit.mhc_excluded.push((protein.clone(), r.rsid.clone()));
            }
            after_mhc.insert(protein.clone(), table.filtered(|r| !in_mhc(r)));
        } else {
            after_mhc.insert(protein.clone(), table.clone());
        }
    }

    audit.pleiotropy = pleiotropy_filter(&pqtl_map(&after_mhc), groups, params.group_rule);
    let decisions: BTreeMap<&str, &PleiotropyDecision> = audit
        .pleiotropy
        .iter()
        .map(|a| (a.snp.as_str(), &a.decision))
        .collect();

    let mut sets = Vec::new();
    for (protein, table) in &after_mhc {
        let gene = ann.get(protein)?;
        let kept = table.filtered(|r| decisions[r.rsid.as_str()].retained());
        if kept.is_empty() {
            sets.push(InstrumentSet {
                protein: protein.clone(),
                instruments: Vec::new(),
            });
            continue;
        }
        let local_ld;
        let ld = match ld {
            Some(ld) => ld,
            None => {
                local_ld =
                    LdMatrix::identity(kept.records().iter().map(|r| r.rsid.clone()).collect());
                &local_ld
            }
        };
        let clumps = clump(&kept, ld, &params.clump)?;
        let anchor = match params.anchor {
            WindowAnchor::Tss => Some(gene.tss),
            WindowAnchor::LeadPqtl => kept
                .records()
                .iter()
                .filter(|r| r.chrom() == Some(gene.chrom.as_str()))
                .min_by(|a, b| crate::ld::significance_order(a, b))
                .and_then(SnpRecord::pos),
        };
        let instruments = clumps
            .iter()
            .map(|c| {
                let record = kept.get(&c.index).expect("index from table").clone();
                let label = match anchor {
                    Some(a) => classify_at(&record, &gene.chrom, a, params.window_bp),
                    None => CisTrans::Trans,
                };
                Instrument {
                    pleiotropy: decisions[record.rsid.as_str()].clone(),
                    record,
                    label,
                }
            })
            .collect();
        sets.push(InstrumentSet {
            protein: protein.clone(),
            instruments,
        });
    }
    Ok((sets, audit))
}

/// MR rows for one protein across the three instrument modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProteinReport {
    pub protein: String,
    pub rows: Vec<(InstrumentMode, MrEstimate)>,
    /// Modes that could not be run, with the reason.
    pub skipped: Vec<(InstrumentMode, String)>,
    /// Sign agreement of the primary estimates across the modes that ran.
    pub consistent: Option<bool>,
}

pub fn run_protein<R: Rng + ?Sized>(
    set: &InstrumentSet,
    outcome: &AssocTable,
    params: &PqtlParams,
    rng: &mut R,
) -> Result<ProteinReport> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut primaries = Vec::new();
    for mode in InstrumentMode::ALL {
        match protein_mr(set, outcome, mode, params.policy, params.n_boot, rng) {
            Ok(estimates) => {
                primaries.push(estimates[0].estimate);
                rows.extend(estimates.into_iter().map(|e| (mode, e)));
            }
            Err(e @ Error::NoInstruments { .. }) => skipped.push((mode, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(ProteinReport {
        protein: set.protein.clone(),
        rows,
        skipped,
        consistent: direction_consistency(&primaries),
    })
}

pub const PIPELINE_HEADER: [&str; 8] = [
    "protein",
    "mode",
    "method",
    "estimate",
    "se",
    "p",
    "n_snps",
    "consistent",
];

pub fn write_pipeline_report<W: Write>(
    w: &mut W,
    reports: &[ProteinReport],
) -> std::io::Result<()> {
    writeln!(w, "{}", PIPELINE_HEADER.join("\t"))?;
    for r in reports {
        let flag = match r.consistent {
            Some(true) => "true",
            Some(false) => "false",
            None => "NA",
        };
        for (mode, e) in &r.rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.protein, mode, e.method, e.estimate, e.se, e.pvalue, e.n_snps, flag
            )?;
        }
    }
    Ok(())
}

/// Outcome of the two-step mediation test for one CpG site.
#[derive(Clone, Debug, PartialEq)]
pub struct MediationResult {
    pub exposure: String,
    pub cpg_site: String,
    pub outcome: String,
    pub step1: MrEstimate,
    pub step2: MrEstimate,
    pub alpha: f64,
    pub is_mediator: bool,
    pub indirect_effect: f64,
    pub indirect_se: f64,
    /// SNPs used as instruments in both steps.
    pub shared_instruments: Vec<String>,
}

impl MediationResult {
    pub fn instruments_overlap(&self) -> bool {
        !self.shared_instruments.is_empty()
    }
}

pub fn joint_significance(p1: f64, p2: f64, alpha: f64) -> bool {
    p1 <= alpha && p2 <= alpha
}

/// Product-of-coefficients indirect effect with its delta-method SE.
pub fn indirect_effect(theta1: f64, se1: f64, theta2: f64, se2: f64) -> (f64, f64) {
    let se = (theta1 * theta1 * se2 * se2 + theta2 * theta2 * se1 * se1).sqrt();
    (theta1 * theta2, se)
}

/// Per-site significance level, optionally Bonferroni-corrected over sites.
pub fn mediation_alpha(alpha: f64, n_sites: usize, bonferroni: bool) -> f64 {
    if bonferroni {
        bonferroni_threshold(alpha, n_sites)
    } else {
        alpha
    }
}

/// Exposure -> methylation, then methylation -> outcome, each by IVW (or
/// the Wald ratio for a single SNP), combined by joint significance.
pub fn two_step_mediation(
    exposure: &str,
    cpg_site: &str,
    outcome: &str,
    step1_pairs: &[HarmonizedPair],
    step2_pairs: &[HarmonizedPair],
    alpha: f64,
) -> Result<MediationResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", "must lie in (0, 1]"));
    }
    let step1 = primary_estimate(step1_pairs)?;
    let step2 = primary_estimate(step2_pairs)?;
    let first: BTreeSet<&str> = step1_pairs
        .iter()
        .filter(|p| p.is_usable())
        .map(|p| p.rsid.as_str())
        .collect();
    let shared_instruments = step2_pairs
        .iter()
        .filter(|p| p.is_usable() && first.contains(p.rsid.as_str()))
        .map(|p| p.rsid.clone())
        .collect();
    let (indirect, indirect_se) =
        indirect_effect(step1.estimate, step1.se, step2.estimate, step2.se);
    Ok(MediationResult {
        exposure: exposure.to_string(),
        cpg_site: cpg_site.to_string(),
        outcome: outcome.to_string(),
        is_mediator: joint_significance(step1.pvalue, step2.pvalue, alpha),
        step1,
        step2,
        alpha,
        indirect_effect: indirect,
        indirect_se,
        shared_instruments,
    })
}

/// Harmonized inputs for both mediation steps: exposure instruments against
/// the CpG site, and the site's mQTLs against the outcome. Instruments are
/// SNPs with `p <= instrument_p` in the step's exposure.
pub fn mediation_inputs(
    exposure: &AssocTable,
    methylation: &AssocTable,
    outcome: &AssocTable,
    instrument_p: f64,
    policy: PalindromePolicy,
) -> Result<(Vec<HarmonizedPair>, Vec<HarmonizedPair>)> {
    let step1 = harmonize(
        &exposure.filtered(|r| r.pvalue <= instrument_p),
        methylation,
        policy,
    )?;
    let step2 = harmonize(
        &methylation.filtered(|r| r.pvalue <= instrument_p),
        outcome,
        policy,
    )?;
    Ok((step1, step2))
}

pub const MEDIATION_HEADER: [&str; 15] = [
    "exposure",
    "cpg_site",
    "outcome",
    "step1_method",
    "step1_estimate",
    "step1_se",
    "step1_p",
    "step2_method",
    "step2_estimate",
    "step2_se",
    "step2_p",
    "is_mediator",
    "indirect_effect",
    "indirect_se",
    "instrument_overlap",
];

pub fn write_mediation_report<W: Write>(
    w: &mut W,
    results: &[MediationResult],
) -> std::io::Result<()> {
    writeln!(w, "{}", MEDIATION_HEADER.join("\t"))?;
    for r in results {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.exposure,
            r.cpg_site,
            r.outcome,
            r.step1.method,
            r.step1.estimate,
            r.step1.se,
            r.step1.pvalue,
            r.step2.method,
            r.step2.estimate,
            r.step2.se,
            r.step2.pvalue,
            r.is_mediator,
            r.indirect_effect,
            r.indirect_se,
            if r.instruments_overlap() {
                r.shared_instruments.join(",")
            } else {
                "-".to_string()
            }
        )?;
    }
    Ok(())
}
