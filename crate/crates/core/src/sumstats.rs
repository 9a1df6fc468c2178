//! Summary-statistics data model: per-SNP association records, the
//! `.matrix` effect-size format, and allele harmonization between an
//! exposure and an outcome study.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Header token opening a `.matrix` file.
pub const MATRIX_FIRST_COLUMN: &str = "GENES";
/// Header token naming the outcome column of a `.matrix` file.
pub const MATRIX_OUTCOME_COLUMN: &str = "BETA_GWAS";

/// Genomic coordinate of a SNP.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Locus {
    pub chrom: String,
    pub pos: u64,
}

impl Locus {
    pub fn new(chrom: &str, pos: u64) -> Result<Self> {
        let chrom = normalize_chrom(chrom).ok_or_else(|| Error::InvalidValue {
            row: 0,
            field: "chrom".into(),
            reason: format!("unknown chromosome {chrom:?}"),
        })?;
        if pos == 0 {
            return Err(Error::InvalidValue {
                row: 0,
                field: "pos".into(),
                reason: "position must be >= 1".into(),
            });
        }
        Ok(Locus { chrom, pos })
    }
}

/// Normalizes a chromosome label to `1`..`22`, `X`, `Y` or `MT`.
pub fn normalize_chrom(raw: &str) -> Option<String> {
    let s = raw.trim();
    let s = s
        .strip_prefix("chr")
        .or_else(|| s.strip_prefix("CHR"))
        .or_else(|| s.strip_prefix("Chr"))
        .unwrap_or(s)
        .to_ascii_uppercase();
    match s.as_str() {
        "X" | "Y" | "MT" => Some(s),
        "M" => Some("MT".into()),
        "23" => Some("X".into()),
        "24" => Some("Y".into()),
        _ => match s.parse::<u8>() {
            Ok(n) if (1..=22).contains(&n) => Some(n.to_string()),
            _ => None,
        },
    }
}

/// One SNP's association with one trait.
#[derive(Clone, Debug, PartialEq)]
pub struct SnpRecord {
    pub rsid: String,
    pub locus: Option<Locus>,
    pub effect_allele: String,
    pub other_allele: String,
    pub beta: f64,
    pub se: f64,
    pub pvalue: f64,
    pub n: Option<u64>,
    pub eaf: Option<f64>,
}

impl SnpRecord {
    /// Builds a record with validated fields. Alleles are uppercased.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rsid: impl Into<String>,
        locus: Option<Locus>,
        effect_allele: &str,
        other_allele: &str,
        beta: f64,
        se: f64,
        pvalue: f64,
    ) -> Result<Self> {
        let rec = SnpRecord {
            rsid: rsid.into(),
            locus,
            effect_allele: effect_allele.trim().to_ascii_uppercase(),
            other_allele: other_allele.trim().to_ascii_uppercase(),
            beta,
            se,
            pvalue,
            n: None,
            eaf: None,
        };
        rec.validate(0)?;
        Ok(rec)
    }

    pub fn with_eaf(mut self, eaf: f64) -> Result<Self> {
        self.eaf = Some(eaf);
        self.validate(0)?;
        Ok(self)
    }

    pub fn with_n(mut self, n: u64) -> Result<Self> {
        self.n = Some(n);
        self.validate(0)?;
        Ok(self)
    }

    pub fn chrom(&self) -> Option<&str> {
        self.locus.as_ref().map(|l| l.chrom.as_str())
    }

    pub fn pos(&self) -> Option<u64> {
        self.locus.as_ref().map(|l| l.pos)
    }

    fn validate(&self, row: usize) -> Result<()> {
        let bad = |field: &str, reason: String| Error::InvalidValue {
            row,
            field: field.into(),
            reason,
        };
        if self.rsid.is_empty() {
            return Err(bad("rsid", "empty identifier".into()));
        }
        if self.effect_allele.is_empty() || self.other_allele.is_empty() {
            return Err(bad("allele", "empty allele".into()));
        }
        if self.effect_allele == self.other_allele {
            return Err(bad(
                "allele",
                format!("effect and other allele are both {}", self.effect_allele),
            ));
        }
        if !self.beta.is_finite() {
            return Err(bad("beta", format!("{} is not finite", self.beta)));
        }
        if !(self.se.is_finite() && self.se > 0.0) {
            return Err(bad("se", format!("{} is not > 0", self.se)));
        }
        if !(0.0..=1.0).contains(&self.pvalue) {
            return Err(bad("pvalue", format!("{} is outside [0, 1]", self.pvalue)));
        }
        if let Some(l) = &self.locus {
            if l.pos == 0 {
                return Err(bad("pos", "position must be >= 1".into()));
            }
        }
        if self.n == Some(0) {
            return Err(bad("n", "sample size must be > 0".into()));
        }
        if let Some(f) = self.eaf {
            if !(0.0..=1.0).contains(&f) {
                return Err(bad("eaf", format!("{f} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// What kind of study an [`AssocTable`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum TraitKind {
    GwasOutcome,
    Eqtl,
    Pqtl,
    Mqtl,
    Methylation,
    #[default]
    Exposure,
}

/// Summary statistics of one trait, keyed by rsid.
#[derive(Clone, Debug)]
pub struct AssocTable {
    pub trait_name: String,
    pub trait_kind: TraitKind,
    records: Vec<SnpRecord>,
    index: HashMap<String, usize>,
}

impl AssocTable {
    pub fn new(
        trait_name: impl Into<String>,
        trait_kind: TraitKind,
        records: Vec<SnpRecord>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.rsid.clone(), i).is_some() {
                return Err(Error::DuplicateSnp {
                    rsid: r.rsid.clone(),
                });
            }
        }
        Ok(AssocTable {
            trait_name: trait_name.into(),
            trait_kind,
            records,
            index,
        })
    }

    pub fn records(&self) -> &[SnpRecord] {
        &self.records
    }

    pub fn get(&self, rsid: &str) -> Option<&SnpRecord> {
        self.index.get(rsid).map(|&i| &self.records[i])
    }

    pub fn contains(&self, rsid: &str) -> bool {
        self.index.contains_key(rsid)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A new table with only the records satisfying `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&SnpRecord) -> bool) -> AssocTable {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        AssocTable::new(self.trait_name.clone(), self.trait_kind, records)
            .expect("subset of a valid table has unique rsids")
    }
}

/// Column names used when reading a delimited summary-statistics file.
///
/// Optional columns are read when present in the header and ignored otherwise.
#[derive(Clone, Debug)]
pub struct ColumnMap {
    pub rsid: String,
    pub chrom: Option<String>,
    pub pos: Option<String>,
    pub effect_allele: String,
    pub other_allele: String,
    pub beta: String,
    pub se: String,
    pub pvalue: String,
    pub n: Option<String>,
    pub eaf: Option<String>,
    pub delimiter: u8,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            rsid: "SNP".into(),
            chrom: Some("CHR".into()),
            pos: Some("BP".into()),
            effect_allele: "A1".into(),
            other_allele: "A2".into(),
            beta: "BETA".into(),
            se: "SE".into(),
            pvalue: "P".into(),
            n: Some("N".into()),
            eaf: Some("EAF".into()),
            delimiter: b'\t',
        }
    }
}

struct ResolvedColumns {
    rsid: usize,
    chrom: Option<usize>,
    pos: Option<usize>,
    effect_allele: usize,
    other_allele: usize,
    beta: usize,
    se: usize,
    pvalue: usize,
    n: Option<usize>,
    eaf: Option<usize>,
}

impl ColumnMap {
    fn resolve(&self, header: &csv::StringRecord) -> Result<ResolvedColumns> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
        };
        let optional = |name: &Option<String>| name.as_deref().and_then(find);
        let cols = ResolvedColumns {
            rsid: required(&self.rsid)?,
            chrom: optional(&self.chrom),
            pos: optional(&self.pos),
            effect_allele: required(&self.effect_allele)?,
            other_allele: required(&self.other_allele)?,
            beta: required(&self.beta)?,
            se: required(&self.se)?,
            pvalue: required(&self.pvalue)?,
            n: optional(&self.n),
            eaf: optional(&self.eaf),
        };
        if cols.chrom.is_some() != cols.pos.is_some() {
            let missing = if cols.chrom.is_none() {
                &self.chrom
            } else {
                &self.pos
            };
            return Err(Error::MissingColumn {
                column: missing.clone().unwrap_or_default(),
            });
        }
        Ok(cols)
    }
}

fn reader_for(path: &Path, delimiter: u8) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, row: usize, field: &str) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::InvalidValue {
        row,
        field: field.into(),
        reason: format!("cannot parse {raw:?}"),
    })
}

fn optional_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    col: Option<usize>,
    row: usize,
    field: &str,
) -> Result<Option<T>> {
    match col.and_then(|c| record.get(c)) {
        None => Ok(None),
        Some(s) if s.is_empty() || s.eq_ignore_ascii_case("NA") => Ok(None),
        Some(s) => parse_field(s, row, field).map(Some),
    }
}

fn record_from_row(
    record: &csv::StringRecord,
    cols: &ResolvedColumns,
    row: usize,
) -> Result<SnpRecord> {
    let get = |c: usize, field: &str| {
        record.get(c).ok_or_else(|| Error::InvalidValue {
            row,
            field: field.into(),
            reason: "missing field".into(),
        })
    };
    let locus = match (cols.chrom, cols.pos) {
        (Some(c), Some(p)) => {
            let chrom_raw = get(c, "chrom")?;
            let chrom = normalize_chrom(chrom_raw).ok_or_else(|| Error::InvalidValue {
                row,
                field: "chrom".into(),
                reason: format!("unknown chromosome {chrom_raw:?}"),
            })?;
            let pos: u64 = parse_field(get(p, "pos")?, row, "pos")?;
            Some(Locus { chrom, pos })
        }
        _ => None,
    };
    let rec = SnpRecord {
        rsid: get(cols.rsid, "rsid")?.to_string(),
        locus,
        effect_allele: get(cols.effect_allele, "effect_allele")?.to_ascii_uppercase(),
        other_allele: get(cols.other_allele, "other_allele")?.to_ascii_uppercase(),
        beta: parse_field(get(cols.beta, "beta")?, row, "beta")?,
        se: parse_field(get(cols.se, "se")?, row, "se")?,
        pvalue: parse_field(get(cols.pvalue, "pvalue")?, row, "pvalue")?,
        n: optional_field(record, cols.n, row, "n")?,
        eaf: optional_field(record, cols.eaf, row, "eaf")?,
    };
    rec.validate(row)?;
    Ok(rec)
}

/// Reads a delimited summary-statistics file into a single table.
///
/// Rows violating record invariants are rejected with their line number.
pub fn parse_assoc_table(
    path: impl AsRef<Path>,
    trait_name: &str,
    trait_kind: TraitKind,
    columns: &ColumnMap,
) -> Result<AssocTable> {
    let path = path.as_ref();
    let mut reader = reader_for(path, columns.delimiter)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = columns.resolve(&header)?;
    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push(record_from_row(&record, &cols, line)?);
    }
    AssocTable::new(trait_name, trait_kind, records)
}

/// Reads a long-format file holding several traits, split on `group_column`.
///
/// Tables come back keyed and ordered by trait name.
pub fn parse_assoc_groups(
    path: impl AsRef<Path>,
    group_column: &str,
    trait_kind: TraitKind,
    columns: &ColumnMap,
) -> Result<BTreeMap<String, AssocTable>> {
    let path = path.as_ref();
    let mut reader = reader_for(path, columns.delimiter)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = columns.resolve(&header)?;
    let group_col = header
        .iter()
        .position(|h| h.trim() == group_column)
        .ok_or_else(|| Error::MissingColumn {
            column: group_column.to_string(),
        })?;
    let mut groups: BTreeMap<String, Vec<SnpRecord>> = BTreeMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let group = record.get(group_col).unwrap_or_default().to_string();
        if group.is_empty() {
            return Err(Error::InvalidValue {
                row: line,
                field: group_column.into(),
                reason: "empty trait name".into(),
            });
        }
        groups
            .entry(group)
            .or_default()
            .push(record_from_row(&record, &cols, line)?);
    }
    groups
        .into_iter()
        .map(|(name, recs)| Ok((name.clone(), AssocTable::new(name, trait_kind, recs)?)))
        .collect()
}

/// Writes a table in the default column layout (readable with `ColumnMap::default()`).
pub fn write_assoc_table(path: impl AsRef<Path>, table: &AssocTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "SNP\tCHR\tBP\tA1\tA2\tBETA\tSE\tP\tN\tEAF").map_err(io)?;
    for r in table.records() {
        let (chrom, pos) = match &r.locus {
            Some(l) => (l.chrom.clone(), l.pos.to_string()),
            None => ("NA".into(), "NA".into()),
        };
        let n = r.n.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        let eaf = r.eaf.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.rsid, chrom, pos, r.effect_allele, r.other_allele, r.beta, r.se, r.pvalue, n, eaf
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// The `n x k` exposure-effect matrix plus the outcome effect column.
///
/// A zero in `beta` means the SNP is not a QTL for that trait.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectMatrix {
    pub snps: Vec<String>,
    pub traits: Vec<String>,
    pub beta: DMatrix<f64>,
    pub outcome_beta: DVector<f64>,
}

impl EffectMatrix {
    pub fn new(
        snps: Vec<String>,
        traits: Vec<String>,
        beta: DMatrix<f64>,
        outcome_beta: DVector<f64>,
    ) -> Result<Self> {
        if beta.nrows() != snps.len() || outcome_beta.len() != snps.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} SNPs but {} effect rows and {} outcome effects",
                snps.len(),
                beta.nrows(),
                outcome_beta.len()
            )));
        }
        if beta.ncols() != traits.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} traits but {} effect columns",
                traits.len(),
                beta.ncols()
            )));
        }
        let mut seen = HashSet::with_capacity(snps.len());
        for s in &snps {
            if !seen.insert(s.as_str()) {
                return Err(Error::DuplicateSnp { rsid: s.clone() });
            }
        }
        Ok(EffectMatrix {
            snps,
            traits,
            beta,
            outcome_beta,
        })
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn n_traits(&self) -> usize {
        self.traits.len()
    }

    pub fn trait_index(&self, name: &str) -> Option<usize> {
        self.traits.iter().position(|t| t == name)
    }

    pub fn snp_index(&self, rsid: &str) -> Option<usize> {
        self.snps.iter().position(|s| s == rsid)
    }
}

/// Parses a `.matrix` file: header `GENES <trait>... BETA_GWAS`, then one
/// whitespace-delimited row per SNP.
pub fn parse_matrix_file(path: impl AsRef<Path>) -> Result<EffectMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file), path)
}

/// Parses `.matrix` content from any reader; `path` is used in error messages.
pub fn read_matrix<R: BufRead>(reader: R, path: &Path) -> Result<EffectMatrix> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let (header_line, header) = loop {
        match lines.next() {
            None => return Err(malformed(1, "missing header".into())),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
        }
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&MATRIX_FIRST_COLUMN) || tokens.last() != Some(&MATRIX_OUTCOME_COLUMN)
    {
        return Err(malformed(
            header_line,
            format!(
                "header must start with {MATRIX_FIRST_COLUMN} and end with {MATRIX_OUTCOME_COLUMN}"
            ),
        ));
    }
    if tokens.len() < 3 {
        return Err(malformed(header_line, "header names no traits".into()));
    }
    let traits: Vec<String> = tokens[1..tokens.len() - 1]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let width = traits.len() + 2;

    let mut snps = Vec::new();
    let mut values = Vec::new();
    let mut outcome = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.is_empty() {
            continue;
        }
        if row.len() != width {
            return Err(Error::RowWidthMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                expected: width,
                found: row.len(),
            });
        }
        let rsid = row[0].to_string();
        if !seen.insert(rsid.clone()) {
            return Err(Error::DuplicateSnp { rsid });
        }
        for tok in &row[1..] {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(i + 1, format!("cannot parse {tok:?} as a number")))?;
            if !v.is_finite() {
                return Err(malformed(i + 1, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        outcome.push(values.pop().expect("row has an outcome column"));
        snps.push(rsid);
    }
    if snps.is_empty() {
        return Err(Error::EmptyMatrix {
            path: path.to_path_buf(),
        });
    }
    let beta = DMatrix::from_row_slice(snps.len(), traits.len(), &values);
    EffectMatrix::new(snps, traits, beta, DVector::from_vec(outcome))
}

/// Formats a float like C's `%.{precision}E` (two-digit exponent with sign).
///
/// With `precision = None` the shortest mantissa that round-trips is used.
pub fn format_sci(value: f64, precision: Option<usize>) -> String {
    let raw = match precision {
        Some(p) => format!("{value:.p$e}"),
        None => format!("{value:e}"),
    };
    let (mantissa, exp) = raw.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

/// Writes an [`EffectMatrix`] in `.matrix` layout, tab-delimited.
pub fn write_matrix_file(
    path: impl AsRef<Path>,
    matrix: &EffectMatrix,
    precision: Option<usize>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_matrix(&mut w, matrix, precision).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_matrix<W: Write>(
    w: &mut W,
    matrix: &EffectMatrix,
    precision: Option<usize>,
) -> std::io::Result<()> {
    write!(w, "{MATRIX_FIRST_COLUMN}")?;
    for t in &matrix.traits {
        write!(w, "\t{t}")?;
    }
    writeln!(w, "\t{MATRIX_OUTCOME_COLUMN}")?;
    for (i, snp) in matrix.snps.iter().enumerate() {
        write!(w, "{snp}")?;
        for j in 0..matrix.n_traits() {
            write!(w, "\t{}", format_sci(matrix.beta[(i, j)], precision))?;
        }
        writeln!(w, "\t{}", format_sci(matrix.outcome_beta[i], precision))?;
    }
    Ok(())
}

/// How a SNP fared during harmonization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HarmonizeAction {
    Kept,
    SignFlipped,
    DroppedPalindromic,
    DroppedAlleleMismatch,
}

impl HarmonizeAction {
    pub fn is_usable(self) -> bool {
        matches!(self, HarmonizeAction::Kept | HarmonizeAction::SignFlipped)
    }
}

/// Exposure and outcome effects of one SNP with alleles aligned to the exposure.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonizedPair {
    pub rsid: String,
    pub beta_exposure: f64,
    pub se_exposure: f64,
    pub beta_outcome: f64,
    pub se_outcome: f64,
    pub action: HarmonizeAction,
}

impl HarmonizedPair {
    /// An already-aligned pair.
    pub fn new(
        rsid: impl Into<String>,
        beta_exposure: f64,
        se_exposure: f64,
        beta_outcome: f64,
        se_outcome: f64,
    ) -> Self {
        HarmonizedPair {
            rsid: rsid.into(),
            beta_exposure,
            se_exposure,
            beta_outcome,
            se_outcome,
            action: HarmonizeAction::Kept,
        }
    }

    pub fn is_usable(&self) -> bool {
        self.action.is_usable()
    }
}

/// Treatment of A/T and C/G SNPs, whose strand cannot be read from the alleles.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum PalindromePolicy {
    /// Always drop.
    Drop,
    /// Infer strand from allele frequencies; drop when either frequency is
    /// missing or falls inside `[0.5 - band, 0.5 + band]`.
    #[default]
    InferFromEaf,
    /// Trust the allele labels as given.
    AssumeAligned,
}

/// Half-width of the ambiguous allele-frequency band around 0.5.
pub const PALINDROME_EAF_BAND: f64 = 0.08;

fn complement(allele: &str) -> Option<String> {
    allele
        .chars()
        .map(|c| match c {
            'A' => Some('T'),
            'T' => Some('A'),
            'C' => Some('G'),
            'G' => Some('C'),
            _ => None,
        })
        .collect()
}

/// True for A/T and C/G SNPs.
pub fn is_palindromic(a: &str, b: &str) -> bool {
    a.len() == 1 && complement(a).as_deref() == Some(b)
}

fn eaf_ambiguous(eaf: Option<f64>) -> bool {
    match eaf {
        None => true,
        Some(f) => (f - 0.5).abs() <= PALINDROME_EAF_BAND,
    }
}

/// Aligns outcome effects to the exposure's effect allele.
///
/// SNPs are taken in exposure order over the rsid intersection. The outcome
/// beta is negated when its alleles are swapped (after trying the strand
/// complement); every SNP gets an action, dropped ones included.
pub fn harmonize(
    exposure: &AssocTable,
    outcome: &AssocTable,
    policy: PalindromePolicy,
) -> Result<Vec<HarmonizedPair>> {
    let mut out = Vec::new();
    for exp in exposure.records() {
        let Some(res) = outcome.get(&exp.rsid) else {
            continue;
        };
        let mut pair = HarmonizedPair::new(exp.rsid.clone(), exp.beta, exp.se, res.beta, res.se);
        pair.action = harmonize_one(exp, res, policy, &mut pair.beta_outcome);
        out.push(pair);
    }
    if out.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

fn harmonize_one(
    exp: &SnpRecord,
    res: &SnpRecord,
    policy: PalindromePolicy,
    beta_outcome: &mut f64,
) -> HarmonizeAction {
    let (ea, oa) = (exp.effect_allele.as_str(), exp.other_allele.as_str());
    let (re, ro) = (res.effect_allele.as_str(), res.other_allele.as_str());

    if is_palindromic(ea, oa) {
        let same_pair = (re == ea && ro == oa) || (re == oa && ro == ea);
        if !same_pair {
            return HarmonizeAction::DroppedAlleleMismatch;
        }
        let labels_swapped = re != ea;
        let flip = match policy {
            PalindromePolicy::Drop => return HarmonizeAction::DroppedPalindromic,
            PalindromePolicy::AssumeAligned => labels_swapped,
            PalindromePolicy::InferFromEaf => {
                if eaf_ambiguous(exp.eaf) || eaf_ambiguous(res.eaf) {
                    return HarmonizeAction::DroppedPalindromic;
                }
                let exp_f = exp.eaf.expect("checked");
                let res_f = if labels_swapped {
                    1.0 - res.eaf.expect("checked")
                } else {
                    res.eaf.expect("checked")
                };
                // Opposite sides of 0.5 means the outcome is on the other strand.
                labels_swapped ^ ((exp_f < 0.5) != (res_f < 0.5))
            }
        };
        return apply(flip, beta_outcome);
    }

    if re == ea && ro == oa {
        return HarmonizeAction::Kept;
    }
    if re == oa && ro == ea {
        return apply(true, beta_outcome);
    }
    let (ce, co) = (complement(re), complement(ro));
    match (ce.as_deref(), co.as_deref()) {
        (Some(ce), Some(co)) if ce == ea && co == oa => HarmonizeAction::Kept,
        (Some(ce), Some(co)) if ce == oa && co == ea => apply(true, beta_outcome),
        _ => HarmonizeAction::DroppedAlleleMismatch,
    }
}

fn apply(flip: bool, beta_outcome: &mut f64) -> HarmonizeAction {
    if flip {
        *beta_outcome = -*beta_outcome;
        HarmonizeAction::SignFlipped
    } else {
        HarmonizeAction::Kept
    }
}

/// Only the pairs that survived harmonization.
pub fn usable_pairs(pairs: &[HarmonizedPair]) -> Vec<HarmonizedPair> {
    pairs.iter().filter(|p| p.is_usable()).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    const SAMPLE_MATRIX: &str = "GENES\tENSG00000002919\tENSG00000159202\tBETA_GWAS
rs221602\t-2.495E-02\t0.000E+00\t3.247E-03
rs1317850\t1.481E-01\t0.000E+00\t-1.617E-04
rs1468270\t-3.096E-01\t0.000E+00\t8.533E-03
rs7350950\t0.000E+00\t-4.463E-02\t6.919E-03
rs9897918\t-6.519E-02\t0.000E+00\t-1.193E-05
";

    fn parse(text: &str) -> Result<EffectMatrix> {
        read_matrix(Cursor::new(text), Path::new("test.matrix"))
    }

    fn rec(rsid: &str, ea: &str, oa: &str, beta: f64) -> SnpRecord {
        SnpRecord::new(rsid, None, ea, oa, beta, 0.01, 1e-5).unwrap()
    }

    fn table(records: Vec<SnpRecord>) -> AssocTable {
        AssocTable::new("t", TraitKind::Exposure, records).unwrap()
    }

    #[test]
    fn sample_matrix_rows_parse_exactly() {
        let m = parse(SAMPLE_MATRIX).unwrap();
        assert_eq!(m.n_snps(), 5);
        assert_eq!(m.traits, ["ENSG00000002919", "ENSG00000159202"]);
        assert_eq!(m.beta[(0, 0)], -0.02495);
        assert_eq!(m.beta[(0, 1)], 0.0);
        assert_eq!(m.outcome_beta[0], 0.003247);
        let r = m.snp_index("rs7350950").unwrap();
        assert_eq!(m.beta[(r, 0)], 0.0);
        assert_eq!(m.beta[(r, 1)], -0.04463);
        assert_eq!(m.outcome_beta[r], 0.006919);
    }

    #[test]
    fn matrix_accepts_space_aligned_columns() {
        let text = SAMPLE_MATRIX.replace('\t', "   ");
        assert_eq!(parse(&text).unwrap(), parse(SAMPLE_MATRIX).unwrap());
    }

    #[test]
    fn matrix_error_paths() {
        assert!(matches!(
            parse("GENES\tG1\tBETA_GWAS\n"),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(matches!(
            parse("GENES\tG1\tBETA_GWAS\nrs1\t0.1\n"),
            Err(Error::RowWidthMismatch {
                line: 2,
                expected: 3,
                found: 2,
                ..
            })
        ));
        assert!(matches!(
            parse("GENES\tG1\tBETA_GWAS\nrs1\t0.1\t0.2\nrs1\t0.3\t0.4\n"),
            Err(Error::DuplicateSnp { .. })
        ));
        assert!(matches!(
            parse("SNP\tG1\tBETA_GWAS\nrs1\t0.1\t0.2\n"),
            Err(Error::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            parse("GENES\tG1\tBETA_GWAS\nrs1\tabc\t0.2\n"),
            Err(Error::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn sample_matrix_round_trips_at_three_digits() {
        let m = parse(SAMPLE_MATRIX).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, Some(3)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE_MATRIX);
    }

    #[test]
    fn sci_format_matches_c_style() {
        assert_eq!(format_sci(-0.02495, Some(3)), "-2.495E-02");
        assert_eq!(format_sci(0.0, Some(3)), "0.000E+00");
        assert_eq!(format_sci(123456.0, None), "1.23456E+05");
        assert_eq!(format_sci(1e-120, None), "1E-120");
    }

    #[test]
    fn chromosome_labels_normalize() {
        assert_eq!(normalize_chrom("chr6").as_deref(), Some("6"));
        assert_eq!(normalize_chrom("x").as_deref(), Some("X"));
        assert_eq!(normalize_chrom("chrM").as_deref(), Some("MT"));
        assert_eq!(normalize_chrom("23").as_deref(), Some("X"));
        assert_eq!(normalize_chrom("0"), None);
        assert_eq!(normalize_chrom("25"), None);
    }

    #[test]
    fn record_invariants_enforced() {
        assert!(SnpRecord::new("rs1", None, "A", "A", 0.1, 0.1, 0.5).is_err());
        assert!(SnpRecord::new("rs1", None, "A", "G", 0.1, 0.0, 0.5).is_err());
        assert!(SnpRecord::new("rs1", None, "A", "G", 0.1, 0.1, 1.5).is_err());
        assert!(rec("rs1", "a", "g", 0.1).with_eaf(1.2).is_err());
        assert_eq!(rec("rs1", "a", "g", 0.1).effect_allele, "A");
    }

    #[test]
    fn duplicate_rsids_rejected_in_table() {
        let err = AssocTable::new(
            "t",
            TraitKind::Eqtl,
            vec![rec("rs1", "A", "G", 0.1), rec("rs1", "A", "G", 0.2)],
        );
        assert!(matches!(err, Err(Error::DuplicateSnp { .. })));
    }

    #[test]
    fn harmonize_aligned_and_swapped() {
        let exp = table(vec![rec("rs1", "A", "G", 0.1), rec("rs2", "A", "G", 0.1)]);
        let out = table(vec![rec("rs1", "A", "G", 0.2), rec("rs2", "G", "A", 0.2)]);
        let h = harmonize(&exp, &out, PalindromePolicy::default()).unwrap();
        assert_eq!(h[0].action, HarmonizeAction::Kept);
        assert_eq!(h[0].beta_outcome, 0.2);
        assert_eq!(h[1].action, HarmonizeAction::SignFlipped);
        assert_eq!(h[1].beta_outcome, -0.2);
        assert_eq!(h[1].beta_exposure, 0.1);
    }

    #[test]
    fn harmonize_strand_complement() {
        let exp = table(vec![rec("rs1", "A", "G", 0.1), rec("rs2", "A", "G", 0.1)]);
        let out = table(vec![rec("rs1", "T", "C", 0.2), rec("rs2", "C", "T", 0.2)]);
        let h = harmonize(&exp, &out, PalindromePolicy::default()).unwrap();
        assert_eq!(h[0].action, HarmonizeAction::Kept);
        assert_eq!(h[1].action, HarmonizeAction::SignFlipped);
        assert_eq!(h[1].beta_outcome, -0.2);
    }

    #[test]
    fn harmonize_drops_mismatch_and_palindromes() {
        let exp = table(vec![rec("rs1", "A", "T", 0.1), rec("rs2", "A", "G", 0.1)]);
        let out = table(vec![rec("rs1", "A", "T", 0.2), rec("rs2", "A", "C", 0.2)]);
        let h = harmonize(&exp, &out, PalindromePolicy::default()).unwrap();
        assert_eq!(h[0].action, HarmonizeAction::DroppedPalindromic);
        assert_eq!(h[1].action, HarmonizeAction::DroppedAlleleMismatch);
        assert!(usable_pairs(&h).is_empty());
    }

    #[test]
    fn palindromic_strand_inferred_from_eaf() {
        let e = |f| rec("rs1", "A", "T", 0.1).with_eaf(f).unwrap();
        let o = |f, b| rec("rs1", "A", "T", b).with_eaf(f).unwrap();
        let run = |ef, of| {
            harmonize(
                &table(vec![e(ef)]),
                &table(vec![o(of, 0.2)]),
                PalindromePolicy::InferFromEaf,
            )
            .unwrap()
            .remove(0)
        };
        let same = run(0.2, 0.25);
        assert_eq!(same.action, HarmonizeAction::Kept);
        assert_eq!(same.beta_outcome, 0.2);
        let other_strand = run(0.2, 0.8);
        assert_eq!(other_strand.action, HarmonizeAction::SignFlipped);
        assert_eq!(other_strand.beta_outcome, -0.2);
        assert_eq!(run(0.45, 0.2).action, HarmonizeAction::DroppedPalindromic);
        assert_eq!(run(0.2, 0.58).action, HarmonizeAction::DroppedPalindromic);

        let dropped = harmonize(
            &table(vec![e(0.2)]),
            &table(vec![o(0.2, 0.2)]),
            PalindromePolicy::Drop,
        )
        .unwrap();
        assert_eq!(dropped[0].action, HarmonizeAction::DroppedPalindromic);
    }

    #[test]
    fn harmonize_no_overlap() {
        let exp = table(vec![rec("rs1", "A", "G", 0.1)]);
        let out = table(vec![rec("rs2", "A", "G", 0.1)]);
        assert!(matches!(
            harmonize(&exp, &out, PalindromePolicy::Drop),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn assoc_table_from_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gwas.tsv");
        std::fs::write(
            &path,
            "SNP\tCHR\tBP\tA1\tA2\tBETA\tSE\tP\n\
             rs1\t1\t100\ta\tg\t0.1\t0.01\t1e-8\n\
             rs2\tchr2\t200\tC\tT\t-0.2\t0.02\t0.5\n\
             rs3\tX\t300\tA\tC\t0.0\t0.03\t1\n",
        )
        .unwrap();
        let t =
            parse_assoc_table(&path, "bmi", TraitKind::GwasOutcome, &ColumnMap::default()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get("rs1").unwrap().effect_allele, "A");
        assert_eq!(t.get("rs2").unwrap().chrom(), Some("2"));
        assert_eq!(t.get("rs3").unwrap().pos(), Some(300));

        std::fs::write(
            &path,
            "SNP\tA1\tA2\tBETA\tSE\tP\nrs1\tA\tG\t0.1\t0.01\t0.1\nrs2\tA\tG\t0.1\t0\t0.1\n",
        )
        .unwrap();
        let err = parse_assoc_table(&path, "x", TraitKind::Exposure, &ColumnMap::default());
        assert!(matches!(err, Err(Error::InvalidValue { row: 3, ref field, .. }) if field == "se"));

        std::fs::write(
            &path,
            "SNP\tA1\tA2\tBETA\tSE\tP\nrs1\tA\tG\t0.1\t0.01\t1.5\n",
        )
        .unwrap();
        let err = parse_assoc_table(&path, "x", TraitKind::Exposure, &ColumnMap::default());
        assert!(matches!(err, Err(Error::InvalidValue { ref field, .. }) if field == "pvalue"));

        std::fs::write(&path, "SNP\tA1\tA2\tBETA\tP\nrs1\tA\tG\t0.1\t0.1\n").unwrap();
        let err = parse_assoc_table(&path, "x", TraitKind::Exposure, &ColumnMap::default());
        assert!(matches!(err, Err(Error::MissingColumn { ref column }) if column == "SE"));
    }

    #[test]
    fn assoc_groups_split_by_trait() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eqtl.tsv");
        std::fs::write(
            &path,
            "GENE\tSNP\tA1\tA2\tBETA\tSE\tP\n\
             g2\trs1\tA\tG\t0.1\t0.01\t1e-9\n\
             g1\trs1\tA\tG\t0.3\t0.01\t1e-9\n\
             g1\trs2\tA\tG\t0.2\t0.01\t1e-9\n",
        )
        .unwrap();
        let g = parse_assoc_groups(&path, "GENE", TraitKind::Eqtl, &ColumnMap::default()).unwrap();
        assert_eq!(g.keys().collect::<Vec<_>>(), ["g1", "g2"]);
        assert_eq!(g["g1"].len(), 2);
        assert_eq!(g["g2"].get("rs1").unwrap().beta, 0.1);
    }

    #[test]
    fn assoc_table_write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let t = AssocTable::new(
            "t",
            TraitKind::Pqtl,
            vec![
                SnpRecord::new(
                    "rs1",
                    Some(Locus::new("6", 30_000_000).unwrap()),
                    "A",
                    "G",
                    0.1234567890123,
                    0.01,
                    3e-9,
                )
                .unwrap()
                .with_eaf(0.3)
                .unwrap(),
                rec("rs2", "C", "T", -1e-7),
            ],
        )
        .unwrap();
        write_assoc_table(&path, &t).unwrap();
        let back = parse_assoc_table(&path, "t", TraitKind::Pqtl, &ColumnMap::default());
        // rs2 has no locus; NA positions fail to parse as a coordinate.
        assert!(back.is_err());
        let t = t.filtered(|r| r.locus.is_some());
        write_assoc_table(&path, &t).unwrap();
        let back = parse_assoc_table(&path, "t", TraitKind::Pqtl, &ColumnMap::default()).unwrap();
        assert_eq!(back.records(), t.records());
    }

    fn arb_matrix() -> impl Strategy<Value = EffectMatrix> {
        (1usize..6, 1usize..4).prop_flat_map(|(n, k)| {
            (
                proptest::collection::vec(-10.0f64..10.0, n * k),
                proptest::collection::vec(-10.0f64..10.0, n),
            )
                .prop_map(move |(b, y)| {
                    EffectMatrix::new(
                        (0..n).map(|i| format!("rs{i}")).collect(),
                        (0..k).map(|j| format!("G{j}")).collect(),
                        DMatrix::from_row_slice(n, k, &b),
                        DVector::from_vec(y),
                    )
                    .unwrap()
                })
        })
    }

    const ALLELES: [&str; 4] = ["A", "C", "G", "T"];

    proptest! {
        #[test]
        fn matrix_round_trip_exact_at_shortest_precision(m in arb_matrix()) {
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m, None).unwrap();
            let back = read_matrix(Cursor::new(buf), Path::new("x")).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn harmonization_is_idempotent_and_flip_is_involution(
            ea in 0usize..4, oa in 0usize..4, swap in any::<bool>(), strand in any::<bool>(),
            bx in -1.0f64..1.0, by in -1.0f64..1.0,
        ) {
            prop_assume!(ea != oa);
            let (e, o) = (ALLELES[ea], ALLELES[oa]);
            prop_assume!(!is_palindromic(e, o));
            let (mut re, mut ro) = if swap { (o, e) } else { (e, o) };
            let (ce, co);
            if strand {
                ce = complement(re).unwrap();
                co = complement(ro).unwrap();
                re = &ce;
                ro = &co;
            }
            let exp = table(vec![rec("rs1", e, o, bx)]);
            let out = table(vec![rec("rs1", re, ro, by)]);
            let h = harmonize(&exp, &out, PalindromePolicy::Drop).unwrap().remove(0);
            prop_assert!(h.is_usable());
            prop_assert_eq!(h.beta_outcome, if swap { -by } else { by });

            // Re-harmonizing the aligned outcome leaves it unchanged.
            let aligned = table(vec![rec("rs1", e, o, h.beta_outcome)]);
            let again = harmonize(&exp, &aligned, PalindromePolicy::Drop).unwrap().remove(0);
            prop_assert_eq!(again.action, HarmonizeAction::Kept);
            prop_assert_eq!(again.beta_outcome, h.beta_outcome);

            // Swapping the outcome labels back restores the original beta.
            let swapped = table(vec![rec("rs1", o, e, h.beta_outcome)]);
            let back = harmonize(&exp, &swapped, PalindromePolicy::Drop).unwrap().remove(0);
            prop_assert_eq!(back.action, HarmonizeAction::SignFlipped);
            prop_assert_eq!(-back.beta_outcome, h.beta_outcome);
        }
    }
}
