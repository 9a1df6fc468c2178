//! LD reference matrices and greedy LD clumping.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sumstats::{AssocTable, SnpRecord};

/// Tolerance for the symmetry and unit-diagonal checks.
pub const LD_TOLERANCE: f64 = 1e-8;

/// What the entries of an LD file hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LdScale {
    /// Signed correlation r.
    #[default]
    SignedR,
    /// Squared correlation r².
    RSquared,
}

/// Pairwise LD between an ordered list of SNPs.
#[derive(Clone, Debug)]
pub struct LdMatrix {
    snps: Vec<String>,
    values: DMatrix<f64>,
    scale: LdScale,
    index: HashMap<String, usize>,
}

impl LdMatrix {
    pub fn new(snps: Vec<String>, values: DMatrix<f64>, scale: LdScale) -> Result<Self> {
        let n = snps.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "LD matrix is {}x{} but {} SNPs were given",
                values.nrows(),
                values.ncols(),
                n
            )));
        }
        let lower = match scale {
            LdScale::SignedR => -1.0,
            LdScale::RSquared => 0.0,
        };
        for i in 0..n {
            let d = values[(i, i)];
            if (d - 1.0).abs() > LD_TOLERANCE {
                return Err(Error::NonUnitDiagonal { index: i, value: d });
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !(v.is_finite() && v >= lower - LD_TOLERANCE && v <= 1.0 + LD_TOLERANCE) {
                    return Err(Error::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                if j > i && (v - values[(j, i)]).abs() > LD_TOLERANCE {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (i, s) in snps.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::DuplicateSnp { rsid: s.clone() });
            }
        }
        Ok(LdMatrix {
            snps,
            values,
            scale,
            index,
        })
    }

    pub fn identity(snps: Vec<String>) -> Self {
        let n = snps.len();
        LdMatrix::new(snps, DMatrix::identity(n, n), LdScale::SignedR)
            .expect("identity is a valid LD matrix")
    }

    pub fn snps(&self) -> &[String] {
        &self.snps
    }

    pub fn len(&self) -> usize {
        self.snps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snps.is_empty()
    }

    pub fn scale(&self) -> LdScale {
        self.scale
    }

    /// Raw entries as stored (r or r² depending on [`LdScale`]).
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn index_of(&self, rsid: &str) -> Option<usize> {
        self.index.get(rsid).copied()
    }

    /// Squared correlation between SNPs at positions `i` and `j`.
    pub fn r2(&self, i: usize, j: usize) -> f64 {
        let v = self.values[(i, j)];
        match self.scale {
            LdScale::SignedR => v * v,
            LdScale::RSquared => v,
        }
    }

    /// Signed correlation matrix; fails for r² input, which has lost the sign.
    pub fn signed_r(&self) -> Result<&DMatrix<f64>> {
        match self.scale {
            LdScale::SignedR => Ok(&self.values),
            LdScale::RSquared => Err(Error::param(
                "ld-scale",
                "signed correlations are required but the LD matrix holds r²",
            )),
        }
    }

    /// Restricts and reorders to `snps`.
    pub fn subset(&self, snps: &[String]) -> Result<LdMatrix> {
        let idx: Vec<usize> = snps
            .iter()
            .map(|s| {
                self.index_of(s)
                    .ok_or_else(|| Error::MissingLd { rsid: s.clone() })
            })
            .collect::<Result<_>>()?;
        let values = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.values[(idx[a], idx[b])]);
        LdMatrix::new(snps.to_vec(), values, self.scale)
    }
}

/// Parses an `.ld` file: `n` lines of `n` whitespace-delimited numbers, in
/// the order of `snps`.
pub fn parse_ld_file(path: impl AsRef<Path>, snps: &[String], scale: LdScale) -> Result<LdMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ld(BufReader::new(file), path, snps, scale)
}

pub fn read_ld<R: BufRead>(
    reader: R,
    path: &Path,
    snps: &[String],
    scale: LdScale,
) -> Result<LdMatrix> {
    let n = snps.len();
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("cannot parse {tok:?} as a number"),
            })?;
            values.push(v);
        }
        let width = values.len() - before;
        if width != n {
            return Err(Error::DimensionMismatch(format!(
                "{}: line {} has {} columns but {} SNPs are expected",
                path.display(),
                i + 1,
                width,
                n
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} rows but {} SNPs are expected",
            path.display(),
            rows,
            n
        )));
    }
    LdMatrix::new(snps.to_vec(), DMatrix::from_row_slice(n, n, &values), scale)
}

/// Writes an LD matrix in `.ld` layout (tab-delimited, shortest round-trip floats).
pub fn write_ld_file(path: impl AsRef<Path>, ld: &LdMatrix) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for i in 0..ld.len() {
        let row: Vec<String> = (0..ld.len())
            .map(|j| ld.values[(i, j)].to_string())
            .collect();
        writeln!(w, "{}", row.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Thresholds for greedy clumping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClumpParams {
    /// Index SNPs must have p at or below this.
    pub p1: f64,
    /// Clumped (non-index) SNPs must have p at or below this.
    pub p2: f64,
    /// SNPs with r² at or above this are clumped with the index.
    pub r2: f64,
    /// Half-width of the clumping window, in kilobases.
    pub kb: f64,
}

impl Default for ClumpParams {
    fn default() -> Self {
        ClumpParams {
            p1: 5e-8,
            p2: 5e-8,
            r2: 0.01,
            kb: 1000.0,
        }
    }
}

impl ClumpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 > 0.0 && self.p1 <= 1.0) {
            return Err(Error::param("clump_p1", "must lie in (0, 1]"));
        }
        if !(self.p2 > 0.0 && self.p2 <= 1.0) {
            return Err(Error::param("clump_p2", "must lie in (0, 1]"));
        }
        if !(self.r2 > 0.0 && self.r2 <= 1.0) {
            return Err(Error::param("clump_r2", "must lie in (0, 1]"));
        }
        if !(self.kb > 0.0 && self.kb.is_finite()) {
            return Err(Error::param("clump_kb", "must be positive"));
        }
        Ok(())
    }

    /// p-value threshold for joining a clump. SNPs that could serve as an
    /// index are always absorbable, so indexes stay mutually independent
    /// even when `p1 > p2`.
    pub fn member_threshold(&self) -> f64 {
        self.p1.max(self.p2)
    }

    pub fn window_bp(&self) -> u64 {
        (self.kb * 1000.0).round() as u64
    }
}

/// One index SNP and the SNPs clumped with it, in significance order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clump {
    pub index: String,
    pub members: Vec<String>,
}

/// Significance order: p ascending, then position, then rsid.
pub fn significance_order(a: &SnpRecord, b: &SnpRecord) -> Ordering {
    a.pvalue
        .total_cmp(&b.pvalue)
        .then_with(|| a.pos().cmp(&b.pos()))
        .then_with(|| a.rsid.cmp(&b.rsid))
}

struct Candidate<'a> {
    rec: &'a SnpRecord,
    ld: usize,
    chrom: &'a str,
    pos: u64,
}

/// Greedy LD clumping.
///
/// Repeatedly takes the most significant unclumped SNP with `p <= p1` as an
/// index and assigns to it every unclumped SNP on the same chromosome within
/// `kb` kilobases, with `p <= max(p1, p2)` and `r² >= r2`. Clumps come back
/// in discovery order; their index SNPs are the independent instruments.
pub fn clump(assoc: &AssocTable, ld: &LdMatrix, params: &ClumpParams) -> Result<Vec<Clump>> {
    params.validate()?;
    let threshold = params.member_threshold();
    let mut cands = Vec::new();
    for rec in assoc.records().iter().filter(|r| r.pvalue <= threshold) {
        let locus = rec.locus.as_ref().ok_or_else(|| Error::InvalidValue {
            row: 0,
            field: "pos".into(),
            reason: format!("{} has no position; clumping needs coordinates", rec.rsid),
        })?;
        let ld_idx = ld.index_of(&rec.rsid).ok_or_else(|| Error::MissingLd {
            rsid: rec.rsid.clone(),
        })?;
        cands.push(Candidate {
            rec,
            ld: ld_idx,
            chrom: &locus.chrom,
            pos: locus.pos,
        });
    }
    cands.sort_by(|a, b| significance_order(a.rec, b.rec));

    // Per chromosome, candidate ranks sorted by position for window lookups.
    let mut by_chrom: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (rank, c) in cands.iter().enumerate() {
        by_chrom.entry(c.chrom).or_default().push(rank);
    }
    for ranks in by_chrom.values_mut() {
        ranks.sort_by_key(|&r| (cands[r].pos, r));
    }

    let window = params.window_bp();
    let mut clumped = vec![false; cands.len()];
    let mut clumps = Vec::new();
    for rank in 0..cands.len() {
        let index = &cands[rank];
        if clumped[rank] || index.rec.pvalue > params.p1 {
            continue;
        }
        clumped[rank] = true;
        let ranks = &by_chrom[index.chrom];
        let lo = index.pos.saturating_sub(window);
        let hi = index.pos.saturating_add(window);
        let start = ranks.partition_point(|&r| cands[r].pos < lo);
        let mut members: Vec<usize> = ranks[start..]
            .iter()
            .take_while(|&&r| cands[r].pos <= hi)
            .copied()
            .filter(|&r| !clumped[r] && ld.r2(index.ld, cands[r].ld) >= params.r2)
            .collect();
        members.sort_unstable();
        for &m in &members {
            clumped[m] = true;
        }
        clumps.push(Clump {
            index: index.rec.rsid.clone(),
            members: members.iter().map(|&m| cands[m].rec.rsid.clone()).collect(),
        });
    }
    Ok(clumps)
}

/// Index SNPs of `clumps`, in discovery order.
pub fn index_snps(clumps: &[Clump]) -> Vec<String> {
    clumps.iter().map(|c| c.index.clone()).collect()
}
